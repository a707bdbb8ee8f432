import io
import math

from rich.console import Console

from nv_deer.analysis.solver import FitReport
from nv_deer.ui.rich_ui import RichRunUI, fit_report_table


def _console():
    return Console(file=io.StringIO(), width=120, color_system=None)


def test_summary_panel_lists_values():
    console = _console()
    ui = RichRunUI(enabled=False, console=console)
    ui.show_summary("analyze-concentration", {"rate_per_s": 6300.0, "k": math.inf, "kind": "Deer3"})
    text = console.file.getvalue()
    assert "analyze-concentration" in text
    assert "rate_per_s: 6300" in text
    assert "k: inf" in text
    assert "Deer3" in text


def test_disabled_ui_has_no_tracker():
    with RichRunUI(enabled=False, console=_console()) as ui:
        assert ui.tracker("scan") is None


def test_fit_report_table_rows():
    report = FitReport.from_dict({
        "model": "exp_decay",
        "params": {"amplitude": 1.0, "rate": 6300.0},
        "uncertainties": {"amplitude": 0.01, "rate": math.inf},
        "units": {"rate": "1/s"},
        "fitted": ["amplitude", "rate"],
        "covariance": [[1e-4, 0.0], [0.0, math.inf]],
        "residual_norm": 1e-3,
        "initial_residual_norm": 1.0,
        "converged": True,
        "iterations": 7,
        "gradient_norm": 1e-12,
        "damping_escalations": 0,
        "n_points": 41,
        "message": "gradient below tolerance",
    })
    console = _console()
    console.print(fit_report_table("decay", report))
    text = console.file.getvalue()
    assert "rate" in text and "1/s" in text and "inf" in text
    assert "converged" in text
