"""
rich_ui.py: Rich-based terminal output for nv-deer runs.

Progress bars for scans and Monte-Carlo runs, and tables for fit reports. Everything is
drawn on stderr so data written to stdout or files is never mixed with UI output.
"""

import math
from typing import Callable, Dict, Iterable, Optional

from rich.console import Console
from rich.panel import Panel
from rich.progress import (
    BarColumn,
    Progress,
    SpinnerColumn,
    TextColumn,
    TimeElapsedColumn,
    TimeRemainingColumn,
)
from rich.table import Table

from ..analysis.solver import FitReport
from ..utils.log_utils import get_logger

logger = get_logger(__name__)


class RichRunUI:
    """Progress display and result tables for one CLI command."""

    def __init__(self, enabled: bool = True, console: Optional[Console] = None):
        self.enabled = enabled
        self.console = console or Console(stderr=True)
        self.progress: Optional[Progress] = None

    def __enter__(self) -> "RichRunUI":
        if self.enabled:
            self.progress = Progress(
                SpinnerColumn("dots8"),
                TextColumn("[bold yellow]{task.description}"),
                BarColumn(bar_width=None),
                TextColumn("[progress.percentage]{task.percentage:>3.0f}%"),
                TextColumn("({task.completed}/{task.total})"),
                TimeElapsedColumn(),
                TimeRemainingColumn(),
                console=self.console,
                transient=True,
            )
            self.progress.start()
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self.progress is not None:
            self.progress.stop()
            self.progress = None

    def tracker(self, description: str) -> Optional[Callable[[int, int], None]]:
        """A ``(done, total)`` callback driving a new progress bar, or None when disabled."""
        if self.progress is None:
            return None
        progress = self.progress
        task_id = progress.add_task(description, total=None)

        def update(done: int, total: int) -> None:
            progress.update(task_id, completed=done, total=total)

        return update

    def show_report(self, title: str, report: FitReport) -> None:
        self.console.print(fit_report_table(title, report))

    def show_summary(self, title: str, values: Dict[str, object]) -> None:
        lines = "\n".join(f"[cyan]{k}[/cyan]: {_fmt(v)}" for k, v in values.items())
        self.console.print(Panel(lines or "(empty)", title=title, border_style="green"))


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return "inf" if math.isinf(value) else f"{value:.6g}"
    return str(value)


def fit_report_table(title: str, report: FitReport, names: Optional[Iterable[str]] = None) -> Table:
    """Parameters, uncertainties and units of a fit, with the convergence status as caption."""
    table = Table(title=title, show_header=True, header_style="bold")
    table.add_column("Parameter", style="cyan")
    table.add_column("Value", justify="right")
    table.add_column("Uncertainty", justify="right")
    table.add_column("Unit", style="dim")
    for name in names or report.params:
        table.add_row(name, _fmt(report.params[name]), _fmt(report.uncertainties[name]), report.units.get(name, ""))
    status = "[green]converged[/green]" if report.converged else "[red]not converged[/red]"
    table.caption = f"{status}: {report.message}; {report.iterations} iterations, |r| = {report.residual_norm:.3e}"
    return table
