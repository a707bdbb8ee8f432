import math

import numpy as np
import pytest

from nv_deer.analysis.solver import least_squares_solve
from nv_deer.analysis.tomography import TraceSet, deer_tomography
from nv_deer.core.sequence_engine import SequenceKind, Spectrum
from nv_deer.core.spin_bath import MonteCarloTrace
from nv_deer.errors import InputDataError, LengthMismatch
from nv_deer.io.serialization import (
    gnuplot_script,
    meta_path,
    read_fit_report,
    read_json,
    read_mc_trace,
    read_spectrum,
    read_traces,
    write_fit_report,
    write_mc_trace,
    write_spectrum,
    write_traces,
)


@pytest.fixture
def trace():
    x = np.linspace(0.0, 1e-5, 6)
    m = 0.03 * np.exp(-1e5 * x) / 3.0
    return TraceSet(x, 1 + m, 1 - m, 1 + 0.1 * m, 1 - 0.1 * m,
                    meta={"kind": "Deer3", "tau_s": 5e-6, "seed": 3})


def test_trace_file_round_trip(tmp_path, trace):
    tomo = deer_tomography(trace, noise_floor=1e-4)
    paths = write_traces(tmp_path / "traces.csv", trace, tomo, noise_floor=1e-4)
    assert paths[1] == tmp_path / "traces.meta.json"
    restored, restored_tomo = read_traces(tmp_path / "traces.csv")
    assert restored == trace
    assert restored_tomo == tomo


def test_trace_without_sidecar(tmp_path, trace):
    path = tmp_path / "traces.csv"
    write_traces(path, trace, deer_tomography(trace))
    meta_path(path).unlink()
    restored, _ = read_traces(path)
    assert restored.meta == {}
    assert np.array_equal(restored.i_x, trace.i_x)


def test_truncated_trace_file(tmp_path, trace):
    path = tmp_path / "traces.csv"
    write_traces(path, trace, deer_tomography(trace))
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:2]) + "\n")
    with pytest.raises(LengthMismatch):
        read_traces(path)
    path.write_text("\n".join(lines[:3]) + "\n" + lines[3][: len(lines[3]) // 2] + "\n")
    with pytest.raises(LengthMismatch):
        read_traces(path)


@pytest.mark.parametrize(
    "text",
    [
        "",
        "time,signal\n0,1\n1,2\n",
        "scan_value,signal\n0,1\n1,abc\n",
        "scan_value,signal\n0,1\n1,nan\n",
    ],
)
def test_bad_spectrum_files(tmp_path, text):
    path = tmp_path / "spectrum.csv"
    path.write_text(text)
    with pytest.raises(InputDataError):
        read_spectrum(path)


def test_missing_file(tmp_path):
    with pytest.raises(InputDataError):
        read_traces(tmp_path / "nope.csv")


def test_spectrum_round_trip(tmp_path):
    spectrum = Spectrum(np.array([1.0, 2.0, 3.0]), np.array([0.99, 0.97, 0.99]), SequenceKind.HOLEBURN, {"seed": 1})
    write_spectrum(tmp_path / "holeburn.csv", spectrum)
    restored = read_spectrum(tmp_path / "holeburn.csv")
    assert restored.kind is SequenceKind.HOLEBURN
    assert np.array_equal(restored.signal, spectrum.signal)
    assert restored.meta == {"seed": 1}


def test_mc_trace_round_trip(tmp_path):
    trace = MonteCarloTrace(
        times=np.array([0.0, 1e-4, 2e-4]),
        mean=np.array([1.0 + 0j, 0.5 + 0.05j, 0.25 + 0.05j]),
        stderr_real=np.array([0.0, 0.01, 0.01]),
        stderr_imag=np.array([0.0, 0.002, 0.002]),
        n_realizations=500,
        radius=2e-5,
        estimator="expected",
        meta={"polarization": 0.8},
    )
    write_mc_trace(tmp_path / "mc_trace.csv", trace)
    restored = read_mc_trace(tmp_path / "mc_trace.csv")
    assert np.array_equal(restored.mean, trace.mean)
    assert restored.n_realizations == 500
    assert restored.estimator == "expected"


def test_fit_report_round_trip_keeps_infinite_uncertainty(tmp_path):
    data = np.array([1.0, 2.0, 3.0])
    report = least_squares_solve(lambda p: p[0] - data, [0.0, 1.0], names=("mean", "unused"))
    path = write_fit_report(tmp_path / "fit.json", report, "abc", {"note": 1})
    restored = read_fit_report(path)
    assert restored == report
    assert math.isinf(restored.uncertainties["unused"])
    stored = read_json(path)
    assert stored["config_hash"] == "abc"
    assert stored["derived"] == {"note": 1}


def test_malformed_fit_report(tmp_path):
    path = tmp_path / "fit.json"
    path.write_text('{"report": {"model": "x"}}')
    with pytest.raises(InputDataError):
        read_fit_report(path)


def test_gnuplot_script_names_data_file():
    script = gnuplot_script("traces.csv", "trace")
    assert "traces.csv" in script
    assert script.startswith("set datafile separator ','")
