"""
serialization.py - result files.

Traces and spectra are CSV with a fixed header; floats are written with ``repr`` so a file
read back reproduces the written arrays exactly. Trace metadata lives in a JSON sidecar
next to the CSV. Fit reports are JSON and carry the hash of the config that produced them.
"""

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..analysis.solver import FitReport
from ..analysis.tomography import CHANNELS, TomographyResult, TraceSet
from ..core.sequence_engine import SequenceKind, Spectrum
from ..core.spin_bath import MonteCarloTrace
from ..errors import InputDataError, LengthMismatch
from ..utils.log_utils import get_logger
from ..utils.utils import atomic_write_text

logger = get_logger(__name__)

PathLike = Union[str, Path]

TRACE_HEADER = ("scan_value",) + CHANNELS + ("d_x", "d_y", "d", "phi_rad")
SPECTRUM_HEADER = ("scan_value", "signal")
MC_HEADER = ("time_s", "deer_real", "deer_imag", "stderr_real", "stderr_imag")


def _fmt(value: float) -> str:
    return repr(float(value))


def _to_csv(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in zip(*columns):
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _read_csv(path: PathLike, expected: Sequence[Sequence[str]]) -> Tuple[Tuple[str, ...], Dict[str, np.ndarray]]:
    """Parse a numeric CSV whose header is one of ``expected``."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as err:
        raise InputDataError(f"{path}: file not found") from err
    except UnicodeDecodeError as err:
        raise InputDataError(f"{path}: not UTF-8 text") from err
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputDataError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    if header not in [tuple(e) for e in expected]:
        raise InputDataError(f"{path}: unexpected header {','.join(header)}")
    data: List[List[float]] = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise LengthMismatch(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            values = [float(v) for v in row]
        except ValueError as err:
            raise InputDataError(f"{path}:{lineno}: {err}") from err
        if not all(math.isfinite(v) for v in values):
            raise InputDataError(f"{path}:{lineno}: non-finite value")
        data.append(values)
    if len(data) < 2:
        raise LengthMismatch(f"{path}: need at least 2 data rows, got {len(data)}")
    table = np.asarray(data, dtype=float)
    return header, {name: table[:, i].copy() for i, name in enumerate(header)}


def meta_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def write_json(path: PathLike, data: Dict[str, Any]) -> Path:
    return atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True, allow_nan=True) + "\n")


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as err:
        raise InputDataError(f"{path}: file not found") from err
    except json.JSONDecodeError as err:
        raise InputDataError(f"{path}:{err.lineno}: {err.msg}") from err
    if not isinstance(data, dict):
        raise InputDataError(f"{path}: expected a JSON object")
    return data


# -- traces ------------------------------------------------------------------------------


def write_traces(path: PathLike, trace: TraceSet, tomo: TomographyResult, noise_floor: float = 0.0) -> List[Path]:
    """Trace CSV plus its metadata sidecar. Returns both paths."""
    if len(tomo) != len(trace):
        raise LengthMismatch("trace and tomography differ in length")
    header = TRACE_HEADER + (("d_err",) if tomo.d_err is not None else ())
    columns = [trace.scan_values] + [trace.channel(c) for c in CHANNELS] + [tomo.d_x, tomo.d_y, tomo.d, tomo.phi]
    if tomo.d_err is not None:
        columns.append(tomo.d_err)
    csv_path = atomic_write_text(path, _to_csv(header, columns))
    sidecar = write_json(meta_path(path), {"meta": trace.meta, "noise_floor": noise_floor})
    logger.debug(f"Wrote {len(trace)} trace rows to {csv_path}")
    return [csv_path, sidecar]


def read_traces(path: PathLike) -> Tuple[TraceSet, TomographyResult]:
    """Inverse of ``write_traces``; the sidecar is optional."""
    _, cols = _read_csv(path, [TRACE_HEADER, TRACE_HEADER + ("d_err",)])
    meta: Dict[str, Any] = {}
    noise_floor = 0.0
    if meta_path(path).exists():
        sidecar = read_json(meta_path(path))
        meta = sidecar.get("meta", {})
        noise_floor = float(sidecar.get("noise_floor", 0.0))
    trace = TraceSet(cols["scan_value"], *(cols[c] for c in CHANNELS), meta=meta)
    tomo = TomographyResult(
        d_x=cols["d_x"],
        d_y=cols["d_y"],
        d=cols["d"],
        phi=cols["phi_rad"],
        angle_defined=cols["d"] > noise_floor,
        d_err=cols.get("d_err"),
    )
    return trace, tomo


# -- spectra -----------------------------------------------------------------------------


def write_spectrum(path: PathLike, spectrum: Spectrum) -> List[Path]:
    csv_path = atomic_write_text(path, _to_csv(SPECTRUM_HEADER, [spectrum.scan_values, spectrum.signal]))
    sidecar = write_json(meta_path(path), {"kind": spectrum.kind.value, "meta": spectrum.meta})
    return [csv_path, sidecar]


def read_spectrum(path: PathLike) -> Spectrum:
    _, cols = _read_csv(path, [SPECTRUM_HEADER])
    kind, meta = SequenceKind.ODMR, {}
    if meta_path(path).exists():
        sidecar = read_json(meta_path(path))
        kind = SequenceKind(sidecar.get("kind", SequenceKind.ODMR.value))
        meta = sidecar.get("meta", {})
    return Spectrum(cols["scan_value"], cols["signal"], kind, meta)


# -- Monte-Carlo traces -----------------------------------------------------------------


def write_mc_trace(path: PathLike, trace: MonteCarloTrace) -> List[Path]:
    columns = [trace.times, trace.mean.real, trace.mean.imag, trace.stderr_real, trace.stderr_imag]
    csv_path = atomic_write_text(path, _to_csv(MC_HEADER, columns))
    sidecar = write_json(meta_path(path), {
        "n_realizations": trace.n_realizations,
        "radius_cm": trace.radius,
        "estimator": trace.estimator,
        "meta": trace.meta,
    })
    return [csv_path, sidecar]


def read_mc_trace(path: PathLike) -> MonteCarloTrace:
    _, cols = _read_csv(path, [MC_HEADER])
    side = read_json(meta_path(path)) if meta_path(path).exists() else {}
    return MonteCarloTrace(
        times=cols["time_s"],
        mean=cols["deer_real"] + 1j * cols["deer_imag"],
        stderr_real=cols["stderr_real"],
        stderr_imag=cols["stderr_imag"],
        n_realizations=int(side.get("n_realizations", 0)),
        radius=float(side.get("radius_cm", 0.0)),
        estimator=side.get("estimator", "weighted"),
        meta=side.get("meta", {}),
    )


# -- fit reports -------------------------------------------------------------------------


def write_fit_report(path: PathLike, report: FitReport, config_hash: Optional[str] = None,
                     derived: Optional[Dict[str, Any]] = None) -> Path:
    data = {"report": report.to_dict(), "config_hash": config_hash}
    if derived:
        data["derived"] = derived
    return write_json(path, data)


def read_fit_report(path: PathLike) -> FitReport:
    data = read_json(path)
    try:
        return FitReport.from_dict(data.get("report", data))
    except (KeyError, TypeError, ValueError) as err:
        raise InputDataError(f"{path}: malformed fit report ({err})") from err


# -- plotting ----------------------------------------------------------------------------


def gnuplot_script(data_file: str, kind: str) -> str:
    """A gnuplot script plotting one of the CSV files written above."""
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set grid"]
    if kind == "trace":
        lines += [
            "set multiplot layout 2,1",
            "set ylabel 'D'",
            f"plot '{data_file}' using 1:8 with linespoints, '' using 1:7 with linespoints, "
            "'' using 1:9 with lines",
            "set ylabel 'phi (rad)'",
            f"plot '{data_file}' using 1:10 with linespoints",
            "unset multiplot",
        ]
    elif kind == "mc":
        lines += [
            "set logscale y",
            "set xlabel 'T (s)'",
            f"plot '{data_file}' using 1:2:4 with yerrorbars",
        ]
    else:
        lines += [f"plot '{data_file}' using 1:2 with linespoints"]
    return "\n".join(lines) + "\n"


def write_plot_script(path: PathLike, data_file: str, kind: str) -> Path:
    return atomic_write_text(path, gnuplot_script(data_file, kind))
