"""
fits.py: the fitting operations built on the shared solver.

Lorentzian triplets (and hole-burn efficiency from two of them), exponential and
complex DEER decays, and weighted straight lines.
"""

from __future__ import annotations

import math
from dataclasses import replace
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DegenerateX, DivisionDegenerate, LengthMismatch, NoConvergence
from ..utils.log_utils import get_logger
from .models import ComplexDecayModel, ExponentialDecayModel, LinearModel, LorentzianTripletModel
from .solver import FitReport, SolverOptions
from .tomography import TomographyResult, TraceSet, deer_tomography, unwrap_phase

logger = get_logger(__name__)

MIN_TRIPLET_POINTS = 10
MIN_DECAY_POINTS = 5


class Estimate(NamedTuple):
    value: float
    uncertainty: float


def _require_points(n: int, minimum: int, what: str) -> None:
    if n < minimum:
        raise LengthMismatch(f"{what} needs at least {minimum} points, got {n}")


def _linear_rescale(report: FitReport, scale: np.ndarray, offset: np.ndarray, units: dict) -> FitReport:
    """Map a report fitted in p' to p = offset + scale * p'."""
    names = report.fitted
    values = np.array([report.params[n] for n in names])
    sig = np.array([report.uncertainties[n] for n in names])
    cov = report.covariance_matrix() * np.outer(scale, scale)
    return replace(
        report,
        params={n: float(o + s * v) for n, o, s, v in zip(names, offset, scale, values)},
        uncertainties={n: float(abs(s) * e) for n, s, e in zip(names, scale, sig)},
        units=dict(units),
        covariance=tuple(tuple(float(x) for x in row) for row in cov),
    )


def fit_lorentzian_triplet(
    frequencies: Sequence[float],
    signal: Sequence[float],
    init: Optional[FitReport] = None,
    sigma: Optional[Sequence[float]] = None,
    options: SolverOptions = SolverOptions(),
    strict: bool = False,
) -> FitReport:
    """
    Fit L0, three (A_i, f_i) and a shared width gamma to a spectrum.

    The fit runs on centered, rescaled frequencies; the report is in Hz. ``init`` may be a
    previous report (for example the reference spectrum's fit) used as the starting point.
    """
    f = np.asarray(frequencies, dtype=float)
    y = np.asarray(signal, dtype=float)
    if len(f) != len(y):
        raise LengthMismatch("frequencies and signal differ in length")
    _require_points(len(f), MIN_TRIPLET_POINTS, "a triplet fit")
    model = LorentzianTripletModel()

    center = 0.5 * (float(np.min(f)) + float(np.max(f)))
    span = float(np.ptp(f)) or 1.0
    unit = span / 20.0
    x = (f - center) / unit
    # L0, A1..A3, f1..f3, gamma
    scale = np.array([1.0, unit, unit, unit, unit, unit, unit, unit])
    offset = np.array([0.0, 0.0, 0.0, 0.0, center, center, center, 0.0])

    p0 = None
    if init is not None:
        raw = np.array([init.params[n] for n in model.param_names])
        model.check_init(f, raw)
        p0 = (raw - offset) / scale

    report = model.fit(x, y, sigma=sigma, init=p0, options=options,
                       absolute_sigma=sigma is not None, strict=False)
    report = _linear_rescale(report, scale, offset, model.units)
    if strict and not report.converged:
        raise NoConvergence(f"triplet fit did not converge: {report.message}", report)
    return report


def holeburn_efficiency(hole_fit: FitReport, ref_fit: FitReport) -> Estimate:
    """
    Fraction of all NV centers flipped by the pump, (1 - sum A_i / sum B_i) / 4.

    A_i are the probe amplitudes with the pump on, B_i without. Uncertainties propagate
    to first order from each fit's covariance; the two spectra are independent.
    """
    for label, rep in (("hole-burn", hole_fit), ("reference", ref_fit)):
        if not rep.converged:
            raise NoConvergence(f"{label} fit is not converged", rep)
    amps = ("A1", "A2", "A3")
    sum_a = sum(hole_fit.params[a] for a in amps)
    sum_b = sum(ref_fit.params[a] for a in amps)
    if sum_b <= 0:
        raise DivisionDegenerate(f"reference amplitudes sum to {sum_b}, must be > 0")
    var_a = float(np.sum(hole_fit.covariance_matrix(amps)))
    var_b = float(np.sum(ref_fit.covariance_matrix(amps)))
    value = 0.25 * (1.0 - sum_a / sum_b)
    sigma = 0.25 * math.sqrt(max(var_a, 0.0) / sum_b**2 + sum_a**2 * max(var_b, 0.0) / sum_b**4)
    return Estimate(value, sigma)


def fit_exp_decay(
    t: Sequence[float],
    y: Union[Sequence[float], TomographyResult],
    sigma: Optional[Sequence[float]] = None,
    options: SolverOptions = SolverOptions(),
    strict: bool = False,
) -> FitReport:
    """A * exp(-rate * t) fitted to magnitudes (a TomographyResult contributes its D)."""
    values = y.d if isinstance(y, TomographyResult) else np.asarray(y, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) != len(values):
        raise LengthMismatch("time axis and magnitudes differ in length")
    _require_points(len(t), MIN_DECAY_POINTS, "a decay fit")
    return ExponentialDecayModel().fit(t, values, sigma=sigma, options=options,
                                       absolute_sigma=sigma is not None, strict=strict)


def _ratio(report: FitReport) -> Estimate:
    r, w = report.params["rate"], report.params["angular_velocity"]
    if r == 0.0:
        return Estimate(0.0 if w == 0.0 else math.copysign(math.inf, w), math.inf)
    cov = report.covariance_matrix(("rate", "angular_velocity"))
    var = cov[1, 1] / r**2 + w**2 * cov[0, 0] / r**4 - 2.0 * w * cov[0, 1] / r**3
    return Estimate(w / r, math.sqrt(max(var, 0.0)) if np.isfinite(var) else math.inf)


def fit_complex_decay(
    t: Sequence[float],
    result: Union[TomographyResult, Sequence[complex]],
    options: SolverOptions = SolverOptions(),
    strict: bool = False,
) -> FitReport:
    """
    Joint fit of the magnitude decay and the angle drift of a complex DEER trace.

    The complex value is D_y + i D_x (in-phase real, out-of-phase imaginary). The report
    adds ``ratio`` = angular_velocity / rate, the eps * q * alpha estimate.
    """
    z = result.complex_signal if isinstance(result, TomographyResult) else np.asarray(result, dtype=complex)
    t = np.asarray(t, dtype=float)
    if len(t) != len(z):
        raise LengthMismatch("time axis and trace differ in length")
    _require_points(len(t), MIN_DECAY_POINTS, "a complex decay fit")
    if np.any(np.abs(z) == 0):
        raise DivisionDegenerate("trace magnitude vanishes; ln|D| is undefined")
    angle = unwrap_phase(np.angle(z))
    x = np.concatenate([t, t])
    y = np.concatenate([np.log(np.abs(z)), angle])
    report = ComplexDecayModel().fit(x, y, options=options, strict=strict)
    ratio = _ratio(report)
    params = dict(report.params, ratio=ratio.value)
    uncertainties = dict(report.uncertainties, ratio=ratio.uncertainty)
    units = dict(report.units, ratio="")
    return replace(report, params=params, uncertainties=uncertainties, units=units)


def fit_linear(
    x: Sequence[float],
    y: Sequence[float],
    y_err: Optional[Sequence[float]] = None,
    intercept: bool = True,
    options: SolverOptions = SolverOptions(),
) -> FitReport:
    """Weighted straight line; ``intercept=False`` fits y = slope * x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise LengthMismatch("x and y differ in length")
    _require_points(len(x), 2, "a linear fit")
    if np.ptp(x) == 0 and (intercept or x[0] == 0):
        raise DegenerateX("all x values are equal")
    return LinearModel(intercept).fit(x, y, sigma=y_err, options=options, absolute_sigma=y_err is not None)


def decay_inputs(trace: TraceSet, noise_floor: float = 0.0) -> Tuple[np.ndarray, np.ndarray, TomographyResult]:
    """
    Dipolar times and normalized magnitudes of a DEER TraceSet.

    3-pulse traces are normalized by the point at T = 0, 4-pulse traces by the point at
    T = tau (zero dipolar time); the nearest scan point is used.
    """
    from ..core.sequence_engine import SequenceKind, dipolar_time, normalization_offset

    kind = SequenceKind(trace.meta["kind"])
    tau = float(trace.meta["tau_s"])
    tomo = deer_tomography(trace, noise_floor)
    t_dip = np.asarray(trace.meta.get("dipolar_time_s") or dipolar_time(kind, trace.scan_values, tau), dtype=float)
    ref = int(np.argmin(np.abs(trace.scan_values - normalization_offset(kind, tau))))
    if tomo.d[ref] <= 0:
        raise DivisionDegenerate("normalization point has zero magnitude")
    return np.abs(t_dip), tomo.d / tomo.d[ref], tomo
