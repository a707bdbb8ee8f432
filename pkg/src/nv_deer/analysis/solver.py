"""
solver.py - damped Gauss-Newton (Levenberg-Marquardt) least squares shared by all fits.

Columns of the Jacobian are normalized before the normal equations are formed, so the
Marquardt damping lambda * diag(J^T J) becomes lambda * I in scaled coordinates. The
first step is undamped; a rejected step or a singular system escalates the damping and a
successful step relaxes it. Singular systems are retried through tenacity with growing
damping until ``max_escalations`` attempts are used up.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from ..errors import BadInit, NoConvergence, SingularNormalEquations
from ..utils.log_utils import get_logger

logger = get_logger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class SolverOptions:
    max_iterations: int = 200
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    stall_gradient_tol: float = 1e-6
    initial_damping: float = 0.0
    damping_start: float = 1e-3
    damping_up: float = 10.0
    damping_down: float = 10.0
    damping_floor: float = 1e-12
    max_damping: float = 1e16
    max_escalations: int = 40
    jacobian_step: float = 6e-6
    condition_limit: float = 1e14


@dataclass
class FitReport:
    """
    Outcome of one fit. ``fitted`` orders the rows and columns of ``covariance``.

    ``converged`` means the scaled gradient fell below ``gradient_tol``, or the run stalled
    (``stalled`` is set) with the gradient below the looser ``stall_gradient_tol``.
    """

    model: str
    params: Dict[str, float]
    uncertainties: Dict[str, float]
    units: Dict[str, str]
    fitted: Tuple[str, ...]
    covariance: Tuple[Tuple[float, ...], ...]
    residual_norm: float
    initial_residual_norm: float
    converged: bool
    iterations: int
    gradient_norm: float = 0.0
    damping_escalations: int = 0
    n_points: int = 0
    message: str = ""
    stalled: bool = False
    extra: Dict[str, Any] = field(default_factory=dict)

    def value(self, name: str) -> float:
        return self.params[name]

    def sigma(self, name: str) -> float:
        return self.uncertainties[name]

    def covariance_matrix(self, names: Optional[Sequence[str]] = None) -> np.ndarray:
        full = np.asarray(self.covariance, dtype=float).reshape(len(self.fitted), len(self.fitted))
        if names is None:
            return full
        idx = [self.fitted.index(n) for n in names]
        return full[np.ix_(idx, idx)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model,
            "params": dict(self.params),
            "uncertainties": dict(self.uncertainties),
            "units": dict(self.units),
            "fitted": list(self.fitted),
            "covariance": [list(row) for row in self.covariance],
            "residual_norm": self.residual_norm,
            "initial_residual_norm": self.initial_residual_norm,
            "converged": self.converged,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "damping_escalations": self.damping_escalations,
            "n_points": self.n_points,
            "message": self.message,
            "stalled": self.stalled,
            "extra": dict(self.extra),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitReport":
        return cls(
            model=data["model"],
            params={k: float(v) for k, v in data["params"].items()},
            uncertainties={k: float(v) for k, v in data["uncertainties"].items()},
            units=dict(data.get("units", {})),
            fitted=tuple(data.get("fitted", ())),
            covariance=tuple(tuple(float(x) for x in row) for row in data.get("covariance", ())),
            residual_norm=float(data["residual_norm"]),
            initial_residual_norm=float(data.get("initial_residual_norm", data["residual_norm"])),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            gradient_norm=float(data.get("gradient_norm", 0.0)),
            damping_escalations=int(data.get("damping_escalations", 0)),
            n_points=int(data.get("n_points", 0)),
            message=data.get("message", ""),
            stalled=bool(data.get("stalled", False)),
            extra=dict(data.get("extra", {})),
        )


def numeric_jacobian(residual: ResidualFn, p: np.ndarray, rel_step: float) -> np.ndarray:
    """Central-difference Jacobian."""
    cols = []
    for j in range(len(p)):
        h = rel_step * max(abs(p[j]), 1.0)
        up, down = p.copy(), p.copy()
        up[j] += h
        down[j] -= h
        cols.append((residual(up) - residual(down)) / (up[j] - down[j]))
    return np.column_stack(cols)


def _column_scale(J: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(J, axis=0)
    dead = norms == 0.0
    return np.where(dead, 1.0, norms), dead


def scaled_gradient(J: np.ndarray, r: np.ndarray) -> float:
    """Largest projection of the residual on a normalized Jacobian column, relative to max(1, |r|)."""
    norms, dead = _column_scale(J)
    g = np.abs(J.T @ r) / norms
    g[dead] = 0.0
    return float(np.max(g, initial=0.0) / max(1.0, float(np.linalg.norm(r))))


def _solve_normal(J: np.ndarray, r: np.ndarray, damping: float, condition_limit: float) -> np.ndarray:
    norms, _ = _column_scale(J)
    js = J / norms
    a = js.T @ js + damping * np.eye(js.shape[1])
    b = -js.T @ r
    if damping == 0.0 and np.linalg.cond(a) > condition_limit:
        raise SingularNormalEquations("normal equations are singular without damping")
    try:
        z = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as err:
        raise SingularNormalEquations(str(err)) from err
    if not np.all(np.isfinite(z)):
        raise SingularNormalEquations("non-finite step")
    return z / norms


class _Damping:
    def __init__(self, options: SolverOptions):
        self.options = options
        self.value = options.initial_damping
        self.escalations = 0

    def escalate(self) -> None:
        self.escalations += 1
        self.value = self.options.damping_start if self.value == 0.0 else self.value * self.options.damping_up

    def relax(self) -> None:
        self.value /= self.options.damping_down
        if self.value < self.options.damping_floor:
            self.value = 0.0

    @property
    def exhausted(self) -> bool:
        return self.value > self.options.max_damping


def _damped_step(J: np.ndarray, r: np.ndarray, damping: _Damping) -> np.ndarray:
    opts = damping.options
    for attempt in Retrying(
        stop=stop_after_attempt(opts.max_escalations),
        retry=retry_if_exception_type(SingularNormalEquations),
        reraise=True,
    ):
        with attempt:
            if attempt.retry_state.attempt_number > 1:
                damping.escalate()
            return _solve_normal(J, r, damping.value, opts.condition_limit)
    raise SingularNormalEquations("damping exhausted")  # pragma: no cover


def _covariance(J: np.ndarray, scale: float) -> Tuple[np.ndarray, np.ndarray]:
    """Covariance of the parameters and a mask of unidentifiable ones."""
    n = J.shape[1]
    norms, dead = _column_scale(J)
    js = J / norms
    m = js.T @ js
    w, v = np.linalg.eigh(m)
    null = w <= 1e-12 * max(float(np.max(w, initial=0.0)), 1e-300)
    unidentifiable = dead.copy()
    if np.any(null):
        unidentifiable |= np.any(np.abs(v[:, null]) > 1e-6, axis=1)
    inv = np.zeros((n, n))
    keep = ~null
    if np.any(keep):
        inv = (v[:, keep] / w[keep]) @ v[:, keep].T
    cov = scale * inv / np.outer(norms, norms)
    cov[unidentifiable, :] = np.inf
    cov[:, unidentifiable] = np.inf
    return cov, unidentifiable


def least_squares_solve(
    residual: ResidualFn,
    init: Sequence[float],
    options: SolverOptions = SolverOptions(),
    jacobian: Optional[JacobianFn] = None,
    names: Optional[Sequence[str]] = None,
    units: Optional[Dict[str, str]] = None,
    absolute_sigma: bool = False,
    strict: bool = False,
    model_name: str = "custom",
) -> FitReport:
    """
    Minimize 0.5 * |residual(p)|^2 starting from ``init``.

    Args:
        residual: maps a parameter vector to the (weighted) residual vector.
        init: starting parameters.
        options: tolerances and damping schedule.
        jacobian: analytic Jacobian; central differences are used when omitted.
        names: parameter names (default p0, p1, ...).
        absolute_sigma: residuals are already divided by absolute errors; the covariance
            is not rescaled by the reduced chi-square.
        strict: raise NoConvergence instead of returning an unconverged report.

    Returns:
        FitReport whose residual_norm never exceeds the residual norm at ``init``.
    """
    p = np.asarray(init, dtype=float).copy()
    names = tuple(names) if names is not None else tuple(f"p{i}" for i in range(len(p)))
    if len(names) != len(p):
        raise ValueError("names and init differ in length")
    jac = jacobian or (lambda q: numeric_jacobian(residual, q, options.jacobian_step))

    r = np.asarray(residual(p), dtype=float)
    if not np.all(np.isfinite(r)):
        raise BadInit(f"{model_name}: residual is not finite at the initial parameters")
    cost = 0.5 * float(r @ r)
    initial_norm = math.sqrt(2.0 * cost)
    damping = _Damping(options)
    iterations = 0
    converged = False
    stalled = False
    message = "maximum iterations reached"

    J = jac(p)
    while True:
        gnorm = scaled_gradient(J, r)
        if gnorm <= options.gradient_tol:
            converged, message = True, "gradient below tolerance"
            break
        if stalled:
            break
        if iterations >= options.max_iterations:
            break
        iterations += 1
        while True:
            step = _damped_step(J, r, damping)
            small = float(np.linalg.norm(step)) <= options.step_tol * (float(np.linalg.norm(p)) + options.step_tol)
            trial = p + step
            r_trial = np.asarray(residual(trial), dtype=float)
            cost_trial = 0.5 * float(r_trial @ r_trial) if np.all(np.isfinite(r_trial)) else math.inf
            if cost_trial < cost:
                p, r, cost = trial, r_trial, cost_trial
                damping.relax()
                J = jac(p)
                if small:
                    stalled, message = True, "step below tolerance"
                break
            if small:
                stalled, message = True, "step below tolerance"
                break
            damping.escalate()
            if damping.exhausted:
                stalled, message = True, "damping exhausted"
                break
        logger.debug(f"{model_name} iteration {iterations}: cost {cost:.6e} damping {damping.value:.1e}")

    if not converged and stalled and gnorm <= options.stall_gradient_tol:
        converged = True

    m, n = len(r), len(p)
    if absolute_sigma:
        scale = 1.0
    else:
        scale = 2.0 * cost / (m - n) if m > n else 0.0
    cov, unidentifiable = _covariance(J, scale)
    sigma = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    sigma[unidentifiable] = math.inf

    report = FitReport(
        model=model_name,
        params={k: float(v) for k, v in zip(names, p)},
        uncertainties={k: float(s) for k, s in zip(names, sigma)},
        units={k: (units or {}).get(k, "") for k in names},
        fitted=names,
        covariance=tuple(tuple(float(x) for x in row) for row in cov),
        residual_norm=math.sqrt(2.0 * cost),
        initial_residual_norm=initial_norm,
        converged=converged,
        iterations=iterations,
        gradient_norm=gnorm,
        damping_escalations=damping.escalations,
        n_points=m,
        message=message,
        stalled=stalled,
    )
    logger.debug(f"{model_name}: {message} after {iterations} iterations, |r| = {report.residual_norm:.3e}")
    if not converged:
        logger.warning(f"{model_name} fit did not converge: {message}")
        if strict:
            raise NoConvergence(f"{model_name} fit did not converge: {message}", report)
    return report
