"""
Fit models sharing one interface.

Every model names its parameters and units, evaluates itself on an abscissa, may
provide an analytic Jacobian and a deterministic initial guess, and fits itself
through ``least_squares_solve``.
"""

from abc import ABC, abstractmethod
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks, peak_widths, savgol_filter

from ..errors import BadInit
from ..utils.log_utils import get_logger
from .solver import FitReport, SolverOptions, least_squares_solve

logger = get_logger(__name__)


class FitModel(ABC):
    """Abstract base class for fit models."""

    name: str = "model"

    @property
    @abstractmethod
    def param_names(self) -> Tuple[str, ...]:
        """Ordered parameter names."""

    @property
    def units(self) -> Dict[str, str]:
        return {}

    @abstractmethod
    def evaluate(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Model values at ``x`` for parameter vector ``p``."""

    @abstractmethod
    def initial_guess(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Deterministic starting point derived from the data."""

    def jacobian(self, x: np.ndarray, p: np.ndarray) -> Optional[np.ndarray]:
        """Analytic d(model)/dp, or None for central differences."""
        return None

    def fit(
        self,
        x: Sequence[float],
        y: Sequence[float],
        sigma: Optional[Sequence[float]] = None,
        init: Optional[Sequence[float]] = None,
        options: SolverOptions = SolverOptions(),
        absolute_sigma: bool = False,
        strict: bool = False,
    ) -> FitReport:
        """Weighted least-squares fit of this model to (x, y).

        Args:
            x: abscissa.
            y: data.
            sigma: per-point one-sigma errors; unit weights when omitted.
            init: starting parameters; ``initial_guess`` when omitted.
            options: solver options.
            absolute_sigma: treat ``sigma`` as absolute errors for the covariance.
            strict: raise NoConvergence on failure.

        Returns:
            FitReport in this model's parameter units.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        w = np.ones_like(y) if sigma is None else 1.0 / np.asarray(sigma, dtype=float)
        if not np.all(np.isfinite(w)):
            raise ValueError("sigma must be positive and finite")
        p0 = self.initial_guess(x, y) if init is None else np.asarray(init, dtype=float)

        def residual(p: np.ndarray) -> np.ndarray:
            return (self.evaluate(x, p) - y) * w

        jac = None
        if self.jacobian(x, p0) is not None:
            jac = lambda p: self.jacobian(x, p) * w[:, None]  # noqa: E731

        logger.debug(f"fitting {self.name} to {len(x)} points")
        return least_squares_solve(
            residual,
            p0,
            options=options,
            jacobian=jac,
            names=self.param_names,
            units=self.units,
            absolute_sigma=absolute_sigma and sigma is not None,
            strict=strict,
            model_name=self.name,
        )


class LinearModel(FitModel):
    name = "linear"

    def __init__(self, intercept: bool = True):
        self.intercept = intercept

    @property
    def param_names(self) -> Tuple[str, ...]:
        return ("slope", "intercept") if self.intercept else ("slope",)

    def evaluate(self, x, p):
        return p[0] * x + (p[1] if self.intercept else 0.0)

    def jacobian(self, x, p):
        cols = [x] + ([np.ones_like(x)] if self.intercept else [])
        return np.column_stack(cols)

    def initial_guess(self, x, y):
        return np.zeros(len(self.param_names))


class ExponentialDecayModel(FitModel):
    """A * exp(-rate * t)."""

    name = "exp_decay"

    @property
    def param_names(self):
        return ("amplitude", "rate")

    @property
    def units(self):
        return {"amplitude": "", "rate": "1/s"}

    def evaluate(self, x, p):
        return p[0] * np.exp(-p[1] * x)

    def jacobian(self, x, p):
        e = np.exp(-p[1] * x)
        return np.column_stack([e, -p[0] * x * e])

    def initial_guess(self, x, y):
        positive = y > 0
        if np.count_nonzero(positive) >= 2 and np.ptp(x[positive]) > 0:
            slope, intercept = np.polyfit(x[positive], np.log(y[positive]), 1)
            return np.array([float(np.exp(intercept)), float(-slope)])
        return np.array([float(np.max(np.abs(y))) or 1.0, 0.0])


class ComplexDecayModel(FitModel):
    """
    Joint line model for ln|D| and the unwrapped angle of D:

        ln|D| = log_amplitude - rate * t,   angle = phase0 + angular_velocity * t

    The data vector is the concatenation [ln|D|, angle] and x is the time axis repeated.
    """

    name = "complex_decay"

    @property
    def param_names(self):
        return ("log_amplitude", "rate", "phase0", "angular_velocity")

    @property
    def units(self):
        return {"log_amplitude": "", "rate": "1/s", "phase0": "rad", "angular_velocity": "rad/s"}

    @staticmethod
    def _halves(x):
        n = len(x) // 2
        return x[:n], n

    def evaluate(self, x, p):
        t, _ = self._halves(x)
        return np.concatenate([p[0] - p[1] * t, p[2] + p[3] * t])

    def jacobian(self, x, p):
        t, n = self._halves(x)
        zeros, ones = np.zeros(n), np.ones(n)
        top = np.column_stack([ones, -t, zeros, zeros])
        bottom = np.column_stack([zeros, zeros, ones, t])
        return np.vstack([top, bottom])

    def initial_guess(self, x, y):
        return np.zeros(4)


class LorentzianTripletModel(FitModel):
    """
    L(f) = L0 - sum_i gamma * A_i / ((f - f_i)^2 + gamma^2), one shared width gamma.

    Parameter order: L0, A1, A2, A3, f1, f2, f3, gamma.
    """

    name = "lorentzian_triplet"

    @property
    def param_names(self):
        return ("L0", "A1", "A2", "A3", "f1", "f2", "f3", "gamma")

    @property
    def units(self):
        return {"L0": "a.u.", "A1": "a.u.*Hz", "A2": "a.u.*Hz", "A3": "a.u.*Hz",
                "f1": "Hz", "f2": "Hz", "f3": "Hz", "gamma": "Hz"}

    def evaluate(self, x, p):
        l0, amps, centers, gamma = p[0], p[1:4], p[4:7], p[7]
        out = np.full_like(x, l0, dtype=float)
        for a, f in zip(amps, centers):
            out -= gamma * a / ((x - f) ** 2 + gamma**2)
        return out

    def jacobian(self, x, p):
        amps, centers, gamma = p[1:4], p[4:7], p[7]
        cols = [np.ones_like(x)]
        d_amp, d_center, d_gamma = [], [], np.zeros_like(x)
        for a, f in zip(amps, centers):
            u = x - f
            den = u**2 + gamma**2
            d_amp.append(-gamma / den)
            d_center.append(-2.0 * gamma * a * u / den**2)
            d_gamma += -a * (u**2 - gamma**2) / den**2
        return np.column_stack(cols + d_amp + d_center + [d_gamma])

    def initial_guess(self, x, y):
        """
        Three deepest local minima of the smoothed spectrum give f_i, their mean half
        width at half depth gives gamma, and the depths give A_i = depth * gamma.
        """
        order = np.argsort(x)
        xs, ys = x[order], y[order]
        n = len(xs)
        smooth = ys
        window = min(n if n % 2 else n - 1, max(5, 2 * (n // 40) + 1))
        if n >= 7 and window >= 5:
            smooth = savgol_filter(ys, window, 2)
        l0 = float(np.percentile(smooth, 90))
        depth = l0 - smooth
        dx = float(np.median(np.diff(xs)))

        peaks, props = find_peaks(depth, prominence=0.0)
        if len(peaks) >= 1:
            best = peaks[np.argsort(props["prominences"])[::-1][:3]]
            widths = peak_widths(depth, best, rel_height=0.5)[0]
            gamma = max(float(np.mean(widths)) * dx / 2.0, dx)
        else:
            best = np.array([], dtype=int)
            gamma = float(np.ptp(xs)) / 10.0
        centers = sorted(float(xs[i]) for i in best)
        fill = [float(q) for q in np.quantile(xs, [0.25, 0.5, 0.75])]
        while len(centers) < 3:
            centers.append(fill[len(centers)])
            centers.sort()
        amps = [max(float(np.interp(f, xs, depth)), 0.0) * gamma for f in centers]
        return np.array([l0, *amps, *centers, gamma])

    def check_init(self, x: np.ndarray, p: np.ndarray) -> None:
        lo, hi = float(np.min(x)), float(np.max(x))
        outside = [f for f in p[4:7] if not lo <= f <= hi]
        if outside:
            raise BadInit(f"initial line frequencies {outside} lie outside the data span [{lo}, {hi}]")


_MODELS = {
    "linear": LinearModel,
    "exp_decay": ExponentialDecayModel,
    "complex_decay": ComplexDecayModel,
    "lorentzian_triplet": LorentzianTripletModel,
}


def get_model(name: str, **kwargs) -> FitModel:
    """Factory function to get a fit model by name."""
    try:
        return _MODELS[name.lower()](**kwargs)
    except KeyError:
        raise ValueError(f"Unsupported model: {name}. Supported models: {', '.join(_MODELS)}")
