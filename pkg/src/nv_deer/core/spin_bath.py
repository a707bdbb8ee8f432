"""
spin_bath.py - statistical dipolar bath of pumped B spins around a probe A spin.

Two views of the same physics:

* analytic kinetics: D(T) = exp(-C p k T) * exp(i eps q alpha C p k T), with the
  per-concentration rate constant k = 8 pi^2 mu_B^2 g^2 / (9 sqrt(3) hbar) in CGS units;
* Monte-Carlo: B spins placed uniformly (Poisson count) in a spherical shell around the
  probe, each contributing a secular dipolar shift, averaged over many realizations.

Internally everything dipolar is CGS: cm, s, erg, G.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import DegenerateGeometry, DivisionDegenerate
from ..utils.log_utils import get_logger
from ..utils.utils import rng_for
from .workers import WorkerPool

logger = get_logger(__name__)

ALPHA_SPHERE = 0.13213
DEFAULT_EXCLUSION_CM = 2e-7
ESTIMATORS = ("weighted", "sampled", "expected")
MIN_REALIZATIONS = 100

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class PhysicalConstants:
    mu_B: float = 9.274e-21
    g: float = 2.0028
    hbar: float = 1.0546e-27
    carbon_density: float = 1.76e23

    def __post_init__(self):
        for name in ("mu_B", "g", "hbar", "carbon_density"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class KineticsParams:
    concentration: float
    flip_probability: float
    k: float
    polarization: float = 0.0
    shape_factor: float = 1.0
    alpha: float = ALPHA_SPHERE

    def __post_init__(self):
        if self.concentration < 0:
            raise ValueError(f"concentration must be >= 0, got {self.concentration}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip_probability must lie in [0, 1], got {self.flip_probability}")
        if self.k <= 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if not -1.0 <= self.polarization <= 1.0:
            raise ValueError(f"polarization must lie in [-1, 1], got {self.polarization}")

    @property
    def decay_rate(self) -> float:
        """C * p_B * k in 1/s."""
        return self.concentration * self.flip_probability * self.k

    @property
    def angular_velocity(self) -> float:
        """Out-of-phase rotation rate eps * q * alpha * C * p_B * k in rad/s."""
        return self.polarization * self.shape_factor * self.alpha * self.decay_rate

    @property
    def excited_concentration(self) -> float:
        return self.concentration * self.flip_probability


@dataclass(frozen=True)
class BathRealization:
    """One placement of B spins. ``stream`` is the key the realization was drawn with."""

    couplings: np.ndarray
    flip_mask: np.ndarray
    initial_state: np.ndarray
    seed: int
    stream: Tuple[int, ...] = ()
    flip_probability: float = 0.0
    polarization: float = 0.0

    def __post_init__(self):
        n = len(self.couplings)
        if len(self.flip_mask) != n or len(self.initial_state) != n:
            raise ValueError("couplings, flip_mask and initial_state must have equal length")
        if not np.all(np.isfinite(self.couplings)):
            raise ValueError("couplings must be finite")

    @property
    def n_spins(self) -> int:
        return len(self.couplings)


@dataclass
class MonteCarloTrace:
    times: np.ndarray
    mean: np.ndarray
    stderr_real: np.ndarray
    stderr_imag: np.ndarray
    n_realizations: int
    radius: float
    estimator: str
    meta: dict = field(default_factory=dict)

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.mean)

    @property
    def phase(self) -> np.ndarray:
        return np.angle(self.mean)


# -- constants and unit bridges ---------------------------------------------------


def compute_k(c: PhysicalConstants) -> float:
    """Per-concentration DEER decay constant in cm^3/s."""
    return 8.0 * math.pi**2 * c.mu_B**2 * c.g**2 / (9.0 * math.sqrt(3.0) * c.hbar)


def dipolar_constant(c: PhysicalConstants) -> float:
    """g^2 mu_B^2 / hbar in rad/s * cm^3."""
    return c.g**2 * c.mu_B**2 / c.hbar


def ppb_to_density(ppb: float, c: PhysicalConstants) -> float:
    if ppb < 0:
        raise ValueError(f"ppb must be >= 0, got {ppb}")
    return ppb * c.carbon_density * 1e-9


def density_to_ppb(density: float, c: PhysicalConstants) -> float:
    if density < 0:
        raise ValueError(f"density must be >= 0, got {density}")
    return density / (c.carbon_density * 1e-9)


def rate_constant_from_ppb(k_per_ppb: float, c: PhysicalConstants) -> float:
    """Convert a rate slope in 1/(s ppb) to cm^3/s."""
    return k_per_ppb / (c.carbon_density * 1e-9)


def concentration_from_rate(rate: float, flip_probability: float, k: float) -> float:
    """Total B concentration (cm^-3) that decays at ``rate`` given p_B and k."""
    if flip_probability * k <= 0:
        raise DivisionDegenerate("p_B * k must be > 0 to invert the decay law")
    return rate / (flip_probability * k)


def analytic_deer(kp: KineticsParams, T: ArrayLike):
    """Complex DEER factor at dipolar time(s) ``T``."""
    t = np.asarray(T, dtype=float)
    if np.any(t < 0):
        raise ValueError("T must be >= 0")
    value = np.exp((-kp.decay_rate + 1j * kp.angular_velocity) * t)
    return complex(value) if value.ndim == 0 else value


# -- Monte-Carlo bath ----------------------------------------------------------------


def auto_radius(
    concentration: float,
    t_max: float,
    c: PhysicalConstants,
    kernel_scale: float = 1.0,
    exclusion: float = DEFAULT_EXCLUSION_CM,
) -> float:
    """Radius beyond which every spin adds less than 0.01 rad of phase by ``t_max``."""
    r3 = 100.0 * dipolar_constant(c) * abs(kernel_scale) * max(t_max, 0.0)
    if concentration > 0:
        r3 = max(r3, 3.0 / (4.0 * math.pi * concentration) + exclusion**3)
    r3 = max(r3, (2.0 * exclusion) ** 3)
    return r3 ** (1.0 / 3.0)


def sample_bath(
    C: float,
    radius: float,
    axis_angle: float,
    eps: float,
    p_B: float,
    c: PhysicalConstants,
    seed: int,
    stream: Sequence[int] = (),
    exclusion: float = DEFAULT_EXCLUSION_CM,
    kernel_scale: float = 1.0,
) -> BathRealization:
    """
    Draw one bath realization.

    Spins fill the shell exclusion < r < radius with a Poisson count of mean
    C * (4/3) pi (radius^3 - exclusion^3). Each one shifts the probe by
    k_dd * (a.b - 3 (a.r)(b.r)) / r^3, where a is the probe axis (z) and b the bath axis
    tilted by ``axis_angle``; with parallel axes this is k_dd (1 - 3 cos^2 theta) / r^3.

    Args:
        C: B-spin concentration in cm^-3.
        radius: outer radius in cm.
        axis_angle: angle between probe and bath quantization axes in rad.
        eps: bath polarization in [-1, 1]; sign +1 is drawn with probability (1 + eps)/2.
        p_B: flip probability of each bath spin.
        c: physical constants.
        seed: master seed; ``stream`` selects the independent substream.

    Returns:
        BathRealization with couplings in rad/s.
    """
    if radius <= exclusion:
        raise DegenerateGeometry(
            f"radius {radius:.3e} cm must exceed the exclusion distance {exclusion:.3e} cm"
        )
    if C < 0:
        raise ValueError(f"concentration must be >= 0, got {C}")
    if not 0.0 <= p_B <= 1.0:
        raise ValueError(f"p_B must lie in [0, 1], got {p_B}")
    if not -1.0 <= eps <= 1.0:
        raise ValueError(f"eps must lie in [-1, 1], got {eps}")

    rng = rng_for(seed, *stream)
    shell = radius**3 - exclusion**3
    expected = C * 4.0 / 3.0 * math.pi * shell
    if 0 < expected < 1:
        logger.debug(f"expected bath size {expected:.3g} < 1 for radius {radius:.3e} cm")
    n = int(rng.poisson(expected)) if expected > 0 else 0

    r = np.cbrt(exclusion**3 + rng.random(n) * shell)
    cos_theta = rng.uniform(-1.0, 1.0, n)
    azimuth = rng.uniform(0.0, 2.0 * math.pi, n)
    flips = rng.random(n) < p_B
    signs = np.where(rng.random(n) < 0.5 * (1.0 + eps), 1, -1).astype(np.int8)

    if axis_angle == 0.0:
        angular = 1.0 - 3.0 * cos_theta**2
    else:
        sin_theta = np.sqrt(1.0 - cos_theta**2)
        b_dot_r = math.sin(axis_angle) * sin_theta * np.cos(azimuth) + math.cos(axis_angle) * cos_theta
        angular = math.cos(axis_angle) - 3.0 * cos_theta * b_dot_r
    couplings = kernel_scale * dipolar_constant(c) * angular / r**3

    return BathRealization(
        couplings=couplings,
        flip_mask=flips,
        initial_state=signs,
        seed=int(seed),
        stream=tuple(int(k) for k in stream),
        flip_probability=p_B,
        polarization=eps,
    )


def realization_factor(
    bath: BathRealization,
    t_flipped: ArrayLike,
    t_unflipped: ArrayLike = 0.0,
    estimator: str = "weighted",
):
    """
    Dipolar coherence factor of one realization.

    ``t_flipped`` / ``t_unflipped`` are the signed dipolar times seen by pumped and
    unpumped bath spins. Estimators:

    * ``sampled``: uses the drawn flip mask and signs;
    * ``weighted``: (1 - p) e^{i s w t_u} + p e^{i s w t_f} with the drawn signs;
    * ``expected``: additionally averages the sign, cos(w t) + i eps sin(w t).
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    tf = np.atleast_1d(np.asarray(t_flipped, dtype=float))
    tu = np.broadcast_to(np.atleast_1d(np.asarray(t_unflipped, dtype=float)), tf.shape)
    scalar = np.ndim(t_flipped) == 0

    if bath.n_spins == 0:
        out = np.ones(tf.shape, dtype=complex)
        return complex(out[0]) if scalar else out

    w = bath.couplings[:, None]
    p = bath.flip_probability
    if estimator == "sampled":
        t_eff = np.where(bath.flip_mask[:, None], tf[None, :], tu[None, :])
        factors = np.exp(1j * bath.initial_state[:, None] * w * t_eff)
    elif estimator == "weighted":
        s = bath.initial_state[:, None]
        factors = (1.0 - p) * np.exp(1j * s * w * tu) + p * np.exp(1j * s * w * tf)
    else:
        eps = bath.polarization

        def sign_average(t: np.ndarray) -> np.ndarray:
            phase = w * t
            return np.cos(phase) + 1j * eps * np.sin(phase)

        factors = (1.0 - p) * sign_average(tu) + p * sign_average(tf)
    out = np.prod(factors, axis=0)
    return complex(out[0]) if scalar else out


def _chunk_factors(
    start: int,
    stop: int,
    times: np.ndarray,
    sampler: Callable[[int], BathRealization],
    estimator: str,
) -> np.ndarray:
    rows = np.empty((stop - start, len(times)), dtype=complex)
    for row, index in enumerate(range(start, stop)):
        rows[row] = realization_factor(sampler(index), times, 0.0, estimator)
    return rows


def mc_deer_trace(
    C: float,
    eps: float,
    p_B: float,
    T_grid: ArrayLike,
    n_realizations: int,
    seed: int,
    c: PhysicalConstants,
    radius: Optional[float] = None,
    exclusion: float = DEFAULT_EXCLUSION_CM,
    kernel_scale: float = 1.0,
    axis_angle: float = 0.0,
    estimator: str = "weighted",
    threads: int = 1,
    chunk_size: int = 250,
    on_progress: Optional[Callable[[int, int], None]] = None,
) -> MonteCarloTrace:
    """
    Monte-Carlo DEER factor over ``n_realizations`` independent baths.

    Realization i is drawn from the substream (seed, i); chunks run on a worker pool and
    are stacked in index order before the mean and standard errors are taken, so the
    result does not depend on ``threads``.
    """
    if n_realizations < MIN_REALIZATIONS:
        raise ValueError(f"n_realizations must be >= {MIN_REALIZATIONS}, got {n_realizations}")
    times = np.asarray(T_grid, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise ValueError("T_grid must be a nonempty 1-d array")
    if radius is None:
        radius = auto_radius(C, float(np.max(np.abs(times))), c, kernel_scale, exclusion)
        logger.debug(f"automatic bath radius {radius * 1e7:.1f} nm")

    def sampler(index: int) -> BathRealization:
        return sample_bath(
            C, radius, axis_angle, eps, p_B, c, seed,
            stream=(index,), exclusion=exclusion, kernel_scale=kernel_scale,
        )

    bounds: List[Tuple[int, int]] = [
        (lo, min(lo + chunk_size, n_realizations)) for lo in range(0, n_realizations, chunk_size)
    ]
    tasks = [
        (lambda lo=lo, hi=hi: _chunk_factors(lo, hi, times, sampler, estimator))
        for lo, hi in bounds
    ]
    logger.info(
        f"Monte-Carlo bath: {n_realizations} realizations, {len(times)} times, "
        f"radius {radius * 1e7:.1f} nm, {threads} thread(s)"
    )
    rows = np.vstack(WorkerPool(threads).run(tasks, on_progress=on_progress))

    n = rows.shape[0]
    mean = rows.mean(axis=0)
    stderr_real = rows.real.std(axis=0, ddof=1) / math.sqrt(n)
    stderr_imag = rows.imag.std(axis=0, ddof=1) / math.sqrt(n)
    return MonteCarloTrace(
        times=times,
        mean=mean,
        stderr_real=stderr_real,
        stderr_imag=stderr_imag,
        n_realizations=n,
        radius=radius,
        estimator=estimator,
        meta={"concentration_cm3": C, "flip_probability": p_B, "polarization": eps,
              "kernel_scale": kernel_scale, "axis_angle_rad": axis_angle},
    )
