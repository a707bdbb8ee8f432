"""
spin_core.py - two-level propagator algebra for the effective NV spin.

States are (up, down) amplitudes of the |0>, |-1> pair; operators are immutable 2x2
unitaries. The detuned pulse follows the generalized-Rabi form

    U = [[c - i(d/W)s, -i(O/W)s e^{-i phi}],
         [-i(O/W)s e^{i phi}, c + i(d/W)s]],   c = cos(W t/2), s = sin(W t/2),

with W = sqrt(O^2 + d^2). ``detuned_pulse`` additionally removes the free precession
accumulated at the drive frequency, so a pulse with no drive is the identity.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from ..errors import ApproximationDomain, NonUnitary

UNITARY_TOL = 1e-9
FAR_DETUNED_LIMIT = 0.2


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]."""
    wrapped = math.remainder(angle, 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class SpinState:
    up: complex
    down: complex

    @classmethod
    def ground(cls) -> "SpinState":
        return cls(1.0 + 0j, 0j)

    def as_array(self) -> np.ndarray:
        return np.array([self.up, self.down], dtype=complex)

    @property
    def norm(self) -> float:
        return math.sqrt(abs(self.up) ** 2 + abs(self.down) ** 2)

    @property
    def azimuth(self) -> float:
        """Equatorial angle of the Bloch vector, arg(down) - arg(up)."""
        return cmath.phase(self.down * self.up.conjugate())

    def bloch(self) -> Tuple[float, float, float]:
        coh = self.down * self.up.conjugate()
        return (
            2.0 * coh.real,
            2.0 * coh.imag,
            abs(self.up) ** 2 - abs(self.down) ** 2,
        )


@dataclass(frozen=True)
class PulseOperator:
    m00: complex
    m01: complex
    m10: complex
    m11: complex

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "PulseOperator":
        return cls(complex(m[0, 0]), complex(m[0, 1]), complex(m[1, 0]), complex(m[1, 1]))

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.m00, self.m01], [self.m10, self.m11]], dtype=complex)

    def __matmul__(self, other: "PulseOperator") -> "PulseOperator":
        """Operator product; ``a @ b`` applies ``b`` first."""
        return PulseOperator.from_matrix(self.as_matrix() @ other.as_matrix())

    def unitarity_residual(self) -> float:
        m = self.as_matrix()
        return float(np.max(np.abs(m.conj().T @ m - np.eye(2))))

    def equals_up_to_global_phase(self, other: "PulseOperator", tol: float = 1e-9) -> bool:
        a, b = self.as_matrix(), other.as_matrix()
        # align on the first entry that is nonzero in both
        for x, y in zip(a.ravel(), b.ravel()):
            if abs(x) > tol and abs(y) > tol:
                b = b * (x / y) / abs(x / y)
                break
        return bool(np.max(np.abs(a - b)) <= tol)


@dataclass(frozen=True)
class PulseParams:
    """Drive of one pulse: rabi and detuning in rad/s, duration in s."""

    rabi: float
    detuning: float
    duration: float

    def __post_init__(self):
        if self.rabi < 0:
            raise ValueError(f"rabi must be >= 0, got {self.rabi}")
        if self.duration < 0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")

    @property
    def generalized_rabi(self) -> float:
        return math.hypot(self.rabi, self.detuning)


def identity() -> PulseOperator:
    return PulseOperator(1 + 0j, 0j, 0j, 1 + 0j)


def equator_state(phase: float) -> SpinState:
    root = 1.0 / math.sqrt(2.0)
    return SpinState(complex(root), root * cmath.exp(1j * phase))


def pi_pulse() -> PulseOperator:
    return PulseOperator(0j, -1j, -1j, 0j)


def rotation(p: PulseParams, phase: float = 0.0) -> PulseOperator:
    """Rotating-frame propagator of a drive about the equatorial axis at ``phase``."""
    w = p.generalized_rabi
    if w == 0.0:
        return identity()
    half = 0.5 * w * p.duration
    c, s = math.cos(half), math.sin(half)
    off = -1j * (p.rabi / w) * s
    diag = 1j * (p.detuning / w) * s
    return PulseOperator(
        complex(c) - diag,
        off * cmath.exp(-1j * phase),
        off * cmath.exp(1j * phase),
        complex(c) + diag,
    )


def free_evolution(detuning: float, duration: float) -> PulseOperator:
    """Precession exp(-i d t sigma_z / 2) over ``duration``."""
    half = 0.5 * detuning * duration
    return PulseOperator(cmath.exp(-1j * half), 0j, 0j, cmath.exp(1j * half))


def detuned_pulse(p: PulseParams) -> PulseOperator:
    """
    Effect of a detuned drive relative to undriven precession at the drive frequency.

    The result keeps small off-diagonal terms of order rabi/detuning, so swapping it with
    a pi pulse shifts the equator phase by ``phase_jump_exact`` only approximately (about
    1e-3 rad for typical crosstalk). The shift is exact for ``far_detuned_approx``.
    """
    if p.rabi == 0.0:
        return identity()
    frame = free_evolution(-p.detuning, p.duration)
    return frame @ rotation(p)


def far_detuned_approx(p: PulseParams) -> PulseOperator:
    """Diagonal small-Rabi limit of ``detuned_pulse``; valid while |rabi/detuning| < 0.2."""
    if p.rabi == 0.0:
        return identity()
    if p.detuning == 0.0 or p.rabi / abs(p.detuning) >= FAR_DETUNED_LIMIT:
        raise ApproximationDomain(
            f"|rabi/detuning| = {p.rabi / abs(p.detuning) if p.detuning else math.inf:.3g} "
            f"is not below {FAR_DETUNED_LIMIT}"
        )
    w = math.copysign(p.generalized_rabi, p.detuning)
    beta = 0.5 * (p.detuning - w) * p.duration
    return PulseOperator(cmath.exp(1j * beta), 0j, 0j, cmath.exp(-1j * beta))


def apply(op: PulseOperator, s: SpinState) -> SpinState:
    residual = op.unitarity_residual()
    if residual > UNITARY_TOL:
        raise NonUnitary(f"operator unitarity residual {residual:.3e} exceeds {UNITARY_TOL}")
    return SpinState(op.m00 * s.up + op.m01 * s.down, op.m10 * s.up + op.m11 * s.down)


def relative_phase(a: SpinState, b: SpinState) -> float:
    """Azimuth of ``a`` minus azimuth of ``b``, wrapped to (-pi, pi]."""
    return wrap_angle(a.azimuth - b.azimuth)


def _require_positive_detuning(p: PulseParams) -> None:
    if p.detuning <= 0:
        raise ValueError(f"phase jump needs a positive detuning, got {p.detuning}")


def phase_jump_exact(p: PulseParams) -> float:
    _require_positive_detuning(p)
    return 2.0 * p.duration * (p.generalized_rabi - p.detuning)


def phase_jump_approx(p: PulseParams) -> float:
    _require_positive_detuning(p)
    return p.rabi**2 * p.duration / p.detuning


def phase_jump_vs_rabi(rabi: float, detuning: float) -> float:
    """Jump caused by a crosstalk pulse that is a pi pulse for its own spins (t = pi/rabi)."""
    if rabi == 0.0:
        return 0.0
    return phase_jump_exact(PulseParams(rabi, detuning, math.pi / rabi))


def detuning_phase(tau: float, delta_nu: float) -> float:
    if tau < 0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    return 4.0 * math.pi * tau * delta_nu
