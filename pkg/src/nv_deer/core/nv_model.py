"""
nv_model.py - NV-center physical model.

Resonance lines per crystallographic orientation (secular Zeeman shift plus the 14N
hyperfine triplet), 13C revival timing, Rabi population transfer, the phenomenological
echo envelope and the linear fluorescence contrast model.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from ..errors import ZeroField
from .spin_core import PulseParams

_SQ3 = 1.0 / math.sqrt(3.0)
CUBIC_111_AXES: Tuple[Tuple[float, float, float], ...] = (
    (_SQ3, _SQ3, _SQ3),
    (_SQ3, -_SQ3, -_SQ3),
    (-_SQ3, _SQ3, -_SQ3),
    (-_SQ3, -_SQ3, _SQ3),
)

TRANSITIONS = ("minus", "plus")
HYPERFINE_PROJECTIONS = (-1, 0, 1)


def _normalize(v: Sequence[float]) -> Tuple[float, float, float]:
    arr = np.asarray(v, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got {v!r}")
    n = float(np.linalg.norm(arr))
    if n == 0.0:
        raise ValueError("direction vector must be nonzero")
    return tuple(float(x) for x in arr / n)  # type: ignore[return-value]


@dataclass(frozen=True)
class NVParams:
    zfs: float = 2.7e9
    gamma_e: float = 2.8e6
    gamma_c13: float = 1.0705e3
    hyperfine_splitting: float = 2.16e6
    orientations: Tuple[Tuple[float, float, float], ...] = CUBIC_111_AXES

    def __post_init__(self):
        if self.zfs <= 0:
            raise ValueError(f"zfs must be > 0, got {self.zfs}")
        if self.gamma_e <= 0:
            raise ValueError(f"gamma_e must be > 0, got {self.gamma_e}")
        if self.gamma_c13 <= 0:
            raise ValueError(f"gamma_c13 must be > 0, got {self.gamma_c13}")
        if self.hyperfine_splitting < 0:
            raise ValueError("hyperfine_splitting must be >= 0")
        axes = tuple(_normalize(a) for a in self.orientations)
        if len(axes) != 4:
            raise ValueError("exactly four orientation axes are required")
        for a, b in itertools.combinations(axes, 2):
            if abs(abs(float(np.dot(a, b))) - 1.0 / 3.0) > 1e-9:
                raise ValueError(f"orientations {a} and {b} are not <111> neighbours")
        object.__setattr__(self, "orientations", axes)


@dataclass(frozen=True)
class BiasField:
    direction: Tuple[float, float, float] = (1.0, 1.0, 1.0)
    magnitude: float = 0.0

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError(f"field magnitude must be >= 0, got {self.magnitude}")
        object.__setattr__(self, "direction", _normalize(self.direction))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.direction)


@dataclass(frozen=True)
class EnvelopeParams:
    t2: float
    stretch_exponent: float = 2.0
    revival_width: float = 3e-6

    def __post_init__(self):
        if self.t2 <= 0:
            raise ValueError(f"t2 must be > 0, got {self.t2}")
        if not 1.0 <= self.stretch_exponent <= 4.0:
            raise ValueError(f"stretch_exponent must lie in [1, 4], got {self.stretch_exponent}")
        if self.revival_width <= 0:
            raise ValueError(f"revival_width must be > 0, got {self.revival_width}")


@dataclass(frozen=True)
class SpectralLine:
    """One hyperfine line of one orientation; weight is its share of all NV centers."""

    frequency: float
    orientation: int
    m_i: int
    transition: str
    weight: float = 1.0 / 12.0


def zeeman_shift(field: BiasField, nv: NVParams, orientation: int) -> float:
    return nv.gamma_e * abs(float(np.dot(field.vector, nv.orientations[orientation])))


def resonance_frequencies(
    field: BiasField, nv: NVParams, transition: str = "minus"
) -> List[Tuple[float, float, float]]:
    """Hyperfine triplet (f - A, f, f + A) per orientation, in orientation order."""
    if transition not in TRANSITIONS:
        raise ValueError(f"transition must be one of {TRANSITIONS}, got {transition!r}")
    sign = -1.0 if transition == "minus" else 1.0
    a = nv.hyperfine_splitting
    triplets = []
    for i in range(len(nv.orientations)):
        f = nv.zfs + sign * zeeman_shift(field, nv, i)
        triplets.append((f - a, f, f + a))
    return triplets


def spectral_lines(field: BiasField, nv: NVParams) -> List[SpectralLine]:
    lines = []
    for transition in TRANSITIONS:
        for orientation, triplet in enumerate(resonance_frequencies(field, nv, transition)):
            for m_i, f in zip(HYPERFINE_PROJECTIONS, triplet):
                lines.append(SpectralLine(f, orientation, m_i, transition))
    return lines


def larmor_revival_times(field_magnitude: float, nv: NVParams, n_max: int) -> np.ndarray:
    if field_magnitude < 0:
        raise ValueError(f"field magnitude must be >= 0, got {field_magnitude}")
    if field_magnitude == 0:
        raise ZeroField("no 13C revivals exist at zero field")
    if n_max < 1:
        raise ValueError(f"n_max must be >= 1, got {n_max}")
    tau1 = 1.0 / (nv.gamma_c13 * field_magnitude)
    return tau1 * np.arange(1, n_max + 1, dtype=float)


def rabi_population(p: PulseParams) -> float:
    """Population moved out of the initial level by one pulse."""
    if p.rabi == 0.0:
        return 0.0
    w = p.generalized_rabi
    return (p.rabi / w) ** 2 * math.sin(0.5 * w * p.duration) ** 2


def echo_envelope(total_time: float, env: EnvelopeParams, revivals: Sequence[float] = ()) -> float:
    """Stretched-exponential decay times a Gaussian comb centred on 0 and every 2*tau_n."""
    if total_time < 0:
        raise ValueError(f"total_time must be >= 0, got {total_time}")
    decay = math.exp(-((total_time / env.t2) ** env.stretch_exponent))
    if len(revivals) == 0:
        return decay
    centers = np.concatenate(([0.0], 2.0 * np.asarray(revivals, dtype=float)))
    comb = float(np.max(np.exp(-0.5 * ((total_time - centers) / env.revival_width) ** 2)))
    return decay * comb


def readout_signal(pop0: float, contrast: float, baseline: float) -> float:
    if not -1e-12 <= pop0 <= 1.0 + 1e-12:
        raise ValueError(f"pop0 must lie in [0, 1], got {pop0}")
    if not 0.0 <= contrast <= 1.0:
        raise ValueError(f"contrast must lie in [0, 1], got {contrast}")
    pop0 = min(max(pop0, 0.0), 1.0)
    return baseline * (1.0 - contrast * (1.0 - pop0))
