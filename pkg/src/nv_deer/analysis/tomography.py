"""
tomography.py: four-phase state tomography of echo and DEER traces.

The last pulse of a sequence is applied with phases x, -x, y, -y. Differences of
opposite phases project the final Bloch vector:

    D_x = I_y - I_-y,   D_y = I_x - I_-x,   D = sqrt(D_x^2 + D_y^2),   phi = atan2(D_y, D_x)

Any signal common to the four channels (B-spin fluorescence, baseline) cancels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np

from ..errors import LengthMismatch, NonMonotoneScan, PhaseUnwrapAmbiguous
from ..utils.utils import is_strictly_monotone

CHANNELS = ("i_x", "i_minus_x", "i_y", "i_minus_y")


def _as_array(values) -> np.ndarray:
    return np.asarray(values, dtype=float).reshape(-1)


@dataclass
class TraceSet:
    scan_values: np.ndarray
    i_x: np.ndarray
    i_minus_x: np.ndarray
    i_y: np.ndarray
    i_minus_y: np.ndarray
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.scan_values = _as_array(self.scan_values)
        lengths = {"scan_values": len(self.scan_values)}
        for name in CHANNELS:
            setattr(self, name, _as_array(getattr(self, name)))
            lengths[name] = len(getattr(self, name))
        if len(set(lengths.values())) != 1:
            raise LengthMismatch(f"trace arrays differ in length: {lengths}")
        if lengths["scan_values"] < 2:
            raise LengthMismatch(f"a trace needs at least 2 points, got {lengths['scan_values']}")
        if not is_strictly_monotone(self.scan_values):
            raise NonMonotoneScan("scan_values must be strictly monotone")

    def __len__(self) -> int:
        return len(self.scan_values)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TraceSet):
            return NotImplemented
        return self.meta == other.meta and all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("scan_values",) + CHANNELS
        )

    def channel(self, name: str) -> np.ndarray:
        if name not in CHANNELS:
            raise KeyError(name)
        return getattr(self, name)


@dataclass
class TomographyResult:
    d_x: np.ndarray
    d_y: np.ndarray
    d: np.ndarray
    phi: np.ndarray
    angle_defined: np.ndarray
    d_err: Optional[np.ndarray] = None

    def __post_init__(self):
        arrays = [self.d_x, self.d_y, self.d, self.phi, self.angle_defined]
        if self.d_err is not None:
            arrays.append(self.d_err)
        if len({len(a) for a in arrays}) != 1:
            raise LengthMismatch("tomography arrays differ in length")

    def __len__(self) -> int:
        return len(self.d)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TomographyResult):
            return NotImplemented
        if (self.d_err is None) != (other.d_err is None):
            return False
        names = ["d_x", "d_y", "d", "phi", "angle_defined"] + (["d_err"] if self.d_err is not None else [])
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names)

    @property
    def complex_signal(self) -> np.ndarray:
        """In-phase part as real, out-of-phase part as imaginary component."""
        return self.d_y + 1j * self.d_x


def project(
    d_x: np.ndarray,
    d_y: np.ndarray,
    noise_floor: float = 0.0,
    d_err: Optional[np.ndarray] = None,
) -> TomographyResult:
    d_x = _as_array(d_x)
    d_y = _as_array(d_y)
    if len(d_x) != len(d_y):
        raise LengthMismatch("d_x and d_y differ in length")
    d = np.hypot(d_x, d_y)
    phi = np.arctan2(d_y, d_x)
    phi = np.where(phi == -math.pi, math.pi, phi)
    return TomographyResult(
        d_x=d_x,
        d_y=d_y,
        d=d,
        phi=phi,
        angle_defined=d > noise_floor,
        d_err=None if d_err is None else _as_array(d_err),
    )


def echo_tomography(t: TraceSet) -> TomographyResult:
    return project(t.i_y - t.i_minus_y, t.i_x - t.i_minus_x)


def deer_tomography(
    t: TraceSet, noise_floor: float = 0.0, channel_sigma: Optional[float] = None
) -> TomographyResult:
    """
    DEER tomography. Points with D <= ``noise_floor`` keep their angle but are flagged
    in ``angle_defined``. With ``channel_sigma`` the propagated error of D is attached.
    """
    d_err = None
    if channel_sigma is not None:
        d_err = np.full(len(t), math.sqrt(2.0) * channel_sigma)
    return project(t.i_y - t.i_minus_y, t.i_x - t.i_minus_x, noise_floor, d_err)


def unwrap_phase(phi: np.ndarray, max_step: float = math.pi / 2) -> np.ndarray:
    """Unwrap ``phi``; raises if any adjacent wrapped step is too large to be trusted."""
    phi = _as_array(phi)
    steps = np.remainder(np.diff(phi) + math.pi, 2.0 * math.pi) - math.pi
    bad = np.flatnonzero(np.abs(steps) > max_step)
    if bad.size:
        i = int(bad[0])
        raise PhaseUnwrapAmbiguous(
            f"phase step of {steps[i]:.3f} rad between points {i} and {i + 1} exceeds {max_step:.3f}"
        )
    return np.unwrap(phi)


def phase_step(scan_values: np.ndarray, phi: np.ndarray, at: float) -> float:
    """
    Size of the phase discontinuity at scan position ``at``.

    The phase just left of ``at`` is extrapolated with the local slope to the first
    point at or right of ``at``; the wrapped difference to the measured phase is the step.
    """
    x = _as_array(scan_values)
    phi = _as_array(phi)
    right = int(np.searchsorted(x, at, side="left"))
    if right == 0 or right >= len(x):
        raise ValueError(f"position {at!r} is not inside the scan range")
    left = right - 1
    predicted = phi[left]
    if left >= 1:
        slope = _wrapped(phi[left] - phi[left - 1]) / (x[left] - x[left - 1])
        predicted = phi[left] + slope * (x[right] - x[left])
    return _wrapped(phi[right] - predicted)


def _wrapped(angle: float) -> float:
    return float(math.remainder(angle, 2.0 * math.pi))
