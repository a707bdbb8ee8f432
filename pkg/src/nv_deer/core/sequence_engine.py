"""
sequence_engine.py - pulse sequences, their builders and their simulation.

Timeline conventions:

* the first pi/2 pulse of every echo-type sequence starts at t = 0 and tau is measured
  between pulse centers;
* the DEER pump offset T is measured from the first pi/2 center (3-pulse) or from the
  first refocusing pi center (4-pulse) to the pump center;
* A pulses rotate for their nominal duration plus the electronics delay, which is what
  makes a 0.4 us pi/2 and a 0.88 us pi pulse consistent.

Coherent simulation tracks one A-spin state through the A pulses, applies every active
B pulse to it as a crosstalk operator at the pump center, and multiplies the coherence
by the dipolar factor (bath or analytic kernel) and the echo envelope just before the
readout pulse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..analysis.tomography import TraceSet
from ..errors import BadTiming, EnvMismatch, NVDeerError, ScanError
from ..utils.log_utils import get_logger
from ..utils.utils import TWO_PI, derive_seed, is_strictly_monotone, rng_for
from .nv_model import (
    BiasField,
    EnvelopeParams,
    NVParams,
    SpectralLine,
    echo_envelope,
    rabi_population,
    readout_signal,
    resonance_frequencies,
)
from .spin_bath import BathRealization, KineticsParams, analytic_deer, realization_factor
from .spin_core import (
    PulseOperator,
    PulseParams,
    detuned_pulse,
    far_detuned_approx,
    free_evolution,
    rotation,
)
from .workers import WorkerPool

logger = get_logger(__name__)


class Channel(str, Enum):
    A = "A"
    B = "B"


class PulsePhase(str, Enum):
    X = "x"
    Y = "y"
    MINUS_X = "minus_x"
    MINUS_Y = "minus_y"

    @property
    def angle(self) -> float:
        return _PHASE_ANGLES[self]


_PHASE_ANGLES = {
    PulsePhase.X: 0.0,
    PulsePhase.Y: 0.5 * math.pi,
    PulsePhase.MINUS_X: math.pi,
    PulsePhase.MINUS_Y: 1.5 * math.pi,
}

# order of the four readout channels in a TraceSet
READOUT_PHASES = (PulsePhase.X, PulsePhase.MINUS_X, PulsePhase.Y, PulsePhase.MINUS_Y)


class SequenceKind(str, Enum):
    ODMR = "ODMR"
    RABI = "Rabi"
    HOLEBURN = "HoleBurn"
    ECHO = "Echo"
    DEER3 = "Deer3"
    DEER4 = "Deer4"


COHERENT_KINDS = (SequenceKind.ECHO, SequenceKind.DEER3, SequenceKind.DEER4)
DEER_KINDS = (SequenceKind.DEER3, SequenceKind.DEER4)
CROSSTALK_MODELS = ("exact", "far_detuned")


@dataclass(frozen=True)
class Pulse:
    """One microwave pulse; ``rabi`` and ``frequency_offset`` are cyclic (Hz)."""

    channel: Channel
    start: float
    duration: float
    phase: PulsePhase = PulsePhase.X
    frequency_offset: float = 0.0
    rabi: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"pulse duration must be > 0, got {self.duration}")
        if self.start < 0:
            raise ValueError(f"pulse start must be >= 0, got {self.start}")
        if self.rabi < 0:
            raise ValueError(f"pulse rabi must be >= 0, got {self.rabi}")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def center(self) -> float:
        return self.start + 0.5 * self.duration

    def describe(self) -> str:
        name = self.label or "pulse"
        return f"{self.channel.value}:{name}@{self.start * 1e6:.4g}us"


@dataclass(frozen=True)
class PulseTiming:
    """Pulse durations in seconds; ``pi`` defaults to 2 * pi_half + electronics_delay."""

    pi_half: float = 0.4e-6
    electronics_delay: float = 0.08e-6
    pi: Optional[float] = None
    pump: float = 0.4e-6
    pump_rabi: Optional[float] = None
    pump_frequency_offset: float = 49e6
    pump_alignment: str = "center"

    def __post_init__(self):
        if self.pi is None:
            object.__setattr__(self, "pi", 2.0 * self.pi_half + self.electronics_delay)
        if self.pump_rabi is None:
            object.__setattr__(self, "pump_rabi", 1.0 / (2.0 * self.pump))
        if self.pi_half <= 0 or self.pi <= 0 or self.pump <= 0:
            raise ValueError("pulse durations must be > 0")
        if self.electronics_delay < 0:
            raise ValueError("electronics_delay must be >= 0")
        if self.pump_alignment not in ("center", "start"):
            raise ValueError(f"pump_alignment must be 'center' or 'start', got {self.pump_alignment!r}")

    @property
    def a_rabi(self) -> float:
        """Cyclic Rabi frequency that makes the pi/2 pulse a quarter turn."""
        return 1.0 / (4.0 * (self.pi_half + self.electronics_delay))


@dataclass(frozen=True)
class PulseSequence:
    pulses: Tuple[Pulse, ...]
    readout_time: float
    kind: SequenceKind
    electronics_delay: float = 0.0
    reference_frequency: float = 0.0
    tau: Optional[float] = None
    pump_offset: Optional[float] = None

    def channel(self, channel: Channel) -> Tuple[Pulse, ...]:
        return tuple(p for p in self.pulses if p.channel is channel)

    def without_channel(self, channel: Channel) -> "PulseSequence":
        return replace(self, pulses=tuple(p for p in self.pulses if p.channel is not channel))

    @property
    def end(self) -> float:
        return max((p.end for p in self.pulses), default=0.0)


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    pulses: Tuple[int, ...] = ()


@dataclass(frozen=True)
class SimEnv:
    """
    Environment of the A spins.

    ``detuning_a`` and ``frame_drift_hz`` are cyclic (Hz). Exactly one of ``bath`` /
    ``analytic_kernel`` must be set to simulate a DEER sequence; a tuple of bath
    realizations is averaged.
    """

    bath: Optional[Tuple[BathRealization, ...]] = None
    analytic_kernel: Optional[KineticsParams] = None
    crosstalk: Optional[PulseParams] = None
    detuning_a: float = 0.0
    envelope: Optional[EnvelopeParams] = None
    initial_polarization: float = 1.0
    revivals: Tuple[float, ...] = ()
    crosstalk_model: str = "exact"
    frame_drift_hz: float = 0.0
    contrast: float = 0.03
    baseline: float = 1.0
    noise_sigma: float = 0.0
    b_fluorescence: float = 0.0
    bath_estimator: str = "weighted"

    def __post_init__(self):
        if isinstance(self.bath, BathRealization):
            object.__setattr__(self, "bath", (self.bath,))
        elif self.bath is not None:
            object.__setattr__(self, "bath", tuple(self.bath))
            if not self.bath:
                raise ValueError("bath must hold at least one realization")
        object.__setattr__(self, "revivals", tuple(float(t) for t in self.revivals))
        if not 0.0 <= self.initial_polarization <= 1.0:
            raise ValueError(f"initial_polarization must lie in [0, 1], got {self.initial_polarization}")
        if self.crosstalk_model not in CROSSTALK_MODELS:
            raise ValueError(f"crosstalk_model must be one of {CROSSTALK_MODELS}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def pump_flip_probability(self) -> float:
        if self.analytic_kernel is not None:
            return self.analytic_kernel.flip_probability
        if self.bath is not None:
            return max(b.flip_probability for b in self.bath)
        return 0.0

    def summary(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "detuning_a_hz": self.detuning_a,
            "frame_drift_hz": self.frame_drift_hz,
            "initial_polarization": self.initial_polarization,
            "crosstalk_model": self.crosstalk_model,
            "contrast": self.contrast,
            "baseline": self.baseline,
            "noise_sigma": self.noise_sigma,
        }
        if self.crosstalk is not None:
            out["crosstalk"] = {
                "rabi_rad_s": self.crosstalk.rabi,
                "detuning_rad_s": self.crosstalk.detuning,
                "duration_s": self.crosstalk.duration,
            }
        if self.analytic_kernel is not None:
            out["decay_rate_per_s"] = self.analytic_kernel.decay_rate
        if self.bath is not None:
            out["bath_realizations"] = len(self.bath)
        return out


@dataclass
class Spectrum:
    """A one-dimensional scan of a spectroscopy sequence (frequency or duration)."""

    scan_values: np.ndarray
    signal: np.ndarray
    kind: SequenceKind
    meta: Dict[str, Any] = field(default_factory=dict)


# -- builders ------------------------------------------------------------------------


def _a_pulse(start: float, duration: float, phase: PulsePhase, timing: PulseTiming, label: str) -> Pulse:
    return Pulse(Channel.A, start, duration, phase, 0.0, timing.a_rabi, label)


def _pump_pulse(center: float, timing: PulseTiming):
    """Raw pump tuple; its start may be negative until ``_assemble`` shifts the timeline."""
    start = center - 0.5 * timing.pump if timing.pump_alignment == "center" else center
    return (Channel.B, start, timing.pump, PulsePhase.X, timing.pump_frequency_offset, timing.pump_rabi, "pump")


def _assemble(pulses: List[Tuple[Channel, float, float, PulsePhase, float, float, str]]) -> Tuple[Pulse, ...]:
    """Sort raw pulse tuples by start, shifting the timeline so nothing starts before 0."""
    offset = -min(0.0, min(p[1] for p in pulses))
    built = [Pulse(ch, start + offset, dur, ph, fo, rabi, label) for ch, start, dur, ph, fo, rabi, label in pulses]
    return tuple(sorted(built, key=lambda p: (p.start, p.channel.value)))


def _raw(p: Pulse, start: Optional[float] = None):
    return (p.channel, p.start if start is None else start, p.duration, p.phase, p.frequency_offset, p.rabi, p.label)


def _checked(seq: PulseSequence) -> PulseSequence:
    violations = validate(seq)
    if violations:
        raise BadTiming(violations[0].message)
    return seq


def _echo_pulses(tau: float, final_phase: PulsePhase, timing: PulseTiming, refocusing: int):
    t90, t180 = timing.pi_half, timing.pi
    if tau < 0.5 * (t90 + t180):
        raise BadTiming(
            f"tau = {tau * 1e6:.4g} us is too short for a {t90 * 1e6:.4g} us pi/2 "
            f"and a {t180 * 1e6:.4g} us pi pulse"
        )
    if refocusing == 2 and 2.0 * tau < t180:
        raise BadTiming("refocusing pi pulses overlap")
    c0 = 0.5 * t90
    centers = [c0]
    if refocusing == 1:
        centers += [c0 + tau, c0 + 2.0 * tau]
    else:
        centers += [c0 + tau, c0 + 3.0 * tau, c0 + 4.0 * tau]
    raw = [_raw(_a_pulse(0.0, t90, PulsePhase.X, timing, "pi/2"))]
    for c in centers[1:-1]:
        raw.append(_raw(_a_pulse(c - 0.5 * t180, t180, PulsePhase.X, timing, "pi")))
    raw.append(_raw(_a_pulse(centers[-1] - 0.5 * t90, t90, final_phase, timing, "pi/2 readout")))
    return raw, centers


def _coherent_sequence(raw, kind, timing, tau, pump_offset=None) -> PulseSequence:
    pulses = _assemble(raw)
    return _checked(
        PulseSequence(
            pulses=pulses,
            readout_time=max(p.end for p in pulses),
            kind=kind,
            electronics_delay=timing.electronics_delay,
            tau=tau,
            pump_offset=pump_offset,
        )
    )


def build_echo(tau: float, final_phase: PulsePhase = PulsePhase.X, timing: PulseTiming = PulseTiming()) -> PulseSequence:
    raw, _ = _echo_pulses(tau, PulsePhase(final_phase), timing, refocusing=1)
    return _coherent_sequence(raw, SequenceKind.ECHO, timing, tau)


def build_deer3(
    tau: float,
    pump_offset: float,
    final_phase: PulsePhase = PulsePhase.X,
    timing: PulseTiming = PulseTiming(),
) -> PulseSequence:
    if not 0.0 <= pump_offset <= 2.0 * tau:
        raise BadTiming(f"pump offset {pump_offset * 1e6:.4g} us outside [0, 2 tau]")
    raw, centers = _echo_pulses(tau, PulsePhase(final_phase), timing, refocusing=1)
    raw.append(_pump_pulse(centers[0] + pump_offset, timing))
    return _coherent_sequence(raw, SequenceKind.DEER3, timing, tau, pump_offset)


def build_deer4(
    tau: float,
    pump_offset: float,
    final_phase: PulsePhase = PulsePhase.X,
    timing: PulseTiming = PulseTiming(),
) -> PulseSequence:
    if not 0.0 < pump_offset < 2.0 * tau:
        raise BadTiming(
            f"pump offset {pump_offset * 1e6:.4g} us must lie strictly between the refocusing pulses"
        )
    raw, centers = _echo_pulses(tau, PulsePhase(final_phase), timing, refocusing=2)
    raw.append(_pump_pulse(centers[1] + pump_offset, timing))
    return _coherent_sequence(raw, SequenceKind.DEER4, timing, tau, pump_offset)


def _single_pulse_sequence(pulses: Tuple[Pulse, ...], kind: SequenceKind, reference: float) -> PulseSequence:
    return _checked(
        PulseSequence(pulses=pulses, readout_time=max(p.end for p in pulses), kind=kind,
                      reference_frequency=reference)
    )


def build_odmr(freq_list: Sequence[float], pulse: PulseParams, reference_frequency: float = 0.0) -> List[PulseSequence]:
    """One probe pulse per absolute frequency (Hz); the pulse's rabi is angular."""
    if pulse.duration <= 0:
        raise BadTiming("ODMR pulse duration must be > 0")
    return [
        _single_pulse_sequence(
            (Pulse(Channel.A, 0.0, pulse.duration, PulsePhase.X, f - reference_frequency,
                   pulse.rabi / TWO_PI, "probe"),),
            SequenceKind.ODMR,
            reference_frequency,
        )
        for f in freq_list
    ]


def build_rabi(
    duration_list: Sequence[float], rabi: float, frequency: float, reference_frequency: float = 0.0
) -> List[PulseSequence]:
    """One resonant-or-detuned pulse per duration; ``rabi`` is angular, ``frequency`` absolute."""
    seqs = []
    for duration in duration_list:
        if duration <= 0:
            raise BadTiming(f"Rabi pulse duration must be > 0, got {duration}")
        seqs.append(
            _single_pulse_sequence(
                (Pulse(Channel.A, 0.0, duration, PulsePhase.X, frequency - reference_frequency,
                       rabi / TWO_PI, "drive"),),
                SequenceKind.RABI,
                reference_frequency,
            )
        )
    return seqs


def build_holeburn(
    pump: PulseParams,
    pump_frequency: float,
    probe_freqs: Sequence[float],
    probe: PulseParams,
    reference_frequency: float = 0.0,
) -> List[PulseSequence]:
    """Pump pi pulse on a |0> -> |-1> line followed by a weak probe pulse per frequency."""
    if pump.duration <= 0 or probe.duration <= 0:
        raise BadTiming("hole-burn pulse durations must be > 0")
    pump_pulse = Pulse(Channel.B, 0.0, pump.duration, PulsePhase.X, pump_frequency - reference_frequency,
                       pump.rabi / TWO_PI, "pump")
    return [
        _single_pulse_sequence(
            (pump_pulse,
             Pulse(Channel.A, pump.duration, probe.duration, PulsePhase.X, f - reference_frequency,
                   probe.rabi / TWO_PI, "probe")),
            SequenceKind.HOLEBURN,
            reference_frequency,
        )
        for f in probe_freqs
    ]


# -- validation ----------------------------------------------------------------------


def validate(seq: PulseSequence) -> List[Violation]:
    """Timing violations of ``seq`` in check order; an empty list means the sequence is valid."""
    problems: List[Violation] = []
    if not seq.pulses:
        return [Violation("empty", "sequence has no pulses")]
    for i in range(1, len(seq.pulses)):
        if seq.pulses[i].start < seq.pulses[i - 1].start:
            problems.append(
                Violation("ordering", f"pulse {i} ({seq.pulses[i].describe()}) starts before pulse {i - 1}", (i - 1, i))
            )
    a_idx = [i for i, p in enumerate(seq.pulses) if p.channel is Channel.A]
    a_sorted = sorted(a_idx, key=lambda i: seq.pulses[i].start)
    for i, j in zip(a_sorted, a_sorted[1:]):
        first, second = seq.pulses[i], seq.pulses[j]
        if second.start < first.end - 1e-15:
            problems.append(
                Violation("overlap", f"A pulses {first.describe()} and {second.describe()} overlap", (i, j))
            )
    if seq.readout_time < seq.end - 1e-15:
        problems.append(
            Violation("ordering", f"readout at {seq.readout_time * 1e6:.4g} us precedes the last pulse end "
                                  f"at {seq.end * 1e6:.4g} us")
        )
    return problems


# -- dipolar toggling ------------------------------------------------------------------


def toggling_integrals(seq: PulseSequence) -> Tuple[float, float]:
    """
    Signed dipolar times (flipped, unflipped) between the first and last A pulse centers.

    The A coherence sign toggles at every refocusing A pulse and a pumped B spin's sign at
    every B pulse center; the dipolar phase of a bath spin with shift w is w times the
    returned time (half the integral of the product of the toggling signs).
    """
    a = sorted(seq.channel(Channel.A), key=lambda p: p.center)
    if len(a) < 2:
        return 0.0, 0.0
    t0, t1 = a[0].center, a[-1].center
    events = [(p.center, "a") for p in a[1:-1]]
    events += [(p.center, "b") for p in seq.channel(Channel.B) if t0 < p.center < t1]
    events.sort(key=lambda e: e[0])
    sa = sb = 1.0
    flipped = unflipped = 0.0
    clock = t0
    for t, what in events + [(t1, "end")]:
        dt = t - clock
        flipped += sa * sb * dt
        unflipped += sa * dt
        clock = t
        if what == "a":
            sa = -sa
        elif what == "b":
            sb = -sb
    return 0.5 * flipped, 0.5 * unflipped


def dipolar_time(kind: SequenceKind, pump_offset, tau: float):
    """Closed-form signed dipolar time of the DEER builders' timelines."""
    T = np.asarray(pump_offset, dtype=float)
    kind = SequenceKind(kind)
    if kind is SequenceKind.DEER3:
        out = np.minimum(T, 2.0 * tau - T)
    elif kind is SequenceKind.DEER4:
        out = tau - T
    else:
        raise ValueError(f"no dipolar time for {kind.value} sequences")
    return float(out) if out.ndim == 0 else out


def normalization_offset(kind: SequenceKind, tau: float) -> float:
    """Pump offset whose signal normalizes a DEER trace (zero dipolar time)."""
    return 0.0 if SequenceKind(kind) is SequenceKind.DEER3 else tau


# -- coherent simulation -----------------------------------------------------------------


def _dipolar_factor(seq: PulseSequence, env: SimEnv) -> complex:
    t_flip, t_still = toggling_integrals(seq)
    if env.analytic_kernel is not None:
        value = analytic_deer(env.analytic_kernel, abs(t_flip))
        return value.conjugate() if t_flip < 0 else value
    factors = [realization_factor(b, t_flip, t_still, env.bath_estimator) for b in env.bath]
    return complex(np.mean(factors))


def _crosstalk_operator(env: SimEnv) -> PulseOperator:
    if env.crosstalk_model == "far_detuned":
        return far_detuned_approx(env.crosstalk)
    return detuned_pulse(env.crosstalk)


def simulate_channel(seq: PulseSequence, env: SimEnv, seed: int) -> float:
    """
    Signal of one readout channel (the phase of the last A pulse selects the channel).
    """
    if seq.kind not in COHERENT_KINDS:
        raise ValueError(f"{seq.kind.value} sequences are simulated with simulate_spectrum")
    violations = validate(seq)
    if violations:
        raise BadTiming(violations[0].message)
    b_pulses = seq.channel(Channel.B)
    is_deer = seq.kind in DEER_KINDS and bool(b_pulses)
    if is_deer and (env.bath is None) == (env.analytic_kernel is None):
        raise EnvMismatch("a DEER sequence needs exactly one of a bath or an analytic kernel")
    pump_active = is_deer and env.pump_flip_probability > 0.0

    a_pulses = sorted(seq.channel(Channel.A), key=lambda p: p.start)
    if not a_pulses:
        rho = _initial_density(np.array([1.0 + 0j, 0j]), env.initial_polarization)
        return _readout(float(rho[0, 0].real), env, seed)

    events = [(p.center, 0, p) for p in a_pulses]
    if pump_active:
        events += [(p.center, 1, p) for p in b_pulses]
    events.sort(key=lambda e: (e[0], e[1]))

    omega_a = TWO_PI * env.detuning_a
    final = a_pulses[-1]
    first_center = a_pulses[0].center
    crosstalk = _crosstalk_operator(env) if (pump_active and env.crosstalk is not None) else None

    def a_rotation(p: Pulse, extra_phase: float = 0.0) -> np.ndarray:
        params = PulseParams(TWO_PI * p.rabi, omega_a, p.duration + seq.electronics_delay)
        return rotation(params, p.phase.angle + extra_phase).as_matrix()

    psi = np.array([1.0 + 0j, 0j])
    clock = a_pulses[0].start
    pending: List[np.ndarray] = []
    reached_final = False
    for t, order, p in events:
        if p is final:
            reached_final = True
            continue
        if order == 1 and crosstalk is None:
            continue
        if reached_final:
            pending.append(crosstalk.as_matrix())
            continue
        t_event = p.start if order == 0 else _crosstalk_time(t, a_pulses)
        if t_event > clock:
            psi = free_evolution(omega_a, t_event - clock).as_matrix() @ psi
            clock = t_event
        if order == 0:
            psi = a_rotation(p) @ psi
            clock = max(clock, p.end)
        else:
            psi = crosstalk.as_matrix() @ psi

    if final.start > clock:
        psi = free_evolution(omega_a, final.start - clock).as_matrix() @ psi

    rho = _initial_density(psi, env.initial_polarization)
    coherence = 1.0 + 0j
    if pump_active:
        coherence *= _dipolar_factor(seq, env)
    if env.envelope is not None:
        coherence *= echo_envelope(final.center - first_center, env.envelope, env.revivals)
    rho[1, 0] *= coherence
    rho[0, 1] = rho[1, 0].conjugate()

    drift = TWO_PI * env.frame_drift_hz * (final.center - first_center)
    u = a_rotation(final, drift)
    rho = u @ rho @ u.conj().T
    for u in pending:
        rho = u @ rho @ u.conj().T
    return _readout(float(rho[0, 0].real), env, seed)


def _crosstalk_time(t: float, a_pulses: Sequence[Pulse]) -> float:
    """A pump centered in the first half of an A pulse acts at that pulse's start."""
    for a in a_pulses:
        if a.start <= t < a.center:
            return a.start
    return t


def _initial_density(psi: np.ndarray, eps: float) -> np.ndarray:
    return eps * np.outer(psi, psi.conj()) + 0.5 * (1.0 - eps) * np.eye(2, dtype=complex)


def _readout(pop0: float, env: SimEnv, seed: int) -> float:
    value = readout_signal(min(max(pop0, 0.0), 1.0), env.contrast, env.baseline) + env.b_fluorescence
    if env.noise_sigma > 0:
        value += float(rng_for(seed).normal(0.0, env.noise_sigma))
    return value


SequenceBuilder = Callable[[float, PulsePhase], PulseSequence]


def scan(
    seq_builder: SequenceBuilder,
    scan_values: Sequence[float],
    env: SimEnv,
    seed: int,
    threads: int = 1,
    on_progress: Optional[Callable[[int, int], None]] = None,
) -> TraceSet:
    """
    Simulate all four readout channels at every scan value.

    Point (i, j) uses the seed derived from (seed, i, j), and results are placed by index,
    so any thread count gives the same TraceSet.
    """
    values = np.asarray(scan_values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("scan_values must be a nonempty 1-d sequence")
    if not is_strictly_monotone(values):
        raise ValueError("scan_values must be strictly monotone")

    def point(i: int, j: int) -> float:
        value = float(values[i])
        try:
            return simulate_channel(seq_builder(value, READOUT_PHASES[j]), env, derive_seed(seed, i, j))
        except NVDeerError as err:
            raise ScanError(value, err) from err

    tasks = [
        (lambda i=i, j=j: point(i, j)) for i in range(len(values)) for j in range(len(READOUT_PHASES))
    ]
    logger.info(f"Scanning {len(values)} points x {len(READOUT_PHASES)} channels on {threads} thread(s)")
    flat = WorkerPool(threads).run(tasks, on_progress=on_progress)
    grid = np.asarray(flat, dtype=float).reshape(len(values), len(READOUT_PHASES))

    try:
        reference = seq_builder(float(values[0]), PulsePhase.X)
    except NVDeerError as err:
        raise ScanError(float(values[0]), err) from err
    meta: Dict[str, Any] = {"kind": reference.kind.value, "seed": int(seed), "env": env.summary()}
    if reference.tau is not None:
        meta["tau_s"] = reference.tau
    if reference.kind in DEER_KINDS:
        meta["dipolar_time_s"] = [
            toggling_integrals(seq_builder(float(v), PulsePhase.X))[0] for v in values
        ]
    return TraceSet(values, grid[:, 0], grid[:, 1], grid[:, 2], grid[:, 3], meta=meta)


# -- spectroscopy ------------------------------------------------------------------------


def simulate_spectrum(
    seq: PulseSequence, lines: Sequence[SpectralLine], contrast: float = 0.03, baseline: float = 1.0
) -> float:
    """
    Readout after a spectroscopy sequence, treating every (orientation, m_I) subensemble
    as a three-level population: each pulse exchanges population between |0> and the
    |-1> / |+1> level of that subensemble with the Rabi transfer probability.
    """
    groups: Dict[Tuple[int, int], Dict[str, float]] = {}
    weights: Dict[Tuple[int, int], float] = {}
    for line in lines:
        key = (line.orientation, line.m_i)
        groups.setdefault(key, {})[line.transition] = line.frequency
        weights[key] = line.weight
    pulses = sorted(seq.pulses, key=lambda p: p.start)
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("spectral lines carry no weight")

    pop0 = 0.0
    for key, freqs in groups.items():
        populations = {"zero": 1.0, "minus": 0.0, "plus": 0.0}
        for p in pulses:
            f_abs = seq.reference_frequency + p.frequency_offset
            for transition, f_line in freqs.items():
                q = rabi_population(PulseParams(TWO_PI * p.rabi, TWO_PI * (f_abs - f_line), p.duration))
                p0, p1 = populations["zero"], populations[transition]
                populations["zero"] = p0 * (1.0 - q) + p1 * q
                populations[transition] = p1 * (1.0 - q) + p0 * q
        pop0 += weights[key] * populations["zero"]
    return readout_signal(pop0 / total, contrast, baseline)


def scan_spectrum(
    sequences: Sequence[PulseSequence],
    lines: Sequence[SpectralLine],
    contrast: float = 0.03,
    baseline: float = 1.0,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> Spectrum:
    """ODMR / hole-burn spectra over probe frequency, Rabi traces over pulse duration."""
    if not sequences:
        raise ValueError("no sequences to scan")
    kind = sequences[0].kind
    values, signal = [], []
    for i, seq in enumerate(sequences):
        probe = seq.channel(Channel.A)[-1]
        values.append(probe.duration if kind is SequenceKind.RABI else seq.reference_frequency + probe.frequency_offset)
        value = simulate_spectrum(seq, lines, contrast, baseline)
        if noise_sigma > 0:
            value += float(rng_for(seed, i).normal(0.0, noise_sigma))
        signal.append(value)
    return Spectrum(np.asarray(values), np.asarray(signal), kind, {"seed": int(seed), "contrast": contrast})


def pump_flip_fraction(
    pump_frequency: float,
    field: BiasField,
    nv: NVParams,
    orientation: int,
    timing: PulseTiming,
    transition: str = "minus",
) -> float:
    """Fraction of spins of one orientation flipped by the pump, averaged over the triplet."""
    triplet = resonance_frequencies(field, nv, transition)[orientation]
    q = [
        rabi_population(PulseParams(TWO_PI * timing.pump_rabi, TWO_PI * (pump_frequency - f), timing.pump))
        for f in triplet
    ]
    return float(np.mean(q))


DEER_SPECTRUM_MODES = ("pump_only", "probe_only", "both")


def deer_spectrum(
    pump_frequencies: Sequence[float],
    mode: str,
    tau: float,
    pump_offset: float,
    env: SimEnv,
    field: BiasField,
    nv: NVParams,
    b_orientation: int,
    seed: int,
    timing: PulseTiming = PulseTiming(),
    b_contrast: float = 0.0,
    threads: int = 1,
) -> TraceSet:
    """
    Control experiments over the pump frequency.

    ``pump_only`` leaves the A spins idle, ``probe_only`` runs the plain echo and ``both``
    the 3-pulse DEER sequence. The pumped B fraction changes the kinetics' flip
    probability and adds ``-b_contrast * fraction`` of B fluorescence to every channel.
    """
    if mode not in DEER_SPECTRUM_MODES:
        raise ValueError(f"mode must be one of {DEER_SPECTRUM_MODES}, got {mode!r}")
    if env.analytic_kernel is None:
        raise EnvMismatch("deer_spectrum needs an analytic kernel")
    freqs = np.asarray(pump_frequencies, dtype=float)
    base_p = env.analytic_kernel.flip_probability

    def point(i: int, j: int) -> float:
        fraction = pump_flip_fraction(float(freqs[i]), field, nv, b_orientation, timing)
        pumped = mode != "probe_only"
        point_env = replace(
            env,
            analytic_kernel=replace(env.analytic_kernel, flip_probability=base_p * fraction if pumped else 0.0),
            b_fluorescence=env.b_fluorescence - (b_contrast * fraction if pumped else 0.0),
        )
        seq = build_deer3(tau, pump_offset, READOUT_PHASES[j], timing)
        if mode == "pump_only":
            seq = seq.without_channel(Channel.A)
        elif mode == "probe_only":
            seq = seq.without_channel(Channel.B)
        return simulate_channel(seq, point_env, derive_seed(seed, i, j))

    tasks = [(lambda i=i, j=j: point(i, j)) for i in range(len(freqs)) for j in range(len(READOUT_PHASES))]
    grid = np.asarray(WorkerPool(threads).run(tasks), dtype=float).reshape(len(freqs), len(READOUT_PHASES))
    return TraceSet(freqs, grid[:, 0], grid[:, 1], grid[:, 2], grid[:, 3],
                    meta={"kind": "DeerSpectrum", "mode": mode, "tau_s": tau, "pump_offset_s": pump_offset})
