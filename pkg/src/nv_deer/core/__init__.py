"""
Core physics: spin algebra, NV model, spin bath and pulse sequences.
"""

from .spin_core import (
    SpinState,
    PulseOperator,
    PulseParams,
    equator_state,
    pi_pulse,
    detuned_pulse,
    far_detuned_approx,
    apply,
    phase_jump_exact,
    phase_jump_approx,
    detuning_phase,
)
from .nv_model import (
    NVParams,
    BiasField,
    EnvelopeParams,
    resonance_frequencies,
    larmor_revival_times,
    rabi_population,
    echo_envelope,
    readout_signal,
)
from .spin_bath import (
    PhysicalConstants,
    KineticsParams,
    BathRealization,
    compute_k,
    ppb_to_density,
    density_to_ppb,
    analytic_deer,
    sample_bath,
    mc_deer_trace,
)
from .sequence_engine import (
    Channel,
    PulsePhase,
    SequenceKind,
    Pulse,
    PulseTiming,
    PulseSequence,
    SimEnv,
    build_echo,
    build_deer3,
    build_deer4,
    build_odmr,
    build_rabi,
    build_holeburn,
    validate,
    simulate_channel,
    scan,
)
from .workers import WorkerPool

__all__ = [
    "SpinState",
    "PulseOperator",
    "PulseParams",
    "equator_state",
    "pi_pulse",
    "detuned_pulse",
    "far_detuned_approx",
    "apply",
    "phase_jump_exact",
    "phase_jump_approx",
    "detuning_phase",
    "NVParams",
    "BiasField",
    "EnvelopeParams",
    "resonance_frequencies",
    "larmor_revival_times",
    "rabi_population",
    "echo_envelope",
    "readout_signal",
    "PhysicalConstants",
    "KineticsParams",
    "BathRealization",
    "compute_k",
    "ppb_to_density",
    "density_to_ppb",
    "analytic_deer",
    "sample_bath",
    "mc_deer_trace",
    "Channel",
    "PulsePhase",
    "SequenceKind",
    "Pulse",
    "PulseTiming",
    "PulseSequence",
    "SimEnv",
    "build_echo",
    "build_deer3",
    "build_deer4",
    "build_odmr",
    "build_rabi",
    "build_holeburn",
    "validate",
    "simulate_channel",
    "scan",
    "WorkerPool",
]
