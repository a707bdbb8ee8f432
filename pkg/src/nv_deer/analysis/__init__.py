"""
Tomography and fitting of simulated or measured traces.
"""

from .tomography import (
    TraceSet,
    TomographyResult,
    echo_tomography,
    deer_tomography,
    unwrap_phase,
    phase_step,
)
from .solver import FitReport, SolverOptions, least_squares_solve
from .models import FitModel, get_model
from .fits import (
    Estimate,
    fit_lorentzian_triplet,
    holeburn_efficiency,
    fit_exp_decay,
    fit_complex_decay,
    fit_linear,
    decay_inputs,
)

__all__ = [
    "TraceSet",
    "TomographyResult",
    "echo_tomography",
    "deer_tomography",
    "unwrap_phase",
    "phase_step",
    "FitReport",
    "SolverOptions",
    "least_squares_solve",
    "FitModel",
    "get_model",
    "Estimate",
    "fit_lorentzian_triplet",
    "holeburn_efficiency",
    "fit_exp_decay",
    "fit_complex_decay",
    "fit_linear",
    "decay_inputs",
]
