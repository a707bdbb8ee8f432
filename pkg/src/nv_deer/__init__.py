"""
NV-DEER toolkit

Simulation and analysis of double electron-electron resonance on NV-center ensembles:
pulse sequences, spin baths, state tomography and fitting.
"""

__version__ = "0.1.0"

from .errors import NVDeerError
from .core import (
    PulseTiming,
    SimEnv,
    build_deer3,
    build_deer4,
    build_echo,
    compute_k,
    mc_deer_trace,
    scan,
)
from .analysis import (
    FitReport,
    deer_tomography,
    echo_tomography,
    fit_complex_decay,
    fit_exp_decay,
    fit_lorentzian_triplet,
    holeburn_efficiency,
)


def main():
    """Entry point for the nv-deer command."""
    import sys

    from .cli import main as cli_main

    sys.exit(cli_main())


__all__ = [
    "NVDeerError",
    "PulseTiming",
    "SimEnv",
    "build_deer3",
    "build_deer4",
    "build_echo",
    "compute_k",
    "mc_deer_trace",
    "scan",
    "FitReport",
    "deer_tomography",
    "echo_tomography",
    "fit_complex_decay",
    "fit_exp_decay",
    "fit_lorentzian_triplet",
    "holeburn_efficiency",
    "main",
]
