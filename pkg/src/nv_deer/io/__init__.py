"""
Configuration, result files, run manifests and experiment orchestration.
"""

from .config import ExperimentConfig, default_config, load_config, parse_config
from .manifest import RunManifest, load_manifest, save_manifest, verify_outputs
from .serialization import (
    read_fit_report,
    read_mc_trace,
    read_spectrum,
    read_traces,
    write_fit_report,
    write_mc_trace,
    write_spectrum,
    write_traces,
)
from .runner import RunResult, run_analyze, run_fit_decay, run_fit_odmr, run_holeburn, run_mc_bath, run_simulate

__all__ = [
    "ExperimentConfig",
    "default_config",
    "load_config",
    "parse_config",
    "RunManifest",
    "load_manifest",
    "save_manifest",
    "verify_outputs",
    "read_fit_report",
    "read_mc_trace",
    "read_spectrum",
    "read_traces",
    "write_fit_report",
    "write_mc_trace",
    "write_spectrum",
    "write_traces",
    "RunResult",
    "run_analyze",
    "run_fit_decay",
    "run_fit_odmr",
    "run_holeburn",
    "run_mc_bath",
    "run_simulate",
]
