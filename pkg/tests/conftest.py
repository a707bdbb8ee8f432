import json
import math
from pathlib import Path

import numpy as np
import pytest

from nv_deer.core.sequence_engine import PulseTiming, SimEnv
from nv_deer.core.spin_bath import KineticsParams, PhysicalConstants, compute_k
from nv_deer.core.spin_core import PulseParams

TWO_PI = 2.0 * math.pi


@pytest.fixture
def constants() -> PhysicalConstants:
    return PhysicalConstants()


@pytest.fixture
def timing() -> PulseTiming:
    return PulseTiming()


@pytest.fixture
def crosstalk() -> PulseParams:
    """1.5 MHz crosstalk drive detuned by 49 MHz for a 0.4 us pump."""
    return PulseParams(TWO_PI * 1.5e6, TWO_PI * 49e6, 0.4e-6)


def kinetics_for_rate(rate: float, flip_probability: float = 0.68, polarization: float = 0.0) -> KineticsParams:
    k = compute_k(PhysicalConstants())
    return KineticsParams(rate / (flip_probability * k), flip_probability, k, polarization=polarization)


@pytest.fixture
def kinetics() -> KineticsParams:
    return kinetics_for_rate(6.3e3)


@pytest.fixture
def deer_env(kinetics, crosstalk) -> SimEnv:
    return SimEnv(analytic_kernel=kinetics, crosstalk=crosstalk)


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a JSON file and return its path."""

    def _write(data: dict, name: str = "config.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(data, indent=2), encoding="utf-8")
        return path

    return _write


@pytest.fixture
def deer3_config() -> dict:
    return {
        "experiment": "deer3",
        "seed": 7,
        "timing": {"tau_us": 41},
        "kinetics": {"decay_rate_per_s": 6300, "flip_probability": 0.68},
        "scan": {"variable": "pump_offset_us", "start": 0, "stop": 82, "points": 41},
    }


def lorentzian_spectrum(freqs, centers, amplitudes, gamma, baseline=1.0):
    out = np.full_like(freqs, baseline, dtype=float)
    for a, f in zip(amplitudes, centers):
        out -= gamma * a / ((freqs - f) ** 2 + gamma**2)
    return out
