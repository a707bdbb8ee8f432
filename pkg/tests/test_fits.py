import math
from dataclasses import replace

import numpy as np
import pytest

from nv_deer.analysis.fits import (
    decay_inputs,
    fit_complex_decay,
    fit_exp_decay,
    fit_linear,
    fit_lorentzian_triplet,
    holeburn_efficiency,
)
from nv_deer.analysis.models import LorentzianTripletModel
from nv_deer.analysis.tomography import TraceSet
from nv_deer.errors import BadInit, DegenerateX, DivisionDegenerate, LengthMismatch, NoConvergence

from .conftest import lorentzian_spectrum

F0 = 2.6356e9
SPLIT = 2.16e6
GAMMA = 0.5e6
CENTERS = (F0 - SPLIT, F0, F0 + SPLIT)


@pytest.fixture
def freqs():
    return np.linspace(F0 - 6e6, F0 + 6e6, 241)


@pytest.fixture
def reference_fit(freqs):
    amplitudes = [0.01 * GAMMA] * 3
    return fit_lorentzian_triplet(freqs, lorentzian_spectrum(freqs, CENTERS, amplitudes, GAMMA))


def test_triplet_fit_recovers_lines(reference_fit):
    assert reference_fit.converged
    centers = sorted(reference_fit.params[f"f{i}"] for i in (1, 2, 3))
    assert centers == pytest.approx(CENTERS, abs=1e3)
    assert reference_fit.params["gamma"] == pytest.approx(GAMMA, rel=1e-4)
    assert reference_fit.params["L0"] == pytest.approx(1.0, abs=1e-6)
    assert reference_fit.units["f1"] == "Hz"


def test_holeburn_efficiency_from_synthetic_spectrum(freqs, reference_fit):
    flipped = 0.68
    hole = lorentzian_spectrum(freqs, CENTERS, [(1 - flipped) * 0.01 * GAMMA] * 3, GAMMA)
    hole_fit = fit_lorentzian_triplet(freqs, hole, init=reference_fit)
    efficiency = holeburn_efficiency(hole_fit, reference_fit)
    assert efficiency.value == pytest.approx(0.17, abs=0.01)
    assert efficiency.uncertainty >= 0.0


def test_holeburn_needs_converged_fits(freqs, reference_fit):
    with pytest.raises(NoConvergence):
        holeburn_efficiency(replace(reference_fit, converged=False), reference_fit)


def test_triplet_init_outside_span(freqs, reference_fit):
    narrow = freqs[100:140]
    y = lorentzian_spectrum(narrow, CENTERS, [0.01 * GAMMA] * 3, GAMMA)
    with pytest.raises(BadInit):
        fit_lorentzian_triplet(narrow, y, init=reference_fit)


def test_triplet_needs_enough_points(freqs):
    with pytest.raises(LengthMismatch):
        fit_lorentzian_triplet(freqs[:9], np.ones(9))


def test_exp_decay_fit():
    t = np.linspace(0.0, 4e-4, 30)
    y = 0.8 * np.exp(-6.3e3 * t)
    report = fit_exp_decay(t, y)
    assert report.params["rate"] == pytest.approx(6.3e3, rel=1e-8)
    assert report.params["amplitude"] == pytest.approx(0.8, rel=1e-8)
    with pytest.raises(LengthMismatch):
        fit_exp_decay(t[:4], y[:4])


def test_complex_decay_ratio():
    t = np.linspace(0.0, 3e-4, 25)
    rate, omega = 6.3e3, 0.1 * 6.3e3
    z = np.exp((-rate + 1j * omega) * t)
    report = fit_complex_decay(t, z)
    assert report.params["rate"] == pytest.approx(rate, rel=1e-8)
    assert report.params["angular_velocity"] == pytest.approx(omega, rel=1e-8)
    assert report.params["ratio"] == pytest.approx(0.1, rel=1e-8)


def test_complex_decay_rejects_zero_magnitude():
    t = np.linspace(0.0, 1.0, 6)
    z = np.array([1.0, 0.5, 0.0, 0.2, 0.1, 0.05], dtype=complex)
    with pytest.raises(DivisionDegenerate):
        fit_complex_decay(t, z)


def test_linear_fit_without_intercept():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    report = fit_linear(x, 0.7 * x, intercept=False)
    assert report.params["slope"] == pytest.approx(0.7, rel=1e-9)
    with pytest.raises(DegenerateX):
        fit_linear([2.0, 2.0, 2.0], [1.0, 2.0, 3.0])


def test_decay_inputs_normalize_deer4_at_tau():
    tau = 10e-6
    T = np.linspace(2e-6, 18e-6, 9)
    magnitude = 0.03 * np.exp(-1e4 * np.abs(tau - T))
    trace = TraceSet(T, 1.0 + magnitude, 1.0 - magnitude, np.ones(9), np.ones(9),
                     meta={"kind": "Deer4", "tau_s": tau})
    t_dip, normalized, _ = decay_inputs(trace)
    assert t_dip == pytest.approx(np.abs(tau - T))
    assert normalized[4] == pytest.approx(1.0)
    assert normalized == pytest.approx(np.exp(-1e4 * t_dip))
    assert math.isclose(fit_exp_decay(t_dip, normalized).params["rate"], 1e4, rel_tol=1e-6)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_triplet_fit_with_noise_recovers_lines(freqs, seed):
    amplitudes = [0.01 * GAMMA] * 3
    clean = lorentzian_spectrum(freqs, CENTERS, amplitudes, GAMMA)
    noise = 0.01 * (1.0 - clean.min())
    noisy = clean + np.random.default_rng(seed).normal(0.0, noise, len(freqs))

    report = fit_lorentzian_triplet(freqs, noisy, sigma=np.full(len(freqs), noise))

    assert report.converged
    centers = sorted(report.params[f"f{i}"] for i in (1, 2, 3))
    assert centers == pytest.approx(CENTERS, abs=0.1 * GAMMA)


def test_flat_spectrum_has_no_resolvable_lines(freqs):
    noise = 1e-4
    flat = 1.0 + np.random.default_rng(3).normal(0.0, noise, len(freqs))
    try:
        report = fit_lorentzian_triplet(freqs, flat, sigma=np.full(len(freqs), noise), strict=True)
    except NoConvergence:
        return

    p = np.array([report.params[n] for n in LorentzianTripletModel().param_names])
    model = LorentzianTripletModel().evaluate(freqs, p)
    assert np.max(np.abs(model - report.params["L0"])) < 10 * noise
    for i in (1, 2, 3):
        a, err = report.params[f"A{i}"], report.uncertainties[f"A{i}"]
        assert not math.isfinite(err) or abs(a) <= 5 * err


def test_weighted_line_uncertainty_is_calibrated():
    rng = np.random.default_rng(11)
    x = np.linspace(0.0, 10.0, 20)
    y_err = 0.05 * (1.0 + x)
    slope, intercept = 2.0, 1.0
    repeats = 400

    covered = 0
    for _ in range(repeats):
        y = slope * x + intercept + rng.normal(0.0, y_err)
        report = fit_linear(x, y, y_err=y_err)
        if abs(report.params["slope"] - slope) <= report.uncertainties["slope"]:
            covered += 1

    assert covered / repeats >= 0.62
