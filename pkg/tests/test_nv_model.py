import math

import numpy as np
import pytest

from nv_deer.core.nv_model import (
    BiasField,
    EnvelopeParams,
    NVParams,
    echo_envelope,
    larmor_revival_times,
    rabi_population,
    readout_signal,
    resonance_frequencies,
    spectral_lines,
)
from nv_deer.core.spin_core import PulseParams
from nv_deer.errors import ZeroField

TWO_PI = 2.0 * math.pi


def test_first_revival_at_23_gauss():
    tau = larmor_revival_times(23.0, NVParams(), 3)
    assert tau[0] * 1e6 == pytest.approx(40.6, abs=0.1)
    assert np.allclose(tau, tau[0] * np.arange(1, 4))


def test_revivals_need_a_field():
    with pytest.raises(ZeroField):
        larmor_revival_times(0.0, NVParams(), 1)
    with pytest.raises(ValueError):
        larmor_revival_times(23.0, NVParams(), 0)


def test_field_along_one_axis_splits_orientations():
    nv = NVParams()
    triplets = resonance_frequencies(BiasField((1, 1, 1), 23.0), nv, "minus")
    aligned = nv.zfs - nv.gamma_e * 23.0
    assert triplets[0][1] == pytest.approx(aligned)
    for other in triplets[1:]:
        assert other[1] == pytest.approx(nv.zfs - nv.gamma_e * 23.0 / 3.0)
    for low, mid, high in triplets:
        assert mid - low == pytest.approx(nv.hyperfine_splitting)
        assert high - mid == pytest.approx(nv.hyperfine_splitting)


def test_plus_transition_mirrors_minus():
    nv = NVParams()
    field = BiasField((1, 0, 0), 50.0)
    minus = resonance_frequencies(field, nv, "minus")
    plus = resonance_frequencies(field, nv, "plus")
    for m, p in zip(minus, plus):
        assert m[1] + p[1] == pytest.approx(2 * nv.zfs)
    with pytest.raises(ValueError):
        resonance_frequencies(field, nv, "zero")


def test_spectral_lines_cover_all_subensembles():
    lines = spectral_lines(BiasField((1, 1, 1), 23.0), NVParams())
    assert len(lines) == 24
    assert len({(l.orientation, l.m_i, l.transition) for l in lines}) == 24
    assert sum(l.weight for l in lines) == pytest.approx(2.0)


def test_orientations_must_be_tetrahedral():
    with pytest.raises(ValueError):
        NVParams(orientations=((1, 0, 0), (0, 1, 0), (0, 0, 1), (1, 1, 1)))


def test_rabi_population():
    assert rabi_population(PulseParams(TWO_PI * 1e6, 0.0, 0.5e-6)) == pytest.approx(1.0)
    assert rabi_population(PulseParams(TWO_PI * 1e6, 0.0, 1.0e-6)) == pytest.approx(0.0, abs=1e-12)
    detuned = rabi_population(PulseParams(TWO_PI * 1e6, TWO_PI * 1e6, 0.5e-6))
    assert 0.0 < detuned <= 0.5


def test_echo_envelope_revival_comb():
    env = EnvelopeParams(t2=300e-6, stretch_exponent=2.0, revival_width=3e-6)
    revivals = larmor_revival_times(23.0, NVParams(), 2)
    assert echo_envelope(0.0, env, revivals) == pytest.approx(1.0)
    at_revival = echo_envelope(2 * revivals[0], env, revivals)
    between = echo_envelope(revivals[0], env, revivals)
    assert at_revival == pytest.approx(math.exp(-((2 * revivals[0] / 300e-6) ** 2)))
    assert between < 1e-6
    assert echo_envelope(revivals[0], env) > 0.9


def test_envelope_parameter_ranges():
    with pytest.raises(ValueError):
        EnvelopeParams(t2=0.0)
    with pytest.raises(ValueError):
        EnvelopeParams(t2=1e-4, stretch_exponent=5.0)


def test_readout_signal():
    assert readout_signal(1.0, 0.03, 2.0) == pytest.approx(2.0)
    assert readout_signal(0.0, 0.03, 2.0) == pytest.approx(2.0 * 0.97)
    with pytest.raises(ValueError):
        readout_signal(0.5, 1.5, 1.0)
    with pytest.raises(ValueError):
        readout_signal(1.5, 0.1, 1.0)
