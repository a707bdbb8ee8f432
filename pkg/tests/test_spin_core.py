import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from nv_deer.core.spin_core import (
    PulseOperator,
    PulseParams,
    SpinState,
    apply,
    detuned_pulse,
    detuning_phase,
    equator_state,
    far_detuned_approx,
    free_evolution,
    identity,
    phase_jump_approx,
    phase_jump_exact,
    phase_jump_vs_rabi,
    pi_pulse,
    relative_phase,
    rotation,
    wrap_angle,
)
from nv_deer.errors import ApproximationDomain, NonUnitary

TWO_PI = 2.0 * math.pi
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

rabis = st.floats(min_value=0.0, max_value=TWO_PI * 50e6)
detunings = st.floats(min_value=-TWO_PI * 100e6, max_value=TWO_PI * 100e6)
durations = st.floats(min_value=0.0, max_value=2e-6)
phases = st.floats(min_value=-math.pi, max_value=math.pi)


@settings(max_examples=300, deadline=None)
@given(rabis, detunings, durations, phases)
def test_rotation_is_unitary(rabi, detuning, duration, phase):
    op = rotation(PulseParams(rabi, detuning, duration), phase)
    assert op.unitarity_residual() < 1e-12


@settings(max_examples=100, deadline=None)
@given(
    st.floats(min_value=0.0, max_value=TWO_PI * 20e6),
    st.floats(min_value=-TWO_PI * 20e6, max_value=TWO_PI * 20e6),
    st.floats(min_value=0.0, max_value=1e-6),
    phases,
)
def test_rotation_matches_matrix_exponential(rabi, detuning, duration, phase):
    h = 0.5 * (rabi * (math.cos(phase) * SX + math.sin(phase) * SY) + detuning * SZ)
    expected = expm(-1j * h * duration)
    got = rotation(PulseParams(rabi, detuning, duration), phase).as_matrix()
    assert np.allclose(got, expected, atol=1e-9)


def test_free_evolution_is_z_precession():
    op = free_evolution(TWO_PI * 1e6, 0.3e-6)
    expected = expm(-0.5j * TWO_PI * 1e6 * 0.3e-6 * SZ)
    assert np.allclose(op.as_matrix(), expected)


def test_half_pi_pulse_puts_ground_state_on_equator():
    p = PulseParams(TWO_PI * 1e6, 0.0, 0.25e-6)
    state = apply(rotation(p), SpinState.ground())
    assert abs(state.up) == pytest.approx(abs(state.down))
    # x-axis pulse leaves the vector along -y
    assert state.bloch()[1] == pytest.approx(-1.0)


def test_pi_pulse_inverts_population():
    state = apply(pi_pulse(), SpinState.ground())
    assert abs(state.up) == pytest.approx(0.0)
    assert abs(state.down) == pytest.approx(1.0)
    resonant_pi = rotation(PulseParams(TWO_PI * 1e6, 0.0, 0.5e-6))
    assert resonant_pi.equals_up_to_global_phase(pi_pulse())


def test_equator_state_azimuth():
    for phase in (-2.0, -0.3, 0.0, 1.2, 3.0):
        assert equator_state(phase).azimuth == pytest.approx(phase)
    assert relative_phase(equator_state(3.0), equator_state(-3.0)) == pytest.approx(wrap_angle(6.0))


def test_wrap_angle_range():
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.5 + 4 * math.pi) == pytest.approx(0.5)


def test_detuned_pulse_without_drive_is_identity():
    op = detuned_pulse(PulseParams(0.0, TWO_PI * 49e6, 0.4e-6))
    assert op == identity()


def test_apply_rejects_non_unitary_operator():
    scaled = PulseOperator(1.1 + 0j, 0j, 0j, 1 + 0j)
    with pytest.raises(NonUnitary):
        apply(scaled, SpinState.ground())


def test_phase_jump_for_typical_crosstalk(crosstalk):
    assert math.degrees(phase_jump_exact(crosstalk)) == pytest.approx(6.6, abs=0.05)
    assert math.degrees(phase_jump_approx(crosstalk)) == pytest.approx(6.6, abs=0.05)


def test_phase_jump_needs_positive_detuning():
    with pytest.raises(ValueError):
        phase_jump_exact(PulseParams(TWO_PI * 1e6, 0.0, 1e-6))
    with pytest.raises(ValueError):
        phase_jump_approx(PulseParams(TWO_PI * 1e6, -TWO_PI * 10e6, 1e-6))


def test_phase_jump_vs_rabi_grows_with_drive():
    detuning = TWO_PI * 49e6
    jumps = [phase_jump_vs_rabi(TWO_PI * r * 1e6, detuning) for r in (0.5, 1.0, 2.0, 4.0)]
    assert phase_jump_vs_rabi(0.0, detuning) == 0.0
    assert all(a < b for a, b in zip(jumps, jumps[1:]))


def test_far_detuned_approximation_matches_exact_diagonal(crosstalk):
    exact = detuned_pulse(crosstalk).as_matrix()
    approx = far_detuned_approx(crosstalk).as_matrix()
    assert np.allclose(np.diag(approx), np.diag(exact), atol=1e-3)
    # one pulse shifts the relative phase by half the jump
    assert -2.0 * np.angle(approx[0, 0]) == pytest.approx(0.5 * phase_jump_exact(crosstalk))


def test_far_detuned_approximation_domain():
    with pytest.raises(ApproximationDomain):
        far_detuned_approx(PulseParams(TWO_PI * 10e6, TWO_PI * 49e6, 0.4e-6))
    with pytest.raises(ApproximationDomain):
        far_detuned_approx(PulseParams(TWO_PI * 1e6, 0.0, 0.4e-6))


def test_detuning_phase():
    assert detuning_phase(10e-6, 1e3) == pytest.approx(4 * math.pi * 1e-2)
    assert detuning_phase(0.0, 5e6) == 0.0
    with pytest.raises(ValueError):
        detuning_phase(-1e-6, 1e3)


def test_pulse_params_validation():
    with pytest.raises(ValueError):
        PulseParams(-1.0, 0.0, 1e-6)
    with pytest.raises(ValueError):
        PulseParams(1.0, 0.0, -1e-6)


@settings(max_examples=500, deadline=None)
@given(
    st.floats(0.5e6, 5e6).map(lambda f: TWO_PI * f),
    st.floats(30e6, 100e6).map(lambda f: TWO_PI * f),
    st.floats(0.1e-6, 1e-6),
    phases,
)
def test_crosstalk_before_or_after_pi_pulse_differs_by_the_jump(rabi, detuning, duration, phase):
    p = PulseParams(rabi, detuning, duration)
    op = far_detuned_approx(p)
    psi = equator_state(phase)
    after = apply(pi_pulse() @ op, psi)
    before = apply(op @ pi_pulse(), psi)
    assert abs(wrap_angle(relative_phase(before, after) - phase_jump_exact(p))) < 1e-9


@pytest.mark.parametrize("ratio", [0.01, 0.02, 0.05, 0.1])
@pytest.mark.parametrize("duration", [0.1e-6, 0.4e-6, 1e-6])
def test_small_angle_jump_error_is_second_order(ratio, duration):
    detuning = TWO_PI * 49e6
    p = PulseParams(ratio * detuning, detuning, duration)
    exact = phase_jump_exact(p)
    assert abs(exact - phase_jump_approx(p)) / exact < ratio**2


def test_resonant_detuned_pulse_is_a_pi_pulse():
    rabi = TWO_PI * 1.5e6
    op = detuned_pulse(PulseParams(rabi, 0.0, math.pi / rabi))
    assert op.equals_up_to_global_phase(pi_pulse())
