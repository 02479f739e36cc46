import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qaoa_wrap import engine, model, smallangle
from qaoa_wrap.errors import ValidationError


def test_angle_sum_examples():
    assert smallangle.angle_sum_ramp(1, 1.0) == pytest.approx(0.25)
    assert smallangle.angle_sum_ramp(5, 0.0) == 0.0
    # p = 3: brute force over the ramp angles gives 15/16
    sch = engine.ramp_schedule(1.0, 3)
    assert oracles.angle_sum_brute(sch.gammas, sch.betas) == pytest.approx(0.9375)
    assert smallangle.angle_sum_ramp(3, 1.0) == pytest.approx(0.9375)


def test_generic_matches_closed_form():
    sch = engine.ramp_schedule(0.3, 10)
    assert smallangle.angle_sum_generic(sch.gammas, sch.betas) == pytest.approx(
        smallangle.angle_sum_ramp(10, 0.3), rel=1e-12)


def test_generic_trivial_cases():
    assert smallangle.angle_sum_generic([0.7], [0.3]) == pytest.approx(0.21)
    assert smallangle.angle_sum_generic(np.zeros(6), np.zeros(6)) == 0.0
    with pytest.raises(ValidationError):
        smallangle.angle_sum_generic([1.0, 2.0], [1.0])
    with pytest.raises(ValidationError):
        smallangle.angle_sum_ramp(0, 1.0)


@settings(max_examples=40)
@given(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=30))
def test_generic_matches_brute(pairs):
    g, b = map(np.array, zip(*pairs))
    assert smallangle.angle_sum_generic(g, b) == pytest.approx(oracles.angle_sum_brute(g, b), rel=1e-9, abs=1e-9)


def test_commuting_pair_has_no_correction():
    pair = model.HamiltonianPair(np.diag([0.0, 2.0, 1.0]), np.diag([1.0, -1.0, 3.0]))
    psi = np.array([0.6, 0.8, 0.0], dtype=complex)
    sch = engine.ramp_schedule(0.4, 7)
    assert smallangle.commutator_expectation(pair, psi) == 0.0
    assert smallangle.leading_expected_cost(pair, psi, sch) == pytest.approx(0.6**2 * 1 + 0.8**2 * -1)


def test_mixer_sign_flips_correction():
    inst = model.sample_ising(4, seed=2)
    pair = model.HamiltonianPair(model.build_transverse_field_mixer(4, 0.0, 1.0), model.build_ising(inst))
    psi = pair.mixer_ground_state()
    plus = smallangle.commutator_expectation(pair, psi, 1)
    minus = smallangle.commutator_expectation(pair, psi, -1)
    assert minus == pytest.approx(-plus)
    with pytest.raises(ValidationError):
        smallangle.commutator_expectation(pair, psi, 2)


@pytest.mark.parametrize("seed", range(4))
def test_matrix_commutator_matches_pauli_oracle(seed):
    inst = model.sample_ising(5, seed=seed)
    pair = model.HamiltonianPair(model.build_transverse_field_mixer(5, 0.3, 0.8), model.build_ising(inst))
    psi = pair.mixer_ground_state()
    expected = oracles.double_commutator(oracles.x_mixer_dense(5, 0.3, 0.8), oracles.ising_dense(inst), psi)
    assert smallangle.commutator_expectation(pair, psi) == pytest.approx(expected, rel=1e-10)
    assert smallangle.ising_commutator_closed_form(inst, 0.8) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_six_qubit_small_angle(seed):
    inst = model.sample_ising(6, seed=seed)
    pair = model.HamiltonianPair(model.build_transverse_field_mixer(6, 0.0, 1.0), model.build_ising(inst))
    psi = pair.mixer_ground_state()
    p, delta = 10, 0.01
    sch = engine.ramp_schedule(delta, p)
    sim = engine.evolve(pair, sch).expected_cost
    pred = smallangle.leading_expected_cost(pair, psi, sch)
    assert pred == pytest.approx(sim, rel=0.05)
    assert smallangle.ising_leading_closed_form(inst, p, delta) == pytest.approx(pred, rel=1e-9)


def test_closed_form_b_one():
    inst = model.sample_ising(4, seed=9)
    p, delta = 6, 0.05
    written = -p * (6 + 5 * p + p * p) / (6 * (1 + p)) * delta**2 * smallangle.ising_field_sum(inst)
    assert smallangle.ising_leading_closed_form(inst, p, delta) == pytest.approx(written, rel=1e-12)


@settings(max_examples=30)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 5), p=st.integers(1, 20))
def test_correction_negative(seed, n, p):
    inst = model.sample_ising(n, seed=seed)
    pair = model.HamiltonianPair(model.build_transverse_field_mixer(n, 0.0, 1.0), model.build_ising(inst))
    psi = pair.mixer_ground_state()
    sch = engine.ramp_schedule(0.1, p)
    corr = smallangle.leading_expected_cost(pair, psi, sch) - float(np.real(np.vdot(psi, pair.cost @ psi)))
    assert corr < 0


def test_large_p_helpers():
    n, delta = 6, 1e-4
    p = 10**5
    exact = smallangle.class_average_leading(n, p, delta)
    assert smallangle.class_average_leading_large_p(n, p, delta) == pytest.approx(exact, rel=1e-4)
    assert smallangle.class_average_second_large_p(2, 1.0, 1.0) == pytest.approx(8 / 504)
    # the sparse forms at mean degree m = n - 1 reduce to the dense leading term
    assert smallangle.sparse_average_leading_large_p(n, n - 1, p, delta) == pytest.approx(
        smallangle.class_average_leading_large_p(n, p, delta))
    assert smallangle.sparse_average_second_large_p(1, 0.0, 1.0, 1.0) == pytest.approx(8 / 2520)


def test_class_average_matches_sampled_mean():
    # <h^2> = <J^2> = 1/3 for uniform(-1, 1) weights
    n, p, delta = 5, 4, 0.02
    vals = [smallangle.ising_leading_closed_form(model.sample_ising(n, seed=s), p, delta) for s in range(4000)]
    expected = smallangle.class_average_leading(n, p, delta)
    assert np.mean(vals) == pytest.approx(expected, rel=0.03)
