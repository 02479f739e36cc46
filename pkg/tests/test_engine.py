import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from qaoa_wrap import engine, model
from qaoa_wrap.errors import ValidationError


def test_ramp_examples():
    s = engine.ramp_schedule(1.0, 1)
    np.testing.assert_allclose(s.gammas, [0.5])
    np.testing.assert_allclose(s.betas, [0.5])
    s = engine.ramp_schedule(2.0, 3)
    np.testing.assert_allclose(s.gammas, [0.5, 1.0, 1.5])
    np.testing.assert_allclose(s.betas, [1.5, 1.0, 0.5])


def test_zero_delta_is_identity():
    pair = model.eight_level()
    res = engine.evolve(pair, engine.ramp_schedule(0.0, 7))
    np.testing.assert_allclose(res.final_state, pair.mixer_ground_state(), atol=1e-15)


def test_p_zero_returns_initial_metrics():
    pair = model.eight_level()
    res = engine.evolve(pair, engine.ramp_schedule(1.0, 0))
    start = engine.measure(pair, pair.mixer_ground_state())
    assert res.ground_overlap_sq == start.ground_overlap_sq
    assert res.expected_cost == start.expected_cost


def test_bad_schedules():
    with pytest.raises(ValidationError):
        engine.ramp_schedule(1.0, -1)
    with pytest.raises(ValidationError):
        engine.ramp_schedule(-1.0, 3)
    with pytest.raises(ValidationError):
        engine.Schedule([0.1, 0.2], [0.1])


def test_step_identity_and_commuting_phases():
    pair = model.eight_level()
    psi = np.random.default_rng(0).normal(size=8) + 0j
    psi /= np.linalg.norm(psi)
    np.testing.assert_allclose(engine.qaoa_step(pair, 0.0, 0.0, psi), psi, atol=1e-14)
    dm, dc = np.array([0.3, -1.0, 2.0]), np.array([1.0, 0.5, -0.2])
    comm = model.HamiltonianPair(np.diag(dm), np.diag(dc))
    e = np.eye(3)[1]
    out = engine.qaoa_step(comm, 0.7, 1.3, e)
    assert out[1] == pytest.approx(cmath.exp(-1j * (0.7 * dm[1] + 1.3 * dc[1])), abs=1e-14)


def test_step_full_cost_period_on_excited_state():
    pair = model.two_level()
    out = engine.qaoa_step(pair, 0.0, 2 * math.pi / 7, np.array([0, 1], dtype=complex))
    np.testing.assert_allclose(out, [0, 1], atol=1e-13)


def test_two_level_adiabatic_connections():
    pair = model.two_level()
    assert engine.evolve(pair, engine.ramp_schedule(0.4, 10**4)).ground_overlap_sq >= 0.999
    high = engine.evolve(pair, engine.ramp_schedule(1.15, 10**4), per_eigenstate=True)
    assert high.per_eigenstate_overlap_sq[1] >= 0.999


@pytest.mark.parametrize("name", ["two-level", "eight-level", "three-qubit"])
@pytest.mark.parametrize("p", [1, 5, 80])
def test_evolve_matches_expm(name, p):
    pair = model.example_pair(name)
    sch = engine.ramp_schedule(0.9, p)
    ref = oracles.qaoa_state_expm(pair.mixer, pair.cost, sch.gammas, sch.betas, pair.mixer_ground_state())
    np.testing.assert_allclose(engine.evolve(pair, sch).final_state, ref, atol=1e-11)


def test_batched_and_looped_propagation_agree():
    pair = model.eight_level()
    sch = engine.ramp_schedule(1.1, 500)
    psi = pair.mixer_ground_state()
    batched = engine.propagate(pair, sch.gammas, sch.betas, psi)
    looped = psi
    for g, b in zip(sch.gammas, sch.betas):
        looped = engine.qaoa_step(pair, b, g, looped)
    np.testing.assert_allclose(batched, looped, atol=1e-11)


def test_unitary_stack_matches_single():
    pair = model.three_qubit()
    f = np.array([0.0, 0.3, 1.0])
    stack = engine.qaoa_unitaries(pair, f, 0.66)
    for i, fi in enumerate(f):
        np.testing.assert_allclose(stack[i], engine.qaoa_unitary(pair, fi, 0.66), atol=1e-13)
        np.testing.assert_allclose(stack[i], oracles.qaoa_unitary_expm(pair.mixer, pair.cost, fi, 0.66), atol=1e-12)


def test_general_matches_ramp():
    pair = model.eight_level()
    a = engine.evolve(pair, engine.ramp_schedule(1.2, 33))
    b = engine.evolve_general(pair, lambda f: 1.2 * f, lambda f: 1.2 * (1 - f), 33)
    np.testing.assert_allclose(a.final_state, b.final_state, atol=1e-12)


def test_constant_angles_commuting():
    dm, dc = np.array([0.0, 1.0, 3.0]), np.array([2.0, -1.0, 0.5])
    pair = model.HamiltonianPair(np.diag(dm), np.diag(dc))
    psi = np.ones(3, dtype=complex) / np.sqrt(3)
    res = engine.evolve_general(pair, lambda f: 0.2, lambda f: 0.2, 9, initial=psi)
    expected = psi * np.exp(-1j * 9 * 0.2 * (dm + dc))
    np.testing.assert_allclose(res.final_state, expected, atol=1e-13)


def test_sinusoidal_path_same_connection():
    # endpoints of the angle path match the ramp; the end state is the same eigenstate
    pair = model.two_level()
    for delta, target in ((0.4, 0), (1.15, 1)):
        g = lambda f, d=delta: d * math.sin(math.pi * f / 2) ** 2
        b = lambda f, d=delta: d * math.cos(math.pi * f / 2) ** 2
        res = engine.evolve_general(pair, g, b, 10**4, per_eigenstate=True)
        assert res.per_eigenstate_overlap_sq[target] > 0.99


def test_trotter_consistency():
    pair = model.two_level()
    total = 4.0
    psi0 = pair.mixer_ground_state()
    fidelities = []
    for delta in (0.1, 0.05, 0.025):
        p = int(round(total / delta))
        ramp = engine.evolve(pair, engine.ramp_schedule(delta, p)).final_state
        ref = oracles.anneal_midpoint(pair.mixer, pair.cost, total, 100 * p, psi0)
        fidelities.append(abs(np.vdot(ref, ramp)) ** 2)
    assert fidelities[0] < fidelities[1] < fidelities[2]
    assert fidelities[2] > 0.99


def test_determinism():
    pair = model.three_qubit()
    sch = engine.ramp_schedule(0.66, 300)
    a, b = engine.evolve(pair, sch), engine.evolve(pair, sch)
    assert a.final_state.tobytes() == b.final_state.tobytes()
    assert a.ground_overlap_sq == b.ground_overlap_sq


def test_log_infidelity():
    pair = model.two_level()
    res = engine.evolve(pair, engine.ramp_schedule(0.4, 50))
    assert res.log_infidelity == pytest.approx(-math.log(1 - res.ground_overlap_sq))


def test_wrong_state_shape():
    pair = model.two_level()
    with pytest.raises(ValidationError):
        engine.evolve(pair, engine.ramp_schedule(0.4, 3), initial=np.ones(3))
    with pytest.raises(ValidationError):
        engine.evolve(pair, engine.ramp_schedule(0.4, 3), initial=np.ones(2))


@settings(max_examples=25)
@given(delta=st.floats(0.0, 4.0), p=st.integers(0, 400), name=st.sampled_from(["two-level", "eight-level", "three-qubit"]))
def test_norm_preserved(delta, p, name):
    pair = model.example_pair(name)
    res = engine.evolve(pair, engine.ramp_schedule(delta, p))
    assert abs(np.linalg.norm(res.final_state) - 1) <= max(p, 1) * 1e-12
    assert 0.0 <= res.ground_overlap_sq <= 1.0
