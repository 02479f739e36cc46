"""Acceptance criteria, one test (or a few) per criterion.

Each test carries ``@pytest.mark.acceptance(number, title)``; the conftest
hook prints one PASS/FAIL line per criterion at the end of the run.
"""

import json
import math
import time

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from qaoa_wrap import cli, diagram, dlz, engine, gaps, model, smallangle, spectral

TWO_PI = 2 * math.pi


def acceptance(num, title):
    return pytest.mark.acceptance(num, title)


# 1 -------------------------------------------------------------------------


@acceptance(1, "delta_crit exact for the built-in examples")
@pytest.mark.parametrize("name, expected", [
    ("two-level", TWO_PI / 7), ("eight-level", TWO_PI / 7), ("three-qubit", TWO_PI / 10)])
def test_delta_crit_exact(name, expected):
    pair = model.example_pair(name)
    t = time.perf_counter()
    value = spectral.delta_crit(pair)
    elapsed = time.perf_counter() - t
    assert abs(value - expected) <= 1e-10
    assert elapsed < 1.0


# 2 -------------------------------------------------------------------------


@acceptance(2, "eight-level effective couplings")
def test_eight_level_couplings():
    pair = model.eight_level()
    t = time.perf_counter()
    events = dlz.envelope_events(pair, 1.5)
    elapsed = time.perf_counter() - t
    got = [abs(e.c_eff) for e in events[:4]]
    assert [round(e.delta_star, 12) for e in events[:4]] == [
        round(TWO_PI / w, 12) for w in (7.0, 6.0, 5.5, 4.5)]
    np.testing.assert_allclose(got, [0.0789, 0.1250, 0.1765, 0.5], atol=1e-3)
    assert elapsed < 1.0


# 3 -------------------------------------------------------------------------


def _edge_vectors(pair, ev):
    _, vecs, _ = spectral.edge_basis(pair, ev.edge)
    return vecs[:, ev.x], vecs[:, ev.y]


@acceptance(3, "gap formula vs scanned gap and power law")
def test_gap_matches_scan_at_semicircle_offset():
    t = time.perf_counter()
    pair = model.eight_level()
    ev = spectral.wrap_events(pair, 1.0)[0]
    # the minimum-gap point on an f-delta semicircle of radius 0.01 fixes delta
    path = spectral.ParameterPath.semicircle(1, ev.delta_star, 0.01, 201)
    vx, vy = _edge_vectors(pair, ev)
    _, vecs, _ = spectral.edge_basis(pair, 1)
    ring = spectral.min_gap_on_path(pair, path, states=(ev.x, ev.y), edge_vectors=vecs)
    delta = ring.delta - ev.delta_star
    pred = gaps.gap_prediction(ev, delta)
    scanned, f_min = oracles.scan_gap(pair.mixer, pair.cost, vx, vy, ev.delta_star + delta,
                                      pred.f_star - 0.01, pred.f_star + 0.01)
    assert abs(pred.gap / scanned - 1) < 5e-3
    assert abs(pred.gap - 4.761e-8) < 5e-3 * 4.761e-8
    assert abs(scanned - 4.766e-8) < 5e-3 * 4.766e-8
    assert abs(f_min - pred.f_star) < 1e-3
    assert time.perf_counter() - t < 60


@acceptance(3, "gap formula vs scanned gap and power law")
@pytest.mark.parametrize("k", [1, 2, 3])
def test_gap_power_law(k):
    t = time.perf_counter()
    pair = model.eight_level()
    ev = next(e for e in dlz.envelope_events(pair, 1.5) if e.k == k)
    vx, vy = _edge_vectors(pair, ev)
    ds = np.geomspace(1e-3, 1e-2, 5)
    measured = []
    for d in ds:
        f_star = gaps.gap_prediction(ev, d).f_star
        half = 2 * abs(f_star - ev.edge) + 1e-3
        g, _ = oracles.scan_gap(pair.mixer, pair.cost, vx, vy, ev.delta_star + d,
                                f_star - half, f_star + half, samples=201)
        measured.append(g)
    slope = np.polyfit(np.log(ds), np.log(measured), 1)[0]
    assert abs(slope - k) <= 0.05
    assert time.perf_counter() - t < 60


# 4 -------------------------------------------------------------------------


@acceptance(4, "two-level adiabatic limits at p = 10^4")
def test_two_level_limits():
    t = time.perf_counter()
    pair = model.two_level()
    low = engine.evolve(pair, engine.ramp_schedule(0.4, 10**4), per_eigenstate=True)
    high = engine.evolve(pair, engine.ramp_schedule(1.15, 10**4), per_eigenstate=True)
    assert low.ground_overlap_sq >= 0.999
    assert high.per_eigenstate_overlap_sq[1] >= 0.999
    assert time.perf_counter() - t < 10


# 5 -------------------------------------------------------------------------

def _random_three_qubit(seed):
    rng = np.random.default_rng(seed)
    energies = rng.uniform(0.0, 10.0, 8)
    return model.HamiltonianPair(model.build_transverse_field_mixer(3), model.build_diagonal_cost(energies))


def _expected_after(before, ev):
    out = before.copy()
    if ev.edge == 1:
        out[before == ev.x] = ev.y
        out[before == ev.y] = ev.x
    else:
        out[[ev.x, ev.y]] = out[[ev.y, ev.x]]
    return out


class TestConnectionTopology:
    calls = {"t": 0.0, "n": 0}

    @acceptance(5, "connection-map topology on random 3-qubit pairs")
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_constant_below_and_transposed_above(self, seed):
        t = time.perf_counter()
        pair = _random_three_qubit(seed)
        events = spectral.wrap_events(pair, 2.5)
        ground = [e for e in events if e.ground and e.isolated]
        assume(ground)
        ev = ground[0]
        # first event overall, well separated from every other event
        assume(events[0] is ev)
        assume(all(abs(o.delta_star - ev.delta_star) >= 0.03 for o in events[1:]))
        ref = spectral.connection_map(pair, 0.05).perm
        for d in np.linspace(0.2, ev.delta_star - 0.02, 4):
            np.testing.assert_array_equal(spectral.connection_map(pair, d).perm, ref)
        after = spectral.connection_map(pair, ev.delta_star + 0.02).perm
        np.testing.assert_array_equal(after, _expected_after(ref, ev))
        self.calls["t"] += time.perf_counter() - t
        self.calls["n"] += 1

    @acceptance(5, "connection-map topology on random 3-qubit pairs")
    def test_runtime(self):
        assert self.calls["n"] >= 50
        assert self.calls["t"] < 300


# 6 -------------------------------------------------------------------------

A6_DIMS = (2, 3, 4, 5, 6, 8, 12, 16)


def _gue(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


@acceptance(6, "extreme-curve gap minimum at the path ends")
def test_extreme_curve_gap_at_edges():
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    bad = []
    for i in range(50):
        d = A6_DIMS[i % len(A6_DIMS)]
        pair = model.HamiltonianPair(_gue(rng, d), _gue(rng, d))
        spans = [np.ptp(pair.mixer_eigensystem.values), np.ptp(pair.cost_eigensystem.values)]
        first_wrap = TWO_PI / max(spans)
        mixer_vals = pair.mixer_eigensystem.values
        for delta in np.linspace(0.05, 0.99, 20) * first_wrap:
            curves = spectral.unwrap_generator_curves(pair, delta, 2001)
            start = mixer_vals[curves.mixer_index]
            top, bottom = int(np.argmax(start)), int(np.argmin(start))
            gap = oracles.circular_extreme_gap(delta * curves.qaoa[:, top], delta * curves.qaoa[:, bottom])
            k = int(np.argmin(gap))
            if not (k <= 1 or k >= gap.size - 2):
                bad.append((i, d, float(delta), k))
    assert not bad
    assert time.perf_counter() - t < 600


# 7 -------------------------------------------------------------------------


@acceptance(7, "discrete Landau-Zener slope on the eight-level pair")
def test_dlz_slope():
    t = time.perf_counter()
    pair = model.eight_level()
    ev = dlz.envelope_events(pair, 1.0)[0]
    delta = 0.03
    rate = dlz.dlz_rate(ev, delta)
    expected = dlz.b0(ev) * delta**6 / (1 + delta / ev.delta_star)
    assert rate == pytest.approx(expected, rel=1e-12)
    gap = dlz.locate_gap(pair, ev, delta)
    ps = [int(x / rate) for x in (0.02, 0.1, 0.3)]
    probs = [dlz.diabatic_fraction(pair, ev, delta, p, gap=gap).probability for p in ps]
    slope = dlz.regress_slope(ps, probs)
    assert abs(slope / expected - 1) < 0.25
    assert time.perf_counter() - t < 300


# 8 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def eight_level_sweep():
    pair = model.eight_level()
    deltas = np.linspace(0.9, 1.5, 60)
    ps = diagram.log_p_axis(1, 10**4, 60)
    t = time.perf_counter()
    grid = diagram.sweep(pair, deltas, ps)
    return pair, grid, time.perf_counter() - t


def _simulated_upper_p(grid, level=0.95):
    out = np.full(grid.delta_axis.size, np.nan)
    for i, row in enumerate(grid.values):
        hit = np.flatnonzero(row >= level)
        if hit.size:
            out[i] = grid.p_axis[hit.max()]
    return out


@acceptance(8, "ridge envelope shape on the eight-level diagram")
def test_calibration_point():
    # the calibration input: 0.95 overlap is crossed between p = 14 and 15 just below delta_crit
    pair = model.eight_level()
    lo = engine.evolve(pair, engine.ramp_schedule(0.895, 14)).ground_overlap_sq
    hi = engine.evolve(pair, engine.ramp_schedule(0.895, 15)).ground_overlap_sq
    assert lo < 0.95 < hi


@acceptance(8, "ridge envelope shape on the eight-level diagram")
def test_envelope_upper_bound(eight_level_sweep):
    pair, grid, secs = eight_level_sweep
    single = dlz.ridge_envelope(pair, grid.delta_axis, 0.95, "single").p
    sim = _simulated_upper_p(grid)
    checked = 0
    for i in range(single.size):
        if np.isfinite(single[i]) and np.isfinite(sim[i]):
            assert sim[i] <= single[i]
            checked += 1
    assert checked >= 40
    assert secs < 1800


@acceptance(8, "ridge envelope shape on the eight-level diagram")
def test_tracking_correction_reduces_mismatch(eight_level_sweep):
    pair, grid, _ = eight_level_sweep
    single = dlz.ridge_envelope(pair, grid.delta_axis, 0.95, "single").p
    corrected = dlz.ridge_envelope(pair, grid.delta_axis, 0.95, "corrected", calibration=(14.5, 0.95)).p
    sim = _simulated_upper_p(grid)
    keep = np.isfinite(sim) & (sim <= 100) & np.isfinite(single) & np.isfinite(corrected)
    assert keep.sum() >= 3
    err_single = np.mean(np.abs(np.log10(single[keep]) - np.log10(sim[keep])))
    err_corr = np.mean(np.abs(np.log10(corrected[keep]) - np.log10(sim[keep])))
    assert err_corr < err_single


# 9 -------------------------------------------------------------------------


@acceptance(9, "small-angle closed forms")
def test_angle_sum_closed_form():
    rng = np.random.default_rng(9)
    for p in range(1, 51):
        delta = rng.uniform(0.01, 3.0)
        sch = engine.ramp_schedule(delta, p)
        brute = oracles.angle_sum_brute(sch.gammas, sch.betas)
        assert smallangle.angle_sum_ramp(p, delta) == pytest.approx(brute, rel=1e-12)


@acceptance(9, "small-angle closed forms")
def test_commutator_closed_form():
    # 2 (sum h^2 + 2 sum J^2) is the double commutator for the mixer sum_q (I - X_q) / 2
    rng = np.random.default_rng(90)
    for s in range(20):
        n = int(rng.integers(2, 7))
        inst = model.sample_ising(n, seed=1000 + s)
        hm = oracles.x_mixer_dense(n, 0.5, 0.5)
        hc = oracles.ising_dense(inst)
        plus = np.full(2**n, 2 ** (-n / 2), dtype=complex)
        brute = oracles.double_commutator(hm, hc, plus)
        closed = 2 * (np.sum(np.square(inst.h)) + 2 * sum(w * w for _, _, w in inst.J))
        assert brute == pytest.approx(closed, rel=1e-9)
        assert smallangle.ising_commutator_closed_form(inst, b=0.5) == pytest.approx(closed, rel=1e-12)


@acceptance(9, "small-angle closed forms")
def test_leading_prediction_regime():
    for s in range(20):
        inst = model.sample_ising(5, seed=2000 + s)
        pair = model.HamiltonianPair(model.build_transverse_field_mixer(5), model.build_ising(inst))
        span = np.ptp(pair.cost_eigensystem.values)
        for p in (1, 2, 5, 10, 20):
            sch = engine.ramp_schedule(0.5 / (p * span), p)
            sim = engine.evolve(pair, sch).expected_cost
            pred = smallangle.leading_expected_cost(pair, pair.mixer_ground_state(), sch)
            assert abs(pred - sim) <= 0.10 * abs(sim)


# 10 ------------------------------------------------------------------------


@acceptance(10, "p_epsilon prediction")
def test_p_epsilon():
    t = time.perf_counter()
    value = dlz.p_epsilon(0.1581, 5000, 0.01)
    elapsed = time.perf_counter() - t
    assert 26 <= value <= 29
    assert elapsed < 1e-3


# 11 ------------------------------------------------------------------------

SWAP_RATIOS = (0.55, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97)


@acceptance(11, "swap-interval formula vs measured interval")
def test_swap_interval():
    t = time.perf_counter()
    pair = model.eight_level()
    ev = dlz.envelope_events(pair, 1.0)[0]
    delta = 0.05
    vx, vy = _edge_vectors(pair, ev)
    f_pred = gaps.gap_prediction(ev, delta).f_star
    _, f_gap = oracles.scan_gap(pair.mixer, pair.cost, vx, vy, ev.delta_star + delta,
                                f_pred - 0.01, f_pred + 0.01)
    ratios = []
    for c2 in SWAP_RATIOS:
        measured = oracles.measure_swap_interval(pair.mixer, pair.cost, vx, vy, ev.delta_star + delta, f_gap, c2)
        predicted = gaps.swap_interval(ev, delta, c2)
        ratios.append(predicted / measured)
    ratios = np.array(ratios)
    assert np.all((ratios > 0.5) & (ratios < 2.0))
    assert abs(np.median(ratios) - 1) < 0.25
    assert time.perf_counter() - t < 600


# c_eff distribution ----------------------------------------------------------


@acceptance("ceff", "ceff-dist histograms: nonempty, reproducible, means decrease with n")
def test_ceff_dist_cli(tmp_path, capsys):
    means = []
    for n in (8, 10, 12):
        first = tmp_path / f"a{n}"
        second = tmp_path / f"b{n}"
        for out in (first, second):
            assert cli.main(["ceff-dist", "--n", str(n), "--count", "100", "--seed", "0", "--out", str(out)]) == 0
        name = f"ceff_n{n}_c100_s0.csv"
        a, b = (first / name).read_text(), (second / name).read_text()
        assert a == b
        counts = [int(line.split(",")[2]) for line in a.splitlines()[1:]]
        assert sum(counts) > 0
        means.append(json.loads((first / name).with_suffix(".json").read_text())["mean_log10"])
    capsys.readouterr()
    assert means[0] > means[1] > means[2]
