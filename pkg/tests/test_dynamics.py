import math

import numpy as np
import pytest
from scipy import stats

from arctic.dynamics import (RegionDecomposition, alternating_mixing_budget, alternating_step,
                             batch_censored, batch_flip, censor_sequence, cftp_sample,
                             coalescence_time, exact_mixing_time, flip_candidates, flip_mixing_budget,
                             flip_operator, grand_coupling_run, random_flip, run_censored,
                             run_flip_dynamics, run_region_flip, stationarity_check, tv_rows)
from arctic.enumeration import enumerate_all, exact_sample, state_indices, state_table
from arctic.errors import InvalidArgument, PreconditionError
from arctic.lattice import boundary_height, build_domain, extremal_heights, hexagon_spec
from arctic.rng import RngStream


def _by_center(d):
    return sorted(enumerate_all(d), key=lambda H: H[1, 1])


def test_flip_candidates(hex111):
    H0, H1 = _by_center(hex111)
    assert flip_candidates(H0, (1, 1)) == "up"
    assert flip_candidates(H1, (1, 1)) == "down"
    with pytest.raises(InvalidArgument):
        flip_candidates(H0, (0, 0))


def test_frozen_corner_not_flippable():
    d = build_domain(hexagon_spec(3, 3, 3), 1)
    lo, _ = extremal_heights(d, boundary_height(d))
    kinds = {v: flip_candidates(lo, tuple(v)) for v in map(tuple, d.interior_vertices())}
    assert None in kinds.values()
    assert all(k != "down" for k in kinds.values())


def test_random_flip(hex111):
    H0, H1 = _by_center(hex111)
    assert random_flip(H0, (1, 1), 1) == H1
    assert random_flip(H0, (1, 1), 0) == H0
    d = build_domain(hexagon_spec(3, 3, 3), 1)
    lo, _ = extremal_heights(d, boundary_height(d))
    stuck = next(tuple(v) for v in d.interior_vertices() if flip_candidates(lo, tuple(v)) is None)
    assert random_flip(lo, stuck, 1) == lo


def test_flip_operator_symmetric(hex111):
    states, index = state_table(hex111)
    P = flip_operator(hex111, states, index)
    np.testing.assert_allclose(P, [[0.5, 0.5], [0.5, 0.5]])
    d = build_domain(hexagon_spec(2, 1, 1), 1)
    states, index = state_table(d)
    P = flip_operator(d, states, index)
    np.testing.assert_allclose(P, P.T)
    np.testing.assert_allclose(P.sum(axis=1), 1)


def test_run_flip_dynamics_basic(hex222):
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    assert run_flip_dynamics(hi, 0, RngStream(0)) == hi
    a = run_flip_dynamics(hi, 500, RngStream(4))
    b = run_flip_dynamics(hi, 500, RngStream(4))
    assert a == b


def test_flip_budget_formula():
    L = math.log(100)
    assert flip_mixing_budget(eps=1 / math.e, A=100) == math.ceil(8 * 100 ** 4 * L + 8 * 100 ** 3 * L)
    budgets = [flip_mixing_budget(eps=e, A=50) for e in (0.5, 0.1, 0.01)]
    assert budgets == sorted(budgets)


def test_flip_budget_is_enough_exactly(hex222):
    # the law after the budget, by repeated squaring of the exact operator
    states, index = state_table(hex222)
    P = flip_operator(hex222, states, index)
    T = flip_mixing_budget(hex222, 0.05)
    D = np.eye(len(states))
    Q = P.copy()
    while T:
        if T & 1:
            D = D @ Q
        Q = Q @ Q
        T >>= 1
    assert tv_rows(D) < 0.05


def test_alternating_budget():
    assert alternating_mixing_budget(diam=2) == 4096
    assert alternating_mixing_budget(diam=4) == 2 ** 12 * alternating_mixing_budget(diam=2)


def test_region_decomposition_validation(hex222):
    with pytest.raises(InvalidArgument):
        RegionDecomposition(hex222, [])
    half = RegionDecomposition.halves(hex222).regions[0]
    with pytest.raises(InvalidArgument):
        RegionDecomposition(hex222, [half])


def test_region_flip_whole_equals_flip(hex222):
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    whole = RegionDecomposition.whole(hex222)
    assert run_region_flip(hi, whole, 7, 300, RngStream(9)) == run_flip_dynamics(hi, 300, RngStream(9))


def test_region_flip_one_step(hex222):
    regions = RegionDecomposition.halves(hex222)
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    out = run_region_flip(hi, regions, 1, 1, RngStream(1))
    changed = np.argwhere(out.values != hi.values)
    assert len(changed) <= 1
    for ix, iy in changed:
        assert regions.regions[0].interior[ix, iy]


def test_censor_sequence():
    s = censor_sequence([1.0], 10, RngStream(0))
    assert s.X == list(range(1, 11))
    s = censor_sequence([0.5, 0.5], 100000, RngStream(1))
    inc = s.increments()
    assert set(np.unique(inc)) <= {1, 2}
    # the region of each scheduled block is an independent draw from p
    regions = (np.asarray(s.X) - 1) % 2 + 1
    frac = (regions == 1).mean()
    assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / len(regions))
    with pytest.raises(InvalidArgument):
        censor_sequence([1.0, 0.0], 5)


def test_censor_increment_frequencies():
    p = np.array([0.2, 0.3, 0.5])
    s = censor_sequence(p, 100000, RngStream(2))
    X = np.asarray(s.X)
    regions = (X - 1) % 3 + 1
    counts = np.bincount(regions, minlength=4)[1:]
    expected = p * len(X)
    assert np.all(np.abs(counts - expected) < 3 * np.sqrt(expected * (1 - p)))


def test_censored_all_blocks_censored_is_identity(hex222):
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    regions = RegionDecomposition.halves(hex222)
    s = censor_sequence(regions.probabilities(), 0, RngStream(0))
    assert run_censored(hi, regions, s, RngStream(0)) == hi


def test_censored_preserves_uniform(hex222):
    states, index = state_table(hex222)
    regions = RegionDecomposition.halves(hex222)
    rng = RngStream(6)
    N = 100000
    start = np.repeat(states, N // len(states), axis=0)
    out = batch_censored(start, regions, 3, rng)
    counts = np.bincount(state_indices(index, out), minlength=len(states))
    assert stats.chisquare(counts).pvalue > 0.01


def test_alternating_step_properties(hex222):
    regions = RegionDecomposition.halves(hex222)
    rng = RngStream(7)
    H = exact_sample(hex222, rng=rng.child(10**6))
    out = alternating_step(H, regions, 1, rng.child(1))
    outside = ~regions.regions[0].interior
    assert np.array_equal(out.values[outside & hex222.mask], H.values[outside & hex222.mask])
    whole = RegionDecomposition.whole(hex222)
    states, index = state_table(hex222)
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    counts = np.zeros(len(states), dtype=int)
    for k in range(4000):
        counts[index[alternating_step(hi, whole, 1, rng.child(k)).flat.tobytes()]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_alternating_frozen_region_unchanged(hex111):
    # a region whose interior is empty of freedom: its only filling is the current one
    d = build_domain(hexagon_spec(3, 3, 3), 1)
    lo, _ = extremal_heights(d, boundary_height(d))
    corner = d.region_from_rect(0, 2, 0, 2)
    regions = RegionDecomposition(d, [corner, d])
    assert alternating_step(lo, regions, 1, RngStream(0)) == lo


def test_grand_coupling(hex222):
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    a, b = grand_coupling_run([hi, hi], 1000, RngStream(0))
    assert a == b
    with pytest.raises(PreconditionError):
        grand_coupling_run([lo, hi], 10)
    out, bad = grand_coupling_run([hi, lo], 1000, RngStream(1), return_violations=True)
    assert bad == 0 and np.all(out[0].values >= out[1].values)


def test_coalescence_and_cftp(hex222):
    times = [coalescence_time(hex222, rng=RngStream(k)) for k in range(20)]
    assert all(t > 0 for t in times)
    states, index = state_table(hex222)
    counts = np.zeros(len(states), dtype=int)
    for k in range(4000):
        counts[index[cftp_sample(hex222, rng=RngStream(3).child(k)).sample.flat.tobytes()]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_exact_mixing_time_monotone(hex222):
    states, index = state_table(hex222)
    P = flip_operator(hex222, states, index)
    assert exact_mixing_time(P, 0.1) <= exact_mixing_time(P, 0.01)


def test_batch_flip_matches_uniform(hex222):
    states, index = state_table(hex222)
    lo, hi = extremal_heights(hex222, boundary_height(hex222))
    out = batch_flip(np.tile(hi.flat, (20000, 1)), hex222, 300, RngStream(8))
    counts = np.bincount(state_indices(index, out), minlength=len(states))
    assert stats.chisquare(counts).pvalue > 0.01


def test_stationarity_check_rejects(hex222):
    with pytest.raises(InvalidArgument):
        stationarity_check(hex222, "flip", 0)
    with pytest.raises(InvalidArgument):
        stationarity_check(hex222, "teleport", 10)
