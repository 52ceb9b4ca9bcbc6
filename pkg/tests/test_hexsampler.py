import numpy as np
import pytest
from scipy import stats

from arctic.enumeration import count_tilings, state_table
from arctic.errors import InvalidArgument
from arctic.hexsampler import (hexagon_sides, sample_hexagon_height, sample_hexagon_slice,
                               sample_hexagon_walks, slice_kernel_basis, slice_top_law)
from arctic.lattice import build_domain, hexagon_spec, polygon_spec
from arctic.rng import RngStream
from arctic.tiling import validate_height


def test_hexagon_sides():
    assert hexagon_sides(build_domain(hexagon_spec(2, 3, 4), 1)) == (2, 3, 4)
    assert hexagon_sides(build_domain(hexagon_spec(1, 1, 1), 3)) == (3, 3, 3)
    assert hexagon_sides(build_domain(polygon_spec([(0, 0), (2, 0), (3, 1), (3, 2), (1, 2), (0, 1)]), 1)) == (2, 1, 1)
    with pytest.raises(InvalidArgument):
        hexagon_sides(build_domain(polygon_spec([(0, 0), (1, 1), (1, 3), (0, 2)]), 1))
    with pytest.raises(InvalidArgument):
        hexagon_sides(build_domain(polygon_spec([(1, 0), (2, 0), (3, 1), (3, 2), (2, 2), (1, 1)]), 1))


def test_walks_are_valid():
    A, B, C = 3, 4, 5
    sl = sample_hexagon_walks(A, B, C, RngStream(0))
    assert len(sl) == B + C + 1
    for X, Y in zip(sl[:-1], sl[1:]):
        assert np.all(np.diff(Y) > 0)
        assert set(np.unique(Y - X)) <= {0, 1}
    np.testing.assert_array_equal(sl[-1], np.arange(C, C + A))


def test_sampled_heights_are_uniform():
    d = build_domain(hexagon_spec(2, 2, 2), 1)
    states, index = state_table(d)
    rng = RngStream(1)
    counts = np.zeros(len(states), dtype=int)
    for k in range(2000):
        H = sample_hexagon_height(d, rng.child(k))
        validate_height(H)
        counts[index[H.flat.tobytes()]] += 1
    assert len(states) == count_tilings(d) == 20
    assert stats.chisquare(counts).pvalue > 0.01


def test_kernel_basis_is_orthonormal():
    x, V = slice_kernel_basis(5, 6, 7, 6)
    np.testing.assert_allclose(V.T @ V, np.eye(5), atol=1e-10)
    assert len(x) == V.shape[0]


def test_top_law_matches_slice_sampler():
    A, B, C, tau = 6, 5, 7, 5
    x, pmf = slice_top_law(A, B, C, tau)
    assert abs(pmf.sum() - 1) < 1e-9
    rng = RngStream(2)
    tops = np.array([sample_hexagon_slice(A, B, C, tau, rng.child(k))[-1] for k in range(4000)])
    obs = np.array([(tops == v).sum() for v in x])
    keep = pmf * len(tops) > 5
    exp = pmf[keep] / pmf[keep].sum() * obs[keep].sum()
    assert stats.chisquare(obs[keep], exp).pvalue > 0.01


def test_top_law_matches_walk_sampler():
    A, B, C, tau = 4, 4, 5, 4
    x, pmf = slice_top_law(A, B, C, tau)
    rng = RngStream(3)
    tops = np.array([sample_hexagon_walks(A, B, C, rng.child(k))[tau][-1] for k in range(1200)])
    obs = np.array([(tops == v).sum() for v in x])
    keep = pmf * len(tops) > 5
    exp = pmf[keep] / pmf[keep].sum() * obs[keep].sum()
    assert stats.chisquare(obs[keep], exp).pvalue > 0.01


def test_second_law_is_below_the_first():
    x, p1 = slice_top_law(6, 6, 6, 6, rank=1)
    _, p2 = slice_top_law(6, 6, 6, 6, rank=2)
    assert abs(p2.sum() - 1) < 1e-8
    assert (x * p2).sum() < (x * p1).sum()
