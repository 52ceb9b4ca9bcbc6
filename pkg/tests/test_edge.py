import math

import numpy as np
import pytest
from scipy import integrate, special, stats
from scipy.special import comb

from arctic.edge import (AIRY_RANGE, airy_ai, airy_aip, airy_gaussian_integral, airy_integral_check,
                         airy_kernel, barrier_time_span, edge_statistics_experiment,
                         extended_airy_kernel, ks_to_tw, ks_to_tw_cells, quadratic_barrier_experiment,
                         rescale_top_walks, scaling_constants, tw_gue_cdf, tw_gue_cdf_oracle,
                         tw_gue_moments, tw_gue_pdf)
from arctic.errors import DomainError, InfeasibleError, InvalidArgument, PreconditionError, RangeError
from arctic.hexsampler import sample_hexagon_walks, walks_to_ensemble
from arctic.limitshape import CurvatureParams
from arctic.rng import RngStream

RIGHT = (1 + math.sqrt(3) / 2, 1.0)
CP = CurvatureParams(0.5, -math.sqrt(3) / 4)


def test_airy_against_scipy():
    xs = np.r_[np.linspace(-30, 30, 241), [-7.5, -7.4999, 6.0, 6.0001]]
    ai, aip, _, _ = special.airy(xs)
    # the series and the asymptotic expansion meet at -7.5 and 6 with ~3e-12 absolute error
    np.testing.assert_allclose(airy_ai(xs), ai, rtol=1e-9, atol=5e-12)
    np.testing.assert_allclose(airy_aip(xs), aip, rtol=1e-9, atol=5e-12)
    assert abs(airy_ai(0.0) - 0.355028053887817239) < 1e-14
    assert abs(airy_aip(0.0) + 0.258819403792806798) < 1e-14


def test_airy_equation():
    h = 1e-4
    for x in np.linspace(-8, 4, 49):
        d2 = (airy_aip(x + h) - airy_aip(x - h)) / (2 * h)
        assert abs(d2 - x * airy_ai(x)) < 1e-6


def test_airy_range():
    with pytest.raises(RangeError):
        airy_ai(AIRY_RANGE + 1)
    with pytest.raises(RangeError):
        airy_ai(float("nan"))


def test_airy_square_integral():
    for x in (-3.0, 0.0, 1.5):
        val, _ = integrate.quad(lambda u: airy_ai(u) ** 2, x, 30, limit=200)
        assert abs(val - airy_integral_check(x)) < 1e-10


def test_equal_time_kernel():
    assert abs(airy_kernel(0.0, 0.0) - 0.0669875) < 1e-4
    assert abs(extended_airy_kernel(0.0, 0.0, 0.0, 0.0) - airy_kernel(0.0, 0.0)) < 1e-9
    for x, y in ((0.3, -1.2), (-2.0, 1.0), (1.0, 2.5)):
        assert abs(extended_airy_kernel(0.4, x, 0.4, y) - extended_airy_kernel(0.4, y, 0.4, x)) < 1e-9
        assert abs(extended_airy_kernel(0.0, x, 0.0, y) - airy_kernel(x, y)) < 1e-8


def test_extended_kernel_time_order():
    lam, x, y = 0.7, 0.2, -0.4
    full, _ = integrate.quad(lambda u: math.exp(u * lam) * airy_ai(x + u) * airy_ai(y + u), -40, 40,
                             limit=400)
    assert abs(full - airy_gaussian_integral(lam, x, y)) < 1e-8
    # K(s, x; t, y) for s < t is minus the integral over the negative half-line
    neg, _ = integrate.quad(lambda u: math.exp(u * lam) * airy_ai(x + u) * airy_ai(y + u), -40, 0,
                            limit=400)
    assert abs(extended_airy_kernel(0.0, x, lam, y) + neg) < 1e-8
    with pytest.raises(DomainError):
        airy_gaussian_integral(-1.0, 0, 0)
    with pytest.raises(RangeError):
        extended_airy_kernel(0.0, 0.0, 50.0, 0.0)


def test_tracy_widom_cdf():
    xs = np.linspace(-8, 4, 200)
    F = tw_gue_cdf(xs)
    assert np.all(np.diff(F) >= -1e-14) and F[0] < 1e-6 and F[-1] > 0.9999
    for s in (-3.0, -1.77, 0.0):
        assert abs(tw_gue_cdf(s) - tw_gue_cdf_oracle(s)) < 1e-8
    assert abs(tw_gue_cdf_oracle(-2.0) - 0.41322414250512257) < 1e-9
    # regression anchor at the mean of the law
    assert abs(tw_gue_cdf(-1.771087) - 0.51502) < 1e-5
    mean, var = tw_gue_moments()
    assert abs(mean + 1.7711) < 5e-3 and abs(var - 0.8132) < 5e-3
    g = np.linspace(-10, 6, 16001)
    assert abs(integrate.simpson(tw_gue_pdf(g), x=g) - 1) < 1e-6
    with pytest.raises(RangeError):
        tw_gue_cdf(20.0)


def test_scaling_constants():
    sc = scaling_constants(CP)
    q = math.sqrt(3) / 4
    assert abs(sc.s - 0.25 ** (2 / 3) / (4 ** (1 / 3) * q ** (1 / 3))) < 1e-14
    assert abs(sc.r - 0.25 ** (1 / 3) / (2 ** (1 / 3) * q ** (2 / 3))) < 1e-14
    # the orientation of the curve does not matter
    assert scaling_constants(CurvatureParams(0.5, q)) == sc
    for bad in (CurvatureParams(0.0, 1.0), CurvatureParams(1.0, 1.0), CurvatureParams(0.3, 0.0)):
        with pytest.raises(DomainError):
            scaling_constants(bad)


def test_rescale_top_walks_roundtrip():
    n = 16
    W = walks_to_ensemble(sample_hexagon_walks(n, n, n, RngStream(2)), 1)
    rw = rescale_top_walks(W, RIGHT[0], RIGHT[1], n, n, CP, times=(-0.5, 0.0, 0.5), count=3)
    for t in rw.slices:
        for i in (1, 2, 3):
            assert abs(rw.invert(i, t) - W.position(n - i + 1, rw.slices[t])) < 1e-9
        assert rw.X[1][t] > rw.X[2][t] > rw.X[3][t]
    with pytest.raises(RangeError):
        rescale_top_walks(W, RIGHT[0], RIGHT[1], n, n, CP, times=(100.0,))


def test_ks_helpers():
    rng = np.random.default_rng(0)
    # inverse-transform draws from the table
    grid = np.linspace(-8, 4, 4001)
    u = rng.random(4000)
    draws = np.interp(u, tw_gue_cdf(grid), grid)
    assert ks_to_tw(draws) < 0.03
    assert ks_to_tw(np.full(10, 50.0)) > 0.99
    assert math.isnan(ks_to_tw([]))
    # spreading over a vanishing cell reproduces the plain distance
    assert abs(ks_to_tw_cells(draws, 1e-6) - ks_to_tw(draws)) < 2e-3
    shifted = draws - 0.4
    assert abs(ks_to_tw_cells(shifted, 0.8) - ks_to_tw(draws)) < 0.03


def test_edge_experiment_validation():
    with pytest.raises(InvalidArgument):
        edge_statistics_experiment((1, 1, 1), 16, 0, RIGHT)
    with pytest.raises(InvalidArgument):
        edge_statistics_experiment((1, 1, 1), 16, 5, RIGHT, engine="telepathy")


def test_edge_experiment_deterministic():
    a = edge_statistics_experiment((1, 1, 1), 12, 6, RIGHT, RngStream(4), times=(0.0,))
    b = edge_statistics_experiment((1, 1, 1), 12, 6, RIGHT, RngStream(4), times=(0.0,), threads=2)
    np.testing.assert_array_equal(a.X1, b.X1)
    js = a.to_json()
    assert js["format"] == 1 and js["count"] == 6
    assert abs(a.mean - (a.raw_mean + a.cell_width / 2)) < 1e-12


def test_edge_engines_agree():
    exact = edge_statistics_experiment((1, 1, 1), 16, 1500, RIGHT, RngStream(5), engine="slice",
                                       times=(0.0,))
    flip = edge_statistics_experiment((1, 1, 1), 16, 150, RIGHT, RngStream(6), engine="flip",
                                      times=(0.0,))
    assert stats.ks_2samp(exact.X1, flip.X1).pvalue > 0.01


def test_barrier_free_walk_is_hypergeometric():
    n, T = 48, 6
    r = quadratic_barrier_experiment(0.5, 0.43, n, 20000, RngStream(1), m=1, T=T, entrance=[0],
                                     exit=[7], wall=False)
    sc = scaling_constants(CurvatureParams(0.5, 0.43))
    x = np.round(np.asarray(r.X1) * sc.s * n ** (1 / 3)).astype(int)
    k = np.arange(8)
    p = comb(T, k) * comb(T, 7 - k) / comb(2 * T, 7)
    obs = np.bincount(x, minlength=8)
    assert obs[0] == obs[7] == 0  # a walk of 2T = 12 steps with 7 jumps keeps 1 <= x(0) <= 6
    assert stats.chisquare(obs[1:7], p[1:7] * len(x)).pvalue > 0.01


def test_barrier_walks_stay_above_the_wall():
    n = 48
    r = quadratic_barrier_experiment(0.5, 0.43, n, 200, RngStream(3))
    assert r.count == 200 and r.params["wall"]
    assert barrier_time_span(0.5, 0.43, n, 0.02) == r.params["T"]


def test_barrier_preconditions():
    with pytest.raises(DomainError):
        quadratic_barrier_experiment(1.2, 0.4, 48, 10)
    with pytest.raises(PreconditionError):
        quadratic_barrier_experiment(0.5, -0.4, 48, 10)
    with pytest.raises(InvalidArgument):
        quadratic_barrier_experiment(0.5, 0.4, 48, 0)
    with pytest.raises(InfeasibleError):
        quadratic_barrier_experiment(0.5, 0.43, 48, 10, m=2, entrance=[40, 41])
