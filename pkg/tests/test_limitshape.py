import math

import numpy as np
import pytest

from arctic.errors import DomainError, InvalidArgument, TangencyError
from arctic.lattice import hexagon_spec
from arctic.limitshape import (HexagonOracle, augmented_region, classical_location, clausen2,
                               curvature_params, entropy_functional, extract_liquid_region,
                               hausdorff_to_conic, hexagon_inscribed_ellipse, lattice_sigma,
                               lattice_sigma_grad, lobachevsky, lobachevsky_fast, reduced_region,
                               row_liquid_section, solve_limit_shape, surface_tension)

RIGHT = (1 + math.sqrt(3) / 2, 1.0)


@pytest.fixture(scope="module")
def hc16():
    return solve_limit_shape(hexagon_spec(1, 1, 1), 1 / 16)


def test_lobachevsky_quadrature_vs_series():
    xs = np.linspace(-4, 7, 23)
    ref = np.array([lobachevsky(x) for x in xs])
    np.testing.assert_allclose(lobachevsky_fast(xs), ref, atol=1e-11)
    # L is odd and pi-periodic, and L(pi/6) = 3/2 L(pi/3)
    assert abs(lobachevsky(math.pi)) < 1e-12
    assert abs(lobachevsky(math.pi / 6) - 1.5 * lobachevsky(math.pi / 3)) < 1e-12
    assert abs(clausen2(math.pi / 2) - 0.915965594177219) < 1e-12  # Catalan's constant


def test_surface_tension_values():
    top = surface_tension(1 / 3, -1 / 3)
    assert abs(top - 3 * lobachevsky(math.pi / 3) / math.pi) < 1e-13
    assert abs(top - 0.3230659472194505) < 1e-12
    for corner in ((0, 0), (1, 0), (0, -1)):
        assert abs(surface_tension(*corner)) < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(50):
        a, b = sorted(rng.random(2))
        s, t = a, a - b  # s >= 0, t <= 0, s - t <= 1
        assert surface_tension(s, t) <= top + 1e-12
    with pytest.raises(DomainError):
        surface_tension(-0.1, -0.2)
    with pytest.raises(DomainError):
        surface_tension(0.5, 0.1)


def test_lattice_sigma_is_the_mirror():
    for s, t in ((0.6, -0.3), (0.2, -0.1), (0.9, -0.5)):
        assert abs(float(lattice_sigma(s, t)) - surface_tension(1 - s, t)) < 1e-12


def test_lattice_sigma_gradient_matches_differences():
    s, t, h = 0.55, -0.25, 1e-6
    gs, gt = lattice_sigma_grad(s, t)
    ns = (lattice_sigma(s + h, t) - lattice_sigma(s - h, t)) / (2 * h)
    nt = (lattice_sigma(s, t + h) - lattice_sigma(s, t - h)) / (2 * h)
    assert abs(gs - ns) < 1e-6 and abs(gt - nt) < 1e-6


def test_inscribed_ellipse():
    c = hexagon_inscribed_ellipse(1, 1, 1).normalized()
    # (x-1)^2 + (y-1)^2 - (x-1)(y-1) = 3/4
    np.testing.assert_allclose(c.coefficients(), [1, -1, 1, -1, -1, 0.25], atol=1e-12)
    o = HexagonOracle(2, 3, 4)
    for p in o.tangency:
        assert abs(o.conic(*p)) < 1e-9
    with pytest.raises(InvalidArgument):
        hexagon_inscribed_ellipse(0, 1, 1)


def test_oracle_symmetry_and_levels():
    o = HexagonOracle(1, 1, 1)
    assert abs(o.height(1, 1) - 0.5) < 1e-12
    np.testing.assert_allclose(o.slope(1, 1), (2 / 3, -1 / 3), atol=1e-12)
    assert o.f(1, 1).imag < 0
    assert np.isnan(o.f(0.05, 0.05))
    # corners carry their frozen planes
    assert o.height(0.05, 0.02) == pytest.approx(0.05)
    assert o.height(1.95, 1.98) == pytest.approx(0.95)


def test_solver_matches_oracle(hc16):
    o = HexagonOracle(1, 1, 1)
    x, y = hc16.grid_xy()
    m = hc16.domain.mask
    err = max(abs(hc16.values[i, j] - o.height(x[i, j], y[i, j]))
              for i, j in zip(*np.nonzero(m)))
    assert err < 0.02
    assert abs(hc16(1.0, 1.0) - 0.5) < 1e-6
    assert hc16.info["converged"]
    assert np.all(np.diff(hc16.history) >= -1e-15)


def test_solver_maximizes_entropy(hc16):
    base = entropy_functional(hc16)
    rng = np.random.default_rng(1)
    inner = hc16.liquid().vertex
    for _ in range(5):
        bump = np.where(inner, 1e-3 * rng.standard_normal(hc16.values.shape), 0.0)
        other = type(hc16)(hc16.domain, hc16.values + bump, hc16.m, boundary=hc16.boundary)
        assert entropy_functional(other) <= base + 1e-12


def test_solver_rejects_bad_mesh():
    with pytest.raises(InvalidArgument):
        solve_limit_shape(hexagon_spec(1, 1, 1), 0.0)
    with pytest.raises(InvalidArgument):
        solve_limit_shape(hexagon_spec(1, 1, 1), 0.3)


def test_liquid_region(hc16):
    lr = extract_liquid_region(hc16)
    assert lr.components() == 1
    ellipse_area = 2 * math.pi * 0.75 / math.sqrt(3)
    assert abs(lr.area() - ellipse_area) / ellipse_area < 0.1
    assert hausdorff_to_conic(lr.polyline, hexagon_inscribed_ellipse(1, 1, 1)) < 4 / 16
    xl, xr = row_liquid_section(hc16, 1.0)
    assert abs(xl - (1 - math.sqrt(3) / 2)) < 3 / 16 and abs(xr - RIGHT[0]) < 3 / 16


def test_regions_nest(hc16):
    lr = hc16.liquid()
    aug = augmented_region(hc16, 0.3, 16)
    red = reduced_region(hc16, 0.3, 16)
    assert np.all(red <= lr.vertex) and np.all(lr.vertex <= aug)
    assert aug.sum() > lr.vertex.sum() > red.sum()


def test_classical_location_monotone(hc16):
    n = 16
    locs = [classical_location(hc16, i, 1.0, n) for i in range(2, 14, 2)]
    assert np.all(np.diff(locs) > 0)
    assert abs(classical_location(hc16, 8, 1.0, n) - 1.0) < 0.05


def test_curvature_params_right_point():
    cp = curvature_params(hexagon_inscribed_ellipse(1, 1, 1), RIGHT)
    assert abs(cp.l - 0.5) < 1e-12
    assert abs(cp.q + math.sqrt(3) / 4) < 1e-9
    # the polyline fit agrees with the closed form on a dense sampling
    c = hexagon_inscribed_ellipse(1, 1, 1)
    pts = c.parametrize(np.linspace(0, 2 * math.pi, 4000, endpoint=False))
    fit = curvature_params(pts, RIGHT, mesh=1 / 256)
    assert abs(fit.l - cp.l) < 1e-3 and abs(fit.q - cp.q) < 1e-2


def test_curvature_rejects_tangency():
    o = HexagonOracle(1, 1, 1)
    with pytest.raises(TangencyError):
        curvature_params(o.conic, o.tangency[2])  # vertical side x = 2
    with pytest.raises(TangencyError):
        curvature_params(o.conic, o.tangency[0])  # horizontal side y = 0
