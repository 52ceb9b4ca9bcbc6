import cmath
import math

import numpy as np
import pytest
from scipy import ndimage
from scipy.optimize import brentq

from arctic.errors import InsufficientData, InvalidArgument, PreconditionError, SingularError
from arctic.lattice import build_domain, hexagon_spec
from arctic.limitshape import (ContinuumHeight, HexagonOracle, curvature_params, solve_limit_shape)
from arctic.slope import (FrozenValue, burgers_residual, complex_slope_field, conic_parametrization,
                          deformed_endpoint_check, derivative_identity_check, edge_sqrt_fit,
                          f_to_slope, field_from_function, height_gradient_sqrt_fit,
                          interior_log_perturbation_check, lqq_check, lqq_from_jet, omega_upsilon,
                          ratio_identity_residual, reconstruct_q0_jets, sampled_q0prime, slope_to_f,
                          tilt_params)

ORACLE = HexagonOracle(1, 1, 1)
RIGHT = (1 + math.sqrt(3) / 2, 1.0)


def _oracle_field(m):
    return field_from_function(ORACLE.f, np.ones((2 * m + 1, 2 * m + 1), dtype=bool), 1 / m)


@pytest.fixture(scope="module")
def hc32():
    return solve_limit_shape(hexagon_spec(1, 1, 1), 1 / 32)


@pytest.fixture(scope="module")
def right_jet():
    P = conic_parametrization(ORACLE.conic)
    th = brentq(lambda a: P(a)[1] - 1.0, -1.0, -1e-3)
    return reconstruct_q0_jets(P, [th])[0]


def test_slope_to_f_examples():
    assert abs(slope_to_f((0.5, -0.25)) - (-1j)) < 1e-12
    assert abs(slope_to_f((2 / 3, -1 / 3)) - cmath.exp(-2j * math.pi / 3)) < 1e-12
    assert slope_to_f((0.0, 0.0)) == FrozenValue("positive", math.nan) or slope_to_f((0.0, 0.0)).kind == "positive"
    assert slope_to_f((0.3, -0.3)).kind == "infinity"
    assert slope_to_f((0.4, 0.0)).kind == "zero"
    assert slope_to_f((1.0, -0.4)).kind == "minus_one"
    with pytest.raises(InvalidArgument):
        slope_to_f((0.2, 0.1))


def test_f_to_slope_examples_and_roundtrip():
    s = f_to_slope(-1j)
    assert abs(s.s - 0.5) < 1e-12 and abs(s.t + 0.25) < 1e-12
    s = f_to_slope(cmath.exp(-2j * math.pi / 3))
    assert abs(s.s - 2 / 3) < 1e-12 and abs(s.t + 1 / 3) < 1e-12
    rng = np.random.default_rng(0)
    for _ in range(100):
        a, b = sorted(rng.uniform(0.01, 0.99, 2))
        st = (1 - a, -(b - a))  # p1 = a, p2 = b - a, p3 = 1 - b
        back = f_to_slope(slope_to_f(st))
        assert abs(back.s - st[0]) < 1e-12 and abs(back.t - st[1]) < 1e-12
    with pytest.raises(SingularError):
        f_to_slope(0.0)
    with pytest.raises(SingularError):
        f_to_slope(-1.0)
    with pytest.raises(InvalidArgument):
        f_to_slope(1j)


def test_omega_upsilon():
    om, up = omega_upsilon(-1j)
    assert abs(om + 1 / (2 * math.pi)) < 1e-12 and abs(up - 0.5) < 1e-12
    om, up = omega_upsilon(cmath.exp(-2j * math.pi / 3))
    assert abs(om + math.sqrt(3) / (2 * math.pi)) < 1e-12 and abs(up - 1) < 1e-12
    assert omega_upsilon(2.0)[0] == 0.0 and omega_upsilon(2.0)[1].real > 0
    assert omega_upsilon(-0.5)[1].real < 0 and omega_upsilon(-3.0)[1].real < 0
    with pytest.raises(SingularError):
        omega_upsilon(-1.0)


def test_solver_field(hc32):
    F = complex_slope_field(hc32)
    v = F.values[F.mask]
    assert np.all(v.imag < 0)
    assert abs(F.at(1.0, 1.0) - cmath.exp(-2j * math.pi / 3)) < 1e-3
    # frozen corners are absent
    assert np.isnan(F.at(0.05, 0.05)) and np.isnan(F.at(1.95, 1.95))
    assert all(omega_upsilon(z)[0] <= 0 for z in v)
    # arg* consistency with the solver gradient
    gx, gy = hc32.vertex_gradient()
    inner = F.interior(2)
    for ix, iy in np.argwhere(inner)[::37]:
        sl = f_to_slope(F.values[ix, iy])
        assert abs(sl.s - gx[ix, iy]) < 1e-6 and abs(sl.t - gy[ix, iy]) < 1e-6


def test_field_tends_to_real_at_the_edge():
    F = _oracle_field(256)
    ims = [abs(F.at(RIGHT[0] - k / 256, 1.0).imag) for k in (64, 16, 4, 1)]
    assert np.all(np.diff(ims) < 0) and ims[-1] < 0.3


def test_burgers_manufactured_second_order():
    med = [burgers_residual(_oracle_field(m)).median for m in (32, 64)]
    assert med[0] / med[1] > 3.0


def test_burgers_on_solver_decreases(hc32):
    b32 = burgers_residual(complex_slope_field(hc32))
    assert b32.exclude == 2 and b32.median < 0.01
    js = b32.to_json()
    assert js["cells"] == int(b32.mask.sum())


def test_ratio_identity_is_first_order_or_better():
    r = []
    for m in (32, 64):
        res, mask = ratio_identity_residual(_oracle_field(m))
        r.append(np.median(res[mask]))
    assert r[0] / r[1] > 2.0


def test_edge_sqrt_fit_synthetic():
    m = 256
    x0 = 1.7
    mask = np.zeros((2 * m + 1, 2 * m + 1), dtype=bool)
    mask[:, m] = True
    F = field_from_function(lambda x, t: 1.0 - 1j * math.sqrt(3.0 * max(x0 - x, 0)) if x < x0 else complex("nan"),
                            mask, 1 / m)
    C, e = edge_sqrt_fit(F, (x0, 1.0), f0=1.0)
    assert abs(e - 0.5) < 1e-3 and abs(C - 3.0) < 1e-2


def test_edge_sqrt_fit_hexagon():
    m = 512
    mask = np.zeros((2 * m + 1, 2 * m + 1), dtype=bool)
    mask[:, m] = True
    F = field_from_function(ORACLE.f, mask, 1 / m)
    _, e = edge_sqrt_fit(F, RIGHT)
    assert 0.42 <= e <= 0.58


def test_edge_sqrt_fit_insufficient():
    mask = np.zeros((65, 65), dtype=bool)
    F = field_from_function(ORACLE.f, mask, 1 / 32)
    with pytest.raises(InsufficientData):
        edge_sqrt_fit(F, RIGHT)


def test_height_gradient_sqrt_manufactured():
    m = 256
    d = build_domain(hexagon_spec(1, 1, 1), m)
    ix, iy = np.indices(d.shape)
    x = (ix + d.x0) / m
    x0 = 1.6
    vals = x - (2 / 3) * np.maximum(x0 - x, 0) ** 1.5  # dH/dx = 1 - (x0 - x)^(1/2)
    Hc = ContinuumHeight(d, vals, m)
    C, e = height_gradient_sqrt_fit(Hc, (x0, 1.0), frozen_value=1.0)
    assert abs(e - 0.5) < 0.02 and abs(C - 1.0) < 0.05


def test_right_point_jet(right_jet):
    assert abs(right_jet.f0 - 1.0) < 1e-8
    assert abs(right_jet.q[1] - (right_jet.point[0] - right_jet.point[1])) < 1e-12
    assert abs(right_jet.q[2] - math.sqrt(3) / 12) < 1e-6
    cp = lqq_from_jet(right_jet)
    assert abs(cp.l - 0.5) < 1e-6 and abs(cp.q + math.sqrt(3) / 4) / (math.sqrt(3) / 4) < 0.01
    # the closed form of the support function agrees
    np.testing.assert_allclose(right_jet.q, ORACLE.q0_derivs(1.0), rtol=1e-5, atol=1e-7)


def test_jets_reparametrization_invariant(right_jet):
    P = conic_parametrization(ORACLE.conic)
    th = brentq(lambda a: P(a)[1] - 1.0, -1.0, -1e-3)
    jet = reconstruct_q0_jets(lambda u: P(2 * u + th), [0.0], dtheta=5e-4, nested=5e-3)[0]
    np.testing.assert_allclose(jet.q, right_jet.q, rtol=1e-5, atol=1e-7)


def test_lqq_on_ellipse():
    P = conic_parametrization(ORACLE.conic)
    n = 0
    for th in np.linspace(0, 2 * math.pi, 9)[:-1] + 0.2:
        jet = reconstruct_q0_jets(P, [th])[0]
        rl, rq = lqq_check(jet.point, jet, curvature_params(ORACLE.conic, jet.point))
        assert rl < 0.02 and rq < 0.02
        n += 1
    assert n == 8


def test_tilt_params():
    tp = tilt_params(0.0, 0.1, 0.0, 1.0)
    assert tp.t0 == 0.0 and abs(tp.alpha0 - 1.1) < 1e-15
    np.testing.assert_allclose(tp.omega([0.0, 0.5, 1.0]), [0.0, 0.05, 0.1])
    rng = np.random.default_rng(3)
    for _ in range(100):
        x1, x2 = rng.uniform(0.1, 2, 2) * rng.choice([-1, 1])
        t1 = rng.uniform(-1, 1)
        t2 = t1 + rng.uniform(0.1, 2)
        tp = tilt_params(x1, x2, t1, t2)
        y = rng.uniform(-3, 3)
        assert abs(tp.omega(y) - (tp.alpha0 - 1) * (y - tp.t0)) < 1e-12 * max(1, abs(tp.omega(y)))
        assert abs(tp.omega(t1) - x1) < 1e-12 and abs(tp.omega(t2) - x2) < 1e-12
    with pytest.raises(PreconditionError):
        tilt_params(-1.0, 1.0, 0.0, 1.0)
    with pytest.raises(InvalidArgument):
        tilt_params(1.0, 1.0, 0.0, 1.0)


def test_deformed_endpoint(right_jet):
    assert deformed_endpoint_check(right_jet.point, right_jet, 1.0).solved == 0.0
    r1 = deformed_endpoint_check(right_jet.point, right_jet, 1.01)
    r2 = deformed_endpoint_check(right_jet.point, right_jet, 1.005)
    assert abs(r1.predicted - 2.5e-3) < 1e-12
    assert r1.residual / 1e-4 < 10
    assert 3 <= r1.residual / r2.residual <= 5


def test_interior_log_perturbation(right_jet):
    x, t = right_jet.point[0] - 0.05, 1.0
    u = complex(ORACLE.f(x, t))
    for _ in range(50):
        u -= (right_jet.model(u) - x * (u + 1) + t * u) / (right_jet.model_d1(u) - x + t)
    assert interior_log_perturbation_check(right_jet, (x, t), u, 1.0).relative_residual == 0.0
    for a in (1e-2, 1e-3):
        r = interior_log_perturbation_check(right_jet, (x, t), u, 1 + a)
        assert r.relative_residual < a / 0.05 + math.sqrt(a)


def test_derivative_identity_manufactured_quadratic():
    # Q0(f) = a + b f + c f^2 solved exactly for f
    a, b, c = 1.0, 0.2, 1.0

    def froot(x, t):
        r = np.roots([c, b - x + t, a - x])
        r = r[np.argmin(r.imag)]
        return complex(r) if r.imag < -1e-9 else complex("nan")

    m = 256
    lo, hi = int(0.2 * m), int(0.8 * m)
    mask = np.zeros((m + 1, m + 1), dtype=bool)
    mask[lo:hi, lo:hi] = True
    F = field_from_function(froot, mask, 1 / m)
    rx, rt = derivative_identity_check(F, lambda f, x, t: b + 2 * c * f)
    assert len(rx) > 100 and np.max(rx) < 1e-4 and np.max(rt) < 1e-4


def test_derivative_identity_sampled_jets(hc32):
    F = complex_slope_field(hc32)
    dist = ndimage.distance_transform_edt(np.pad(F.mask, 1))[1:-1, 1:-1]
    rx, rt = derivative_identity_check(F, sampled_q0prime(F), band=dist >= 10)
    assert len(rx) >= 100
    assert np.median(rx) < 0.05 and np.median(rt) < 0.05
