import numpy as np
import pytest

from arctic import _flipcore_py, _solvercore_py, kernels
from arctic.dynamics import _color_order
from arctic.lattice import boundary_height, build_domain, extremal_heights, hexagon_spec
from arctic.limitshape import _Stencil, continuum_boundary
from arctic.rng import RngStream

compiled = pytest.importorskip("arctic._flipcore")
compiled_solver = pytest.importorskip("arctic._solvercore")


@pytest.fixture(scope="module")
def setup():
    d = build_domain(hexagon_spec(3, 2, 4), 1)
    lo, hi = extremal_heights(d, boundary_height(d))
    return d, lo, hi


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")
    assert kernels.COMPILED == (kernels.BACKEND == "cython")


def test_apply_moves_parity(setup):
    d, lo, hi = setup
    rng = np.random.default_rng(0)
    vs = rng.choice(d.flat_interior, 500).astype(np.int64)
    coins = rng.integers(0, 2, 500).astype(np.uint8)
    a, b = hi.flat.copy(), hi.flat.copy()
    compiled.apply_moves(a, d.ny, vs, coins)
    _flipcore_py.apply_moves(b, d.ny, vs, coins)
    np.testing.assert_array_equal(a, b)


def test_apply_draws_parity(setup):
    d, lo, hi = setup
    draws = RngStream(1).raw(2000)
    a, b = lo.flat.copy(), lo.flat.copy()
    compiled.apply_draws(a, d.ny, d.flat_interior, draws)
    _flipcore_py.apply_draws(b, d.ny, d.flat_interior, draws)
    np.testing.assert_array_equal(a, b)


def test_coupled_and_batch_parity(setup):
    d, lo, hi = setup
    draws = RngStream(2).raw(3000)
    a = np.stack([hi.flat, lo.flat]).copy()
    b = a.copy()
    assert compiled.coupled_draws(a, d.ny, d.flat_interior, draws) == \
        _flipcore_py.coupled_draws(b, d.ny, d.flat_interior, draws) == 0
    np.testing.assert_array_equal(a, b)
    a = np.tile(hi.flat, (4, 1))
    b = a.copy()
    words = RngStream(3).raw(4 * 800).reshape(4, 800)
    compiled.batch_draws(a, d.ny, d.flat_interior, words)
    _flipcore_py.batch_draws(b, d.ny, d.flat_interior, words)
    np.testing.assert_array_equal(a, b)


def test_sweep_parity(setup):
    d, lo, hi = setup
    order = _color_order(d)
    k = 7
    words = RngStream(4).raw((k * len(order) + 63) // 64)
    a = np.stack([hi.flat, lo.flat]).copy()
    b = a.copy()
    assert compiled.sweep_words(a, d.ny, order, words, k) == _flipcore_py.sweep_words(b, d.ny, order, words, k)
    np.testing.assert_array_equal(a, b)


def test_solver_parity():
    m = 8
    d = build_domain(hexagon_spec(1, 1, 1), m)
    st = _Stencil(d)
    bh, bvals = continuum_boundary(d, m)
    hmin, hmax = extremal_heights(d, bh)
    init = np.where(d.boundary, bvals, 0.5 * (hmin.values + hmax.values) / m)
    ga, gb = st.pad(init), st.pad(init)
    args = (st.pny, st.order, st.class_ptr, st.flags, float(m), 1e-6, 1.5, 5)
    ca = compiled_solver.relax_sweeps(ga, *args)
    cb = _solvercore_py.relax_sweeps(gb, *args)
    np.testing.assert_allclose(ga, gb, rtol=0, atol=1e-12)
    assert abs(ca - cb) < 1e-12
    la = compiled_solver.local_gradient(ga, st.pny, st.order, st.flags, float(m), 1e-6)
    lb = _solvercore_py.local_gradient(ga, st.pny, st.order, st.flags, float(m), 1e-6)
    np.testing.assert_allclose(la, lb, rtol=1e-10, atol=1e-12)
