"""Acceptance suite: one PASS/FAIL line per criterion, asserted at the stated tolerances.

Run ``pytest -s tests/test_acceptance.py`` to see the lines inline; they are also
written to the terminal when output is captured.
"""
import math
import time

import numpy as np
import pytest
from scipy import ndimage
from scipy.special import gamma

from arctic.dynamics import DYNAMICS, grand_coupling_run, stationarity_check
from arctic.edge import (airy_ai, airy_aip, airy_kernel, concentration_experiment,
                         edge_statistics_experiment, tw_gue_moments)
from arctic.enumeration import conditional_gibbs_check, count_tilings, state_table
from arctic.lattice import build_domain, hexagon_spec
from arctic.limitshape import (HexagonOracle, curvature_params, extract_liquid_region,
                               hausdorff_to_conic, hexagon_inscribed_ellipse, solve_limit_shape)
from arctic.rng import RngStream
from arctic.slope import (burgers_residual, complex_slope_field, conic_parametrization,
                          deformed_endpoint_check, derivative_identity_check,
                          interior_log_perturbation_check, lqq_check, ratio_identity_residual,
                          reconstruct_q0_jets, sampled_q0prime)
from arctic.tiling import HeightFunction

RIGHT = (1 + math.sqrt(3) / 2, 1.0)
ORACLE = HexagonOracle(1, 1, 1)


@pytest.fixture
def report(capsys):
    def emit(k, ok, msg):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {k}: {msg}")
        return ok
    return emit


@pytest.fixture(scope="module")
def solved():
    spec = hexagon_spec(1, 1, 1)
    return {m: solve_limit_shape(spec, 1 / m) for m in (32, 64)}


@pytest.fixture(scope="module")
def fields(solved):
    return {m: complex_slope_field(Hc) for m, Hc in solved.items()}


def product_formula(a, b, c):
    num = den = 1
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                num *= i + j + k - 1
                den *= i + j + k - 2
    assert num % den == 0
    return num // den


def test_criterion_01_exact_counting(report):
    t = time.time()
    bad = []
    for a in range(1, 5):
        for b in range(1, 5):
            for c in range(1, 5):
                got = count_tilings(build_domain(hexagon_spec(a, b, c), 1))
                if got != product_formula(a, b, c):
                    bad.append((a, b, c))
    el = time.time() - t
    ok = not bad and el < 10
    report(1, ok, f"64 hexagons match the product formula, mismatches={bad}, {el:.1f}s")
    assert ok


def test_criterion_02_stationarity(report, hex222):
    t = time.time()
    tvs = {k: stationarity_check(hex222, k, 10 ** 5, RngStream(0)).tv for k in DYNAMICS}
    el = time.time() - t
    ok = max(tvs.values()) < 0.02 and el < 120
    report(2, ok, "TV " + ", ".join(f"{k}={v:.4f}" for k, v in tvs.items()) + f" (< 0.02), {el:.0f}s")
    assert ok


def test_criterion_03_monotone_coupling(report):
    d = build_domain(hexagon_spec(3, 3, 3), 1)
    mat, _ = state_table(d)
    g = np.random.default_rng(0)
    rng = RngStream(0)
    t = time.time()
    bad = 0
    for k in range(10 ** 4):
        i, j = g.integers(len(mat), size=2)
        hi = HeightFunction.from_flat(d, np.maximum(mat[i], mat[j]))
        lo = HeightFunction.from_flat(d, np.minimum(mat[i], mat[j]))
        _, v = grand_coupling_run([hi, lo], 1000, rng.child(k), return_violations=True)
        bad += v
    el = time.time() - t
    ok = bad == 0 and el < 60
    report(3, ok, f"10^4 ordered pairs on hexagon(3,3,3) x 10^3 steps, violations={bad}, {el:.1f}s")
    assert ok


def test_criterion_04_gibbs(report, hex222):
    t = time.time()
    rep = conditional_gibbs_check(hex222, (1, 3, 0, 4), 20000, RngStream(0))
    el = time.time() - t
    tested = sum(1 for g in rep.groups if g.fillings > 1)
    ok = rep.passed and tested > 0 and el < 60
    report(4, ok, f"{tested} groups tested, min p={rep.min_pvalue:.3f} (> 0.01), {el:.1f}s")
    assert ok


def test_criterion_05_limit_shape(report, solved):
    Hc = solved[64]
    con = hexagon_inscribed_ellipse(1, 1, 1)
    hd = hausdorff_to_conic(extract_liquid_region(Hc, 1e-2).polyline, con) * 64
    hd_fine = hausdorff_to_conic(extract_liquid_region(Hc, 1e-3).polyline, con) * 64
    h11 = float(Hc(1.0, 1.0))
    ok = hd <= 2 and abs(h11 - 0.5) <= 0.01
    report(5, ok, f"Hausdorff {hd:.2f} cells at liquid tol 1e-2 (<= 2; {hd_fine:.2f} at tol 1e-3), "
                  f"H*(1,1)={h11:.6f}")
    assert ok


def test_criterion_06_burgers(report, fields):
    m32 = burgers_residual(fields[32]).median
    m64 = burgers_residual(fields[64]).median
    ok = m32 / m64 >= 1.5
    report(6, ok, f"median residual {m32:.3g} -> {m64:.3g}, ratio {m32 / m64:.2f} (>= 1.5)")
    assert ok


def test_criterion_07_lqq(report):
    P = conic_parametrization(ORACLE.conic)
    errs = []
    for th in np.linspace(0, 2 * math.pi, 9)[:-1] + 0.2:
        jet = reconstruct_q0_jets(P, [th])[0]
        errs.append(max(lqq_check(jet.point, jet, curvature_params(ORACLE.conic, jet.point))))
    cp = curvature_params(ORACLE.conic, RIGHT)
    ok = len(errs) == 8 and max(errs) < 0.02 and abs(cp.l - 0.5) <= 0.01 and abs(cp.q + 0.4330) <= 0.01
    report(7, ok, f"8 points, max relative gap {max(errs):.2e} (< 2%); "
                  f"(l,q) at right point = ({cp.l:.4f}, {cp.q:.4f})")
    assert ok


def test_criterion_08_perturbation(report):
    from scipy.optimize import brentq
    P = conic_parametrization(ORACLE.conic)
    th0 = brentq(lambda th: P(th)[1] - 1.0, -1.0, -1e-3)
    jet = reconstruct_q0_jets(P, [th0])[0]
    r1 = deformed_endpoint_check(jet.point, jet, 1.01).residual
    r2 = deformed_endpoint_check(jet.point, jet, 1.005).residual
    ratio = r1 / r2
    alpha = 1.01
    logs = []
    for depth in (0.05, 0.2):
        x, t = jet.point[0] - depth, jet.point[1]
        u = complex(ORACLE.f(x, t))
        for _ in range(50):
            u -= (jet.model(u) - x * (u + 1) + t * u) / (jet.model_d1(u) - x + t)
        res = interior_log_perturbation_check(jet, (x, t), u, alpha).relative_residual
        bound = abs(alpha - 1) / depth + math.sqrt(abs(alpha - 1))
        logs.append((depth, res, bound))
    ok = 3 <= ratio <= 5 and all(r < b for _, r, b in logs)
    report(8, ok, f"endpoint halving ratio {ratio:.3f} (in [3,5]); log residuals "
                  + ", ".join(f"depth {d}: {r:.3g} < {b:.3g}" for d, r, b in logs))
    assert ok


def test_criterion_09_derivative_identities(report, fields):
    med = {}
    for m, F in fields.items():
        res, mask = ratio_identity_residual(F)
        med[m] = float(np.median(res[mask]))
    F = fields[64]
    dist = ndimage.distance_transform_edt(np.pad(F.mask, 1))[1:-1, 1:-1]
    rx, rt = derivative_identity_check(F, sampled_q0prime(F), band=dist >= 10)
    jet_med = max(np.median(rx), np.median(rt))
    ok = med[32] / med[64] >= 1.5 and len(rx) > 0 and jet_med < 0.05
    report(9, ok, f"ratio identity median {med[32]:.3g} -> {med[64]:.3g} (ratio {med[32] / med[64]:.2f}); "
                  f"jet identities median {jet_med:.3g} over {len(rx)} cells >= 10 from the boundary (< 5%)")
    assert ok


def test_criterion_10_concentration(report):
    t = time.time()
    r = concentration_experiment(hexagon_spec(1, 1, 1), (16, 32, 64), 200, 0.3, RngStream(0))
    el = time.time() - t
    frozen = min(r.frozen_match.values())
    ok = r.ratio < 2 and frozen >= 0.99 and el < 900
    meds = ", ".join(f"{n}: {r.median_dev[n]:.3f}" for n in r.ns)
    report(10, ok, f"median sup-deviation {meds}, ratio {r.ratio:.3f} (< 2); "
                   f"frozen match {frozen:.3f} (>= 0.99), {el:.0f}s")
    assert ok


def test_criterion_11_edge_statistics(report):
    t = time.time()
    r = edge_statistics_experiment((1, 1, 1), 48, 500, RIGHT, RngStream(0), times=(0.0,))
    el = time.time() - t
    ok = -2.05 <= r.mean <= -1.45 and 0.72 <= r.std <= 1.08 and r.ks < 0.12
    report(11, ok, f"mean {r.mean:.4f}, std {r.std:.4f}, KS {r.ks:.4f} "
                   f"(raw lattice values: mean {r.raw_mean:.4f}, KS {r.raw_ks:.4f}), {el:.0f}s")
    assert ok


def test_criterion_12_numerics(report):
    ai0 = 1 / (3 ** (2 / 3) * gamma(2 / 3))
    aip0 = -1 / (3 ** (1 / 3) * gamma(1 / 3))
    e_ai = abs(airy_ai(0.0) - ai0)
    e_aip = abs(airy_aip(0.0) - aip0)
    k00 = airy_kernel(0.0, 0.0)
    mean, var = tw_gue_moments()
    ok = (e_ai < 1e-10 and e_aip < 1e-10 and abs(k00 - 0.0669875) <= 1e-4
          and abs(mean + 1.7711) <= 5e-3 and abs(var - 0.8132) <= 5e-3)
    report(12, ok, f"|Ai(0) err|={e_ai:.1e}, |Ai'(0) err|={e_aip:.1e}, K(0,0)={k00:.7f}, "
                   f"TW mean {mean:.4f}, variance {var:.4f}")
    assert ok
