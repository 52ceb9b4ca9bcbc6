"""Pure-Python (numpy) twin of ``_solvercore``.

Vertices of one colour class share no edge, so updating a whole class at once
is the same as visiting its vertices one after another; results agree with
the compiled kernel up to floating-point rounding.
"""
import math

import numpy as np

_BITS = (1, 2, 4, 8, 16, 32)


def _terms(g, v, ny):
    W, E, N, S = g[v - ny], g[v + ny], g[v + 1], g[v - 1]
    NE, SW = g[v + ny + 1], g[v - ny - 1]
    # (constant of s, coefficient of z in s, constant of t, coefficient of z in t)
    return (
        (E, -1.0, NE - E, 0.0),
        (-W, 1.0, N, -1.0),
        (S - SW, 0.0, -S, 1.0),
        (NE - N, 0.0, N, -1.0),
        (E, -1.0, -S, 1.0),
        (-W, 1.0, W - SW, 0.0),
    ), (W, E, N, S, NE, SW)


def _derivs(z, terms, flags, m, clamp):
    gv = np.zeros_like(z)
    gd = np.zeros_like(z)
    for bit, (a_s, c_s, a_t, c_t) in zip(_BITS, terms):
        on = (flags & bit) != 0
        if not on.any():
            continue
        s = (a_s + c_s * z) * m
        t = (a_t + c_t * z) * m
        for p, dp in ((1.0 - s, -c_s), (-t, -c_t), (s + t, c_s + c_t)):
            if dp == 0.0:
                continue
            q = np.clip(p, clamp, 1.0 - clamp)
            a = math.pi * q
            sn = np.sin(a)
            gv += np.where(on, -np.log(sn) * dp, 0.0)
            inside = on & (p > clamp) & (p < 1.0 - clamp)
            gd += np.where(inside, -math.pi * np.cos(a) / sn * dp * dp, 0.0)
    return gv, gd * m


def _maximize(z, lo, hi, terms, flags, m, clamp, iters, tol):
    g_lo, _ = _derivs(lo, terms, flags, m, clamp)
    g_hi, _ = _derivs(hi, terms, flags, m, clamp)
    at_lo = (g_lo <= 0) | (hi <= lo)
    at_hi = ~at_lo & (g_hi >= 0)
    a, b = lo.copy(), hi.copy()
    z = np.where((z <= lo) | (z >= hi), 0.5 * (lo + hi), z)
    active = ~(at_lo | at_hi)
    for _ in range(iters):
        if not active.any():
            break
        gv, gd = _derivs(z, terms, flags, m, clamp)
        a = np.where(active & (gv > 0), z, a)
        b = np.where(active & ~(gv > 0), z, b)
        with np.errstate(divide="ignore", invalid="ignore"):
            zn = np.where(gd < 0, z - gv / gd, a - 1.0)
        zn = np.where((zn > a) & (zn < b), zn, 0.5 * (a + b))
        done = np.abs(zn - z) <= tol
        z = np.where(active, zn, z)
        active &= ~done
    return np.where(at_lo, lo, np.where(at_hi, hi, z))


def relax_sweeps(g, ny, order, class_ptr, flags, m, clamp, omega, nsweeps, iters=60, tol=1e-13):
    h = 1.0 / m
    change = 0.0
    for _ in range(nsweeps):
        change = 0.0
        for c in range(len(class_ptr) - 1):
            sl = slice(class_ptr[c], class_ptr[c + 1])
            v = order[sl]
            if len(v) == 0:
                continue
            fl = flags[sl]
            terms, (W, E, N, S, NE, SW) = _terms(g, v, ny)
            lo = np.maximum.reduce([W, N, SW, E - h, S - h, NE - h])
            hi = np.minimum.reduce([W + h, N + h, SW + h, E, S, NE])
            lo = np.minimum(lo, hi)
            z = g[v]
            zs = _maximize(z, lo, hi, terms, fl, m, clamp, iters, tol * h)
            zn = np.clip(z + omega * (zs - z), lo, hi)
            change = max(change, float(np.abs(zn - z).max()))
            g[v] = zn
    return change


def local_gradient(g, ny, order, flags, m, clamp):
    terms, _ = _terms(g, order, ny)
    gv, _ = _derivs(g[order], terms, flags, m, clamp)
    return gv
