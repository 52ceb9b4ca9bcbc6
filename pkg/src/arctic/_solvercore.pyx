# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Gauss-Seidel relaxation for the discrete entropy maximizer.

Heights are float64 on a padded flat array indexed ``ix * ny + iy``.  Each
visited vertex is moved to the maximizer of the entropy of its (up to six)
adjacent triangles inside the Lipschitz cone set by its neighbours, then
over-relaxed and clipped back into the cone.  Face flags are bit masks in the
order U1, U2, U3, D1, D2, D3 (see ``limitshape``).
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, sin, cos, fabs, M_PI
from libc.stdint cimport int64_t, uint8_t


cdef inline double _clip(double p, double c) noexcept nogil:
    if p < c:
        return c
    if p > 1.0 - c:
        return 1.0 - c
    return p


cdef inline void _face(double s, double t, double cs, double ct, double clamp,
                       double* gv, double* gd) noexcept nogil:
    cdef double p[3]
    cdef double dp[3]
    cdef double q, a
    cdef int i
    p[0] = 1.0 - s
    p[1] = -t
    p[2] = s + t
    dp[0] = -cs
    dp[1] = -ct
    dp[2] = cs + ct
    for i in range(3):
        if dp[i] == 0.0:
            continue
        q = _clip(p[i], clamp)
        a = M_PI * q
        gv[0] += -log(sin(a)) * dp[i]
        if p[i] > clamp and p[i] < 1.0 - clamp:
            gd[0] += -M_PI * cos(a) / sin(a) * dp[i] * dp[i]


cdef inline void _local(double* g, Py_ssize_t v, Py_ssize_t ny, uint8_t fl, double z,
                        double m, double clamp, double* gv, double* gd) noexcept nogil:
    cdef double W = g[v - ny], E = g[v + ny], N = g[v + 1], S = g[v - 1]
    cdef double NE = g[v + ny + 1], SW = g[v - ny - 1]
    gv[0] = 0.0
    gd[0] = 0.0
    if fl & 1:
        _face((E - z) * m, (NE - E) * m, -1.0, 0.0, clamp, gv, gd)
    if fl & 2:
        _face((z - W) * m, (N - z) * m, 1.0, -1.0, clamp, gv, gd)
    if fl & 4:
        _face((S - SW) * m, (z - S) * m, 0.0, 1.0, clamp, gv, gd)
    if fl & 8:
        _face((NE - N) * m, (N - z) * m, 0.0, -1.0, clamp, gv, gd)
    if fl & 16:
        _face((E - z) * m, (z - S) * m, -1.0, 1.0, clamp, gv, gd)
    if fl & 32:
        _face((z - W) * m, (W - SW) * m, 1.0, 0.0, clamp, gv, gd)
    gd[0] *= m


cdef inline double _maximize(double* g, Py_ssize_t v, Py_ssize_t ny, uint8_t fl, double z,
                             double lo, double hi, double m, double clamp,
                             int iters, double tol) noexcept nogil:
    cdef double gv, gd, a, b, zn
    cdef int k
    if hi <= lo:
        return lo
    _local(g, v, ny, fl, lo, m, clamp, &gv, &gd)
    if gv <= 0.0:
        return lo
    _local(g, v, ny, fl, hi, m, clamp, &gv, &gd)
    if gv >= 0.0:
        return hi
    a = lo
    b = hi
    if z <= lo or z >= hi:
        z = 0.5 * (lo + hi)
    for k in range(iters):
        _local(g, v, ny, fl, z, m, clamp, &gv, &gd)
        if gv > 0.0:
            a = z
        else:
            b = z
        if gd < 0.0:
            zn = z - gv / gd
        else:
            zn = a - 1.0
        if not (zn > a and zn < b):
            zn = 0.5 * (a + b)
        if fabs(zn - z) <= tol:
            return zn
        z = zn
    return z


def relax_sweeps(double[::1] g, Py_ssize_t ny, const int64_t[::1] order,
                 const int64_t[::1] class_ptr, const uint8_t[::1] flags,
                 double m, double clamp, double omega, int nsweeps, int iters=60,
                 double tol=1e-13):
    """Run ``nsweeps`` sweeps over ``order``; returns the last sweep's max change."""
    cdef Py_ssize_t k, v, ns = order.shape[0]
    cdef int sweep
    cdef double h = 1.0 / m, z, zs, zn, lo, hi, change = 0.0, d
    cdef double W, E, N, S, NE, SW
    cdef double* gp = &g[0]
    with nogil:
        for sweep in range(nsweeps):
            change = 0.0
            for k in range(ns):
                v = order[k]
                W = gp[v - ny]; E = gp[v + ny]; N = gp[v + 1]; S = gp[v - 1]
                NE = gp[v + ny + 1]; SW = gp[v - ny - 1]
                lo = W
                if N > lo: lo = N
                if SW > lo: lo = SW
                if E - h > lo: lo = E - h
                if S - h > lo: lo = S - h
                if NE - h > lo: lo = NE - h
                hi = W + h
                if N + h < hi: hi = N + h
                if SW + h < hi: hi = SW + h
                if E < hi: hi = E
                if S < hi: hi = S
                if NE < hi: hi = NE
                if lo > hi:
                    lo = hi
                z = gp[v]
                zs = _maximize(gp, v, ny, flags[k], z, lo, hi, m, clamp, iters, tol * h)
                zn = z + omega * (zs - z)
                if zn < lo: zn = lo
                if zn > hi: zn = hi
                d = fabs(zn - z)
                if d > change:
                    change = d
                gp[v] = zn
    return change


def local_gradient(double[::1] g, Py_ssize_t ny, const int64_t[::1] order,
                   const uint8_t[::1] flags, double m, double clamp):
    """d(local entropy)/dz at each listed vertex (up to a positive factor)."""
    cdef Py_ssize_t k, ns = order.shape[0]
    cdef double gv, gd
    out = np.empty(ns)
    cdef double[::1] o = out
    for k in range(ns):
        _local(&g[0], order[k], ny, flags[k], g[order[k]], m, clamp, &gv, &gd)
        o[k] = gv
    return out
