# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled heat-bath kernels for the single-site flip dynamics.

Heights live in a flat int64 array indexed ``ix * ny + iy``.  Only interior
vertices are ever updated, so their six neighbours are always in range.  A move
is a (vertex, coin) pair: coin 1 sets the vertex to the largest admissible
value, coin 0 to the smallest.  For a single vertex this is exactly the random
flip (a flippable vertex moves with probability 1/2), and it is monotone, so
copies that share moves keep their pointwise order.
"""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t, uint64_t, uint8_t


cdef inline int64_t _min(int64_t a, int64_t b) noexcept nogil:
    return a if a < b else b


cdef inline int64_t _max(int64_t a, int64_t b) noexcept nogil:
    return a if a > b else b


cdef inline void _update(int64_t* h, Py_ssize_t ny, Py_ssize_t v, int coin) noexcept nogil:
    # branch-free: the coin is random, so a data-dependent branch mispredicts half the time
    cdef int64_t w = h[v - ny], e = h[v + ny]
    cdef int64_t n = h[v + 1], s = h[v - 1]
    cdef int64_t ne = h[v + ny + 1], sw = h[v - ny - 1]
    cdef int64_t hi = _min(_min(_min(w, n), sw) + 1, _min(_min(e, s), ne))
    cdef int64_t lo = _max(_max(_max(w, n), sw), _max(_max(e, s), ne) - 1)
    h[v] = hi if coin else lo


def apply_moves(int64_t[::1] h, Py_ssize_t ny, const int64_t[::1] vs, const uint8_t[::1] coins):
    cdef Py_ssize_t k, m = vs.shape[0]
    with nogil:
        for k in range(m):
            _update(&h[0], ny, vs[k], coins[k])


def apply_draws(int64_t[::1] h, Py_ssize_t ny, const int64_t[::1] sites, const uint64_t[::1] draws):
    """Moves decoded from raw words: high 32 bits pick the site, low bit is the coin."""
    cdef Py_ssize_t k, m = draws.shape[0]
    cdef uint64_t ns = sites.shape[0], r
    with nogil:
        for k in range(m):
            r = draws[k]
            _update(&h[0], ny, sites[((r >> 32) * ns) >> 32], <int>(r & 1))


def coupled_draws(int64_t[:, ::1] hs, Py_ssize_t ny, const int64_t[::1] sites,
                  const uint64_t[::1] draws):
    """Apply shared moves to every copy; count order violations between rows.

    Rows are expected to be pointwise nonincreasing (row j >= row j+1).  Order
    can only break at the vertex just updated, so checking it there after every
    move is an exact per-step check.
    """
    cdef Py_ssize_t k, j, v, m = draws.shape[0], c = hs.shape[0]
    cdef uint64_t ns = sites.shape[0], r
    cdef long long bad = 0
    cdef int coin
    with nogil:
        for k in range(m):
            r = draws[k]
            v = sites[((r >> 32) * ns) >> 32]
            coin = <int>(r & 1)
            for j in range(c):
                _update(&hs[j, 0], ny, v, coin)
            for j in range(c - 1):
                if hs[j, v] < hs[j + 1, v]:
                    bad += 1
    return bad


def batch_draws(int64_t[:, ::1] hs, Py_ssize_t ny, const int64_t[::1] sites,
                const uint64_t[:, ::1] draws):
    """Independent chains: row j of ``hs`` consumes row j of ``draws``."""
    cdef Py_ssize_t k, j, m = draws.shape[1], c = hs.shape[0]
    cdef uint64_t ns = sites.shape[0], r
    with nogil:
        for j in range(c):
            for k in range(m):
                r = draws[j, k]
                _update(&hs[j, 0], ny, sites[((r >> 32) * ns) >> 32], <int>(r & 1))



def sweep_words(int64_t[:, ::1] hs, Py_ssize_t ny, const int64_t[::1] order,
                const uint64_t[::1] words, Py_ssize_t nsweeps):
    """Systematic heat-bath sweeps over ``order`` applied to every row of ``hs``.

    ``order`` lists the interior vertices grouped by colour class, so each
    class is a set of non-adjacent vertices.  Sweep s uses coin bits
    ``s * len(order) + k`` of the packed ``words``.  Returns the number of
    order violations between consecutive rows found at updated vertices.
    """
    cdef Py_ssize_t s, k, j, v, ns = order.shape[0], c = hs.shape[0]
    cdef Py_ssize_t bit
    cdef int coin
    cdef long long bad = 0
    with nogil:
        for s in range(nsweeps):
            for k in range(ns):
                bit = s * ns + k
                coin = <int>((words[bit >> 6] >> (bit & 63)) & 1)
                v = order[k]
                for j in range(c):
                    _update(&hs[j, 0], ny, v, coin)
                for j in range(c - 1):
                    if hs[j, v] < hs[j + 1, v]:
                        bad += 1
    return bad
