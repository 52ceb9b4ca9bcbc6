"""Exact uniform sampling of hexagon tilings through their walk ensembles.

A tiling of the lattice hexagon with sides (A, B, C) is a family of A
non-intersecting Bernoulli walks started at 0, ..., A - 1 at time 0 and ended
at C, ..., C + A - 1 at time T = B + C.  By the Lindstrom-Gessel-Viennot
lemma the number of ways to finish from positions X at time tau is

    N(tau, X) = const(tau) * Delta(X) * prod_i w_tau(x_i),
    w_tau(y) = 1 / ((C + A - 1 - y)! (T - tau - C + y)!),

so the walks form a Markov chain in time whose step X -> Y = X + eps has
probability N(tau + 1, Y) / N(tau, X).  Because Delta(Y) prod w(y_i) is a
determinant whose i-th row depends only on y_i, the sum over the choices of
the not-yet-decided particles is again a determinant (multilinearity), which
gives an exact particle-by-particle sampler.  Colliding choices produce equal
rows and drop out on their own.

The same structure gives the one-time marginal: the positions at time tau
form the orthogonal polynomial ensemble with weight (lower x upper) factorial
weights, sampled here as a projection determinantal process.
"""
import math

import numpy as np
from scipy.special import gammaln

from .errors import InvalidArgument
from .rng import as_stream
from .tiling import WalkEnsemble


def hexagon_sides(domain):
    """Integer sides (A, B, C) of a lattice hexagon built by build_domain."""
    spec = getattr(domain, "spec", None)
    poly = getattr(domain, "polygon", None)
    if poly is None or len(poly) != 6:
        raise InvalidArgument("domain is not a hexagon")
    (x0, y0), (x1, _), (x2, y2), _, _, (_, y5) = poly
    A, C, B = x1 - x0, x2 - x1, y5 - y0
    expected = [(0, 0), (A, 0), (A + C, C), (A + C, B + C), (C, B + C), (0, B)]
    if [tuple(p) for p in poly] != expected:
        raise InvalidArgument("domain is not a hexagon in standard position")
    return int(A), int(B), int(C)


def _log_upper(A, B, C, tau, y):
    S = B + C - tau
    y = np.asarray(y)
    ok = (y <= C + A - 1) & (y >= C - S)
    with np.errstate(invalid="ignore"):
        lw = -(gammaln(np.where(ok, C + A - y, 1)) + gammaln(np.where(ok, S - C + y + 1, 1)))
    return np.where(ok, lw, -np.inf)


def _log_lower(A, tau, y):
    y = np.asarray(y)
    ok = (y >= 0) & (y <= tau + A - 1)
    lw = -(gammaln(np.where(ok, y + 1, 1)) + gammaln(np.where(ok, tau + A - y, 1)))
    return np.where(ok, lw, -np.inf)


def _step(X, A, B, C, tau, rng):
    """One time step X -> X + eps of the conditioned walk chain (tau -> tau + 1).

    Rows are expressed in the orthonormal basis of the time-(tau + 1)
    marginal, sqrt(w_low w_up) * polynomials, where positions typical of the
    next slice have rows of order one; the remaining factor
    sqrt(w_up / w_low) is a per-row scalar.
    """
    n = len(X)
    xs, V = slice_kernel_basis(A, B, C, tau + 1)
    lo = int(xs[0])
    M = len(xs)

    def rows(y):
        idx = y - lo
        ok = (idx >= 0) & (idx < M)
        R = np.zeros((len(y), n))
        R[ok] = V[idx[ok]]
        lg = 0.5 * (_log_upper(A, B, C, tau + 1, y) - _log_lower(A, tau + 1, y))
        lg = np.where(ok, lg, -np.inf)
        return R, lg

    r0, g0 = rows(X)
    r1, g1 = rows(X + 1)
    top = np.maximum(g0, g1)
    if np.any(~np.isfinite(top)):
        raise AssertionError("walk configuration left the hexagon")
    c0 = np.exp(g0 - top)
    c1 = np.exp(g1 - top)
    Mat = c0[:, None] * r0 + c1[:, None] * r1
    Minv = np.linalg.inv(Mat)
    eps = np.zeros(n, dtype=np.int64)
    us = rng.random(n)
    for i in range(n):
        col = Minv[:, i]
        p0 = max(c0[i] * (r0[i] @ col), 0.0)
        p1 = max(c1[i] * (r1[i] @ col), 0.0)
        tot = p0 + p1
        e = 1 if us[i] * tot < p1 else 0
        eps[i] = e
        new = c1[i] * r1[i] if e else c0[i] * r0[i]
        delta = new - Mat[i]
        # Sherman-Morrison update for replacing row i
        Ad = Minv[:, i].copy()
        Minv -= np.outer(Ad, delta @ Minv) / (1.0 + delta @ Ad)
        Mat[i] = new
    return X + eps


def sample_hexagon_walks(A, B, C, rng=None):
    """Exact uniform sample of the walk ensemble as a list of position arrays per time."""
    rng = as_stream(rng)
    gen = rng.gen
    X = np.arange(A, dtype=np.int64)
    out = [X.copy()]
    T = B + C
    for tau in range(T):
        X = _step(X, A, B, C, tau, gen)
        out.append(X.copy())
    if not np.array_equal(X, np.arange(C, C + A)):
        raise AssertionError("walk sampler failed to reach the exit positions")
    return out


def walks_to_ensemble(slices, index_base=1):
    """WalkEnsemble with the index convention H(x_i + 1, t) = i of the domain's heights."""
    return WalkEnsemble({t: (X, np.arange(index_base, index_base + len(X))) for t, X in enumerate(slices)})


def sample_hexagon_height(domain, rng=None):
    """Exact uniform height function on a lattice hexagon."""
    from .lattice import boundary_height
    from .tiling import walks_to_height

    A, B, C = hexagon_sides(domain)
    bh = boundary_height(domain)
    slices = sample_hexagon_walks(A, B, C, rng)
    # walk indices follow the boundary: H(x + 1, 0) at the first walk
    base = int(bh.values[1 - domain.x0, -domain.y0]) if A > 0 else 1
    W = walks_to_ensemble(slices, base)
    return walks_to_height(W, domain, bh)


def slice_weights(A, B, C, tau):
    """Support and log weights of the one-time marginal at time tau."""
    lo = max(0, tau - B)
    hi = min(tau + A - 1, C + A - 1)
    x = np.arange(lo, hi + 1)
    lw = _log_lower(A, tau, x) + _log_upper(A, B, C, tau, x)
    return x, lw


def slice_kernel_basis(A, B, C, tau):
    """Orthonormal columns spanning sqrt(w) * polynomials of degree < A on the slice support."""
    x, lw = slice_weights(A, B, C, tau)
    sw = np.exp(0.5 * (lw - lw.max()))
    M = len(x)
    V = np.zeros((M, A))
    z0 = (x - x.mean()) / max(1.0, np.ptp(x) / 2)
    q = sw / np.linalg.norm(sw)
    for j in range(A):
        V[:, j] = q
        if j == A - 1:
            break
        z = z0 * q
        for _ in range(2):
            z -= V[:, :j + 1] @ (V[:, :j + 1].T @ z)
        q = z / np.linalg.norm(z)
    return x, V


def sample_projection_dpp(V, rng):
    """Exact sample of the projection process with kernel V V^T (orthonormal columns)."""
    gen = as_stream(rng).gen
    E = V.copy()
    picked = []
    for _ in range(V.shape[1]):
        p = np.maximum((E * E).sum(axis=1), 0.0)
        p[picked] = 0.0
        j = int(gen.choice(len(p), p=p / p.sum()))
        picked.append(j)
        u = E[j]
        c = int(np.argmax(np.abs(u)))
        keep = np.ones(E.shape[1], dtype=bool)
        keep[c] = False
        E = E[:, keep] - np.outer(E[:, c], u[keep] / u[c])
        if E.shape[1]:
            E, _ = np.linalg.qr(E)
    return np.sort(np.array(picked, dtype=np.int64))


def sample_hexagon_slice(A, B, C, tau, rng=None):
    x, V = slice_kernel_basis(A, B, C, tau)
    return x[sample_projection_dpp(V, rng)]


def slice_top_law(A, B, C, tau, rank=1):
    """Exact law of the rank-th largest particle at time tau (rank 1 or 2).

    P(no particle above s) and P(at most one above s) are Fredholm
    determinant expansions of the discrete projection kernel.
    """
    x, V = slice_kernel_basis(A, B, C, tau)
    K = V @ V.T
    cdf = np.empty(len(x))
    for i in range(len(x)):
        sub = K[i + 1:, i + 1:]
        I = np.eye(len(sub))
        if rank == 1:
            cdf[i] = np.linalg.det(I - sub) if len(sub) else 1.0
        else:
            # generating function det(I - z K) at z = 1, plus its z-derivative term
            if not len(sub):
                cdf[i] = 1.0
                continue
            ev = np.clip(np.linalg.eigvalsh(sub), 0.0, 1.0)
            p0 = np.prod(1 - ev)
            p1 = sum(ev[j] * np.prod(np.delete(1 - ev, j)) for j in range(len(ev)))
            cdf[i] = p0 + p1
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    return x, np.clip(pmf, 0.0, None)
