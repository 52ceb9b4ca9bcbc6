"""Surface tension, the entropy maximizer H* and its liquid region.

Slopes come in two coordinate systems.  ``surface_tension`` takes (s, t) on
the triangle {s >= 0, t <= 0, s - t <= 1}.  Height functions in this package
have increments in {0, 1} along (1, 0), (0, -1) and (1, 1), so their gradients
(dH/dx, dH/dy) fill the triangle {0 <= s <= 1, -1 <= t <= 0, s + t >= 0}; the
two are related by s -> 1 - s.  Everything that acts on height functions
(the entropy functional, the solver, the liquid mask) works with the lattice
triangle through the lozenge densities

    p1 = 1 - s,   p2 = -t,   p3 = s + t,

which are the local proportions of the three lozenge types and sum to one.
"""
import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import integrate, ndimage
from scipy.special import zeta

from . import kernels
from .errors import (ConvergenceError, DomainError, InvalidArgument, NotFound,
                     ScaleMismatch, TangencyError)
from .lattice import build_domain, boundary_height, extremal_heights

# ---------------------------------------------------------------------------
# Lobachevsky function and surface tension

_CL2_TERMS = 40
_CL2_COEF = np.array([zeta(2 * k) / (k * (2 * k + 1) * (2 * math.pi) ** (2 * k))
                      for k in range(1, _CL2_TERMS + 1)])


def lobachevsky(x):
    """L(x) = -int_0^x log|2 sin z| dz by adaptive quadrature.

    The integrand has log singularities at multiples of pi; the interval is
    split there and quad handles the integrable endpoint behaviour.  This is
    the slow reference; ``lobachevsky_fast`` is the vectorized version.
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    sign = 1.0 if x > 0 else -1.0
    x = abs(x)
    breaks = [0.0] + [k * math.pi for k in range(1, int(x // math.pi) + 1)] + [x]
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(lambda z: math.log(abs(2.0 * math.sin(z))), a, b,
                                epsabs=1e-13, epsrel=1e-13, limit=200)
        total -= val
    return sign * total


def clausen2(theta):
    """Clausen function Cl2, vectorized, from its series on [-pi, pi]."""
    th = np.asarray(theta, dtype=float)
    r = np.mod(th + math.pi, 2 * math.pi) - math.pi
    a = np.abs(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_term = np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)
    a2 = a * a
    poly = np.zeros_like(a)
    for c in _CL2_COEF[::-1]:
        poly = poly * a2 + c
    out = a - log_term + a * a2 * poly
    return np.sign(r) * out


def lobachevsky_fast(x):
    """L(x) = Cl2(2x) / 2, vectorized; agrees with ``lobachevsky`` to ~1e-14."""
    return 0.5 * clausen2(2.0 * np.asarray(x, dtype=float))


@dataclass(frozen=True)
class Slope:
    s: float
    t: float


def _slope_args(sl, t):
    if t is None:
        if isinstance(sl, Slope):
            return sl.s, sl.t
        s, t = sl
        return float(s), float(t)
    return float(sl), float(t)


def surface_tension(sl, t=None, tol=1e-12):
    """sigma(s, t) = (L(pi s) + L(-pi t) + L(pi (1 - s + t))) / pi.

    Defined on the closed triangle s >= 0, t <= 0, 0 <= s - t <= 1; anything
    else raises DomainError.
    """
    s, t = _slope_args(sl, t)
    if s < -tol or t > tol or s - t < -tol or s - t > 1 + tol:
        raise DomainError(f"slope ({s}, {t}) is outside the closed slope triangle")
    vals = lobachevsky_fast(np.array([math.pi * s, -math.pi * t, math.pi * (1 - s + t)]))
    return float(vals.sum() / math.pi)


def sigma_density(p1, p2, p3):
    """Surface tension as a function of the three lozenge densities."""
    p = np.stack(np.broadcast_arrays(p1, p2, p3)).astype(float)
    p = np.clip(p, 0.0, 1.0)
    return lobachevsky_fast(math.pi * p).sum(axis=0) / math.pi


def lattice_densities(s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 1.0 - s, -t, s + t


def lattice_sigma(s, t):
    """Surface tension of a lattice gradient (dH/dx, dH/dy)."""
    return sigma_density(*lattice_densities(s, t))


def lattice_sigma_grad(s, t, clamp=0.0):
    """(d sigma/ds, d sigma/dt) for lattice gradients, with optional clamping."""
    p = np.stack(lattice_densities(s, t))
    p = np.clip(p, clamp, 1.0 - clamp) if clamp > 0 else p
    with np.errstate(divide="ignore"):
        lg = -np.log(np.sin(math.pi * p))  # d/dp of L(pi p)/pi up to the log 2
    # dp1/ds = -1, dp3/ds = 1; dp2/dt = -1, dp3/dt = 1.  The log 2 cancels.
    return lg[2] - lg[0], lg[2] - lg[1]


def lattice_sigma_hessian(s, t):
    p = np.stack(lattice_densities(s, t))
    c = -math.pi / np.tan(math.pi * p)
    return c[0] + c[2], c[2], c[1] + c[2]


# ---------------------------------------------------------------------------
# continuum height functions on a mesh

def _mesh_scale(mesh):
    mesh = float(mesh)
    if not mesh > 0:
        raise InvalidArgument("mesh spacing must be positive")
    m = int(round(1.0 / mesh))
    if m < 1 or abs(m * mesh - 1.0) > 1e-9:
        raise InvalidArgument(f"mesh {mesh} is not the reciprocal of an integer")
    return m


class ContinuumHeight:
    """Grid values of a continuum height function on the lattice 1/m Z^2.

    ``values`` lives on the bounding box of ``domain`` (the lattice domain at
    scale m); ``values[ix, iy]`` is H at ((x0 + ix) / m, (y0 + iy) / m).
    Evaluation between grid points is piecewise linear on the lattice
    triangles, which keeps it 1-Lipschitz in the lattice sense.
    """

    def __init__(self, domain, values, m, boundary=None, history=None, info=None):
        self.domain = domain
        self.m = int(m)
        self.mesh = 1.0 / self.m
        self.values = np.where(domain.mask, np.asarray(values, dtype=float), np.nan)
        self.boundary = boundary
        self.history = list(history or [])
        self.info = dict(info or {})
        self._liquid = {}

    # coordinates --------------------------------------------------------------
    def grid_xy(self):
        ix, iy = np.indices(self.domain.shape)
        return (ix + self.domain.x0) * self.mesh, (iy + self.domain.y0) * self.mesh

    def __call__(self, x, y):
        """Piecewise-linear interpolation; NaN outside the domain."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx = x * self.m - self.domain.x0
        gy = y * self.m - self.domain.y0
        ix = np.floor(gx + 1e-9).astype(np.int64)
        iy = np.floor(gy + 1e-9).astype(np.int64)
        fx = gx - ix
        fy = gy - iy
        v = np.pad(self.values, ((0, 1), (0, 1)), constant_values=np.nan)
        nx, ny = self.domain.shape
        ok = (ix >= 0) & (iy >= 0) & (ix < nx) & (iy < ny)
        ixc = np.clip(ix, 0, nx - 1)
        iyc = np.clip(iy, 0, ny - 1)
        h00 = v[ixc, iyc]
        h10 = v[ixc + 1, iyc]
        h01 = v[ixc, iyc + 1]
        h11 = v[ixc + 1, iyc + 1]
        # exact grid hits must not depend on neighbours outside the domain
        fx = np.where(np.abs(fx) < 1e-9, 0.0, fx)
        fy = np.where(np.abs(fy) < 1e-9, 0.0, fy)
        up = fx >= fy
        with np.errstate(invalid="ignore"):
            val_up = h00 + np.where(fx > 0, fx * (h10 - h00), 0) + np.where(fy > 0, fy * (h11 - h10), 0)
            val_dn = h00 + np.where(fy > 0, fy * (h01 - h00), 0) + np.where(fx > 0, fx * (h11 - h01), 0)
        out = np.where(up, val_up, val_dn)
        out = np.where(ok, out, np.nan)
        return out if out.ndim else float(out)

    # face gradients -----------------------------------------------------------
    def face_slopes(self):
        """Lattice gradients (s, t) on up and down faces, NaN where absent."""
        v = np.pad(self.values, ((0, 1), (0, 1)), constant_values=np.nan)
        h00, h10, h01, h11 = v[:-1, :-1], v[1:, :-1], v[:-1, 1:], v[1:, 1:]
        m = self.m
        d = self.domain
        up_s = np.where(d.up_faces, (h10 - h00) * m, np.nan)
        up_t = np.where(d.up_faces, (h11 - h10) * m, np.nan)
        dn_s = np.where(d.down_faces, (h11 - h01) * m, np.nan)
        dn_t = np.where(d.down_faces, (h01 - h00) * m, np.nan)
        return (up_s, up_t), (dn_s, dn_t)

    def vertex_gradient(self):
        """Central-difference gradient at vertices whose four axis neighbours exist."""
        v = np.pad(self.values, 1, constant_values=np.nan)
        gx = (v[2:, 1:-1] - v[:-2, 1:-1]) * (self.m / 2.0)
        gy = (v[1:-1, 2:] - v[1:-1, :-2]) * (self.m / 2.0)
        return gx, gy

    def liquid(self, tol=1e-3):
        if tol not in self._liquid:
            self._liquid[tol] = extract_liquid_region(self, tol)
        return self._liquid[tol]

    # serialization ------------------------------------------------------------
    def to_csv(self, path):
        x, y = self.grid_xy()
        m = self.domain.mask
        rows = np.column_stack([x[m], y[m], self.values[m]])
        with open(path, "w") as fh:
            fh.write("# format: 1\nx,y,H\n")
            for a, b, c in rows:
                fh.write(f"{a:.10g},{b:.10g},{c:.17g}\n")

    def to_json_meta(self):
        return {"format": 1, "mesh": self.mesh, "m": self.m,
                "entropy": entropy_functional(self), **self.info}


def entropy_functional(Hc):
    """Riemann sum of sigma(grad H) over the mesh triangles (area mesh^2 / 2)."""
    (us, ut), (ds, dt) = Hc.face_slopes()
    total = 0.0
    for s, t in ((us, ut), (ds, dt)):
        ok = ~np.isnan(s)
        if ok.any():
            total += float(lattice_sigma(s[ok], t[ok]).sum())
    return total * Hc.mesh ** 2 / 2.0


def plane_height(domain, m, s, t, c=0.0):
    """ContinuumHeight of the plane H = s x + t y + c sampled on a lattice domain."""
    ix, iy = np.indices(domain.shape)
    x = (ix + domain.x0) / m
    y = (iy + domain.y0) / m
    return ContinuumHeight(domain, s * x + t * y + c, m)


# ---------------------------------------------------------------------------
# solver

_FACE_BITS = (("up", 0, 0, 1), ("up", -1, 0, 2), ("up", -1, -1, 4),
              ("down", 0, 0, 8), ("down", 0, -1, 16), ("down", -1, -1, 32))


class _Stencil:
    """Padded flat layout, colour-class visiting order and face bit flags."""

    def __init__(self, domain):
        nx, ny = domain.shape
        self.shape = (nx + 2, ny + 2)
        self.pny = ny + 2
        ix, iy = np.nonzero(domain.interior)
        color = (ix + iy) % 3
        key = np.lexsort((iy, ix, color))
        ix, iy, color = ix[key], iy[key], color[key]
        self.order = ((ix + 1) * self.pny + (iy + 1)).astype(np.int64)
        self.class_ptr = np.searchsorted(color, [0, 1, 2, 3]).astype(np.int64)
        faces = {"up": np.pad(domain.up_faces, 1), "down": np.pad(domain.down_faces, 1)}
        flags = np.zeros(len(ix), dtype=np.uint8)
        for kind, dx, dy, bit in _FACE_BITS:
            flags |= np.where(faces[kind][ix + 1 + dx, iy + 1 + dy], bit, 0).astype(np.uint8)
        self.flags = flags

    def pad(self, vals):
        g = np.zeros(self.shape)
        g[1:-1, 1:-1] = np.nan_to_num(vals)
        return g.ravel()

    def unpad(self, g, mask):
        return np.where(mask, g.reshape(self.shape)[1:-1, 1:-1], np.nan)


def _stationarity(g, st, m, clamp, margin=1e-3):
    """Max |d entropy / dz| over interior vertices strictly inside their cone."""
    if len(st.order) == 0:
        return 0.0
    gv = kernels.local_gradient(g, st.pny, st.order, st.flags, float(m), clamp)
    v = st.order
    ny = st.pny
    h = 1.0 / m
    W, E, N, S, NE, SW = g[v - ny], g[v + ny], g[v + 1], g[v - 1], g[v + ny + 1], g[v - ny - 1]
    lo = np.maximum.reduce([W, N, SW, E - h, S - h, NE - h])
    hi = np.minimum.reduce([W + h, N + h, SW + h, E, S, NE])
    z = g[v]
    free = (z - lo > margin * h) & (hi - z > margin * h)
    if not free.any():
        return 0.0
    return float(np.abs(gv[free]).max())


class _FaceSystem:
    """Face-to-vertex incidence for the global Newton step on padded arrays."""

    UP_B = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [-1.0, 0.0, 1.0]])
    DN_B = np.array([[0.0, 1.0, -1.0], [1.0, -1.0, 0.0], [-1.0, 0.0, 1.0]])

    def __init__(self, domain, st, m):
        pny = st.pny
        ux, uy = np.nonzero(domain.up_faces)
        dx_, dy_ = np.nonzero(domain.down_faces)
        u0 = (ux + 1) * pny + (uy + 1)
        d0 = (dx_ + 1) * pny + (dy_ + 1)
        self.verts = np.concatenate([
            np.column_stack([u0, u0 + pny, u0 + pny + 1]),
            np.column_stack([d0, d0 + 1, d0 + pny + 1])])
        self.B = np.concatenate([np.broadcast_to(self.UP_B, (len(u0), 3, 3)),
                                 np.broadcast_to(self.DN_B, (len(d0), 3, 3))]) * m
        self.m = m
        ix, iy = np.nonzero(domain.mask)
        v = (ix + 1) * pny + (iy + 1)
        inb = np.zeros(st.shape[0] * st.shape[1], dtype=bool)
        inb[v] = True
        edges = []
        for off in (pny, -1, pny + 1):  # H(v + off) - H(v) in [0, h]
            w = v + off
            ok = inb[np.clip(w, 0, len(inb) - 1)] & (w >= 0) & (w < len(inb))
            edges.append(np.column_stack([v[ok], w[ok]]))
        self.edges = np.concatenate(edges)

    def densities(self, g):
        z = g[self.verts]
        base = np.array([1.0, 0.0, 0.0])
        return base[None, :] + np.einsum("fij,fj->fi", self.B, z)

    def energy(self, g):
        p = np.clip(self.densities(g), 0.0, 1.0)
        return float(lobachevsky_fast(math.pi * p).sum() / math.pi)


def _newton_step(g, st, fs, m, clamp):
    """One projected Newton step on the free vertices; returns improved g or None."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.linalg import spsolve

    h = 1.0 / m
    p = fs.densities(g)
    pc = np.clip(p, clamp, 1.0 - clamp)
    d1 = -np.log(2.0 * np.sin(math.pi * pc))
    inside = (p > clamp) & (p < 1.0 - clamp)
    d2 = np.where(inside, -math.pi / np.tan(math.pi * pc), 0.0)
    grad_f = np.einsum("fi,fij->fj", d1, fs.B)
    hess_f = np.einsum("fi,fij,fik->fjk", d2, fs.B, fs.B)
    v = st.order
    ny = st.pny
    W, E, N, S, NE, SW = g[v - ny], g[v + ny], g[v + 1], g[v - 1], g[v + ny + 1], g[v - ny - 1]
    lo = np.maximum.reduce([W, N, SW, E - h, S - h, NE - h])
    hi = np.minimum.reduce([W + h, N + h, SW + h, E, S, NE])
    G = np.zeros(len(g))
    np.add.at(G, fs.verts.ravel(), grad_f.ravel())
    z = g[v]
    eps = 1e-12 * h
    free = (hi - lo > eps) & ~((z - lo <= eps) & (G[v] < 0)) & ~((hi - z <= eps) & (G[v] > 0))
    if free.sum() == 0:
        return None
    idx = -np.ones(len(g), dtype=np.int64)
    fv = v[free]
    idx[fv] = np.arange(len(fv))
    rows = np.repeat(fs.verts, 3, axis=1).ravel()
    cols = np.tile(fs.verts, (1, 3)).ravel()
    vals = hess_f.reshape(len(fs.verts), 9).ravel()
    ri, ci = idx[rows], idx[cols]
    keep = (ri >= 0) & (ci >= 0)
    nf = len(fv)
    Hm = coo_matrix((-vals[keep], (ri[keep], ci[keep])), shape=(nf, nf)).tocsc()
    diag = np.abs(Hm.diagonal())
    reg = 1e-10 * (diag.max() if len(diag) else 1.0) + 1e-12
    from scipy.sparse import identity
    Hm = Hm + reg * identity(nf, format="csc")
    try:
        d = spsolve(Hm, G[fv])
    except Exception:
        return None
    if not np.all(np.isfinite(d)):
        return None
    step = np.zeros(len(g))
    step[fv] = d
    u, w = fs.edges[:, 0], fs.edges[:, 1]
    diff = g[w] - g[u]
    dd = step[w] - step[u]
    with np.errstate(divide="ignore", invalid="ignore"):
        lim = np.where(dd > 0, (h - diff) / dd, np.where(dd < 0, -diff / dd, np.inf))
    alpha = min(1.0, 0.98 * float(np.min(lim)) if len(lim) else 1.0)
    if not alpha > 1e-8:
        return None
    e0 = fs.energy(g)
    for _ in range(30):
        trial = g + alpha * step
        if fs.energy(trial) > e0:
            return trial
        alpha *= 0.5
    return None


def _solve_level(domain, m, init, bvals, clamp, omega, tol, max_sweeps, history, record_every,
                 newton=True):
    st = _Stencil(domain)
    fs = _FaceSystem(domain, st, m) if newton else None
    vals = np.where(domain.boundary, bvals, init)
    g = st.pad(vals)
    h = 1.0 / m
    w = float(omega)
    sweeps = 0
    change = np.inf
    chunk = max(1, int(record_every)) if record_every else 10
    prev_e = None
    while sweeps < max_sweeps:
        k = min(chunk, max_sweeps - sweeps)
        saved = g.copy()
        change = kernels.relax_sweeps(g, st.pny, st.order, st.class_ptr, st.flags,
                                      float(m), float(clamp), w, int(k))
        sweeps += k
        if record_every:
            e = entropy_functional(ContinuumHeight(domain, st.unpad(g, domain.mask), m))
            if prev_e is not None and e < prev_e - 1e-15 * max(1.0, abs(prev_e)):
                # over-relaxation overshot: undo the chunk and continue plainly
                g[:] = saved
                w = 1.0
                continue
            history.append(e)
            prev_e = e
        if change < tol * h:
            break
        if fs is not None:
            trial = _newton_step(g, st, fs, m, clamp)
            if trial is not None:
                g = trial
    return st.unpad(g, domain.mask), sweeps, change, st, g


def _prolong(coarse, domain, m):
    ix, iy = np.indices(domain.shape)
    x = (ix + domain.x0) / m
    y = (iy + domain.y0) / m
    vals = coarse(x, y)
    return np.where(domain.mask, vals, np.nan)


def continuum_boundary(domain, m, bh=None):
    if bh is None:
        bh = boundary_height(domain)
    return bh, np.where(domain.mask, bh.values / m, np.nan)


def solve_limit_shape(spec, mesh, tol=1e-10, max_sweeps=20000, omega=1.8, clamp=1e-6,
                      coarse_min=8, record_every=10, require_convergence=False):
    """Maximize the discrete entropy functional over admissible grid functions.

    Projected coordinate ascent: each vertex of a colour class (the lattice is
    3-colourable, so a class has no internal edges) is moved to the exact
    maximizer of its six-triangle local entropy within the Lipschitz cone set
    by its neighbours, then over-relaxed by ``omega`` and clipped back to the
    cone.  A sweep that lowers the entropy is undone and the run continues
    with omega = 1, so the recorded entropy history is non-decreasing.  The
    solve starts from the halved meshes (coarse to fine).
    """
    m = _mesh_scale(mesh)
    try:
        spec.scaled(m)
    except ScaleMismatch:
        raise
    levels = [m]
    while levels[-1] % 2 == 0 and levels[-1] // 2 >= coarse_min:
        try:
            spec.scaled(levels[-1] // 2)
        except ScaleMismatch:
            break
        levels.append(levels[-1] // 2)
    levels = levels[::-1]
    Hc = None
    total_sweeps = 0
    history = []
    for k, mk in enumerate(levels):
        dom = build_domain(spec, mk)
        bh, bvals = continuum_boundary(dom, mk)
        if Hc is None:
            hmin, hmax = extremal_heights(dom, bh)
            init = 0.5 * (hmin.values + hmax.values) / mk
        else:
            init = _prolong(Hc, dom, mk)
            init = np.where(np.isnan(init), bvals, init)
        final = k == len(levels) - 1
        hist = history if final else []
        vals, sweeps, change, st, g = _solve_level(
            dom, mk, init, bvals, clamp, omega, tol, max_sweeps, hist,
            record_every if final else 0)
        total_sweeps += sweeps
        Hc = ContinuumHeight(dom, vals, mk, boundary=bvals)
    resid = _stationarity(g, st, m, clamp)
    converged = change < tol / m
    Hc.history = history
    Hc.info = {"sweeps": int(total_sweeps), "final_change": float(change),
               "stationarity": resid, "converged": bool(converged), "clamp": clamp,
               "clamp_active": bool(_clamp_active(Hc, clamp))}
    if require_convergence and not converged:
        raise ConvergenceError("limit-shape solver did not converge", residual=resid)
    return Hc


def _clamp_active(Hc, clamp):
    (us, ut), (ds, dt) = Hc.face_slopes()
    out = False
    for s, t in ((us, ut), (ds, dt)):
        ok = ~np.isnan(s)
        p = np.stack(lattice_densities(s[ok], t[ok]))
        pm = p.min(axis=0)
        out |= bool(np.any((pm > 1e-12) & (pm < clamp)))
    return out


# ---------------------------------------------------------------------------
# liquid region and arctic curve

@dataclass
class LiquidRegion:
    up: np.ndarray          # liquid up faces (bbox-indexed like the domain)
    down: np.ndarray        # liquid down faces
    vertex: np.ndarray      # vertices all of whose faces are liquid
    indicator: np.ndarray   # fraction of liquid faces around each vertex
    polylines: list         # arctic curves as arrays of continuum (x, y)
    mesh: float
    tol: float

    @property
    def empty(self):
        return not (self.up.any() or self.down.any())

    def components(self):
        from .lattice import _TRI_STRUCTURE
        _, k = ndimage.label(self.vertex, structure=_TRI_STRUCTURE)
        return int(k)

    def area(self):
        return float(self.up.sum() + self.down.sum()) * self.mesh ** 2 / 2.0

    @property
    def polyline(self):
        if not self.polylines:
            return np.zeros((0, 2))
        return max(self.polylines, key=len)

    def to_json(self):
        return {"format": 1, "mesh": self.mesh, "tol": self.tol,
                "polylines": [p.tolist() for p in self.polylines]}


def _face_liquid(s, t, tol):
    ok = ~np.isnan(s)
    p = np.stack(lattice_densities(np.where(ok, s, 0.0), np.where(ok, t, 0.0)))
    return ok & (p.min(axis=0) > tol)


def extract_liquid_region(Hc, tol=1e-3):
    """Faces whose gradient is at distance > tol from the slope-triangle boundary.

    The arctic polyline is the 1/2 level set (marching squares) of the
    fraction of liquid faces around each vertex.
    """
    from skimage import measure

    d = Hc.domain
    (us, ut), (ds, dt) = Hc.face_slopes()
    up = _face_liquid(us, ut, tol)
    dn = _face_liquid(ds, dt, tol)
    # faces around vertex (ix, iy): U(ix,iy), U(ix-1,iy), U(ix-1,iy-1), D(ix,iy), D(ix,iy-1), D(ix-1,iy-1)
    cnt = np.zeros(d.shape)
    tot = np.zeros(d.shape)
    for arr, have in ((up, d.up_faces), (dn, d.down_faces)):
        a = np.pad(arr.astype(float), 1)
        b = np.pad(have.astype(float), 1)
        offs = [(0, 0), (-1, 0), (-1, -1)] if arr is up else [(0, 0), (0, -1), (-1, -1)]
        for dx, dy in offs:
            sl = (slice(1 + dx, 1 + dx + d.nx), slice(1 + dy, 1 + dy + d.ny))
            cnt += a[sl]
            tot += b[sl]
    with np.errstate(invalid="ignore", divide="ignore"):
        ind = np.where(tot > 0, cnt / np.maximum(tot, 1), 0.0)
    ind = np.where(d.mask, ind, 0.0)
    vertex = d.mask & (tot > 0) & (cnt == tot)
    polylines = []
    if up.any() or dn.any():
        padded = np.pad(ind, 1)
        for c in measure.find_contours(padded, 0.5):
            xy = np.column_stack([(c[:, 0] - 1 + d.x0) * Hc.mesh, (c[:, 1] - 1 + d.y0) * Hc.mesh])
            polylines.append(xy)
    return LiquidRegion(up, dn, vertex, ind, polylines, Hc.mesh, tol)


def row_liquid_section(Hc, t, tol=1e-3):
    """[x_left, x_right] of the liquid part of row t, from the arctic polyline crossings."""
    lr = Hc.liquid(tol)
    xs = []
    for p in lr.polylines:
        y = p[:, 1]
        for i in range(len(p) - 1):
            y0, y1 = y[i], y[i + 1]
            if (y0 - t) * (y1 - t) <= 0 and y0 != y1:
                r = (t - y0) / (y1 - y0)
                xs.append(p[i, 0] + r * (p[i + 1, 0] - p[i, 0]))
    if len(xs) < 2:
        raise NotFound(f"row t={t} does not meet the liquid region")
    return float(min(xs)), float(max(xs))


def classical_location(Hc, i, t, n, tol=1e-3, level_tol=None, iters=80):
    """sup{x : n H*(x, t) = i}, the sup taken over the liquid section of row t.

    Implemented as the largest x in the closed liquid section with
    n H*(x, t) <= i, by bisection (x -> H*(x, t) is nondecreasing).
    """
    xl, xr = row_liquid_section(Hc, t, tol)
    if level_tol is None:
        level_tol = 5e-3 * n
    f = lambda x: n * float(Hc(x, t))
    fl, fr = f(xl), f(xr)
    if i < fl - level_tol or i > fr + level_tol:
        raise NotFound(f"level {i} is not attained on row t={t} (range [{fl:.4g}, {fr:.4g}])")
    if fr <= i:
        return xr
    if fl > i:
        return xl
    a, b = xl, xr
    for _ in range(iters):
        c = 0.5 * (a + b)
        if f(c) <= i:
            a = c
        else:
            b = c
    return 0.5 * (a + b)


def augmented_region(Hc_or_mask, delta, n, mesh=None, tol=1e-3):
    """Liquid vertex mask together with the n^(delta-2/3)-neighbourhood of its boundary."""
    mask, h = _mask_and_mesh(Hc_or_mask, mesh, tol)
    r = float(n) ** (delta - 2.0 / 3.0)
    if not mask.any():
        return mask.copy()
    dist = ndimage.distance_transform_edt(~mask) * h
    return mask | (dist <= r)


def reduced_region(Hc_or_mask, delta, n, mesh=None, tol=1e-3):
    """Liquid vertex mask minus the n^(delta-2/3)-neighbourhood of its boundary."""
    mask, h = _mask_and_mesh(Hc_or_mask, mesh, tol)
    r = float(n) ** (delta - 2.0 / 3.0)
    if not mask.any():
        return mask.copy()
    dist = ndimage.distance_transform_edt(np.pad(mask, 1))[1:-1, 1:-1] * h
    return mask & (dist > r)


def _mask_and_mesh(obj, mesh, tol):
    if isinstance(obj, ContinuumHeight):
        return obj.liquid(tol).vertex, obj.mesh
    if isinstance(obj, LiquidRegion):
        return obj.vertex, obj.mesh
    if mesh is None:
        raise InvalidArgument("a bare mask needs the mesh spacing")
    return np.asarray(obj, dtype=bool), float(mesh)


# ---------------------------------------------------------------------------
# conics, hexagon oracles and curvature parameters

@dataclass(frozen=True)
class Conic:
    """A x^2 + B x y + C y^2 + D x + E y + F = 0."""
    A: float
    B: float
    C: float
    D: float
    E: float
    F: float

    def coefficients(self):
        return np.array([self.A, self.B, self.C, self.D, self.E, self.F])

    def normalized(self):
        c = self.coefficients()
        return Conic(*(c / c[0]))

    def __call__(self, x, y):
        return (self.A * x * x + self.B * x * y + self.C * y * y
                + self.D * x + self.E * y + self.F)

    def matrix(self):
        return np.array([[self.A, self.B / 2, self.D / 2],
                         [self.B / 2, self.C, self.E / 2],
                         [self.D / 2, self.E / 2, self.F]])

    def center(self):
        M = np.array([[2 * self.A, self.B], [self.B, 2 * self.C]])
        return np.linalg.solve(M, [-self.D, -self.E])

    def shape_matrix(self):
        """S with the ellipse equal to {(u - c)^T S^-1 (u - c) <= 1}."""
        c = self.center()
        M = np.array([[self.A, self.B / 2], [self.B / 2, self.C]])
        k = -float(self(c[0], c[1]))
        return np.linalg.inv(M / k)

    def parametrize(self, theta):
        """Points c + L (cos theta, sin theta) with L L^T = S (counter-clockwise)."""
        S = self.shape_matrix()
        L = np.linalg.cholesky(S)
        th = np.asarray(theta, dtype=float)
        pts = self.center()[:, None] + L @ np.vstack([np.cos(th).ravel(), np.sin(th).ravel()])
        return pts.T.reshape(th.shape + (2,))

    def x_on_row(self, y):
        """The x-roots of the conic on the horizontal line at height y (sorted)."""
        a = self.A
        b = self.B * y + self.D
        c = self.C * y * y + self.E * y + self.F
        disc = b * b - 4 * a * c
        if disc < 0:
            return ()
        r = math.sqrt(disc)
        return tuple(sorted(((-b - r) / (2 * a), (-b + r) / (2 * a))))

    def distance(self, pts, samples=4096):
        """Approximate Euclidean distance from points to the curve."""
        th = np.linspace(0, 2 * math.pi, samples, endpoint=False)
        curve = self.parametrize(th)
        from scipy.spatial import cKDTree
        tree = cKDTree(curve)
        p = np.atleast_2d(pts)
        d, j = tree.query(p)
        # local refinement by projecting onto the best sample's neighbourhood
        out = np.empty(len(p))
        for k, (pt, jj) in enumerate(zip(p, j)):
            lo, hi = th[jj] - 2 * math.pi / samples, th[jj] + 2 * math.pi / samples
            from scipy.optimize import minimize_scalar
            res = minimize_scalar(lambda a: float(np.sum((self.parametrize(a) - pt) ** 2)),
                                  bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
            out[k] = math.sqrt(res.fun)
        return out

    def to_json(self):
        return {"format": 1, "conic": [self.A, self.B, self.C, self.D, self.E, self.F]}


def _hexagon_lines(a, b, c):
    """The six side lines (alpha, beta, gamma): alpha x + beta y + gamma = 0."""
    return [
        (0.0, 1.0, 0.0),                 # y = 0
        (1.0, -1.0, -float(a)),          # x - y = a
        (1.0, 0.0, -float(a + c)),       # x = a + c
        (0.0, 1.0, -float(b + c)),       # y = b + c
        (1.0, -1.0, float(b)),           # x - y = -b
        (1.0, 0.0, 0.0),                 # x = 0
    ]


def hexagon_inscribed_ellipse(a, b, c):
    """The conic tangent to the six side lines of hexagon(a, b, c).

    Solved in the dual: a line l is tangent to the conic with matrix M iff
    l^T M^-1 l = 0, which is linear in the six entries of the adjoint.
    """
    if min(a, b, c) <= 0:
        raise InvalidArgument("hexagon side lengths must be positive")
    rows = []
    for al, be, ga in _hexagon_lines(a, b, c):
        rows.append([al * al, 2 * al * be, be * be, 2 * al * ga, 2 * be * ga, ga * ga])
    _, sv, vt = np.linalg.svd(np.array(rows))
    q = vt[-1]
    dual = np.array([[q[0], q[1], q[3]], [q[1], q[2], q[4]], [q[3], q[4], q[5]]])
    M = np.linalg.inv(dual)
    M = M / M[0, 0]
    return Conic(M[0, 0], 2 * M[0, 1], M[1, 1], 2 * M[0, 2], 2 * M[1, 2], M[2, 2])


def tangency_point(conic, line):
    """Point where ``line`` = (alpha, beta, gamma) touches the conic."""
    M = conic.matrix()
    p = np.linalg.solve(M, np.asarray(line, dtype=float))
    return p[:2] / p[2]


def curvature_params(arctic, point, window=10, mesh=None, tangency_tol=1e-6):
    """(l, q) in x - x0 = l (y - y0) + q (y - y0)^2 + O((y - y0)^3).

    ``arctic`` is a Conic (closed-form implicit differentiation) or a polyline
    (array of (x, y) points; weighted least squares over |y - y0| <= window
    mesh cells).
    """
    x0, y0 = float(point[0]), float(point[1])
    if isinstance(arctic, Conic):
        Fx = 2 * arctic.A * x0 + arctic.B * y0 + arctic.D
        Fy = arctic.B * x0 + 2 * arctic.C * y0 + arctic.E
        if abs(Fx) < tangency_tol:
            raise TangencyError(f"horizontal tangent at ({x0}, {y0})")
        l = -Fy / Fx
        xpp = -(2 * arctic.C + 2 * arctic.B * l + 2 * arctic.A * l * l) / Fx
        q = xpp / 2.0
    else:
        l, q = _polyline_fit(np.asarray(arctic, dtype=float), x0, y0, window, mesh)
    for bad in (0.0, 1.0):
        if abs(l - bad) < tangency_tol:
            raise TangencyError(f"tangent slope {l} at ({x0}, {y0}) is a tangency location")
    if not math.isfinite(l) or abs(l) > 1.0 / tangency_tol:
        raise TangencyError(f"vertical tangent at ({x0}, {y0})")
    return CurvatureParams(float(l), float(q))


@dataclass(frozen=True)
class CurvatureParams:
    l: float
    q: float


def _polyline_fit(pts, x0, y0, window, mesh):
    if mesh is None:
        seg = np.diff(pts, axis=0)
        mesh = float(np.median(np.hypot(seg[:, 0], seg[:, 1]))) * math.sqrt(2)
    r = window * mesh
    d = np.hypot(pts[:, 0] - x0, pts[:, 1] - y0)
    near = d <= 2.5 * r
    if near.sum() < 6:
        raise InvalidArgument("too few polyline points near the base point")
    p = pts[near]
    dy = p[:, 1] - y0
    dx = p[:, 0] - x0
    sel = np.abs(dy) <= r
    if sel.sum() < 6:
        raise InvalidArgument("too few polyline points in the fitting window")
    dy, dx = dy[sel], dx[sel]
    wts = 1.0 - (dy / r) ** 2 + 1e-3
    A = np.column_stack([np.ones_like(dy), dy, dy ** 2, dy ** 3])
    sw = np.sqrt(wts)
    coef, *_ = np.linalg.lstsq(A * sw[:, None], dx * sw, rcond=None)
    return float(coef[1]), float(coef[2])


def gamma_expansion_residual(Hc, point, j, t, n, cp=None, conic=None, K=None):
    """|gamma_{K-j}(t) - x0 - l (t - t0) - q (t - t0)^2 + s^(3/2) (3 pi j / 2n)^(2/3)|.

    gamma is the classical location of ``Hc`` at level K - j with
    K = floor(n H*(x0, t0)).
    """
    from .edge import scaling_constants

    x0, t0 = float(point[0]), float(point[1])
    if cp is None:
        cp = curvature_params(conic if conic is not None else Hc.liquid().polyline, point,
                              mesh=Hc.mesh)
    sc = scaling_constants(cp)
    if K is None:
        K = int(math.floor(n * float(Hc(x0, t0)) + 1e-9))
    gamma = classical_location(Hc, K - j, t, n)
    main = x0 + cp.l * (t - t0) + cp.q * (t - t0) ** 2 - sc.s ** 1.5 * (3 * math.pi * j / (2 * n)) ** (2.0 / 3.0)
    return abs(gamma - main)


class HexagonOracle:
    """Closed-form limit shape of hexagon(a, b, c) in lattice coordinates.

    Inside the inscribed ellipse the complex slope f solves
    (f + 1) x - f t = Q0(f), with Q0 the support function of the ellipse in
    the direction (f + 1, -f), and Im f < 0.  Outside the ellipse each corner
    carries the frozen plane matching its two sides.
    """

    def __init__(self, a, b, c):
        self.a, self.b, self.c = a, b, c
        self.conic = hexagon_inscribed_ellipse(a, b, c)
        self.center = self.conic.center()
        self.S = self.conic.shape_matrix()
        V = [(0, 0), (a, 0), (a + c, c), (a + c, b + c), (c, b + c), (0, b)]
        self.vertices = np.array(V, dtype=float)
        lines = _hexagon_lines(a, b, c)
        self.tangency = np.array([tangency_point(self.conic, ln) for ln in lines])
        # frozen planes H = alpha x + beta y + gamma at each corner
        self.planes = [(1.0, 0.0, 0.0), (1.0, -1.0, 0.0), (0.0, 0.0, float(a)),
                       (1.0, 0.0, -float(c)), (1.0, -1.0, float(b)), (0.0, 0.0, 0.0)]

    def f(self, x, t):
        """Complex slope at a liquid point (NaN outside the ellipse)."""
        cx, cy = self.center
        S = self.S
        A = (x - cx) - (t - cy)
        B = x - cx
        qa = A * A - S[0, 0] + 2 * S[0, 1] - S[1, 1]
        qb = 2 * A * B - 2 * S[0, 0] + 2 * S[0, 1]
        qc = B * B - S[0, 0]
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            return complex("nan")
        root = (-qb - 1j * math.sqrt(-disc)) / (2 * qa)
        if root.imag > 0:
            root = root.conjugate()
        return root

    def q0(self, f, branch=1.0):
        n = np.array([f + 1.0, -f])
        return float(n @ self.center + branch * math.sqrt(n @ self.S @ n))

    def q0_derivs(self, f, branch=1.0):
        """(Q0, Q0', Q0'', Q0''') of the support-function branch at real f."""
        S, c = self.S, self.center
        n = np.array([f + 1.0, -f])
        dn = np.array([1.0, -1.0])
        R2 = n @ S @ n
        R2p = 2 * dn @ S @ n
        R2pp = 2 * dn @ S @ dn
        R = math.sqrt(R2)
        Rp = R2p / (2 * R)
        Rpp = (R2pp - 2 * Rp * Rp) / (2 * R)
        Rppp = (-6 * Rp * Rpp) / (2 * R)
        lin = n @ c
        dlin = dn @ c
        return (lin + branch * R, dlin + branch * Rp, branch * Rpp, branch * Rppp)

    def slope(self, x, t):
        """Lattice gradient of H* at (x, t)."""
        f = self.f(x, t)
        if np.isnan(f):
            return self._plane(x, t)[:2]
        s = -math.atan2(f.imag, f.real) / math.pi
        g = f + 1
        tt = math.atan2(g.imag, g.real) / math.pi
        return s, tt

    def _corner(self, x, t):
        P = np.array([x, t])
        best, bd = 0, np.inf
        for k in range(6):
            tri = np.array([self.vertices[k], self.tangency[k - 1], self.tangency[k]])
            lam = _barycentric(tri, P)
            d = -min(lam.min(), 0.0)
            if d < bd:
                best, bd = k, d
        return best

    def _plane(self, x, t):
        al, be, ga = self.planes[self._corner(x, t)]
        return al, be, al * x + be * t + ga

    def height(self, x, t):
        """H*(x, t) by integrating dH/dx along the row from the ellipse."""
        if self.conic(x, t) >= 0:
            return self._plane(x, t)[2]
        xl, _ = self.conic.x_on_row(t)
        h0 = self._plane(xl, t)[2]
        with warnings.catch_warnings():
            # the slope has a square-root edge at xl; quad still meets epsabs
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, _ = integrate.quad(lambda u: self.slope(u, t)[0], xl, x, epsabs=1e-12, limit=200)
        return h0 + val


def _barycentric(tri, P):
    T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
    try:
        l12 = np.linalg.solve(T, P - tri[0])
    except np.linalg.LinAlgError:
        return np.array([-1.0, -1.0, -1.0])
    return np.array([1 - l12.sum(), l12[0], l12[1]])


def hausdorff_to_conic(polyline, conic, samples=2000):
    """Symmetric Hausdorff distance between a polyline and a closed conic."""
    from scipy.spatial import cKDTree

    d1 = conic.distance(polyline).max()
    th = np.linspace(0, 2 * math.pi, samples, endpoint=False)
    curve = conic.parametrize(th)
    # distance from curve samples to polyline segments
    P = np.asarray(polyline)
    a, b = P[:-1], P[1:]
    ab = b - a
    L2 = np.maximum((ab ** 2).sum(1), 1e-300)
    tree = cKDTree(0.5 * (a + b))
    seglen = np.sqrt(L2).max()
    d2 = 0.0
    for q in curve:
        idx = tree.query_ball_point(q, r=max(seglen, 1e-9) + 0.2)
        if not idx:
            d2 = max(d2, float(np.min(np.hypot(*(P - q).T))))
            continue
        aa, vv = a[idx], ab[idx]
        tt = np.clip(((q - aa) * vv).sum(1) / L2[idx], 0, 1)
        proj = aa + tt[:, None] * vv
        d2 = max(d2, float(np.min(np.hypot(*(proj - q).T))))
    return float(max(d1, d2))


# ---------------------------------------------------------------------------
# tilt diagnostics

@dataclass
class TiltReport:
    xi: float
    mu: float
    zeta: float
    level: float
    n: int
    points: int

    def to_json(self):
        return {"format": 1, "xi": self.xi, "mu": self.mu, "zeta": self.zeta,
                "level": self.level, "n": self.n, "points": self.points}


def measure_tilt(H, Hc, level, omega, upsilon, tol=1e-3):
    """Smallest xi (mu = 0), mu (xi = 0) and edge zeta for a sample on one row.

    ``H`` is a lattice height function at scale n = H.domain.n, compared in
    rescaled form H(n u) / n against H*.  ``omega`` maps continuum x on the
    row to Omega (zero off the liquid region) and ``upsilon`` maps each arctic
    endpoint x0 of the row to Upsilon there.
    """
    d = H.domain
    n = d.n
    row = int(round(level * n))
    iy = row - d.y0
    ix = np.flatnonzero(d.mask[:, iy])
    xs = (ix + d.x0) / n
    h = H.values[ix, iy] / n
    hs = np.array([float(Hc(x, level)) for x in xs])
    diff = np.abs(h - hs)
    ok = ~np.isnan(hs)
    xs, h, hs, diff = xs[ok], h[ok], hs[ok], diff[ok]
    mu = float(diff.max()) if len(diff) else 0.0
    om = np.array([float(omega(x)) for x in xs])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(diff > 1e-12, diff / np.where(om < 0, -om, 0.0), 0.0)
    xi = float(np.nanmax(np.where(np.isnan(ratio), np.inf, ratio))) if len(ratio) else 0.0
    ends = sorted(upsilon.items())
    zeta = _edge_zeta(xs, h, Hc, level, ends, hs)
    return TiltReport(xi, mu, zeta, float(level), int(n), int(len(xs)))


def _edge_ok(zeta, xs, h, Hc, level, ends, hs, liquid):
    if not ends:
        return bool(np.all(np.abs(h - hs) <= 1e-12))
    e0 = np.array([e[0] for e in ends])
    for x, hv, hsv, liq in zip(xs, h, hs, liquid):
        k = int(np.argmin(np.abs(e0 - x)))
        x0, ups = ends[k]
        dist = abs(x0 - x)
        if not liq and dist >= zeta * abs(ups) and abs(hv - hsv) > 1e-12:
            return False
        if dist <= zeta ** (8.0 / 9.0):
            zu = zeta * ups
            lo_h = Hc(x - zu, level)
            hi_h = Hc(x + zu, level)
            if ups > 0:
                lo, hi = lo_h, hi_h
            else:
                lo, hi = lo_h + zu, hi_h - zu
            lo = -np.inf if np.isnan(lo) else lo
            hi = np.inf if np.isnan(hi) else hi
            if hv < lo - 1e-12 or hv > hi + 1e-12:
                return False
    return True


def _edge_zeta(xs, h, Hc, level, ends, hs):
    if ends:
        lo_x, hi_x = ends[0][0], ends[-1][0]
        liquid = (xs > lo_x) & (xs < hi_x)
    else:
        liquid = np.zeros(len(xs), dtype=bool)
    if _edge_ok(0.0, xs, h, Hc, level, ends, hs, liquid):
        return 0.0
    grid = np.geomspace(1e-6, 1e2, 161)
    prev = 0.0
    for z in grid:
        if _edge_ok(z, xs, h, Hc, level, ends, hs, liquid):
            a, b = prev, z
            for _ in range(30):
                c = 0.5 * (a + b)
                if _edge_ok(c, xs, h, Hc, level, ends, hs, liquid):
                    b = c
                else:
                    a = c
            return float(b)
        prev = z
    return math.inf


def write_arctic_svg(Hc, path, conic=None, tol=1e-3, scale=200.0):
    """Arctic polyline over the domain outline, optionally with a conic overlay."""
    lr = Hc.liquid(tol)
    d = Hc.domain
    poly = np.array(d.polygon, dtype=float) / Hc.m if d.polygon is not None else None

    def tr(p):
        p = np.atleast_2d(p)
        return np.column_stack([(p[:, 0] - p[:, 1] / 2) * scale,
                                -(math.sqrt(3) / 2) * p[:, 1] * scale])

    parts = []
    allpts = [tr(poly)] if poly is not None else []
    if poly is not None:
        q = tr(poly)
        parts.append('<polygon points="%s" fill="#f4f4f4" stroke="#333" stroke-width="1"/>'
                     % " ".join(f"{a:.2f},{b:.2f}" for a, b in q))
    for pl in lr.polylines:
        q = tr(pl)
        allpts.append(q)
        parts.append('<polyline points="%s" fill="none" stroke="#c0392b" stroke-width="1.5"/>'
                     % " ".join(f"{a:.2f},{b:.2f}" for a, b in q))
    if conic is not None:
        q = tr(conic.parametrize(np.linspace(0, 2 * math.pi, 400)))
        parts.append('<polyline points="%s" fill="none" stroke="#2471a3" stroke-width="1" '
                     'stroke-dasharray="4 3"/>' % " ".join(f"{a:.2f},{b:.2f}" for a, b in q))
    P = np.vstack(allpts) if allpts else np.zeros((1, 2))
    x0, y0 = P.min(0) - 10
    w, hgt = P.max(0) - P.min(0) + 20
    svg = (f'<svg xmlns="http://www.w3.org/2000/svg" data-format="1" '
           f'viewBox="{x0:.2f} {y0:.2f} {w:.2f} {hgt:.2f}">' + "".join(parts) + "</svg>\n")
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
