"""The complex slope, the complex Burgers equation and local Q0 jets.

With lattice gradients (s, t) = (dH/dx, dH/dy) the complex slope f is the
lower half-plane point with arg* f = -pi s and arg*(f + 1) = pi t, where
arg* takes values in [-pi, 0].  It is the apex of the triangle 0, -1, f whose
angles are pi times the lozenge densities (1 - s, -t, s + t).

Q0 is only ever handled locally: a ``Q0Jet`` stores Q0 and its first three
derivatives at one base value of f, and every check below works with the
cubic Taylor model of such a jet.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConvergenceError, InsufficientData, InvalidArgument, PreconditionError,
                     SingularError)
from .limitshape import CurvatureParams, Slope, lattice_densities

# ---------------------------------------------------------------------------
# slope <-> f


@dataclass(frozen=True)
class FrozenValue:
    """Boundary value of the complex slope at a frozen gradient.

    ``kind`` is one of 'zero', 'minus_one', 'infinity' (an edge of the slope
    triangle) or 'positive', 'between', 'below' (a corner: f is real and lies
    in (0, inf), (-1, 0) or (-inf, -1) without a determined value).
    """
    kind: str
    value: float


def _arg_star(z):
    a = np.angle(z)
    return np.where(np.isclose(a, math.pi, atol=1e-15) | (a > 0), a - 2 * math.pi * (a > 0), a)


def slope_to_f(grad, t=None, tol=1e-12):
    """Complex slope of a lattice gradient; frozen gradients give a FrozenValue."""
    if t is None:
        s, t = (grad.s, grad.t) if isinstance(grad, Slope) else grad
    else:
        s = grad
    s, t = float(s), float(t)
    p1, p2, p3 = 1.0 - s, -t, s + t
    if min(p1, p2, p3) < -tol:
        raise InvalidArgument(f"gradient ({s}, {t}) is outside the slope triangle")
    zero = [abs(p) <= tol for p in (p1, p2, p3)]
    if sum(zero) >= 2:
        if abs(p1 - 1) <= tol:
            return FrozenValue("positive", math.nan)
        if abs(p3 - 1) <= tol:
            return FrozenValue("between", math.nan)
        return FrozenValue("below", math.nan)
    if zero[2]:
        return FrozenValue("infinity", math.inf)
    if zero[1]:
        return FrozenValue("zero", 0.0)
    if zero[0]:
        return FrozenValue("minus_one", -1.0)
    r = math.sin(math.pi * p2) / math.sin(math.pi * p3)
    return complex(r * math.cos(math.pi * s), -r * math.sin(math.pi * s))


def slope_to_f_array(s, t):
    """Vectorized slope_to_f for open-triangle gradients (NaN elsewhere)."""
    p1, p2, p3 = lattice_densities(s, t)
    ok = (p1 > 0) & (p2 > 0) & (p3 > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.sin(math.pi * p2) / np.sin(math.pi * p3)
        f = r * np.exp(-1j * math.pi * np.asarray(s, dtype=float))
    return np.where(ok, f, np.nan + 1j * np.nan)


def f_to_slope(f):
    """(-arg* f / pi, arg*(f + 1) / pi) for Im f <= 0."""
    f = complex(f)
    if f.imag > 1e-15:
        raise InvalidArgument("the complex slope lives in the closed lower half-plane")
    if abs(f) < 1e-300 or abs(f + 1) < 1e-300:
        raise SingularError("f = 0 and f = -1 have no slope")
    a = math.atan2(f.imag, f.real)
    b = math.atan2(f.imag, f.real + 1)
    if a > 0 or (f.imag == 0 and f.real < 0):
        a = -math.pi
    if b > 0 or (f.imag == 0 and f.real < -1):
        b = -math.pi
    return Slope(-a / math.pi, b / math.pi)


def omega_upsilon(f):
    """(Omega, Upsilon) = (Im f / (pi |f + 1|^2), f / (f + 1)^2)."""
    f = complex(f)
    if abs(f + 1) < 1e-300:
        raise SingularError("Omega and Upsilon are singular at f = -1")
    g = f + 1
    return f.imag / (math.pi * abs(g) ** 2), f / (g * g)


# ---------------------------------------------------------------------------
# fields on the mesh


@dataclass
class ComplexSlopeField:
    values: np.ndarray     # complex, NaN off the field mask (bbox of the domain)
    mask: np.ndarray
    mesh: float
    x0: int
    y0: int
    extended: bool = False

    @property
    def m(self):
        return int(round(1.0 / self.mesh))

    def grid_xy(self):
        ix, iy = np.indices(self.mask.shape)
        return (ix + self.x0) * self.mesh, (iy + self.y0) * self.mesh

    def index(self, x, t):
        return int(round(x / self.mesh)) - self.x0, int(round(t / self.mesh)) - self.y0

    def at(self, x, t):
        ix, iy = self.index(x, t)
        if not (0 <= ix < self.mask.shape[0] and 0 <= iy < self.mask.shape[1]) or not self.mask[ix, iy]:
            return complex("nan")
        return complex(self.values[ix, iy])

    def derivatives(self):
        """Central differences (d/dx f, d/dt f) where both neighbours are in the field."""
        v = np.pad(self.values, 1, constant_values=np.nan)
        fx = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * self.mesh)
        ft = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * self.mesh)
        return fx, ft

    def interior(self, exclude=2):
        """Field mask eroded by ``exclude`` cells (frozen-adjacent cells removed)."""
        from scipy import ndimage
        from .lattice import _TRI_STRUCTURE
        if exclude <= 0:
            return self.mask.copy()
        return ndimage.binary_erosion(self.mask, structure=_TRI_STRUCTURE, iterations=exclude)


def complex_slope_field(Hc, tol=1e-3):
    """slope_to_f of the central-difference gradient on the liquid vertices."""
    gx, gy = Hc.vertex_gradient()
    lr = Hc.liquid(tol)
    mask = lr.vertex & ~np.isnan(gx) & ~np.isnan(gy)
    f = slope_to_f_array(np.where(mask, gx, 0.5), np.where(mask, gy, -0.25))
    mask &= ~np.isnan(f)
    return ComplexSlopeField(np.where(mask, f, np.nan), mask, Hc.mesh, Hc.domain.x0, Hc.domain.y0)


def field_from_function(func, mask, mesh, x0=0, y0=0):
    """Sample an analytic complex slope f(x, t) on a mask (manufactured fields)."""
    ix, iy = np.indices(mask.shape)
    x = (ix + x0) * mesh
    t = (iy + y0) * mesh
    vals = np.full(mask.shape, np.nan + 1j * np.nan)
    for a, b in zip(*np.nonzero(mask)):
        vals[a, b] = func(x[a, b], t[a, b])
    ok = mask & ~np.isnan(vals)
    return ComplexSlopeField(vals, ok, mesh, x0, y0)


@dataclass
class BurgersResidual:
    residual: np.ndarray   # |d_t f + d_x f * f / (f + 1)|, NaN where not evaluated
    relative: np.ndarray   # residual / (|d_t f| + |d_x f f / (f + 1)|)
    mask: np.ndarray
    exclude: int

    @property
    def median(self):
        r = self.residual[self.mask]
        return float(np.median(r)) if r.size else math.nan

    @property
    def median_relative(self):
        r = self.relative[self.mask]
        return float(np.median(r)) if r.size else math.nan

    def to_json(self):
        return {"format": 1, "median": self.median, "median_relative": self.median_relative,
                "cells": int(self.mask.sum()), "exclude": self.exclude}


def burgers_residual(field, mesh=None, exclude=2):
    """Finite-difference residual of the complex Burgers equation.

    Cells within ``exclude`` cells of the field boundary (the frozen-adjacent
    band, where the square-root behaviour spoils central differences) are left
    out of the mask used for medians.
    """
    fx, ft = field.derivatives()
    f = field.values
    with np.errstate(invalid="ignore", divide="ignore"):
        transport = fx * f / (f + 1)
        res = np.abs(ft + transport)
        scale = np.abs(ft) + np.abs(transport)
        rel = res / scale
    mask = field.interior(exclude) & ~np.isnan(res)
    return BurgersResidual(np.where(mask, res, np.nan), np.where(mask, rel, np.nan), mask, exclude)


def ratio_identity_residual(field, exclude=2):
    """|d_t f / d_x f + f / (f + 1)| per interior cell (no Q0 needed)."""
    fx, ft = field.derivatives()
    f = field.values
    with np.errstate(invalid="ignore", divide="ignore"):
        res = np.abs(ft / fx + f / (f + 1))
    mask = field.interior(exclude) & ~np.isnan(res)
    return np.where(mask, res, np.nan), mask


# ---------------------------------------------------------------------------
# square-root behaviour at the edge


def edge_sqrt_fit(field, point, direction=-1, window=(2, 16), f0=None):
    """Fit |f(x) - f0| ~ C^(1/2) |x - x0|^e along the row of ``point``.

    ``direction`` = -1 walks left from a right boundary point, +1 walks right
    from a left one.  The boundary value f0 is real; without it, it is
    estimated by extrapolating Re f linearly to the boundary, since the
    square-root term is imaginary to leading order.  The square-root regime
    is only a few cells wide on coarse meshes, hence the short default
    window.  Returns (C, e).
    """
    x0, t = float(point[0]), float(point[1])
    h = field.mesh
    ds, fs = [], []
    for k in range(window[0], window[1] + 1):
        # nearest grid point on the row, distance measured from the true x0
        xg = round((x0 + direction * k * h) / h) * h
        v = field.at(xg, t)
        if np.isnan(v):
            continue
        ds.append(abs(xg - x0))
        fs.append(v)
    ds = np.array(ds)
    fs = np.array(fs, dtype=complex)
    if len(ds) < 4:
        raise InsufficientData("too few field values in the fitting window")
    if f0 is None:
        f0 = float(np.polyfit(ds, fs.real, 1)[1])
    vals = np.abs(fs - f0)
    good = (ds > 0) & (vals > 0)
    if good.sum() < 4:
        raise InsufficientData("too few field values in the fitting window")
    e, c = np.polyfit(np.log(ds[good]), np.log(vals[good]), 1)
    return float(math.exp(2 * c)), float(e)


def height_gradient_sqrt_fit(Hc, point, direction=-1, window=(3, 24), frozen_value=None):
    """The same log-log fit for |dH*/dx(x, t) - dH*/dx(x0, t)|."""
    gx, _ = Hc.vertex_gradient()
    x0, t = float(point[0]), float(point[1])
    h = Hc.mesh
    iy = int(round(t / h)) - Hc.domain.y0
    ds, vals = [], []
    if frozen_value is None:
        ix0 = int(round((x0 - direction * 3 * h) / h)) - Hc.domain.x0
        frozen_value = round(float(gx[ix0, iy]))
    for k in range(window[0], window[1] + 1):
        xg = round((x0 + direction * k * h) / h) * h
        ix = int(round(xg / h)) - Hc.domain.x0
        if not (0 <= ix < gx.shape[0]) or np.isnan(gx[ix, iy]):
            continue
        ds.append(abs(xg - x0))
        vals.append(abs(gx[ix, iy] - frozen_value))
    ds, vals = np.array(ds), np.array(vals)
    good = (ds > 0) & (vals > 0)
    if good.sum() < 4:
        raise InsufficientData("too few gradient values in the fitting window")
    e, c = np.polyfit(np.log(ds[good]), np.log(vals[good]), 1)
    return float(math.exp(c)), float(e)


# ---------------------------------------------------------------------------
# Q0 jets


@dataclass
class Q0Jet:
    f0: complex
    q: tuple            # (Q0, Q0', Q0'', Q0''') at f0
    point: tuple        # (x, t) where the jet was taken
    provenance: str = "boundary parametrization"

    def model(self, u, order=3):
        d = complex(u) - self.f0
        q0, q1, q2, q3 = self.q
        return q0 + q1 * d + q2 * d * d / 2 + (q3 * d ** 3 / 6 if order >= 3 else 0)

    def model_d1(self, u, order=3):
        d = complex(u) - self.f0
        _, q1, q2, q3 = self.q
        return q1 + q2 * d + (q3 * d * d / 2 if order >= 3 else 0)

    def model_d2(self, u):
        d = complex(u) - self.f0
        return self.q[2] + self.q[3] * d

    def to_json(self):
        return {"f0": [self.f0.real, self.f0.imag] if isinstance(self.f0, complex) else self.f0,
                "q": [float(np.real(v)) for v in self.q], "point": list(self.point),
                "provenance": self.provenance}


def _d5(fun, th, h):
    """First and second derivatives by five-point central differences."""
    v = [fun(th + k * h) for k in (-2, -1, 0, 1, 2)]
    d1 = (v[0] - 8 * v[1] + 8 * v[3] - v[4]) / (12 * h)
    d2 = (-v[0] + 16 * v[1] - 30 * v[2] + 16 * v[3] - v[4]) / (12 * h * h)
    return v[2], d1, d2


def reconstruct_q0_jets(param, thetas, field=None, dtheta=1e-3, nested=1e-2):
    """Q0 jets along an arctic parametrization theta -> (x(theta), t(theta)).

    On the arctic curve f is real and the tangent obeys dx/dt = f / (f + 1),
    so f = l / (1 - l) with l = x'/t'.  The double-root condition gives
    Q0'(f) = x - t, Q0 follows from Q0(f) = x (f + 1) - t f, and Q0'', Q0'''
    are d(x - t)/df and its f-derivative along the arc.
    """
    def fval(th):
        x, t = param(th)
        (_, x1, _), (_, t1, _) = _d5(lambda a: param(a)[0], th, dtheta), _d5(lambda a: param(a)[1], th, dtheta)
        lval = x1 / t1
        return lval / (1.0 - lval)

    def dval(th):
        x, t = param(th)
        return x - t

    jets = []
    for th in np.atleast_1d(thetas):
        th = float(th)
        x, t = param(th)
        f0, fp, fpp = _d5(fval, th, nested)
        _, dp, dpp = _d5(dval, th, nested)
        if abs(fp) < 1e-12 or not math.isfinite(f0):
            raise PreconditionError(f"degenerate parametrization at theta={th} (cusp or tangency)")
        q1 = x - t
        q0 = x * (f0 + 1) - t * f0
        q2 = dp / fp
        q3 = (dpp * fp - dp * fpp) / fp ** 3
        jets.append(Q0Jet(float(f0), (float(q0), float(q1), float(q2), float(q3)), (float(x), float(t))))
    return jets


def conic_parametrization(conic):
    def param(theta):
        p = conic.parametrize(np.array(theta))
        return float(p[0]), float(p[1])
    return param


def polyline_parametrization(polyline, smoothing=None):
    """Periodic smoothing spline through an arctic polyline, by arc length."""
    from scipy.interpolate import splprep, splev

    P = np.asarray(polyline, dtype=float)
    if np.allclose(P[0], P[-1]):
        P = P[:-1]
    keep = np.r_[True, np.hypot(*np.diff(P, axis=0).T) > 1e-12]
    P = P[keep]
    if smoothing is None:
        seg = np.hypot(*np.diff(P, axis=0).T)
        smoothing = len(P) * (0.3 * float(np.median(seg))) ** 2
    tck, _ = splprep([P[:, 0], P[:, 1]], s=smoothing, per=True)

    def param(theta):
        x, y = splev(np.mod(theta, 1.0), tck)
        return float(x), float(y)
    return param


def lqq_check(point, jet, curvature):
    """Relative residuals of l = f/(f+1) and q = -(1/2)(f+1)^-3 Q0''(f)^-1."""
    f = jet.f0
    l_formula = f / (f + 1)
    q_formula = -0.5 / ((f + 1) ** 3 * jet.q[2])
    rl = abs(curvature.l - l_formula) / max(abs(l_formula), 1e-300)
    rq = abs(curvature.q - q_formula) / max(abs(q_formula), 1e-300)
    return float(rl), float(rq)


def lqq_from_jet(jet):
    f = jet.f0
    return CurvatureParams(f / (f + 1), -0.5 / ((f + 1) ** 3 * jet.q[2]))


def derivative_identity_check(field, q0prime, points=None, band=None):
    """Compare finite-difference d_x f, d_t f with the Q0' formulas.

    ``q0prime(f, x, t)`` returns Q0'(f) from a local model.  Returns relative
    residuals for d_x f and d_t f at the requested grid points (default: all
    interior field points).
    """
    fx, ft = field.derivatives()
    X, T = field.grid_xy()
    mask = field.interior(2) & ~np.isnan(fx) & ~np.isnan(ft)
    if band is not None:
        mask &= band
    idx = np.argwhere(mask) if points is None else [field.index(*p) for p in points]
    rx, rt = [], []
    for ix, iy in idx:
        f = complex(field.values[ix, iy])
        x, t = X[ix, iy], T[ix, iy]
        den = q0prime(f, x, t) - x + t
        px = (f + 1) / den
        pt = -f / den
        rx.append(abs(fx[ix, iy] - px) / abs(px))
        rt.append(abs(ft[ix, iy] - pt) / abs(pt))
    return np.array(rx), np.array(rt)


def sampled_q0prime(field, radius=2, degree=2):
    """Q0' from local Taylor models fitted to the samples Q0(f) = x (f + 1) - t f.

    Around the grid point nearest (x, t) the values Q0 takes at the field
    points within ``radius`` cells are fitted by a complex polynomial of
    ``degree`` in f - f(x, t); its linear coefficient is Q0'.  The fit only
    exists because Q0 is a function of f, so it keeps working deep inside the
    liquid region, where the cubic models of boundary jets are out of range.
    """
    X, T = field.grid_xy()
    V = field.values
    M = field.mask
    Q = X * (V + 1) - T * V
    offs = [(a, b) for a in range(-radius, radius + 1) for b in range(-radius, radius + 1)
            if a * a + b * b - a * b <= radius * radius]

    def q0p(f, x, t):
        ix, iy = field.index(x, t)
        fs, qs = [], []
        for a, b in offs:
            i, j = ix + a, iy + b
            if 0 <= i < M.shape[0] and 0 <= j < M.shape[1] and M[i, j]:
                fs.append(V[i, j])
                qs.append(Q[i, j])
        if len(fs) <= degree + 1:
            raise InsufficientData("too few field samples around the point")
        A = np.vander(np.array(fs) - V[ix, iy], degree + 1, increasing=True)
        c, *_ = np.linalg.lstsq(A, np.array(qs), rcond=None)
        return c[1]
    return q0p


def jet_q0prime(jets):
    """Q0' from the cubic model of the jet whose base f0 is nearest to Re f."""
    f0s = np.array([j.f0 for j in jets])

    def q0p(f, x=None, t=None):
        j = jets[int(np.argmin(np.abs(f0s - f.real)))]
        return j.model_d1(f)
    return q0p


# ---------------------------------------------------------------------------
# tilts and alpha-deformations


@dataclass(frozen=True)
class TiltParams:
    xi1: float
    xi2: float
    t1: float
    t2: float
    t0: float
    alpha0: float

    def omega(self, y):
        """Linear interpolant of (t1, xi1) and (t2, xi2)."""
        return self.xi1 + (self.xi2 - self.xi1) * (np.asarray(y, dtype=float) - self.t1) / (self.t2 - self.t1)


def tilt_params(xi1, xi2, t1, t2):
    if xi1 * xi2 < 0:
        raise PreconditionError("xi1 and xi2 must have the same sign")
    if xi1 == xi2:
        raise InvalidArgument("xi1 = xi2 gives a degenerate tilt")
    if not t1 < t2:
        raise InvalidArgument("need t1 < t2")
    t0 = (xi2 * t1 - xi1 * t2) / (xi2 - xi1)
    alpha0 = (xi2 - xi1) / (t2 - t1) + 1.0
    return TiltParams(float(xi1), float(xi2), float(t1), float(t2), float(t0), float(alpha0))


def _deformed(jet, alpha):
    """Q0;alpha(u) = (u + 1) / (u / alpha + 1) Q0;1(u / alpha) and its first two derivatives."""
    def q(u):
        v = u / alpha
        return (u + 1) / (v + 1) * jet.model(v)

    def qp(u, eps=None):
        v = u / alpha
        a = (u + 1) / (v + 1)
        ap = (v + 1 - (u + 1) / alpha) / (v + 1) ** 2
        return ap * jet.model(v) + a * jet.model_d1(v) / alpha

    def qpp(u):
        v = u / alpha
        a = (u + 1) / (v + 1)
        ap = (v + 1 - (u + 1) / alpha) / (v + 1) ** 2
        app = -2 * (1 - 1 / alpha) / (alpha * (v + 1) ** 3)
        return app * jet.model(v) + 2 * ap * jet.model_d1(v) / alpha + a * jet.model_d2(v) / alpha ** 2
    return q, qp, qpp


@dataclass
class EndpointCheck:
    alpha: float
    predicted: float
    solved: float
    residual: float
    iterations: int


def deformed_endpoint_check(point, jet, alpha, t0=0.0, tol=1e-12, max_iter=50):
    """Solve the deformed double-root system and compare the endpoint shift.

    Unknowns (x, u): Q0;alpha(u) = x (u + 1) - t u and Q0;alpha'(u) = x - t at
    the time t of ``point`` (measured from ``t0``).  The prediction is
    t (alpha - 1) f0 / (f0 + 1)^2.
    """
    x0, t = float(point[0]), float(point[1]) - t0
    f0 = float(np.real(jet.f0))
    predicted = t * (alpha - 1.0) * f0 / (f0 + 1.0) ** 2
    if alpha == 1.0:
        return EndpointCheck(1.0, 0.0, 0.0, 0.0, 0)
    q, qp, qpp = _deformed(jet, alpha)
    x, u = x0, f0
    for it in range(1, max_iter + 1):
        F1 = np.real(q(u)) - x * (u + 1) + t * u
        F2 = np.real(qp(u)) - x + t
        J = np.array([[np.real(qp(u)) - x + t, -(u + 1)], [np.real(qpp(u)), -1.0]])
        try:
            dxu = np.linalg.solve(J, [-F1, -F2])
        except np.linalg.LinAlgError:
            raise ConvergenceError("singular Jacobian in the deformed endpoint solve",
                                   residual=float(abs(F1) + abs(F2)))
        u += dxu[0]
        x += dxu[1]
        if abs(dxu).max() < tol:
            break
    else:
        raise ConvergenceError("deformed endpoint Newton did not converge",
                               residual=float(abs(F1) + abs(F2)))
    solved = x - x0
    return EndpointCheck(float(alpha), float(predicted), float(solved),
                         float(abs(solved - predicted)), it)


@dataclass
class LogPerturbationCheck:
    alpha: float
    lhs: complex
    main: complex
    relative_residual: float
    iterations: int


def interior_log_perturbation_check(jet, point, F, alpha, t0=0.0, tol=1e-13, max_iter=50):
    """log F(x; alpha) - log alpha - log F(x; 1) against t (1 - alpha) d_x (F / (F + 1)).

    ``jet`` is a local model of Q0;1 valid near the interior value F = F(x; 1);
    F(x; alpha) is the root of Q0;alpha(u) = x (u + 1) - t u found by Newton
    from F.
    """
    x, t = float(point[0]), float(point[1]) - t0
    F = complex(F)
    if alpha == 1.0:
        return LogPerturbationCheck(1.0, 0j, 0j, 0.0, 0)
    q, qp, _ = _deformed(jet, alpha)
    u = F
    for it in range(1, max_iter + 1):
        g = q(u) - x * (u + 1) + t * u
        gp = qp(u) - x + t
        du = -g / gp
        u += du
        if abs(du) < tol:
            break
    else:
        raise ConvergenceError("deformed interior root did not converge", residual=float(abs(g)))
    lhs = np.log(u) - math.log(alpha) - np.log(F)
    den = jet.model_d1(F) - x + t
    fx = (F + 1) / den
    main = t * (1 - alpha) * fx / (F + 1) ** 2
    return LogPerturbationCheck(float(alpha), complex(lhs), complex(main),
                                float(abs(lhs - main) / abs(main)), it)
