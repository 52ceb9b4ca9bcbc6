"""Airy and Tracy-Widom numerics, edge rescaling and the edge experiments.

The Airy function is evaluated from its Maclaurin series near the origin and
from the standard asymptotic expansions further out.  The GUE Tracy-Widom
distribution function is a Fredholm determinant of the Airy kernel, computed
once by Nystrom quadrature and shipped as the table ``data/tw_gue_cdf.csv``;
``tw_gue_cdf`` only interpolates that table.
"""
import csv
import math
import os
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate, special, stats

from .errors import (DomainError, InfeasibleError, InvalidArgument, PreconditionError,
                     RangeError)
from .rng import as_stream

_DATA = os.path.join(os.path.dirname(__file__), "data")
TW_TABLE = os.path.join(_DATA, "tw_gue_cdf.csv")

# ---------------------------------------------------------------------------
# Airy function

AI0 = 3.0 ** (-2.0 / 3.0) / math.gamma(2.0 / 3.0)
AIP0 = -(3.0 ** (-1.0 / 3.0)) / math.gamma(1.0 / 3.0)
SERIES_RIGHT = 6.0
# On the oscillatory side the asymptotic series is only good to about
# exp(-4/3 |x|^(3/2)), which is 1e-9 at |x| = 6, so the Maclaurin series is
# used a little further out there.
SERIES_LEFT = -7.5
AIRY_RANGE = 200.0


def _airy_series(x):
    x3 = x * x * x
    f, g, fp, gp = 1.0, x, 0.0, 1.0
    tf, tg, tfp, tgp = 1.0, x, x * x / 2.0, 1.0
    fp = tfp
    for k in range(1, 400):
        tf *= x3 / ((3 * k - 1) * (3 * k))
        tg *= x3 / ((3 * k) * (3 * k + 1))
        if k >= 2:
            tfp *= x3 / ((3 * k - 1) * (3 * k - 3))
            fp += tfp
        tgp *= x3 / ((3 * k) * (3 * k - 2))
        f += tf
        g += tg
        gp += tgp
        if max(abs(tf), abs(tg), abs(tfp), abs(tgp)) < 1e-18 * max(1.0, abs(f), abs(g)):
            break
    return AI0 * f + AIP0 * g, AI0 * fp + AIP0 * gp


@lru_cache(maxsize=None)
def _u_coeffs(count=40):
    u = [1.0]
    for k in range(1, count):
        # u_k = Gamma(3k + 1/2) / (54^k k! Gamma(k + 1/2))
        u.append(u[-1] * (6 * k - 5) * (6 * k - 3) * (6 * k - 1) / (216.0 * k * (2 * k - 1)))
    v = [-(6 * k + 1) / (6 * k - 1) * u[k] for k in range(count)]
    return tuple(u), tuple(v)


def _asym_sum(coeffs, z, alternating=True, start=0, step=1):
    """Sum of (-1)^j coeffs[k] z^-k over k = start, start + step, ... up to the smallest term."""
    total = 0.0
    prev = math.inf
    for j, k in enumerate(range(start, len(coeffs), step)):
        term = coeffs[k] * z ** (-k)
        if abs(term) > prev:
            break
        total += (-1) ** j * term if alternating else term
        prev = abs(term)
    return total


def _airy_asymptotic(x):
    u, v = _u_coeffs()
    if x > 0:
        z = 2.0 / 3.0 * x ** 1.5
        e = math.exp(-z) / (2.0 * math.sqrt(math.pi))
        su = sum((-1) ** k * u[k] * z ** (-k) for k in range(_cut(u, z)))
        sv = sum((-1) ** k * v[k] * z ** (-k) for k in range(_cut(v, z)))
        return e * x ** -0.25 * su, -e * x ** 0.25 * sv
    w = -x
    z = 2.0 / 3.0 * w ** 1.5
    c, s = math.cos(z - math.pi / 4), math.sin(z - math.pi / 4)
    ue = _asym_sum(u, z, start=0, step=2)
    uo = _asym_sum(u, z, start=1, step=2)
    ve = _asym_sum(v, z, start=0, step=2)
    vo = _asym_sum(v, z, start=1, step=2)
    a = w ** -0.25 / math.sqrt(math.pi) * (c * ue + s * uo)
    ap = w ** 0.25 / math.sqrt(math.pi) * (s * ve - c * vo)
    return a, ap


def _cut(coeffs, z):
    n = 1
    while n < len(coeffs) and abs(coeffs[n]) * z ** (-n) < abs(coeffs[n - 1]) * z ** (-(n - 1)):
        n += 1
    return n


def _airy_pair(x):
    x = float(x)
    if not math.isfinite(x) or abs(x) > AIRY_RANGE:
        raise RangeError(f"Airy evaluation supports |x| <= {AIRY_RANGE:g}, got {x}")
    if SERIES_LEFT <= x <= SERIES_RIGHT:
        return _airy_series(x)
    return _airy_asymptotic(x)


def airy_ai(x, derivative=False):
    """Ai(x) (or Ai'(x)); scalars or arrays with |x| <= 200."""
    k = 1 if derivative else 0
    if np.ndim(x) == 0:
        return _airy_pair(x)[k]
    xs = np.asarray(x, dtype=float)
    return np.array([_airy_pair(v)[k] for v in xs.ravel()]).reshape(xs.shape)


def airy_aip(x):
    return airy_ai(x, derivative=True)


def airy_integral_check(x):
    """int_x^inf Ai(u)^2 du in closed form: Ai'(x)^2 - x Ai(x)^2."""
    a, ap = _airy_pair(x)
    return ap * ap - x * a * a


# ---------------------------------------------------------------------------
# extended Airy kernel

KERNEL_LAMBDA_MAX = 20.0


def _aa(u, x, y):
    return _airy_pair(x + u)[0] * _airy_pair(y + u)[0]


def _half_line(lam, x, y):
    """int_0^inf e^(u lam) Ai(x + u) Ai(y + u) du."""
    lo = min(x, y)
    upper = max(25.0, 4.0 * max(lam, 0.0) ** 2) + max(0.0, -lo)
    upper = min(upper, AIRY_RANGE - max(x, y, 0.0))
    pts = [p for p in (-lo, -max(x, y)) if 0 < p < upper]
    val, _ = integrate.quad(lambda u: math.exp(u * lam) * _aa(u, x, y), 0.0, upper,
                            points=pts or None, limit=400, epsabs=1e-12, epsrel=1e-11)
    return val


def airy_gaussian_integral(lam, x, y):
    """int_R e^(u lam) Ai(x + u) Ai(y + u) du for lam > 0 (closed form)."""
    if lam <= 0:
        raise DomainError("the full-line integral converges only for lam > 0")
    return math.exp(lam ** 3 / 12.0 - (x + y) * lam / 2.0 - (x - y) ** 2 / (4.0 * lam)) / (
        2.0 * math.sqrt(math.pi * lam))


def extended_airy_kernel(s, x, t, y):
    """K(s, x; t, y) of the Airy line ensemble.

    For s >= t the half-line integral over [0, inf) is computed directly.  For
    s < t the integral over (-inf, 0] is rewritten as the full-line integral
    (closed form) minus the half-line integral, which avoids integrating a
    slowly decaying oscillation.
    """
    args = [float(v) for v in (s, x, t, y)]
    if not all(math.isfinite(v) for v in args):
        raise RangeError("kernel arguments must be finite")
    s, x, t, y = args
    lam = t - s
    if lam > KERNEL_LAMBDA_MAX:
        raise RangeError(f"t - s = {lam} overflows the kernel's Gaussian factor")
    if max(abs(x), abs(y)) > AIRY_RANGE / 2:
        raise RangeError("|x| and |y| must stay below 100")
    if s >= t:
        return _half_line(lam, x, y)
    return _half_line(lam, x, y) - airy_gaussian_integral(lam, x, y)


def airy_kernel(x, y):
    """Equal-time kernel (Ai(x)Ai'(y) - Ai'(x)Ai(y)) / (x - y) in closed form."""
    ax, apx = _airy_pair(x)
    if abs(x - y) < 1e-9:
        return apx * apx - x * ax * ax
    ay, apy = _airy_pair(y)
    return (ax * apy - apx * ay) / (x - y)


# ---------------------------------------------------------------------------
# Tracy-Widom GUE

TW_RANGE = (-10.0, 6.0)


def tw_gue_cdf_oracle(s, nodes=60, length=14.0):
    """F2(s) = det(I - K_Ai) on L^2(s, inf) by Gauss-Legendre Nystrom quadrature.

    The half-line is truncated at max(s, 0) + length, beyond which the kernel
    is below 1e-16.
    """
    s = float(s)
    b = max(s, 0.0) + length
    z, w = np.polynomial.legendre.leggauss(nodes)
    x = s + (z + 1.0) * (b - s) / 2.0
    w = w * (b - s) / 2.0
    a = airy_ai(x)
    ap = airy_aip(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (np.outer(a, ap) - np.outer(ap, a)) / (x[:, None] - x[None, :])
    K[np.diag_indices(nodes)] = ap * ap - x * a * a
    sw = np.sqrt(w)
    M = np.eye(nodes) - sw[:, None] * K * sw[None, :]
    sign, logdet = np.linalg.slogdet(M)
    return float(sign * math.exp(logdet))


def build_tw_table(path=TW_TABLE, step=0.01, nodes=60):
    """Regenerate the frozen Tracy-Widom table (x, F2(x)) on [-10, 6]."""
    xs = np.round(np.arange(TW_RANGE[0], TW_RANGE[1] + step / 2, step), 10)
    rows = [(float(x), tw_gue_cdf_oracle(x, nodes=nodes)) for x in xs]
    tmp = path + ".tmp"
    with open(tmp, "w", newline="") as fh:
        fh.write("# format: 1\n")
        wr = csv.writer(fh)
        wr.writerow(["x", "F2"])
        for x, F in rows:
            wr.writerow([f"{x:.4f}", f"{F:.17g}"])
    os.replace(tmp, path)
    _tw_table.cache_clear()
    return path


@lru_cache(maxsize=1)
def _tw_table():
    if not os.path.exists(TW_TABLE):
        raise FileNotFoundError(f"Tracy-Widom table missing: {TW_TABLE}; run build_tw_table()")
    xs, fs = [], []
    with open(TW_TABLE) as fh:
        for row in csv.reader(line for line in fh if not line.startswith("#")):
            if row[0] == "x":
                continue
            xs.append(float(row[0]))
            fs.append(float(row[1]))
    xs, fs = np.array(xs), np.clip(np.array(fs), 0.0, 1.0)
    return xs, fs, interpolate.PchipInterpolator(xs, fs)


def tw_gue_cdf(x):
    """Tracy-Widom GUE distribution function from the frozen table."""
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < TW_RANGE[0] - 1e-12) or np.any(arr > TW_RANGE[1] + 1e-12):
        raise RangeError(f"tw_gue_cdf is tabulated on [{TW_RANGE[0]:g}, {TW_RANGE[1]:g}]")
    _, _, spl = _tw_table()
    out = np.clip(spl(arr), 0.0, 1.0)
    return float(out) if np.ndim(x) == 0 else out


def tw_gue_cdf_extended(x):
    """tw_gue_cdf clamped to 0 below and 1 above the table (for KS distances)."""
    arr = np.clip(np.asarray(x, dtype=float), *TW_RANGE)
    return tw_gue_cdf(arr)


def tw_gue_pdf(x):
    _, _, spl = _tw_table()
    return spl.derivative()(np.asarray(x, dtype=float))


def tw_gue_moments():
    """(mean, variance) of the tabulated law by integrating the distribution function."""
    xs, fs, _ = _tw_table()
    a, b = xs[0], xs[-1]
    mean = b - integrate.simpson(fs, x=xs) - a * fs[0]
    second = b * b * fs[-1] - a * a * fs[0] - integrate.simpson(2 * xs * fs, x=xs)
    return float(mean), float(second - mean * mean)


# ---------------------------------------------------------------------------
# edge rescaling


@dataclass(frozen=True)
class ScalingConstants:
    s: float   # vertical scale
    r: float   # time scale

    def to_json(self):
        return {"s": self.s, "r": self.r}


def scaling_constants(cp):
    """(s, r) from curvature parameters (l, q)."""
    l, q = float(cp.l), float(cp.q)
    if not (math.isfinite(l) and math.isfinite(q)) or l in (0.0, 1.0) or q == 0.0:
        raise DomainError("scaling constants need l not in {0, 1} and q != 0")
    a = abs(l * (1 - l))
    s = a ** (2.0 / 3.0) / (4.0 ** (1.0 / 3.0) * abs(q) ** (1.0 / 3.0))
    r = a ** (1.0 / 3.0) / (2.0 ** (1.0 / 3.0) * abs(q) ** (2.0 / 3.0))
    return ScalingConstants(float(s), float(r))


@dataclass
class RescaledWalks:
    """X_{i+1}(t) = (x_{K-i}(slice) + offset - n x0 - l n^(2/3) t_eff) / (s n^(1/3)).

    ``slices[t]`` is the integer time row used for the requested t (nearest
    row, ties to even) and ``t_eff[t]`` the rescaled time of that row, which
    is what enters the drift term so the map is exactly invertible.
    """
    X: dict
    slices: dict
    t_eff: dict
    x0: float
    t0: float
    K: int
    n: int
    l: float
    sc: ScalingConstants
    offset: float = 0.0

    def invert(self, i, t):
        """Walk position x_{K-i+1} recovered from X_i(t)."""
        n = self.n
        val = self.X[i][t] * self.sc.s * n ** (1 / 3) + n * self.x0 + self.l * n ** (2 / 3) * self.t_eff[t]
        return val - self.offset


def rescale_top_walks(W, x0, t0, K, n, cp, times=(0.0,), count=2, offset=0.0):
    """Edge rescaling of the top ``count`` walks of an ensemble.

    ``offset`` is added to the integer walk positions before rescaling; 0
    follows the left-vertex convention H(x_i + 1, t) = i literally.
    """
    sc = scaling_constants(cp)
    X = {i: {} for i in range(1, count + 1)}
    slices, t_eff = {}, {}
    for t in times:
        row = round(t0 * n + sc.r * n ** (2 / 3) * t)
        if row not in W.slices:
            raise RangeError(f"time {t} maps to row {row}, which is outside the domain")
        slices[t] = row
        t_eff[t] = (row - t0 * n) / (sc.r * n ** (2 / 3))
        for i in range(1, count + 1):
            pos = W.position(K - i + 1, row)
            if pos is None:
                raise RangeError(f"walk {K - i + 1} is absent from row {row}")
            X[i][t] = (pos + offset - n * x0 - cp.l * n ** (2 / 3) * t_eff[t]) / (sc.s * n ** (1 / 3))
    return RescaledWalks(X, slices, t_eff, float(x0), float(t0), int(K), int(n), float(cp.l), sc, offset)


# ---------------------------------------------------------------------------
# statistics helpers


def _pairwise_mean(x):
    x = np.asarray(x, dtype=float)
    return float(math.fsum(x) / len(x)) if len(x) else math.nan


def _moments(x):
    m = _pairwise_mean(x)
    v = math.fsum((np.asarray(x, dtype=float) - m) ** 2) / max(1, len(x) - 1)
    return m, v


def ks_to_tw(samples):
    """Kolmogorov-Smirnov distance of the empirical law to TW-GUE."""
    x = np.sort(np.asarray(samples, dtype=float))
    if not len(x):
        return math.nan
    F = tw_gue_cdf_extended(x)
    k = np.arange(1, len(x) + 1) / len(x)
    return float(max(np.max(k - F), np.max(F - (k - 1 / len(x)))))


def ks_to_tw_cells(samples, width, grid_step=1e-3):
    """KS distance to TW-GUE when each sample is spread uniformly over [x, x + width].

    This is the law of the continuum position of a walk whose lattice jump
    occupies a unit cell of rescaled width ``width``.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    N = len(x)
    if not N:
        return math.nan
    lo = max(TW_RANGE[0], x[0] - 1.0)
    hi = min(TW_RANGE[1], x[-1] + width + 1.0)
    g = np.union1d(np.arange(lo, hi, grid_step), np.clip(np.r_[x, x + width], lo, hi))
    full = np.searchsorted(x + width, g, side="right")
    started = np.searchsorted(x, g, side="right")
    cs = np.r_[0.0, np.cumsum(x)]
    k = started - full
    partial = (k * g - (cs[started] - cs[full])) / width
    F = (full + partial) / N
    return float(np.max(np.abs(F - tw_gue_cdf_extended(g))))


# ---------------------------------------------------------------------------
# experiments


@dataclass
class EdgeStatsReport:
    count: int
    X1: np.ndarray                 # raw rescaled samples (left-vertex convention)
    X2: np.ndarray
    cell_width: float              # rescaled width of one lattice cell, 1 / (s n^(1/3))
    mean: float                    # continuum (cell-spread) statistics
    variance: float
    ks: float
    raw_mean: float
    raw_variance: float
    raw_ks: float
    two_time: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def std(self):
        return math.sqrt(self.variance)

    def to_json(self):
        return {"format": 1, "count": self.count, "mean": self.mean, "variance": self.variance,
                "std": self.std, "ks": self.ks, "raw_mean": self.raw_mean,
                "raw_variance": self.raw_variance, "raw_ks": self.raw_ks,
                "cell_width": self.cell_width, "two_time": {str(k): v for k, v in self.two_time.items()},
                "X2_mean": _pairwise_mean(self.X2) if len(self.X2) else None,
                "params": self.params}

    def to_csv(self, path):
        tmp = str(path) + ".tmp"
        with open(tmp, "w", newline="") as fh:
            fh.write("# format: 1\n")
            wr = csv.writer(fh)
            wr.writerow(["sample", "X1", "X2"])
            for k, (a, b) in enumerate(zip(self.X1, self.X2)):
                wr.writerow([k, repr(float(a)), repr(float(b))])
        os.replace(tmp, path)


def _make_report(X1, X2, width, two_time=None, params=None):
    X1 = np.asarray(X1, dtype=float)
    X2 = np.asarray(X2, dtype=float)
    if not np.all(np.isfinite(X1)):
        raise AssertionError("non-finite rescaled samples")
    rm, rv = _moments(X1)
    return EdgeStatsReport(
        count=len(X1), X1=X1, X2=X2, cell_width=width,
        mean=rm + width / 2, variance=rv + width * width / 12, ks=ks_to_tw_cells(X1, width),
        raw_mean=rm, raw_variance=rv, raw_ks=ks_to_tw(X1),
        two_time=two_time or {}, params=params or {})


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


def _hexagon_of(spec):
    from .lattice import PolygonSpec, hexagon_spec
    if isinstance(spec, tuple) and len(spec) == 3:
        return tuple(float(v) for v in spec), hexagon_spec(*spec)
    if isinstance(spec, PolygonSpec) and len(spec.vertices) == 6:
        (_, _), (a, _), (ac, c), _, _, (_, b) = spec.vertices
        abc = (float(a), float(b), float(c))
        if hexagon_spec(a, b, c) == spec:
            return abc, spec
    raise InvalidArgument("edge experiments need a hexagon (a, b, c)")


def edge_statistics_experiment(hexagon, n, N, point, rng=None, engine="walks", times=(0.0, 0.5, 1.0),
                               threads=1, progress=None):
    """Top-walk statistics at an arctic point of the hexagon, against TW-GUE.

    engine: 'walks' (exact walk-ensemble sampler, full tilings), 'slice'
    (exact one-time marginal, t = 0 only), 'cftp' (coupling from the past) or
    'flip' (sweep dynamics from the maximal state for the coupling budget).
    """
    from .dynamics import budget_sample, cftp_sample, coupling_budget
    from .hexsampler import sample_hexagon_slice, sample_hexagon_walks, walks_to_ensemble
    from .lattice import build_domain
    from .limitshape import HexagonOracle, curvature_params
    from .tiling import height_to_walks

    if N <= 0:
        raise InvalidArgument("the sample count N must be positive")
    (a, b, c), spec = _hexagon_of(hexagon)
    rng = as_stream(rng)
    oracle = HexagonOracle(a, b, c)
    x0, t0 = float(point[0]), float(point[1])
    cp = curvature_params(oracle.conic, (x0, t0))
    right = oracle.slope(x0 + 1e-6, t0)
    if max(abs(right[0]), abs(right[1])) > 1e-9:
        raise PreconditionError("the gradient to the right of the point must be (0, 0)")
    K = int(math.floor(n * oracle.height(x0, t0) + 1e-9))
    sc = scaling_constants(cp)
    width = 1.0 / (sc.s * n ** (1 / 3))
    domain = build_domain(spec, n)
    A, B, C = int(round(a * n)), int(round(b * n)), int(round(c * n))
    if engine == "slice":
        times = (0.0,)
        row = round(t0 * n)

        def one(k):
            X = sample_hexagon_slice(A, B, C, row, rng.child(k))
            vals = [(X[-i] - n * x0) / (sc.s * n ** (1 / 3)) for i in (1, 2)]
            return {0.0: vals}
    else:
        sweeps = None
        if engine == "flip":
            sweeps, _ = coupling_budget(domain, eps=0.01, rng=rng.child("budget"))
        elif engine not in ("walks", "cftp"):
            raise InvalidArgument(f"unknown engine {engine!r}")

        def one(k):
            r = rng.child(k)
            if engine == "walks":
                base = 1
                W = walks_to_ensemble(sample_hexagon_walks(A, B, C, r), base)
            elif engine == "cftp":
                W = height_to_walks(cftp_sample(domain, rng=r).sample)
            else:
                W = height_to_walks(budget_sample(domain, sweeps=sweeps, rng=r))
            R = rescale_top_walks(W, x0, t0, K, n, cp, times=times)
            return {t: [R.X[1][t], R.X[2][t]] for t in times}

    out = []
    for lo in range(0, N, 50):
        out.extend(_map(one, range(lo, min(N, lo + 50)), threads))
        if progress:
            progress(f"edge-stats: {len(out)}/{N} samples")
    X1 = np.array([o[0.0][0] for o in out])
    X2 = np.array([o[0.0][1] for o in out])
    two = {}
    for t in times:
        if t == 0.0:
            continue
        Y = np.array([o[t][0] for o in out])
        two[t] = float(np.corrcoef(X1, Y)[0, 1]) if N > 2 else math.nan
    params = {"hexagon": [a, b, c], "n": n, "N": N, "point": [x0, t0], "engine": engine,
              "K": K, "l": cp.l, "q": cp.q, "s": sc.s, "r": sc.r, "times": list(times)}
    return _make_report(X1, X2, width, two, params)


@dataclass
class ConcentrationReport:
    ns: list
    median_dev: dict
    max_dev: dict
    frozen_match: dict
    delta: float
    N: int
    deviations: dict = field(default_factory=dict)

    @property
    def ratio(self):
        a, b = self.ns[0], self.ns[-1]
        return self.median_dev[b] / self.median_dev[a]

    def to_json(self):
        return {"format": 1, "ns": self.ns, "N": self.N, "delta": self.delta,
                "median_dev": {str(k): v for k, v in self.median_dev.items()},
                "max_dev": {str(k): v for k, v in self.max_dev.items()},
                "frozen_match": {str(k): v for k, v in self.frozen_match.items()},
                "ratio": self.ratio}


def height_deviation(H, target, frozen_mask):
    """(max |H - n H*|, whether H equals n H* on every vertex of ``frozen_mask``)."""
    m = H.domain.mask
    dev = np.abs(H.values - target)
    sup = float(dev[m].max())
    ok = bool(np.all(dev[frozen_mask & m] < 0.5))
    return sup, ok


def concentration_experiment(spec, ns, N, delta, rng=None, threads=1, engine="auto", tol=1e-3,
                             progress=None):
    """Sup-norm deviation of random heights from n H* and frozen-region exactness."""
    from .dynamics import cftp_sample
    from .enumeration import DEFAULT_WIDTH_CAP, dp_width, exact_sample
    from .hexsampler import hexagon_sides, sample_hexagon_height
    from .lattice import build_domain
    from .limitshape import augmented_region, solve_limit_shape

    if N <= 0:
        raise InvalidArgument("the sample count N must be positive")
    rng = as_stream(rng)
    med, mx, fr, devs = {}, {}, {}, {}
    for n in ns:
        domain = build_domain(spec, n)
        Hc = solve_limit_shape(spec, 1.0 / n)
        target = n * Hc.values
        frozen = ~augmented_region(Hc, delta, n, tol=tol)
        eng = engine
        if eng == "auto":
            try:
                hexagon_sides(domain)
                eng = "hexagon"
            except InvalidArgument:
                eng = "dp" if dp_width(domain) <= DEFAULT_WIDTH_CAP else "cftp"
        sub = rng.child(n)

        def one(k):
            r = sub.child(k)
            if eng == "hexagon":
                H = sample_hexagon_height(domain, r)
            elif eng == "dp":
                H = exact_sample(domain, rng=r)
            else:
                H = cftp_sample(domain, rng=r).sample
            return height_deviation(H, target, frozen)

        res = _map(one, range(N), threads)
        d = np.array([r[0] for r in res])
        devs[n] = d
        med[n] = float(np.median(d))
        mx[n] = float(d.max())
        fr[n] = float(np.mean([r[1] for r in res]))
        if progress:
            progress(f"concentration: n={n} median={med[n]:.3f} frozen={fr[n]:.3f}")
    return ConcentrationReport(list(ns), med, mx, fr, float(delta), int(N), devs)


# ---------------------------------------------------------------------------
# walks above a quadratic barrier


def barrier_k0(sc, n, m):
    return sc.s ** 1.5 * n ** (1 / 3) * (3 * math.pi * m / 2) ** (2 / 3)


def _single_path_counts(b, e, xlo, xhi):
    """Normalized counts of Bernoulli paths from (s, x) to the exit e staying >= b(s).

    Returns an array (times, positions); each time row is scaled by a common
    factor, which cancels in the transition ratios.
    """
    T = len(b) - 1
    W = xhi - xlo + 1
    N = np.zeros((T + 1, W))
    N[T, e - xlo] = 1.0
    for s in range(T - 1, -1, -1):
        row = N[s + 1].copy()
        row[:-1] += N[s + 1][1:]
        row[: max(0, b[s] - xlo)] = 0.0
        mxv = row.max()
        N[s] = row / mxv if mxv > 0 else row
    return N


def barrier_time_span(l, q, n, delta):
    """Half time span T: n^(2/3 + 20 delta), capped so the barrier slope stays in [0, 1]."""
    T = int(math.floor(n ** (2 / 3 + 20 * delta)))
    cap = int(math.floor(0.9 * n * min(l, 1 - l) / (2 * abs(q))))
    return max(1, min(T, cap))


def quadratic_barrier_experiment(l, q, n, N, rng=None, delta=0.02, m=None, T=None, entrance=None,
                                 exit=None, wall=True):
    """Non-intersecting Bernoulli walks above a quadratic wall, sampled exactly.

    The wall in lattice coordinates is f(s) = l s - q s^2 / n - K0: the walks
    live on its right and it bends away from them on both sides, the local
    picture at an arctic point whose frozen region lies to the right.  The
    ensemble of m walks on [-T, T] is sampled by the h-transform of its
    Lindstrom-Gessel-Viennot count (LGV applies because the wall constrains
    each path separately).  The wall plays the role of a walk x_0 = f, so
    positions must exceed f.  ``wall=False`` drops the wall (free walks with
    the given entrance and exit data).
    Reports X_1(0) = x_m(0) / (s n^(1/3)) statistics.
    """
    from .limitshape import CurvatureParams

    if N <= 0:
        raise InvalidArgument("the sample count N must be positive")
    if not 0 < l < 1:
        raise DomainError("the wall slope l must lie in (0, 1)")
    if q <= 0:
        raise PreconditionError("the barrier experiment needs q > 0 (a wall bending away from the walks)")
    sc = scaling_constants(CurvatureParams(l, q))
    if m is None:
        m = max(1, int(math.floor(n ** (10 * delta))))
    if T is None:
        T = barrier_time_span(l, q, n, delta)
    K0 = barrier_k0(sc, n, m)
    ss = np.arange(-T, T + 1)
    f = l * ss - q * ss ** 2 / n - K0
    b = (np.floor(f) + 1).astype(np.int64)
    if wall and (np.any(np.diff(b) < 0) or np.any(np.diff(b) > 1)):
        raise InfeasibleError("the wall moves faster than a Bernoulli walk can follow; lower T")
    tolde = n ** (1 / 3 + 10 * delta)
    if not wall and (entrance is None or exit is None):
        raise InvalidArgument("walks without a wall need explicit entrance and exit data")
    d = np.asarray(entrance if entrance is not None else b[0] + np.arange(m), dtype=np.int64)
    e = np.asarray(exit if exit is not None else b[-1] + np.arange(m), dtype=np.int64)
    if len(d) != m or len(e) != m or np.any(np.diff(d) <= 0) or np.any(np.diff(e) <= 0):
        raise InvalidArgument("entrance and exit data must be m strictly increasing integers")
    if not wall:
        b = np.full_like(b, min(int(d[0]), int(e[0]) - 2 * T))
    elif np.any(np.abs(d - f[0]) >= tolde) or np.any(np.abs(e - f[-1]) >= tolde):
        raise InfeasibleError(f"entrance/exit data farther than n^(1/3 + 10 delta) = {tolde:.3f} "
                              "from the wall endpoints")
    if d[0] < b[0] or e[0] < b[-1] or np.any(e - d < 0) or np.any(e - d > 2 * T):
        raise InfeasibleError("entrance or exit data are not reachable above the wall")
    xlo, xhi = int(min(b.min(), d[0])), int(e.max())
    counts = np.stack([_single_path_counts(b, int(ej), xlo, xhi) for ej in e], axis=-1)
    # counts[s, x - xlo, j]
    if np.linalg.det(counts[0][d - xlo]) <= 0:
        raise InfeasibleError("no non-intersecting walk family fits the barrier and the data")
    gen = as_stream(rng).gen
    eps = np.array(np.meshgrid(*[[0, 1]] * m, indexing="ij")).reshape(m, -1).T  # (2^m, m)
    X = np.tile(d, (N, 1))
    mid = None
    for s in range(2 * T):
        Y = X[:, None, :] + eps[None, :, :]                     # (N, 2^m, m)
        valid = np.all(np.diff(Y, axis=2) > 0, axis=2) & (Y[:, :, 0] >= b[s + 1]) & (Y[:, :, -1] <= xhi)
        idx = np.clip(Y - xlo, 0, xhi - xlo)
        mats = counts[s + 1][idx]                                # (N, 2^m, m, m)
        w = np.where(valid, np.linalg.det(mats), 0.0)
        w = np.maximum(w, 0.0)
        tot = w.sum(axis=1)
        if np.any(tot <= 0):
            raise InfeasibleError("walk family got stuck against the barrier")
        cdf = np.cumsum(w, axis=1) / tot[:, None]
        u = gen.random(N)
        pick = np.minimum((cdf < u[:, None]).sum(axis=1), len(eps) - 1)
        X = Y[np.arange(N), pick]
        if ss[s + 1] == 0:
            mid = X.copy()
    if mid is None:
        mid = X
    if not np.all(X == e[None, :]):
        raise AssertionError("barrier walks did not reach the exit data")
    width = 1.0 / (sc.s * n ** (1 / 3))
    X1 = mid[:, -1] / (sc.s * n ** (1 / 3))
    X2 = mid[:, -2] / (sc.s * n ** (1 / 3)) if m > 1 else np.full(N, np.nan)
    params = {"l": l, "q": q, "n": n, "N": N, "m": m, "T": T, "K0": K0, "delta": delta,
              "wall": wall}
    return _make_report(X1, X2, width, {}, params)
