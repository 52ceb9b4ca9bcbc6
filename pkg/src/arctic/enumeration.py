"""Exact counting, enumeration and perfect sampling on small domains.

The main engine is a frontier dynamic program.  Vertices are processed in a
fixed order in which the three "backward" neighbours (x-1, y), (x, y-1) and
(x-1, y-1) of every vertex come first, so each lattice edge is checked exactly
once, when its later endpoint is placed.  The DP state is the tuple of heights
of the free (non-boundary) vertices that still have an unplaced neighbour.
"""
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats

from .errors import CapacityError, InvalidArgument, Untileable
from .lattice import BoundaryHeightFn, boundary_height
from .rng import as_stream
from .tiling import HeightFunction

DEFAULT_WIDTH_CAP = 20
DEFAULT_ENUM_CAP = 10 ** 6

_BACK = ((-1, 0), (0, -1), (-1, -1))
_FORWARD = ((1, 0), (0, 1), (1, 1))


def _vertex_order(domain):
    ix, iy = np.nonzero(domain.mask)
    if domain.ny <= domain.nx:
        keys = np.lexsort((iy, ix))  # column by column: frontier ~ ny
    else:
        keys = np.lexsort((ix, iy))  # row by row: frontier ~ nx
    return list(zip(ix[keys].tolist(), iy[keys].tolist()))


class ProfileDP:
    """Frontier DP over the vertices of a domain with fixed boundary heights.

    ``layers[k]`` holds the reachable states after placing k vertices and
    ``counts[k][s]`` the number of completions of state s (exact ints).
    """

    def __init__(self, domain, bh=None, width_cap=DEFAULT_WIDTH_CAP):
        if bh is None:
            bh = boundary_height(domain)
        self.domain = domain
        self.bh = bh
        self.order = _vertex_order(domain)
        self._plan()
        if self.width > width_cap:
            raise CapacityError(f"DP width {self.width} exceeds the cap {width_cap}")
        self._forward()
        self._backward()

    def _plan(self):
        d = self.domain
        m, b = d.mask, d.boundary
        pos = {v: k for k, v in enumerate(self.order)}
        last_use = {}
        for k, (ix, iy) in enumerate(self.order):
            for dx, dy in _FORWARD:
                w = (ix + dx, iy + dy)
                if w in pos:
                    last_use[(ix, iy)] = max(last_use.get((ix, iy), -1), pos[w])
        steps = []
        live = []  # free vertices currently held in the state, in order
        width = 0
        for k, v in enumerate(self.order):
            back = []
            for dx, dy in _BACK:
                u = (v[0] + dx, v[1] + dy)
                if u in pos:
                    if b[u]:
                        back.append((dx, dy, None, int(self.bh.values[u])))
                    else:
                        back.append((dx, dy, live.index(u), None))
            free = not b[v]
            fixed = None if free else int(self.bh.values[v])
            keep = [i for i, u in enumerate(live) if last_use.get(u, -1) > k]
            new_live = [live[i] for i in keep]
            add = free and last_use.get(v, -1) > k
            if add:
                new_live.append(v)
            width = max(width, len(live) + int(free))
            steps.append((v, back, free, fixed, keep, add))
            live = new_live
        self.steps = steps
        self.width = width

    def _candidates(self, state, back, free, fixed):
        lo, hi = -(1 << 60), 1 << 60
        for dx, dy, idx, val in back:
            h = state[idx] if idx is not None else val
            if (dx, dy) == (0, -1):  # south: H(S) - H(v) in {0,1}
                lo, hi = max(lo, h - 1), min(hi, h)
            else:  # west / south-west: H(v) - H(u) in {0,1}
                lo, hi = max(lo, h), min(hi, h + 1)
        if not free:
            return (fixed,) if lo <= fixed <= hi else ()
        if lo > hi or lo == -(1 << 60):
            if lo == -(1 << 60):
                raise InvalidArgument("a free vertex has no placed neighbour")
            return ()
        return tuple(range(lo, hi + 1))

    def _forward(self):
        layers = [{(): 0}]
        trans = []
        for v, back, free, fixed, keep, add in self.steps:
            cur = layers[-1]
            nxt = {}
            tk = []
            for state in cur:
                row = []
                for val in self._candidates(state, back, free, fixed):
                    ns = tuple(state[i] for i in keep) + ((val,) if add else ())
                    j = nxt.setdefault(ns, len(nxt))
                    row.append((val, j))
                tk.append(row)
            trans.append(tk)
            layers.append(nxt)
        self.layers = [list(layer) for layer in layers]
        self.trans = trans

    def _backward(self):
        K = len(self.steps)
        counts = [None] * (K + 1)
        counts[K] = [1] * len(self.layers[K])
        for k in range(K - 1, -1, -1):
            nxt = counts[k + 1]
            counts[k] = [sum(nxt[j] for _, j in row) for row in self.trans[k]]
        self.counts = counts
        self.total = counts[0][0] if counts[0] else 0

    def sample_values(self, rng):
        """Backward-count sampling: exactly uniform over all fillings."""
        if self.total == 0:
            raise Untileable("no height function with these boundary values")
        rng = as_stream(rng)
        vals = np.zeros(self.domain.shape, dtype=np.int64)
        s = 0
        for k, (v, *_rest) in enumerate(self.steps):
            r = rng.randbelow(self.counts[k][s])
            nxt = self.counts[k + 1]
            for val, j in self.trans[k][s]:
                c = nxt[j]
                if r < c:
                    vals[v] = val
                    s = j
                    break
                r -= c
        return vals

    def sample(self, rng):
        return HeightFunction(self.domain, self.sample_values(rng))

    def iter_values(self):
        """Depth-first enumeration of every filling (as value arrays)."""
        K = len(self.steps)
        vals = np.zeros(self.domain.shape, dtype=np.int64)
        stack = [(0, 0, 0)]  # (layer, state, next transition)
        while stack:
            k, s, t = stack.pop()
            if k == K:
                yield vals.copy()
                continue
            row = self.trans[k][s]
            while t < len(row) and self.counts[k + 1][row[t][1]] == 0:
                t += 1
            if t == len(row):
                continue
            stack.append((k, s, t + 1))
            val, j = row[t]
            vals[self.steps[k][0]] = val
            stack.append((k + 1, j, 0))


def build_dp(domain, bh=None, width_cap=DEFAULT_WIDTH_CAP):
    if bh is None:
        bh = boundary_height(domain)
    dkey = (domain.x0, domain.y0, domain.mask.tobytes(), domain.mask.shape)
    return _DPCache.get(dkey, bh, domain, width_cap)


class _DPCacheType:
    """Small LRU cache keyed by (domain mask, boundary values)."""

    def __init__(self, size=512):
        self.size = size
        self.store = {}

    def get(self, dkey, bh, domain, width_cap):
        key = (dkey, bh.key(), width_cap)
        dp = self.store.pop(key, None)
        if dp is None:
            dp = ProfileDP(domain, bh, width_cap)
        self.store[key] = dp
        while len(self.store) > self.size:
            self.store.pop(next(iter(self.store)))
        return dp


_DPCache = _DPCacheType()


def dp_width(domain, bh=None):
    """Width the DP would need, without building it."""
    if bh is None:
        bh = boundary_height(domain)
    dp = ProfileDP.__new__(ProfileDP)
    dp.domain, dp.bh = domain, bh
    dp.order = _vertex_order(domain)
    dp._plan()
    return dp.width


def count_tilings(domain, bh=None, width_cap=DEFAULT_WIDTH_CAP):
    return build_dp(domain, bh, width_cap).total


def enumerate_all(domain, bh=None, cap=DEFAULT_ENUM_CAP, width_cap=DEFAULT_WIDTH_CAP):
    dp = build_dp(domain, bh, width_cap)
    if dp.total > cap:
        raise CapacityError(f"{dp.total} height functions exceed the enumeration cap {cap}")
    return [HeightFunction(domain, v) for v in dp.iter_values()]


def exact_sample(domain, bh=None, rng=None, width_cap=DEFAULT_WIDTH_CAP):
    return build_dp(domain, bh, width_cap).sample(rng)


def state_table(domain, bh=None, cap=DEFAULT_ENUM_CAP):
    """Enumerated states as a 2D array of flat heights plus a key -> index map."""
    states = enumerate_all(domain, bh, cap)
    mat = np.stack([h.flat for h in states])
    index = {row.tobytes(): i for i, row in enumerate(mat)}
    return mat, index


def state_indices(mat_or_index, samples):
    """Index of each sample row in an enumerated state table (-1 if absent)."""
    index = mat_or_index
    samples = np.ascontiguousarray(samples, dtype=np.int64)
    return np.array([index.get(row.tobytes(), -1) for row in samples], dtype=np.int64)


def tv_from_counts(counts, outside=0):
    counts = np.asarray(counts, dtype=float)
    N = counts.sum() + outside
    if N <= 0:
        raise InvalidArgument("total variation needs at least one draw")
    return 0.5 * (np.abs(counts / N - 1.0 / len(counts)).sum() + outside / N)


def stationary_tv(domain, sampler, N, rng=None, bh=None):
    """Empirical TV distance between N draws of ``sampler`` and uniform.

    ``sampler`` is either a callable taking an RngStream and returning a
    HeightFunction, or an array of flat height vectors (its first N rows are
    used).  N = 0 raises InvalidArgument.
    """
    if N <= 0:
        raise InvalidArgument("stationary_tv needs N >= 1")
    _, index = state_table(domain, bh)
    if callable(sampler):
        rng = as_stream(rng)
        rows = np.stack([sampler(rng.child(i)).flat for i in range(N)])
    else:
        rows = np.asarray(sampler)[:N]
        if len(rows) < N:
            raise InvalidArgument("fewer samples than requested")
    idx = state_indices(index, rows)
    counts = np.bincount(idx[idx >= 0], minlength=len(index))
    return float(tv_from_counts(counts, outside=int((idx < 0).sum())))


@dataclass
class GibbsGroup:
    size: int
    fillings: int
    pvalue: float


@dataclass
class GibbsReport:
    samples: int
    groups: list = field(default_factory=list)
    alpha: float = 0.01

    @property
    def min_pvalue(self):
        ps = [g.pvalue for g in self.groups if g.fillings > 1]
        return min(ps) if ps else 1.0

    @property
    def passed(self):
        return all(g.pvalue > self.alpha for g in self.groups if g.fillings > 1)

    def to_json(self):
        return {"format": 1, "samples": self.samples, "passed": self.passed,
                "min_pvalue": self.min_pvalue,
                "groups": [{"size": g.size, "fillings": g.fillings, "pvalue": g.pvalue}
                           for g in self.groups]}


def conditional_gibbs_check(domain, strip, N, rng=None, bh=None, alpha=0.01, min_group=50):
    """Uniformity of the strip filling given everything outside the strip.

    ``strip`` is a sub-domain (or (xmin, xmax, ymin, ymax) rectangle).  Groups
    with fewer than ``min_group`` samples are skipped as too small for a
    chi-square test.
    """
    if N <= 0:
        raise InvalidArgument("conditional_gibbs_check needs N >= 1")
    if bh is None:
        bh = boundary_height(domain)
    if isinstance(strip, tuple):
        strip = domain.region_from_rect(*strip)
    rng = as_stream(rng)
    dp = build_dp(domain, bh)
    inner = strip.interior.ravel()
    outside = domain.mask.ravel() & ~inner
    groups = {}
    for i in range(N):
        flat = dp.sample_values(rng.child(i)).ravel()
        key = flat[outside].tobytes()
        groups.setdefault(key, []).append(flat)
    report = GibbsReport(samples=N, alpha=alpha)
    for rows in groups.values():
        rows = np.stack(rows)
        sub_bh = BoundaryHeightFn(strip, rows[0].reshape(domain.shape))
        fills, index = state_table(strip, sub_bh)
        k = len(fills)
        if k == 1:
            report.groups.append(GibbsGroup(len(rows), 1, 1.0))
            continue
        if len(rows) < min_group:
            continue
        masked = np.where(strip.mask.ravel(), rows, 0)
        idx = state_indices(index, masked)
        if np.any(idx < 0):
            raise InvalidArgument("a sample's strip filling is not a valid conditional state")
        counts = np.bincount(idx, minlength=k)
        p = float(stats.chisquare(counts).pvalue)
        report.groups.append(GibbsGroup(len(rows), k, p))
    return report


# ---------------------------------------------------------------------------
# Independent oracles (deliberately share no code with the DP above)

def macmahon(a, b, c):
    """Number of boxed plane partitions in an a x b x c box."""
    out = Fraction(1)
    for i in range(1, a + 1):
        for j in range(1, b + 1):
            for k in range(1, c + 1):
                out *= Fraction(i + j + k - 1, i + j + k - 2)
    assert out.denominator == 1
    return int(out.numerator)


def count_matchings_bruteforce(domain):
    """Perfect matchings of the dual graph (faces adjacent across an edge)."""
    ups = {tuple(p) for p in np.argwhere(domain.up_faces).tolist()}
    downs = {tuple(p) for p in np.argwhere(domain.down_faces).tolist()}

    def partners(up):
        x, y = up
        # up face (x,y) borders down faces (x,y-1), (x+1,y), (x,y)
        return [(x, y - 1), (x + 1, y), (x, y)]

    ups_sorted = sorted(ups)

    @lru_cache(maxsize=None)
    def rec(i, used):
        if i == len(ups_sorted):
            return 1
        total = 0
        for dn in partners(ups_sorted[i]):
            if dn in downs and dn not in used:
                total += rec(i + 1, used | frozenset([dn]))
        return total

    if len(ups) != len(downs):
        return 0
    return rec(0, frozenset())


def enumerate_heights_bruteforce(domain, bh=None):
    """All valid height functions by plain backtracking over interior vertices."""
    if bh is None:
        bh = boundary_height(domain)
    from .lattice import extremal_heights
    lo, hi = extremal_heights(domain, bh)
    vals = np.where(domain.mask, lo.values, 0)
    free = list(zip(*np.nonzero(domain.interior)))
    nx, ny = domain.shape
    m = domain.mask
    out = []

    rules = ((1, 0), (0, -1), (1, 1))

    def ok_at(ix, iy, assigned):
        for dx, dy in rules:
            for sgn in (1, -1):
                jx, jy = ix + sgn * dx, iy + sgn * dy
                if 0 <= jx < nx and 0 <= jy < ny and m[jx, jy] and assigned[jx, jy]:
                    diff = (vals[jx, jy] - vals[ix, iy]) * sgn
                    if diff not in (0, 1):
                        return False
        return True

    assigned = domain.boundary.copy()

    def rec(i):
        if i == len(free):
            out.append(HeightFunction(domain, vals))
            return
        ix, iy = free[i]
        for h in range(lo.values[ix, iy], hi.values[ix, iy] + 1):
            vals[ix, iy] = h
            if ok_at(ix, iy, assigned):
                assigned[ix, iy] = True
                rec(i + 1)
                assigned[ix, iy] = False

    if not free:
        return [HeightFunction(domain, np.where(m, bh.values, 0))]
    rec(0)
    return out
