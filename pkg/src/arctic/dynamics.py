"""Markov dynamics on height functions with fixed boundary values.

All chains are driven by heat-bath moves (vertex v, coin c): c = 1 sets H(v)
to the largest admissible value and c = 0 to the smallest.  Because an interior
vertex is never both increasable and decreasable, one move with a fair coin is
the random flip: a flippable vertex changes with probability 1/2, anything
else stays put.  Shared moves preserve pointwise order (monotone coupling).
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .enumeration import DEFAULT_WIDTH_CAP, build_dp, dp_width, state_table
from .errors import CapacityError, InvalidArgument, PreconditionError
from .lattice import BoundaryHeightFn, boundary_height, extremal_heights
from .rng import as_stream
from .tiling import HeightFunction

CHUNK = 1 << 20


# ---------------------------------------------------------------------------
# single flips

def _local_bounds(H, x, y):
    d = H.domain
    if not d.is_interior(x, y):
        raise InvalidArgument(f"({x}, {y}) is not an interior vertex")
    g = H.values
    ix, iy = x - d.x0, y - d.y0
    w, e = g[ix - 1, iy], g[ix + 1, iy]
    n, s = g[ix, iy + 1], g[ix, iy - 1]
    ne, sw = g[ix + 1, iy + 1], g[ix - 1, iy - 1]
    lo = max(w, n, sw, e - 1, s - 1, ne - 1)
    hi = min(w + 1, n + 1, sw + 1, e, s, ne)
    return int(lo), int(hi), int(g[ix, iy])


def flip_candidates(H, v):
    """'up', 'down' or None for the interior vertex v = (x, y)."""
    lo, hi, h = _local_bounds(H, *v)
    if h < hi:
        return "up"
    if h > lo:
        return "down"
    return None


def random_flip(H, v, coin):
    """Apply the random flip at v; ``coin`` truthy means the flip is accepted."""
    kind = flip_candidates(H, v)
    out = H.copy()
    if coin and kind == "up":
        out[v] = out[v] + 1
    elif coin and kind == "down":
        out[v] = out[v] - 1
    return out


def heat_bath_move(H, v, coin):
    """The kernel's move: coin 1 raises to the max, coin 0 lowers to the min."""
    lo, hi, _ = _local_bounds(H, *v)
    out = H.copy()
    out[v] = hi if coin else lo
    return out


def _color_order(domain, sites=None):
    sites = domain.flat_interior if sites is None else np.asarray(sites, dtype=np.int64)
    x, y = domain.coords(sites)
    return np.concatenate([sites[(x + y) % 3 == c] for c in range(3)]).astype(np.int64)


def _run_moves(flat, ny, sites, steps, rng):
    """``steps`` random-site moves on ``flat`` using consecutive raw words of rng."""
    done = 0
    while done < steps:
        m = min(CHUNK, steps - done)
        kernels.apply_draws(flat, ny, sites, rng.raw(m))
        done += m


def run_flip_dynamics(H0, steps, rng=None, sites=None):
    """Flip dynamics: ``steps`` flips at uniformly random interior vertices."""
    steps = int(steps)
    if steps < 0:
        raise InvalidArgument("steps must be non-negative")
    d = H0.domain
    sites = d.flat_interior if sites is None else np.asarray(sites, dtype=np.int64)
    H = H0.copy()
    if steps == 0 or len(sites) == 0:
        return H
    rng = as_stream(rng)
    flat = H.flat
    _run_moves(flat, d.ny, sites, steps, rng)
    return H


def run_sweeps(H0, sweeps, rng=None):
    """Systematic colour-class heat-bath sweeps (a faster stationary chain).

    Each sweep visits every interior vertex once, colour class by colour
    class, with an independent fair coin per visit.
    """
    d = H0.domain
    order = _color_order(d)
    H = H0.copy()
    if sweeps <= 0 or len(order) == 0:
        return H
    rng = as_stream(rng)
    hs = H.flat[None, :].copy()
    _sweep_chunks(hs, d.ny, order, int(sweeps), rng)
    return HeightFunction.from_flat(d, hs[0])


def _sweep_chunks(hs, ny, order, sweeps, rng, chunk=None):
    per = max(1, (chunk or CHUNK * 8) // max(1, len(order)))
    bad = 0
    done = 0
    while done < sweeps:
        k = min(per, sweeps - done)
        words = rng.raw((k * len(order) + 63) // 64)
        bad += kernels.sweep_words(hs, ny, order, words, k)
        done += k
    return bad


# ---------------------------------------------------------------------------
# region decompositions and schedules

@dataclass
class RegionDecomposition:
    parent: object
    regions: list

    def __post_init__(self):
        if not self.regions:
            raise InvalidArgument("a decomposition needs at least one region")
        union = np.zeros(self.parent.shape, dtype=bool)
        covered = np.zeros(self.parent.shape, dtype=bool)
        for i, r in enumerate(self.regions):
            if r.shape != self.parent.shape or (r.x0, r.y0) != (self.parent.x0, self.parent.y0):
                raise InvalidArgument("regions must share the parent's bounding box")
            if np.any(r.mask & ~self.parent.mask):
                raise InvalidArgument(f"region {i + 1} leaves the parent domain")
            if not r.interior.any():
                raise InvalidArgument(f"region {i + 1} has an empty interior")
            union |= r.mask
            covered |= r.interior
        if not np.array_equal(union, self.parent.mask):
            raise InvalidArgument("regions do not cover the parent domain")
        if np.any(self.parent.interior & ~covered):
            raise InvalidArgument("some interior vertex is interior to no region")

    @property
    def k(self):
        return len(self.regions)

    def sites(self, i):
        """Flat interior vertices of region i (1-based, as in the schedules)."""
        return self.regions[i - 1].flat_interior

    def region_of_block(self, s):
        return (s - 1) % self.k + 1

    def probabilities(self):
        """p_i proportional to the interior size of region i, normalized to sum 1.

        With overlapping regions the raw ratios |R_i interior| / |R interior|
        sum to more than one; they are rescaled.
        """
        sizes = np.array([len(r.flat_interior) for r in self.regions], dtype=float)
        return sizes / sizes.sum()

    @classmethod
    def halves(cls, domain, axis="x", overlap=1):
        """Two overlapping halves cut perpendicular to ``axis``."""
        ix, iy = np.indices(domain.shape)
        coord = (ix + domain.x0) if axis == "x" else (iy + domain.y0)
        lo = int(coord[domain.mask].min())
        hi = int(coord[domain.mask].max())
        mid = (lo + hi) // 2
        first = domain.subdomain(coord <= mid + overlap)
        second = domain.subdomain(coord >= mid - overlap)
        return cls(domain, [first, second])

    @classmethod
    def whole(cls, domain):
        return cls(domain, [domain])


@dataclass
class CensorSchedule:
    p: np.ndarray
    X: list = field(default_factory=list)

    @property
    def k(self):
        return len(self.p)

    def increments(self):
        return np.diff(np.asarray(self.X))


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or len(p) == 0:
        raise InvalidArgument("p must be a non-empty vector")
    if np.any(p <= 0):
        raise InvalidArgument("every region needs positive probability (non-empty interior)")
    if abs(p.sum() - 1) > 1e-9:
        raise InvalidArgument("probabilities must sum to 1")
    return p


def censor_sequence(p, length, rng=None):
    """Scheduled blocks X_1 < X_2 < ... of the censored dynamics.

    X_1 = i with probability p_i.  Given X_r, the next increment i in [1, k]
    has probability p_j where j is the region of block X_r + i, i.e.
    j = ((X_r + i - 1) mod k) + 1.  So each scheduled block picks its region
    from p independently and lands on the first later block of that region.
    """
    p = _check_p(p)
    k = len(p)
    rng = as_stream(rng)
    regions = rng.gen.choice(k, size=int(length), p=p) + 1
    X = []
    for r, j in enumerate(regions.tolist()):
        if r == 0:
            X.append(j)
        else:
            prev = X[-1]
            cur = (prev - 1) % k + 1
            step = (j - cur - 1) % k + 1
            X.append(prev + step)
    return CensorSchedule(p, X)


def run_region_flip(H0, regions, block_len, total, rng=None):
    """Blocks of ``block_len`` flips; block s only touches region ((s-1) mod k)+1."""
    block_len, total = int(block_len), int(total)
    if block_len < 1 or total < 0:
        raise InvalidArgument("block_len must be positive and total non-negative")
    rng = as_stream(rng)
    H = H0.copy()
    flat = H.flat
    ny = H0.domain.ny
    done, s = 0, 1
    while done < total:
        m = min(block_len, total - done)
        _run_moves(flat, ny, regions.sites(regions.region_of_block(s)), m, rng)
        done += m
        s += 1
    return H


def run_censored(H0, regions, schedule, rng=None, block_len=1, total=None):
    """One flip at the first step of each scheduled block, idle otherwise.

    With ``total`` steps only blocks s with (s-1)*block_len + 1 <= total fire;
    by default every block of the schedule fires.
    """
    rng = as_stream(rng)
    H = H0.copy()
    flat = H.flat
    ny = H0.domain.ny
    fired = [s for s in schedule.X if total is None or (s - 1) * block_len + 1 <= total]
    if not fired:
        return H
    draws = rng.raw(len(fired))
    for s, r in zip(fired, draws):
        kernels.apply_draws(flat, ny, regions.sites(regions.region_of_block(s)),
                            np.array([r], dtype=np.uint64))
    return H


def _induced_boundary(H, region):
    return BoundaryHeightFn(region, H.values)


def alternating_step(H, regions, i, rng=None, width_cap=DEFAULT_WIDTH_CAP, nested_cap=10 ** 8):
    """Resample region i uniformly given the current values on its boundary.

    Exact (frontier DP) when the region's DP width is at most ``width_cap``;
    otherwise nested flip dynamics on the region for
    min(flip_mixing_budget(region, 1/n^3), nested_cap) steps.
    """
    rng = as_stream(rng)
    region = regions.regions[i - 1]
    bh = _induced_boundary(H, region)
    out = H.copy()
    if dp_width(region, bh) <= width_cap:
        vals = build_dp(region, bh, width_cap).sample_values(rng)
        out.values[region.mask] = vals[region.mask]
        return out
    n = max(2, H.domain.n)
    steps = min(flip_mixing_budget(region, 1.0 / n ** 3), nested_cap)
    return run_flip_dynamics(out, steps, rng, sites=region.flat_interior)


def run_alternating(H0, regions, steps, rng=None, **kw):
    rng = as_stream(rng)
    H = H0
    for t in range(1, int(steps) + 1):
        H = alternating_step(H, regions, (t - 1) % regions.k + 1, rng.child(t), **kw)
    return H.copy() if H is H0 else H


# ---------------------------------------------------------------------------
# grand coupling and perfect sampling

def _check_order(Hs):
    for a, b in zip(Hs[:-1], Hs[1:]):
        if a.domain.shape != b.domain.shape or not np.array_equal(a.domain.mask, b.domain.mask):
            raise PreconditionError("coupled copies must live on the same domain")
        if np.any(a.values < b.values):
            raise PreconditionError("coupled inputs must be pointwise nonincreasing")


def grand_coupling_run(Hs, steps, rng=None, return_violations=False):
    """Run ordered copies H_1 >= H_2 >= ... with shared (vertex, coin) moves."""
    Hs = list(Hs)
    _check_order(Hs)
    d = Hs[0].domain
    rng = as_stream(rng)
    stack = np.stack([h.flat for h in Hs]).copy()
    bad = 0
    done = 0
    while done < steps:
        m = min(CHUNK, int(steps) - done)
        bad += kernels.coupled_draws(stack, d.ny, d.flat_interior, rng.raw(m))
        done += m
    out = [HeightFunction.from_flat(d, row) for row in stack]
    return (out, int(bad)) if return_violations else out


def _segment(stack, domain, engine, length, rng, order):
    if engine == "flip":
        done = 0
        while done < length:
            m = min(CHUNK, length - done)
            kernels.coupled_draws(stack, domain.ny, domain.flat_interior, rng.raw(m))
            done += m
    else:
        _sweep_chunks(stack, domain.ny, order, length, rng)


def _unit(engine, domain):
    """Moves per time unit: one sweep-equivalent of the interior."""
    return len(domain.flat_interior) if engine == "flip" else 1


def coalescence_time(domain, bh=None, rng=None, engine="sweep", check_every=None):
    """Forward coupling time of the extremal pair (in sweeps, rounded up to the check period)."""
    if bh is None:
        bh = boundary_height(domain)
    lo, hi = extremal_heights(domain, bh)
    rng = as_stream(rng)
    stack = np.stack([hi.flat, lo.flat]).copy()
    order = _color_order(domain)
    unit = _unit(engine, domain)
    if check_every is None:
        check_every = max(1, domain.nx // 4)
    t = 0
    while not np.array_equal(stack[0], stack[1]):
        _segment(stack, domain, engine, check_every * unit, rng.child(t // check_every), order)
        t += check_every
    return t


def coupling_budget(domain, bh=None, eps=0.01, runs=10, rng=None, engine="sweep", safety=1.5):
    """Run length (in sweeps) after which the chain is eps-close to uniform.

    For a monotone chain P(tau > T) bounds the distance to stationarity from
    any start, where tau is the coupling time of the extremal pair.  The
    budget is ``safety`` times the empirical (1 - eps) quantile of tau.
    """
    rng = as_stream(rng)
    times = np.array([coalescence_time(domain, bh, rng.child(r), engine) for r in range(runs)])
    q = float(np.quantile(times, 1 - eps, method="higher"))
    return int(math.ceil(safety * q)), times


@dataclass
class CFTPResult:
    sample: HeightFunction
    lookback: int
    engine: str


def cftp_sample(domain, bh=None, rng=None, engine="sweep", t0=None):
    """Perfect sample by coupling from the past with the extremal pair.

    Segment j covers times [-T_j, -T_{j-1}) with T_j = t0 * 2^j; its randomness
    comes from the child stream j and is reused on every restart.
    """
    if bh is None:
        bh = boundary_height(domain)
    lo, hi = extremal_heights(domain, bh)
    if len(domain.flat_interior) == 0 or np.array_equal(lo.values, hi.values):
        return CFTPResult(lo, 0, engine)
    rng = as_stream(rng)
    order = _color_order(domain)
    unit = _unit(engine, domain)
    t0 = int(t0 or max(4, domain.nx))
    j = 0
    while True:
        stack = np.stack([hi.flat, lo.flat]).copy()
        for seg in range(j, -1, -1):
            length = t0 if seg == 0 else t0 * (1 << (seg - 1))
            _segment(stack, domain, engine, length * unit, rng.child(seg), order)
        if np.array_equal(stack[0], stack[1]):
            return CFTPResult(HeightFunction.from_flat(domain, stack[0]), t0 * (1 << j), engine)
        j += 1


def budget_sample(domain, bh=None, sweeps=None, rng=None, start="max"):
    """Forward run of the sweep chain from an extremal state."""
    if bh is None:
        bh = boundary_height(domain)
    lo, hi = extremal_heights(domain, bh)
    H0 = hi if start == "max" else lo
    return run_sweeps(H0, sweeps, rng)


# ---------------------------------------------------------------------------
# budgets

def lattice_diameter(domain):
    return domain.diameter()


def flip_mixing_budget(domain=None, eps=0.01, C=8.0, A=None):
    """C A^4 log A + C A^3 log A log(1/eps) with A = ceil(diam)^2."""
    if not 0 < eps < 1:
        raise InvalidArgument("eps must lie in (0, 1)")
    if A is None:
        A = math.ceil(lattice_diameter(domain)) ** 2
    if A <= 1:
        return 1
    L = math.log(A)
    return int(math.ceil(C * A ** 4 * L + C * A ** 3 * L * math.log(1 / eps)))


def alternating_mixing_budget(domain=None, diam=None):
    if diam is None:
        diam = lattice_diameter(domain)
    A = math.ceil(diam) ** 2
    return int(A ** 6)


# ---------------------------------------------------------------------------
# exact transition operators on enumerated state spaces (desk-scale budgets)

def flip_operator(domain, states, index, sites=None):
    """Transition matrix of one random-site flip on the enumerated states."""
    sites = domain.flat_interior if sites is None else np.asarray(sites)
    S = len(states)
    P = np.zeros((S, S))
    w = 1.0 / (2 * len(sites))
    for a in range(S):
        for v in sites.tolist():
            for c in (0, 1):
                row = states[a].copy()
                kernels.apply_moves(row, domain.ny, np.array([v], dtype=np.int64),
                                    np.array([c], dtype=np.uint8))
                P[a, index[row.tobytes()]] += w
    return P


def resample_operator(domain, region, states, index):
    """Uniform resampling of ``region`` given everything outside its interior."""
    S = len(states)
    P = np.zeros((S, S))
    inner = region.interior.ravel()
    groups = {}
    for a in range(S):
        groups.setdefault(states[a][~inner].tobytes(), []).append(a)
    for members in groups.values():
        P[np.ix_(members, members)] = 1.0 / len(members)
    return P


def tv_rows(D):
    """Worst-case distance to uniform over the rows of a distribution matrix."""
    S = D.shape[1]
    return float(0.5 * np.abs(D - 1.0 / S).sum(axis=1).max())


def exact_mixing_time(operators, eps, max_steps=10 ** 6):
    """Smallest t with max_x TV(P_1 ... P_t (x, .), uniform) <= eps.

    ``operators`` is a matrix or a list applied cyclically.
    """
    ops = operators if isinstance(operators, list) else [operators]
    S = ops[0].shape[0]
    D = np.eye(S)
    for t in range(1, max_steps + 1):
        D = D @ ops[(t - 1) % len(ops)]
        if tv_rows(D) <= eps:
            return t
    raise CapacityError("mixing time exceeds max_steps")


def censored_law(domain, regions, states, index, block_len, blocks, start):
    """Exact law of the censored chain after ``blocks`` blocks from state ``start``.

    Tracks (H, d) with d the number of blocks until the next scheduled one;
    block_len does not change the law (a block fires at most one flip).
    """
    k = regions.k
    p = regions.probabilities()
    P = [flip_operator(domain, states, index, regions.sites(i)) for i in range(1, k + 1)]
    S = len(states)
    # law[d] = row vector over states with next scheduled block d blocks ahead
    law = np.zeros((k, S))
    for i in range(k):
        law[i, start] = p[i]  # X_1 = i + 1, so d = i
    for s in range(1, blocks + 1):
        nxt = np.zeros_like(law)
        nxt[:-1] = law[1:]
        fired = law[0] @ P[regions.region_of_block(s) - 1]
        cur = regions.region_of_block(s)
        for j in range(1, k + 1):
            step = (j - cur - 1) % k + 1
            nxt[step - 1] += p[j - 1] * fired
        law = nxt
    return law.sum(axis=0)


def censored_mixing_time(domain, regions, states, index, eps, max_blocks=10 ** 5):
    S = len(states)
    best = None
    for blocks in range(1, max_blocks + 1):
        worst = 0.0
        for start in range(S):
            mu = censored_law(domain, regions, states, index, 1, blocks, start)
            worst = max(worst, 0.5 * np.abs(mu - 1.0 / S).sum())
            if worst > eps:
                break
        if worst <= eps:
            best = blocks
            break
    if best is None:
        raise CapacityError("censored mixing time exceeds max_blocks")
    return best


# ---------------------------------------------------------------------------
# many independent chains at once (desk-scale stationarity checks)

def batch_flip(states0, domain, steps, rng, sites=None):
    """Run independent flip chains, one per row of ``states0``."""
    sites = domain.flat_interior if sites is None else np.asarray(sites, dtype=np.int64)
    H = np.ascontiguousarray(states0, dtype=np.int64).copy()
    M = len(H)
    rows_per = max(1, CHUNK // max(1, steps))
    for a in range(0, M, rows_per):
        b = min(M, a + rows_per)
        draws = rng.child(a).raw((b - a) * steps).reshape(b - a, steps)
        sub = np.ascontiguousarray(H[a:b])
        kernels.batch_draws(sub, domain.ny, sites, draws)
        H[a:b] = sub
    return H


def batch_region_flip(states0, regions, block_len, total, rng):
    H = np.ascontiguousarray(states0, dtype=np.int64).copy()
    done, s = 0, 1
    while done < total:
        m = min(block_len, total - done)
        H = batch_flip(H, regions.parent, m, rng.child(s), regions.sites(regions.region_of_block(s)))
        done += m
        s += 1
    return H


def batch_censored(states0, regions, blocks, rng):
    """Independent censored chains for ``blocks`` blocks (one flip per scheduled block)."""
    H = np.ascontiguousarray(states0, dtype=np.int64).copy()
    M = len(H)
    k = regions.k
    p = regions.probabilities()
    gen = rng.child(0).gen
    d = gen.choice(k, size=M, p=p)  # X_1 - 1
    for s in range(1, blocks + 1):
        fire = np.nonzero(d == 0)[0]
        d[d > 0] -= 1
        if len(fire):
            cur = regions.region_of_block(s)
            sub = np.ascontiguousarray(H[fire])
            draws = rng.child(s).raw(len(fire)).reshape(-1, 1)
            kernels.batch_draws(sub, regions.parent.ny, regions.sites(cur), draws)
            H[fire] = sub
            j = gen.choice(k, size=len(fire), p=p) + 1
            d[fire] = (j - cur - 1) % k  # next block is (j - cur - 1) % k + 1 ahead
    return H


def batch_alternating(states0, regions, steps, rng, cap=10 ** 5):
    """Independent alternating chains with exact conditional resampling."""
    H = np.ascontiguousarray(states0, dtype=np.int64).copy()
    parent = regions.parent
    for t in range(1, steps + 1):
        i = (t - 1) % regions.k + 1
        region = regions.regions[i - 1]
        inner = region.interior.ravel()
        keys = {}
        for a, row in enumerate(H):
            keys.setdefault(row[~inner].tobytes(), []).append(a)
        gen = rng.child(t).gen
        for members in keys.values():
            bh = BoundaryHeightFn(region, H[members[0]].reshape(parent.shape))
            fills, _ = state_table(region, bh, cap)
            pick = gen.integers(len(fills), size=len(members))
            H[np.ix_(members, np.nonzero(inner)[0])] = fills[pick][:, inner]
    return H


DYNAMICS = ("flip", "region", "censored", "alternating")


@dataclass
class StationarityReport:
    dynamics: str
    budget: int          # steps (flip, region, alternating) or blocks (censored)
    budget_eps: float
    N: int
    tv: float
    states: int

    def to_json(self):
        return {"format": 1, "dynamics": self.dynamics, "budget": self.budget,
                "budget_eps": self.budget_eps, "N": self.N, "tv": self.tv, "states": self.states}


def stationarity_check(domain, dynamics, N, rng=None, regions=None, budget_eps=0.005, budget=None,
                       start="max"):
    """Empirical TV to uniform of N independent chains run for their exact budget.

    The budget is the exact worst-start mixing time to ``budget_eps``
    computed on the enumerated state space (desk-scale domains only), unless
    given.  Regions default to two overlapping halves of the domain.
    """
    from .enumeration import tv_from_counts, state_indices

    if dynamics not in DYNAMICS:
        raise InvalidArgument(f"unknown dynamics {dynamics!r}; expected one of {DYNAMICS}")
    if N <= 0:
        raise InvalidArgument("the draw count N must be positive")
    rng = as_stream(rng)
    bh = boundary_height(domain)
    states, index = state_table(domain, bh)
    if regions is None:
        regions = RegionDecomposition.halves(domain)
    if budget is None:
        if dynamics == "flip":
            budget = exact_mixing_time(flip_operator(domain, states, index), budget_eps)
        elif dynamics == "region":
            ops = [flip_operator(domain, states, index, regions.sites(i)) for i in range(1, regions.k + 1)]
            budget = exact_mixing_time(ops, budget_eps)
        elif dynamics == "alternating":
            ops = [resample_operator(domain, r, states, index) for r in regions.regions]
            budget = exact_mixing_time(ops, budget_eps)
        else:
            budget = censored_mixing_time(domain, regions, states, index, budget_eps)
    lo, hi = extremal_heights(domain, bh)
    H0 = (hi if start == "max" else lo).flat
    init = np.tile(H0, (N, 1))
    if dynamics == "flip":
        out = batch_flip(init, domain, budget, rng)
    elif dynamics == "region":
        out = batch_region_flip(init, regions, 1, budget, rng)
    elif dynamics == "alternating":
        out = batch_alternating(init, regions, budget, rng)
    else:
        out = batch_censored(init, regions, budget, rng)
    idx = state_indices(index, out)
    counts = np.bincount(idx[idx >= 0], minlength=len(index))
    tv = float(tv_from_counts(counts, outside=int((idx < 0).sum())))
    return StationarityReport(dynamics, int(budget), float(budget_eps), int(N), tv, len(states))
