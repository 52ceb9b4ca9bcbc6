"""Height functions, lozenge tilings and Bernoulli walk ensembles.

A height function H obeys H(v) - H(u) in {0, 1} whenever u = (x, y) and
v is (x+1, y), (x, y-1) or (x+1, y+1).  Across every unit triangle exactly one
of the three edges deviates from the "normal" increments (+1 horizontal, 0
vertical, 0 diagonal); that edge is the interior diagonal of the lozenge
covering the triangle, and its direction gives the lozenge type:

* type 1: horizontal edge (x, y)-(x+1, y) with increment 0
* type 2: vertical edge (x, y)-(x, y+1) with H(x, y) - H(x, y+1) = 1
* type 3: diagonal edge (x, y)-(x+1, y+1) with increment 1
"""
import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, ValidationError


class HeightFunction:
    """Integer heights over a domain, stored densely on its bounding box."""

    __slots__ = ("domain", "values")

    def __init__(self, domain, values):
        self.domain = domain
        values = np.array(values, dtype=np.int64)
        if values.shape != domain.shape:
            raise InvalidArgument("height array must match the domain bounding box")
        values[~domain.mask] = 0
        self.values = values

    @classmethod
    def from_flat(cls, domain, flat):
        return cls(domain, np.asarray(flat, dtype=np.int64).reshape(domain.shape))

    def copy(self):
        return HeightFunction(self.domain, self.values.copy())

    @property
    def flat(self):
        return self.values.reshape(-1)

    def __getitem__(self, xy):
        x, y = xy
        if not self.domain.contains(x, y):
            raise KeyError(xy)
        return int(self.values[x - self.domain.x0, y - self.domain.y0])

    def __setitem__(self, xy, value):
        x, y = xy
        if not self.domain.contains(x, y):
            raise KeyError(xy)
        self.values[x - self.domain.x0, y - self.domain.y0] = value

    def key(self):
        return self.values[self.domain.mask].tobytes()

    def __eq__(self, other):
        return (isinstance(other, HeightFunction) and other.domain.shape == self.domain.shape
                and np.array_equal(other.domain.mask, self.domain.mask)
                and np.array_equal(other.values, self.values))

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return f"HeightFunction({self.domain!r})"

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# format: 1\n")
            w = csv.writer(fh)
            w.writerow(["x", "y", "H"])
            for x, y in self.domain.vertices():
                w.writerow([x, y, self[x, y]])

    @classmethod
    def from_csv(cls, domain, path):
        vals = np.zeros(domain.shape, dtype=np.int64)
        seen = np.zeros(domain.shape, dtype=bool)
        with open(path, newline="") as fh:
            for row in csv.DictReader(line for line in fh if not line.startswith("#")):
                x, y = int(row["x"]), int(row["y"])
                if not domain.contains(x, y):
                    raise InvalidArgument(f"vertex ({x}, {y}) is not in the domain")
                vals[x - domain.x0, y - domain.y0] = int(row["H"])
                seen[x - domain.x0, y - domain.y0] = True
        if not np.array_equal(seen, domain.mask):
            raise InvalidArgument("height CSV does not cover every domain vertex")
        return cls(domain, vals)


@dataclass(frozen=True)
class Violation:
    u: tuple
    v: tuple
    rule: str
    diff: int

    def __str__(self):
        return f"{self.rule}: H{self.v} - H{self.u} = {self.diff}"


# (dx, dy, rule) for the three edge directions, oriented so H(v) - H(u) in {0,1}
_RULES = ((1, 0, "east"), (0, -1, "south"), (1, 1, "northeast"))


def validate_height(H, bh=None, check_boundary=True):
    """List every increment-rule violation and boundary mismatch of H."""
    d = H.domain
    m, vals = d.mask, H.values
    out = []
    for dx, dy, rule in _RULES:
        ix, iy = np.nonzero(m)
        jx, jy = ix + dx, iy + dy
        ok = (jx >= 0) & (jx < d.nx) & (jy >= 0) & (jy < d.ny)
        ix, iy, jx, jy = ix[ok], iy[ok], jx[ok], jy[ok]
        inside = m[jx, jy]
        ix, iy, jx, jy = ix[inside], iy[inside], jx[inside], jy[inside]
        diff = vals[jx, jy] - vals[ix, iy]
        bad = (diff < 0) | (diff > 1)
        for a, b, c, e, df in zip(ix[bad], iy[bad], jx[bad], jy[bad], diff[bad]):
            out.append(Violation((int(a) + d.x0, int(b) + d.y0), (int(c) + d.x0, int(e) + d.y0),
                                 rule, int(df)))
    if check_boundary:
        if bh is None:
            from .lattice import boundary_height
            from .errors import Untileable
            try:
                bh = boundary_height(d)
            except Untileable:
                bh = None
        if bh is not None:
            bad = d.boundary & (vals != bh.values)
            for a, b in zip(*np.nonzero(bad)):
                out.append(Violation((int(a) + d.x0, int(b) + d.y0), (int(a) + d.x0, int(b) + d.y0),
                                     "boundary", int(vals[a, b] - bh.values[a, b])))
    return out


def require_valid(H, bh=None):
    bad = validate_height(H, bh)
    if bad:
        raise ValidationError(f"invalid height function: {bad[0]}", bad)
    return H


@dataclass
class Tiling:
    """A lozenge tiling, stored by the interior edge of each lozenge.

    ``types[k][ix, iy]`` is True when the edge of direction k+1 starting at
    array index (ix, iy) is the interior diagonal of a lozenge of type k+1.
    """

    domain: object
    types: tuple = field(default=None)

    def lozenges(self):
        """List of (type, base vertex) with the lowest-left lozenge vertex as base."""
        d = self.domain
        out = []
        offsets = {1: (0, -1), 2: (-1, 0), 3: (0, 0)}
        for k in (1, 2, 3):
            ox, oy = offsets[k]
            for ix, iy in zip(*np.nonzero(self.types[k - 1])):
                out.append((k, (int(ix) + d.x0 + ox, int(iy) + d.y0 + oy)))
        return sorted(out)

    def face_pairs(self):
        """Map (up face base, down face base) -> lozenge type."""
        d = self.domain
        out = {}
        for ix, iy in zip(*np.nonzero(self.types[0])):
            out[((ix + d.x0, iy + d.y0), (ix + d.x0, iy + d.y0 - 1))] = 1
        for ix, iy in zip(*np.nonzero(self.types[1])):
            out[((ix + d.x0 - 1, iy + d.y0), (ix + d.x0, iy + d.y0))] = 2
        for ix, iy in zip(*np.nonzero(self.types[2])):
            out[((ix + d.x0, iy + d.y0), (ix + d.x0, iy + d.y0))] = 3
        return {(tuple(map(int, a)), tuple(map(int, b))): t for (a, b), t in out.items()}

    def counts(self):
        return tuple(int(t.sum()) for t in self.types)

    def __eq__(self, other):
        return (isinstance(other, Tiling)
                and all(np.array_equal(a, b) for a, b in zip(self.types, other.types)))


def _check_matching(domain, t1, t2, t3):
    """Every face must be covered exactly once by the three lozenge families."""
    nx, ny = domain.shape
    up_cover = np.zeros((nx, ny), dtype=np.int64)
    dn_cover = np.zeros((nx, ny), dtype=np.int64)
    # type 1 at (ix, iy): up face (ix, iy), down face (ix, iy-1)
    up_cover += t1
    dn_cover[:, :-1] += t1[:, 1:]
    stray = int(t1[:, 0].sum())
    # type 2 at (ix, iy): up face (ix-1, iy), down face (ix, iy)
    up_cover[:-1, :] += t2[1:, :]
    dn_cover += t2
    stray += int(t2[0, :].sum())
    # type 3 at (ix, iy): up face (ix, iy), down face (ix, iy)
    up_cover += t3
    dn_cover += t3
    problems = []
    if stray:
        problems.append("lozenge leaves the bounding box")
    if np.any(up_cover[domain.up_faces] != 1) or np.any(dn_cover[domain.down_faces] != 1):
        problems.append("some face is not covered exactly once")
    if np.any(up_cover[~domain.up_faces]) or np.any(dn_cover[~domain.down_faces]):
        problems.append("a lozenge covers a face outside the domain")
    return problems


def height_to_tiling(H, bh=None):
    bad = validate_height(H, bh, check_boundary=bh is not None)
    if bad:
        raise ValidationError(f"invalid height function: {bad[0]}", bad)
    d = H.domain
    v = H.values
    up, dn = d.up_faces, d.down_faces
    nx, ny = d.shape
    t1 = np.zeros((nx, ny), dtype=bool)
    t2 = np.zeros((nx, ny), dtype=bool)
    t3 = np.zeros((nx, ny), dtype=bool)
    # a face's abnormal edge marks its lozenge; read it off the up faces and
    # the down faces separately and require agreement
    ux, uy = np.nonzero(up)
    if len(ux):
        a = v[ux, uy]
        b = v[ux + 1, uy]
        c = v[ux + 1, uy + 1]
        dh, dv, dd = b - a, b - c, c - a
        k1 = (dh == 0)
        k2 = (dv == 1)
        k3 = (dd == 1)
        t1[ux[k1], uy[k1]] = True
        t2[ux[k2] + 1, uy[k2]] = True
        t3[ux[k3], uy[k3]] = True
    dx_, dy_ = np.nonzero(dn)
    if len(dx_):
        a = v[dx_, dy_]
        b = v[dx_, dy_ + 1]
        c = v[dx_ + 1, dy_ + 1]
        # edges: vertical (a->b), horizontal (b->c), diagonal (a->c)
        k2 = (a - b == 1)
        k1 = (c - b == 0)
        k3 = (c - a == 1)
        t1[dx_[k1], dy_[k1] + 1] = True
        t2[dx_[k2], dy_[k2]] = True
        t3[dx_[k3], dy_[k3]] = True
    problems = _check_matching(d, t1, t2, t3)
    if problems:
        raise ValidationError("height function does not induce a tiling: " + "; ".join(problems),
                              problems)
    return Tiling(d, (t1, t2, t3))


def tiling_to_height(T, anchor=None, value=0):
    d = T.domain
    t1, t2, t3 = T.types
    problems = _check_matching(d, t1, t2, t3)
    if problems:
        raise ValidationError("not a tiling: " + "; ".join(problems), problems)
    if anchor is None:
        anchor = (0, 0) if d.contains(0, 0) else min(d.boundary_vertices())
    if not d.contains(*anchor):
        raise InvalidArgument(f"anchor {anchor} is not in the domain")
    nx, ny = d.shape
    up, dn = d.up_faces, d.down_faces

    def has(arr, i, j):
        return 0 <= i < nx and 0 <= j < ny and bool(arr[i, j])

    # adjacency with increments, only along edges bordering some face
    def edges_from(ix, iy):
        # horizontal to (ix+1, iy)
        if has(up, ix, iy) or has(dn, ix, iy - 1):
            yield (ix + 1, iy), 0 if t1[ix, iy] else 1
        if has(up, ix - 1, iy) or has(dn, ix - 1, iy - 1):
            yield (ix - 1, iy), 0 if t1[ix - 1, iy] else -1
        # vertical to (ix, iy+1); H drops by 1 across a type-2 edge
        if has(up, ix - 1, iy) or has(dn, ix, iy):
            yield (ix, iy + 1), -1 if t2[ix, iy] else 0
        if has(up, ix - 1, iy - 1) or has(dn, ix, iy - 1):
            yield (ix, iy - 1), 1 if t2[ix, iy - 1] else 0
        # diagonal to (ix+1, iy+1)
        if has(up, ix, iy) or has(dn, ix, iy):
            yield (ix + 1, iy + 1), 1 if t3[ix, iy] else 0
        if has(up, ix - 1, iy - 1) or has(dn, ix - 1, iy - 1):
            yield (ix - 1, iy - 1), -1 if t3[ix - 1, iy - 1] else 0

    vals = np.zeros((nx, ny), dtype=np.int64)
    seen = np.zeros((nx, ny), dtype=bool)
    start = (anchor[0] - d.x0, anchor[1] - d.y0)
    vals[start] = value
    seen[start] = True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w, dh in edges_from(*u):
            if not seen[w]:
                seen[w] = True
                vals[w] = vals[u] + dh
                queue.append(w)
            elif vals[w] != vals[u] + dh:
                raise ValidationError(f"tiling increments disagree at ({w[0] + d.x0}, {w[1] + d.y0})")
    if np.any(d.mask & ~seen):
        raise ValidationError("tiling does not reach every vertex from the anchor")
    return HeightFunction(d, vals)


class WalkEnsemble:
    """Non-intersecting Bernoulli walks stored slice by slice.

    ``slices[t]`` is a pair (positions, indices) of sorted int arrays: the x
    with H(x+1, t) = H(x, t) + 1 and their walk indices H(x+1, t).
    """

    def __init__(self, slices):
        self.slices = {int(t): (np.asarray(p, dtype=np.int64), np.asarray(i, dtype=np.int64))
                       for t, (p, i) in slices.items()}

    @property
    def times(self):
        return sorted(self.slices)

    def positions(self, t):
        return self.slices[t][0]

    def indices(self, t):
        return self.slices[t][1]

    def position(self, i, t):
        """x_i(t), or None when walk i is absent from slice t."""
        pos, idx = self.slices.get(t, (np.empty(0, np.int64), np.empty(0, np.int64)))
        k = np.searchsorted(idx, i)
        if k < len(idx) and idx[k] == i:
            return int(pos[k])
        return None

    def walk(self, i):
        out = {}
        for t in self.times:
            x = self.position(i, t)
            if x is not None:
                out[t] = x
        return out

    def index_range(self):
        allidx = [i for _, i in self.slices.values() if len(i)]
        if not allidx:
            return None
        cat = np.concatenate(allidx)
        return int(cat.min()), int(cat.max())

    def count(self, t):
        return len(self.slices[t][0])

    def __eq__(self, other):
        return (isinstance(other, WalkEnsemble) and self.times == other.times
                and all(np.array_equal(self.slices[t][0], other.slices[t][0])
                        and np.array_equal(self.slices[t][1], other.slices[t][1])
                        for t in self.times))


def height_to_walks(H):
    d = H.domain
    v = H.values
    m = d.mask
    slices = {}
    for iy in range(d.ny):
        row = m[:, iy]
        if not row.any():
            continue
        step = row[:-1] & row[1:]
        jump = step & (v[1:, iy] - v[:-1, iy] == 1)
        ix = np.nonzero(jump)[0]
        slices[iy + d.y0] = (ix + d.x0, v[ix + 1, iy])
    return WalkEnsemble(slices)


def validate_walks(W):
    """Ordering and Bernoulli-step violations of a walk ensemble."""
    problems = []
    for t in W.times:
        pos, idx = W.slices[t]
        if np.any(np.diff(pos) <= 0):
            problems.append(f"positions not strictly increasing at t={t}")
        if np.any(np.diff(idx) <= 0):
            problems.append(f"indices not strictly increasing at t={t}")
    for t in W.times:
        if t + 1 not in W.slices:
            continue
        p0, i0 = W.slices[t]
        p1, i1 = W.slices[t + 1]
        common, a, b = np.intersect1d(i0, i1, return_indices=True)
        step = p1[b] - p0[a]
        if np.any((step < 0) | (step > 1)):
            problems.append(f"a walk makes a non-Bernoulli step between t={t} and t={t + 1}")
    return problems


def walks_to_height(W, domain, bh=None):
    from .lattice import boundary_height

    problems = validate_walks(W)
    if problems:
        raise ValidationError(problems[0], problems)
    if bh is None:
        bh = boundary_height(domain)
    d = domain
    vals = np.zeros(d.shape, dtype=np.int64)
    m = d.mask
    for iy in range(d.ny):
        t = iy + d.y0
        row = m[:, iy]
        if not row.any():
            continue
        pos, idx = W.slices.get(t, (np.empty(0, np.int64), np.empty(0, np.int64)))
        jumps = np.zeros(d.nx, dtype=np.int64)
        if len(pos):
            ix = pos - d.x0
            if np.any((ix < 0) | (ix + 1 >= d.nx)) or not np.all(row[ix] & row[ix + 1]):
                raise ValidationError(f"walk position outside the domain at t={t}")
            jumps[ix] = 1
        # split the row into maximal runs of domain vertices
        xs = np.nonzero(row)[0]
        runs = np.split(xs, np.nonzero(np.diff(xs) != 1)[0] + 1)
        for run in runs:
            seg = np.concatenate([[0], np.cumsum(jumps[run[:-1]])])
            inrun = [k for k, x in enumerate(pos - d.x0) if run[0] <= x < run[-1]]
            if inrun:
                k = inrun[0]
                x = pos[k] - d.x0
                # normalization H(x_i + 1, t) = i
                off = idx[k] - seg[x + 1 - run[0]]
            else:
                off = bh.values[run[0], iy]
            vals[run, iy] = seg + off
    H = HeightFunction(d, vals)
    bad = validate_height(H, bh)
    if bad:
        raise ValidationError(f"walks do not define a valid height function: {bad[0]}", bad)
    return H


def _plane(x, y):
    return x - 0.5 * y, -(math.sqrt(3) / 2) * y


def render_tiling_svg(T, path=None, scale=12.0, overlay=None):
    """SVG of the tiling; three lozenge types in three shades.

    ``overlay`` is an optional list of polylines in lattice coordinates.
    """
    shades = {1: "#3b5b92", 2: "#9fb6d9", 3: "#e9eef7"}
    corners = {
        1: ((0, 0), (0, 1), (1, 1), (1, 2)),
        2: ((0, 0), (1, 0), (2, 1), (1, 1)),
        3: ((0, 0), (1, 0), (1, 1), (0, 1)),
    }
    polys = []
    pts_all = []
    for k, (bx, by) in T.lozenges():
        pts = [_plane(bx + cx, by + cy) for cx, cy in corners[k]]
        pts_all.extend(pts)
        polys.append((k, pts))
    if not pts_all:
        pts_all = [_plane(x, y) for x, y in T.domain.vertices()]
    xs = [p[0] for p in pts_all]
    ys = [p[1] for p in pts_all]
    minx, miny = min(xs), min(ys)
    w = (max(xs) - minx) * scale + 2 * scale
    h = (max(ys) - miny) * scale + 2 * scale

    def tr(p):
        return f"{(p[0] - minx) * scale + scale:.2f},{(p[1] - miny) * scale + scale:.2f}"

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0f}" height="{h:.0f}" '
             f'data-format="1">']
    for k, pts in polys:
        lines.append(f'<polygon points="{" ".join(tr(p) for p in pts)}" fill="{shades[k]}" '
                     f'stroke="#222" stroke-width="0.5"/>')
    for line in overlay or []:
        pts = " ".join(tr(_plane(x, y)) for x, y in line)
        lines.append(f'<polyline points="{pts}" fill="none" stroke="#c0392b" stroke-width="1.5"/>')
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text
