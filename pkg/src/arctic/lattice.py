"""Triangular-lattice domains, their boundaries, and boundary height data.

Vertices are integer points (x, y).  The lattice edges join (x, y) to
(x+1, y), (x, y+1) and (x+1, y+1).  A domain is stored as a boolean mask over
its bounding box; flat vertex indices are ``ix * ny + iy`` with
``ix = x - x0`` and ``iy = y - y0``.
"""
import json
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .errors import InvalidArgument, ScaleMismatch, Untileable

# the six lattice neighbours of a vertex
NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1))

# 6-connectivity of the triangular lattice on an [ix, iy] array
_TRI_STRUCTURE = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool)


def _frac(v):
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        return Fraction(str(v))
    return Fraction(v)


@dataclass(frozen=True)
class PolygonSpec:
    """Closed simple counterclockwise polygon with lattice-axis sides."""

    vertices: tuple

    def __post_init__(self):
        verts = tuple((_frac(x), _frac(y)) for x, y in self.vertices)
        object.__setattr__(self, "vertices", verts)
        if len(verts) < 3:
            raise InvalidArgument("a polygon needs at least three vertices")
        if verts[0] != (0, 0):
            raise InvalidArgument("the first polygon vertex must be the origin")
        k = len(verts)
        for i in range(k):
            (ax, ay), (bx, by) = verts[i], verts[(i + 1) % k]
            dx, dy = bx - ax, by - ay
            if dx == 0 and dy == 0:
                raise InvalidArgument(f"repeated vertex {verts[i]}")
            if not (dx == 0 or dy == 0 or dx == dy):
                raise InvalidArgument(
                    f"side {verts[i]}->{verts[(i + 1) % k]} is not parallel to a lattice axis")
        area2 = sum(verts[i][0] * verts[(i + 1) % k][1] - verts[(i + 1) % k][0] * verts[i][1]
                    for i in range(k))
        if area2 <= 0:
            raise InvalidArgument("polygon must be counterclockwise with positive area")
        if not _is_simple(verts):
            raise InvalidArgument("polygon sides intersect")

    def scaled(self, n):
        out = []
        for x, y in self.vertices:
            sx, sy = x * n, y * n
            if sx.denominator != 1 or sy.denominator != 1:
                raise ScaleMismatch(f"vertex ({x}, {y}) scaled by {n} is not an integer point")
            out.append((int(sx), int(sy)))
        return out

    def to_json(self):
        return [[str(x), str(y)] for x, y in self.vertices]


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        v = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return (v > 0) - (v < 0)

    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    return ((o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2))
            or (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2)))


def _is_simple(verts):
    k = len(verts)
    for i in range(k):
        for j in range(i + 1, k):
            if j == i + 1 or (i == 0 and j == k - 1):
                continue
            if _segments_intersect(verts[i], verts[(i + 1) % k], verts[j], verts[(j + 1) % k]):
                return False
    return True


def hexagon_spec(a, b, c):
    a, b, c = _frac(a), _frac(b), _frac(c)
    if a <= 0 or b <= 0 or c <= 0:
        raise InvalidArgument("hexagon sides must be positive")
    return PolygonSpec(((0, 0), (a, 0), (a + c, c), (a + c, b + c), (c, b + c), (0, b)))


def polygon_spec(vertices):
    return PolygonSpec(tuple(tuple(v) for v in vertices))


def _points_in_polygon(px, py, poly):
    """Closed-polygon membership for integer points against integer vertices."""
    px = np.asarray(px, dtype=np.int64)
    py = np.asarray(py, dtype=np.int64)
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    k = len(poly)
    for i in range(k):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % k]
        cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
        within = ((px >= min(ax, bx)) & (px <= max(ax, bx))
                  & (py >= min(ay, by)) & (py <= max(ay, by)))
        on_edge |= (cross == 0) & within
        if ay != by:
            straddle = (ay > py) != (by > py)
            # x-coordinate of the crossing compared with px, done in integers
            lhs = (px - ax) * (by - ay)
            rhs = (py - ay) * (bx - ax)
            left = np.where(by > ay, lhs < rhs, lhs > rhs)
            inside ^= straddle & left
    return inside | on_edge


class LatticeDomain:
    """A finite simply connected induced subgraph of the triangular lattice."""

    def __init__(self, mask, x0=0, y0=0, n=1, spec=None, polygon=None, check=True):
        mask = np.ascontiguousarray(mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            raise InvalidArgument("domain mask must be a non-empty 2D array")
        self.mask = mask
        self.x0, self.y0 = int(x0), int(y0)
        self.nx, self.ny = mask.shape
        self.n = int(n)
        self.spec = spec
        self.polygon = polygon  # integer vertices of n * spec, if any
        if check:
            self._check_simply_connected()
        self._classify()
        self._faces()

    # -- construction helpers -------------------------------------------------
    def _check_simply_connected(self):
        _, ncomp = ndimage.label(self.mask, structure=_TRI_STRUCTURE)
        if ncomp != 1:
            raise InvalidArgument(f"domain has {ncomp} connected components")
        comp = np.pad(~self.mask, 1, constant_values=True)
        _, nholes = ndimage.label(comp, structure=_TRI_STRUCTURE)
        if nholes != 1:
            raise InvalidArgument("domain is not simply connected")

    def _classify(self):
        padded = np.pad(self.mask, 1, constant_values=False)
        all_in = np.ones_like(self.mask)
        for dx, dy in NEIGHBORS:
            all_in &= padded[1 + dx:1 + dx + self.nx, 1 + dy:1 + dy + self.ny]
        self.interior = self.mask & all_in
        self.boundary = self.mask & ~all_in
        self.flat_interior = np.flatnonzero(self.interior.ravel()).astype(np.int64)
        self.flat_vertices = np.flatnonzero(self.mask.ravel()).astype(np.int64)

    def _faces(self):
        m = np.pad(self.mask, ((0, 1), (0, 1)), constant_values=False)
        up = m[:-1, :-1] & m[1:, :-1] & m[1:, 1:]
        dn = m[:-1, :-1] & m[:-1, 1:] & m[1:, 1:]
        if self.polygon is not None:
            ix, iy = np.indices(self.mask.shape)
            X = 3 * (ix + self.x0)
            Y = 3 * (iy + self.y0)
            poly3 = [(3 * x, 3 * y) for x, y in self.polygon]
            up &= _points_in_polygon(X + 2, Y + 1, poly3)
            dn &= _points_in_polygon(X + 1, Y + 2, poly3)
        self.up_faces = up
        self.down_faces = dn

    # -- basic queries ----------------------------------------------------------
    @property
    def shape(self):
        return self.mask.shape

    @property
    def num_vertices(self):
        return int(self.mask.sum())

    @property
    def num_faces(self):
        return int(self.up_faces.sum() + self.down_faces.sum())

    def __len__(self):
        return self.num_vertices

    def contains(self, x, y):
        ix, iy = x - self.x0, y - self.y0
        return 0 <= ix < self.nx and 0 <= iy < self.ny and bool(self.mask[ix, iy])

    def is_boundary(self, x, y):
        return self.contains(x, y) and bool(self.boundary[x - self.x0, y - self.y0])

    def is_interior(self, x, y):
        return self.contains(x, y) and bool(self.interior[x - self.x0, y - self.y0])

    def flat(self, x, y):
        return (x - self.x0) * self.ny + (y - self.y0)

    def coords(self, flat):
        flat = np.asarray(flat)
        return flat // self.ny + self.x0, flat % self.ny + self.y0

    def vertices(self):
        ix, iy = np.nonzero(self.mask)
        return list(zip((ix + self.x0).tolist(), (iy + self.y0).tolist()))

    def boundary_vertices(self):
        ix, iy = np.nonzero(self.boundary)
        return list(zip((ix + self.x0).tolist(), (iy + self.y0).tolist()))

    def interior_vertices(self):
        ix, iy = np.nonzero(self.interior)
        return list(zip((ix + self.x0).tolist(), (iy + self.y0).tolist()))

    def diameter(self):
        """Euclidean diameter of the vertex set in the (x, y) coordinates."""
        ix, iy = np.nonzero(self.mask)
        pts = np.column_stack([ix, iy]).astype(float)
        if len(pts) > 2:
            from scipy.spatial import ConvexHull
            try:
                pts = pts[ConvexHull(pts).vertices]
            except Exception:
                pass
        d = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def subdomain(self, mask):
        """Sub-domain on the same bounding box (so flat indices agree)."""
        mask = np.asarray(mask, dtype=bool) & self.mask
        return LatticeDomain(mask, self.x0, self.y0, n=self.n, polygon=None)

    def region_from_rect(self, xmin, xmax, ymin, ymax):
        ix, iy = np.indices(self.mask.shape)
        X, Y = ix + self.x0, iy + self.y0
        return self.subdomain((X >= xmin) & (X <= xmax) & (Y >= ymin) & (Y <= ymax))

    def __repr__(self):
        return (f"LatticeDomain(n={self.n}, vertices={self.num_vertices}, "
                f"interior={len(self.flat_interior)}, faces={self.num_faces})")


def build_domain(spec, n=1):
    if int(n) != n or n < 1:
        raise InvalidArgument("scale n must be a positive integer")
    n = int(n)
    poly = spec.scaled(n)
    xs = [p[0] for p in poly]
    ys = [p[1] for p in poly]
    x0, x1, y0, y1 = min(xs), max(xs), min(ys), max(ys)
    ix, iy = np.indices((x1 - x0 + 1, y1 - y0 + 1))
    mask = _points_in_polygon(ix + x0, iy + y0, poly)
    return LatticeDomain(mask, x0, y0, n=n, spec=spec, polygon=poly)


def domain_from_vertices(points):
    pts = np.asarray(points, dtype=np.int64)
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    mask = np.zeros((x1 - x0 + 1, y1 - y0 + 1), dtype=bool)
    mask[pts[:, 0] - x0, pts[:, 1] - y0] = True
    return LatticeDomain(mask, x0, y0)


class BoundaryHeightFn:
    """Integer heights on the boundary vertices of a domain."""

    def __init__(self, domain, values):
        self.domain = domain
        values = np.asarray(values, dtype=np.int64)
        if values.shape != domain.shape:
            raise InvalidArgument("boundary values must cover the domain bounding box")
        self.values = np.where(domain.boundary, values, 0)

    def __getitem__(self, xy):
        x, y = xy
        if not self.domain.is_boundary(x, y):
            raise KeyError(xy)
        return int(self.values[x - self.domain.x0, y - self.domain.y0])

    def as_dict(self):
        return {(x, y): self[x, y] for x, y in self.domain.boundary_vertices()}

    def __eq__(self, other):
        return (isinstance(other, BoundaryHeightFn) and other.domain.shape == self.domain.shape
                and np.array_equal(other.domain.boundary, self.domain.boundary)
                and np.array_equal(self.values, other.values))

    def key(self):
        return self.values[self.domain.boundary].tobytes()


def _outline_edges(domain):
    """Edges bordered by exactly one face; their increments are forced.

    Yields (u, v, dh) with u, v as (ix, iy) array indices and dh = H(v) - H(u).
    """
    up, dn = domain.up_faces, domain.down_faces
    nx, ny = domain.shape

    def face(arr, i, j):
        return 0 <= i < nx and 0 <= j < ny and bool(arr[i, j])

    m = domain.mask
    for ix, iy in zip(*np.nonzero(domain.boundary)):
        # horizontal (ix,iy)-(ix+1,iy): up face (ix,iy), down face (ix,iy-1)
        if ix + 1 < nx and m[ix + 1, iy]:
            k = face(up, ix, iy) + face(dn, ix, iy - 1)
            if k == 1:
                yield (ix, iy), (ix + 1, iy), 1
        # vertical (ix,iy)-(ix,iy+1): up face (ix-1,iy), down face (ix,iy)
        if iy + 1 < ny and m[ix, iy + 1]:
            k = face(up, ix - 1, iy) + face(dn, ix, iy)
            if k == 1:
                yield (ix, iy), (ix, iy + 1), 0
        # diagonal (ix,iy)-(ix+1,iy+1): up face (ix,iy), down face (ix,iy)
        if ix + 1 < nx and iy + 1 < ny and m[ix + 1, iy + 1]:
            k = face(up, ix, iy) + face(dn, ix, iy)
            if k == 1:
                yield (ix, iy), (ix + 1, iy + 1), 0


def boundary_height(domain, anchor=None, value=0):
    """The boundary height function forced by the domain.

    Along every outline edge the increment is the one a boundary side forces:
    +1 per step in +x on horizontal sides, 0 on vertical and diagonal sides.
    The anchor defaults to the origin (or the lowest boundary vertex when the
    origin is absent) with height 0.
    """
    adj = {}
    for u, v, dh in _outline_edges(domain):
        adj.setdefault(u, []).append((v, dh))
        adj.setdefault(v, []).append((u, -dh))
    if anchor is None:
        anchor = (0, 0) if domain.is_boundary(0, 0) else min(domain.boundary_vertices())
    start = (anchor[0] - domain.x0, anchor[1] - domain.y0)
    if not domain.boundary[start]:
        raise InvalidArgument(f"anchor {anchor} is not a boundary vertex")
    vals = np.zeros(domain.shape, dtype=np.int64)
    seen = np.zeros(domain.shape, dtype=bool)
    vals[start], seen[start] = value, True
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v, dh in adj.get(u, ()):
            if not seen[v]:
                seen[v] = True
                vals[v] = vals[u] + dh
                queue.append(v)
            elif vals[v] != vals[u] + dh:
                raise Untileable(
                    f"boundary increments disagree around vertex "
                    f"({v[0] + domain.x0}, {v[1] + domain.y0})")
    missing = domain.boundary & ~seen
    if missing.any():
        ix, iy = np.argwhere(missing)[0]
        raise Untileable(f"boundary vertex ({ix + domain.x0}, {iy + domain.y0}) "
                         "is not on the domain outline")
    return BoundaryHeightFn(domain, vals)


def boundary_from_heights(domain, heights):
    """Boundary data induced on ``domain`` by a height array on its bounding box."""
    return BoundaryHeightFn(domain, heights)


_BIG = np.int64(1) << 40


def _shift(a, dx, dy, fill):
    """b[ix, iy] = a[ix + dx, iy + dy] with ``fill`` outside."""
    nx, ny = a.shape
    out = np.full_like(a, fill)
    xs = slice(max(0, -dx), min(nx, nx - dx))
    ys = slice(max(0, -dy), min(ny, ny - dy))
    xs2 = slice(max(0, dx), min(nx, nx + dx))
    ys2 = slice(max(0, dy), min(ny, ny + dy))
    out[xs, ys] = a[xs2, ys2]
    return out


def local_bounds(h, fill_lo=-_BIG, fill_hi=_BIG):
    """Per-vertex [lo, hi] allowed by the six neighbours of a height array."""
    W = _shift(h, -1, 0, fill_lo), _shift(h, -1, 0, fill_hi)
    E = _shift(h, 1, 0, fill_lo), _shift(h, 1, 0, fill_hi)
    N = _shift(h, 0, 1, fill_lo), _shift(h, 0, 1, fill_hi)
    S = _shift(h, 0, -1, fill_lo), _shift(h, 0, -1, fill_hi)
    NE = _shift(h, 1, 1, fill_lo), _shift(h, 1, 1, fill_hi)
    SW = _shift(h, -1, -1, fill_lo), _shift(h, -1, -1, fill_hi)
    lo = np.maximum.reduce([W[0], N[0], SW[0], E[0] - 1, S[0] - 1, NE[0] - 1])
    hi = np.minimum.reduce([W[1] + 1, N[1] + 1, SW[1] + 1, E[1], S[1], NE[1]])
    return lo, hi


def extremal_heights(domain, bh):
    """Pointwise minimal and maximal height functions with boundary data bh."""
    from .tiling import HeightFunction

    m = domain.mask
    b = domain.boundary
    hmax = np.where(b, bh.values, _BIG)
    hmin = np.where(b, bh.values, -_BIG)
    for _ in range(4 * (domain.nx + domain.ny) + 8):
        lo_max, hi_max = local_bounds(np.where(m, hmax, _BIG), fill_hi=_BIG)
        new_max = np.where(m, np.minimum(hmax, hi_max), _BIG)
        lo_min, _ = local_bounds(np.where(m, hmin, -_BIG), fill_lo=-_BIG)
        new_min = np.where(m, np.maximum(hmin, lo_min), -_BIG)
        if np.array_equal(new_max, hmax) and np.array_equal(new_min, hmin):
            break
        hmax, hmin = new_max, new_min
    if (np.any(hmax[m] >= _BIG // 2) or np.any(hmin[m] <= -_BIG // 2)):
        raise Untileable("some vertices are not constrained by the boundary")
    if not (np.array_equal(hmax[b], bh.values[b]) and np.array_equal(hmin[b], bh.values[b])):
        raise Untileable("boundary data admit no height function extension")
    if np.any(hmin[m] > hmax[m]):
        raise Untileable("minimal extension exceeds maximal extension")
    values_min = np.where(m, hmin, 0)
    values_max = np.where(m, hmax, 0)
    return HeightFunction(domain, values_min), HeightFunction(domain, values_max)


def is_tileable(domain, bh=None):
    try:
        if bh is None:
            bh = boundary_height(domain)
        extremal_heights(domain, bh)
    except Untileable:
        return False
    if domain.num_faces % 2:
        return False
    return True


def parse_domain_json(obj):
    """Accept {"polygon": [[x, y], ...], "n": k}, {"hexagon": [a, b, c], "n": k}
    or a bare vertex list [[x, y], ...] (n = 1)."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"domain is neither a file nor valid JSON: {exc}") from None
    if isinstance(obj, list):
        obj = {"polygon": obj}
    if not isinstance(obj, dict):
        raise InvalidArgument("domain JSON must be an object or a vertex list")
    n = int(obj.get("n", 1))
    if "hexagon" in obj:
        a, b, c = obj["hexagon"]
        spec = hexagon_spec(a, b, c)
    elif "polygon" in obj:
        spec = polygon_spec([(_frac(x), _frac(y)) for x, y in obj["polygon"]])
    else:
        raise InvalidArgument("domain JSON needs a 'polygon' or 'hexagon' key")
    return spec, n


def domain_to_json(spec, n):
    return {"polygon": spec.to_json(), "n": int(n)}
