"""Source supports: distance queries, quadrature and membership.

Six support kinds are provided (:class:`PointSet`, :class:`Segment`,
:class:`ParamCurve`, :class:`PlanarPolygon`, :class:`PlanarRegion`,
:class:`ConvexPolyhedron`) plus :class:`Union` for disjoint combinations.
All are immutable.  Distances to points, segments, polygons and polyhedra
are exact; curves and regions given by boundary samples are exact for the
sampled polyline, which is within one sample spacing of the true curve.

Ties between equally near features resolve to the first feature in storage
order: points in list order, polyline segments in sample order, triangles in
triangulation order, union parts in list order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull

from .errors import ValidationError

COPLANAR_TOL = 1e-9
CONVEX_TOL = 1e-9
_CHUNK = 1 << 18  # max query x feature pairs per block


def _as_points(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValidationError(f"expected points with 3 coordinates, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("coordinates must be finite")
    return arr


def _frozen(arr) -> np.ndarray:
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class QuadratureSet:
    """Nodes with length/area/volume weights and per-node intensities."""

    nodes: np.ndarray
    weights: np.ndarray
    intensities: np.ndarray

    def __post_init__(self):
        if len(self.nodes) < 1:
            raise ValidationError("quadrature needs at least one node")
        if np.any(self.weights < 0):
            raise ValidationError("quadrature weights must be nonnegative")

    @property
    def total(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.nodes)


# ---------------------------------------------------------------------------
# vectorised closest-point primitives
# ---------------------------------------------------------------------------

def _closest_on_segments(P, A, B):
    """Closest points on segments ``A[e]B[e]`` for every query ``P[n]``.

    Returns ``(dist (N, E), closest (N, E, 3))``.
    """
    AB = B - A
    L2 = np.einsum("ij,ij->i", AB, AB)
    W = P[:, None, :] - A[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.einsum("nej,ej->ne", W, AB) / L2
    t = np.clip(np.nan_to_num(t, nan=0.0), 0.0, 1.0)
    C = A[None, :, :] + t[..., None] * AB[None, :, :]
    D = P[:, None, :] - C
    return np.sqrt(np.einsum("nej,nej->ne", D, D)), C


def _closest_on_triangles(P, tri):
    """Closest points on filled triangles ``tri (T, 3, 3)``.

    Projects onto each triangle's plane and keeps the projection when it lands
    inside; otherwise the nearest of the three edges.
    """
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    n /= np.linalg.norm(n, axis=1)[:, None]
    W = P[:, None, :] - a[None]
    off = np.einsum("ntj,tj->nt", W, n)
    Q = P[:, None, :] - off[..., None] * n[None]
    v2 = Q - a[None]
    d00 = np.einsum("ij,ij->i", ab, ab)
    d01 = np.einsum("ij,ij->i", ab, ac)
    d11 = np.einsum("ij,ij->i", ac, ac)
    d20 = np.einsum("ntj,tj->nt", v2, ab)
    d21 = np.einsum("ntj,tj->nt", v2, ac)
    den = d00 * d11 - d01 * d01
    v = (d11 * d20 - d01 * d21) / den
    w = (d00 * d21 - d01 * d20) / den
    eps = 1e-12
    inside = (v >= -eps) & (w >= -eps) & (v + w <= 1 + eps)

    dists = [np.where(inside, np.abs(off), np.inf)]
    pts = [Q]
    for s, e in ((a, b), (b, c), (c, a)):
        AB = e - s
        L2 = np.einsum("ij,ij->i", AB, AB)
        t = np.clip(np.einsum("ntj,tj->nt", W + (a - s)[None], AB) / L2, 0.0, 1.0)
        C = s[None] + t[..., None] * AB[None]
        D = P[:, None, :] - C
        dists.append(np.sqrt(np.einsum("ntj,ntj->nt", D, D)))
        pts.append(C)
    dists = np.stack(dists)
    pick = np.argmin(dists, axis=0)
    d = np.take_along_axis(dists, pick[None], 0)[0]
    C = np.take_along_axis(np.stack(pts), pick[None, ..., None], 0)[0]
    return d, C


def _reduce_features(P, n_features, fn):
    """Chunk queries, apply ``fn(P_chunk) -> (d (n, F), C (n, F, 3))``, keep argmin."""
    N = len(P)
    dist = np.empty(N)
    near = np.empty((N, 3))
    step = max(1, _CHUNK // max(n_features, 1))
    for lo in range(0, N, step):
        d, C = fn(P[lo : lo + step])
        k = np.argmin(d, axis=1)
        rows = np.arange(len(k))
        dist[lo : lo + step] = d[rows, k]
        near[lo : lo + step] = C[rows, k]
    return dist, near


def _polyline_resample(samples, spacing, closed=False):
    """Points at uniform arclength along a polyline, with trapezoid weights."""
    pts = np.vstack([samples, samples[:1]]) if closed else samples
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    n = max(1, math.ceil(total / spacing - 1e-12))
    u = np.linspace(0.0, total, n + 1)
    nodes = np.column_stack([np.interp(u, s, pts[:, k]) for k in range(3)])
    w = np.full(n + 1, total / n)
    if closed:
        nodes, w = nodes[:-1], np.full(n, total / n)
    else:
        w[0] = w[-1] = 0.5 * total / n
    return nodes, w


def _plane_frame(points):
    centroid = points.mean(axis=0)
    _, _, vt = np.linalg.svd(points - centroid)
    normal = vt[2]
    e1 = points[1] - points[0]
    e1 = e1 - np.dot(e1, normal) * normal
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    return centroid, e1, e2, normal


def _signed_area(poly2):
    x, y = poly2[:, 0], poly2[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _point_in_polygon(q2, poly2):
    """Even-odd rule for many 2-D queries ``q2 (N, 2)``."""
    x, y = q2[:, 0][:, None], q2[:, 1][:, None]
    xa, ya = poly2[:, 0][None], poly2[:, 1][None]
    xb, yb = np.roll(poly2[:, 0], -1)[None], np.roll(poly2[:, 1], -1)[None]
    crosses = (ya > y) != (yb > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xi = xa + (y - ya) * (xb - xa) / (yb - ya)
    return np.count_nonzero(crosses & (x < xi), axis=1) % 2 == 1


def _inside_chunked(q2, poly2):
    out = np.empty(len(q2), dtype=bool)
    step = max(1, _CHUNK // len(poly2))
    for lo in range(0, len(q2), step):
        out[lo : lo + step] = _point_in_polygon(q2[lo : lo + step], poly2)
    return out


def _segments_cross(p1, p2, q1, q2):
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    return (orient(p1, p2, q1) != orient(p1, p2, q2)) and (orient(q1, q2, p1) != orient(q1, q2, p2))


def _ear_clip(poly2):
    """Triangulate a simple counter-clockwise polygon; returns index triples."""
    idx = list(range(len(poly2)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(poly2) ** 2:
            raise ValidationError("polygon triangulation failed; is it simple?")
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = poly2[i0], poly2[i1], poly2[i2]
            if cross(a, b, c) <= 0:
                continue
            blocked = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = poly2[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    blocked = True
                    break
            if not blocked:
                tris.append((i0, i1, i2))
                del idx[k]
                break
    tris.append(tuple(idx))
    return np.array(tris, dtype=int)


def _subdivide_triangle(a, b, c, m):
    """Centroids of the ``m^2`` congruent sub-triangles of ``abc``."""
    i, j = np.meshgrid(np.arange(m), np.arange(m), indexing="ij")
    up = (i + j) <= m - 1
    down = (i + j) <= m - 2
    bary = np.concatenate([
        np.column_stack([i[up] + 1 / 3, j[up] + 1 / 3]),
        np.column_stack([i[down] + 2 / 3, j[down] + 2 / 3]),
    ]) / m
    return a + bary[:, :1] * (b - a) + bary[:, 1:] * (c - a)


# ---------------------------------------------------------------------------
# support kinds
# ---------------------------------------------------------------------------

class Support:
    """Common interface.  Subclasses implement ``_closest``, ``quadrature``,
    ``measure``, ``outline`` and ``transformed``."""

    dim: int = 0
    intensity: float = 1.0

    def closest(self, x):
        """Vectorised nearest-point query: ``(dist (N,), nearest (N, 3))``."""
        return self._closest(_as_points(x))

    def distance(self, x) -> np.ndarray:
        return self.closest(x)[0]

    def vertices(self) -> np.ndarray:
        raise NotImplementedError

    def bounds(self):
        v = self.vertices()
        return v.min(axis=0), v.max(axis=0)


@dataclass(frozen=True, eq=False)
class PointSet(Support):
    points: np.ndarray
    intensities: np.ndarray = None
    dim = 0

    def __post_init__(self):
        pts = _as_points(self.points)
        if len(pts) == 0:
            raise ValidationError("point set is empty")
        tau = np.ones(len(pts)) if self.intensities is None else np.array(self.intensities, float)
        if tau.shape != (len(pts),) or np.any(tau <= 0):
            raise ValidationError("point intensities must be positive, one per point")
        diff = pts[:, None] - pts[None]
        dd = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(dd, np.inf)
        if np.any(dd == 0):
            raise ValidationError("point sources must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "intensities", _frozen(tau))

    def _closest(self, P):
        def fn(Pc):
            D = Pc[:, None] - self.points[None]
            return np.sqrt(np.einsum("nej,nej->ne", D, D)), np.broadcast_to(self.points, D.shape)
        return _reduce_features(P, len(self.points), fn)

    def quadrature(self, spacing):
        _check_spacing(spacing)
        return QuadratureSet(self.points.copy(), np.ones(len(self.points)), self.intensities.copy())

    def measure(self):
        return float(len(self.points))

    def outline(self, spacing):
        return self.points.copy()

    def vertices(self):
        return self.points

    def transformed(self, rot, shift):
        return PointSet(self.points @ np.asarray(rot).T + shift, self.intensities)


@dataclass(frozen=True, eq=False)
class Segment(Support):
    a: np.ndarray
    b: np.ndarray
    intensity: float = 1.0
    dim = 1

    def __post_init__(self):
        a, b = _as_points(self.a)[0], _as_points(self.b)[0]
        if np.array_equal(a, b):
            raise ValidationError("segment endpoints coincide")
        _check_intensity(self.intensity)
        object.__setattr__(self, "a", _frozen(a))
        object.__setattr__(self, "b", _frozen(b))

    def _closest(self, P):
        return _reduce_features(P, 1, lambda Pc: _closest_on_segments(Pc, self.a[None], self.b[None]))

    def quadrature(self, spacing):
        _check_spacing(spacing)
        nodes, w = _polyline_resample(np.stack([self.a, self.b]), spacing)
        return QuadratureSet(nodes, w, np.full(len(w), float(self.intensity)))

    def measure(self):
        return float(np.linalg.norm(self.b - self.a))

    def outline(self, spacing):
        return _polyline_resample(np.stack([self.a, self.b]), spacing)[0]

    def vertices(self):
        return np.stack([self.a, self.b])

    def transformed(self, rot, shift):
        rot = np.asarray(rot)
        return Segment(rot @ self.a + shift, rot @ self.b + shift, self.intensity)


@dataclass(frozen=True, eq=False)
class ParamCurve(Support):
    """A curve held as a dense polyline of parameter samples."""

    samples: np.ndarray
    intensity: float = 1.0
    closed: bool = False
    label: str = "curve"
    dim = 1

    def __post_init__(self):
        s = _as_points(self.samples)
        if len(s) < 2:
            raise ValidationError("curve needs at least two samples")
        _check_intensity(self.intensity)
        object.__setattr__(self, "samples", _frozen(s))

    @classmethod
    def from_function(cls, fn, zeta0, zeta1, spacing=0.01, closed=False, **kw):
        """Sample ``fn(zeta) -> (n, 3)`` until adjacent samples are ``<= spacing`` apart."""
        _check_spacing(spacing)
        pilot = np.asarray(fn(np.linspace(zeta0, zeta1, 4097)), float)
        length = np.sum(np.linalg.norm(np.diff(pilot, axis=0), axis=1))
        n = max(2, math.ceil(length / spacing) + 1)
        while True:
            pts = np.asarray(fn(np.linspace(zeta0, zeta1, n)), float)
            if np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1)) <= spacing:
                break
            n *= 2
        if closed:
            pts = pts[:-1]
        return cls(pts, closed=closed, **kw)

    @property
    def spacing(self) -> float:
        pts = np.vstack([self.samples, self.samples[:1]]) if self.closed else self.samples
        return float(np.max(np.linalg.norm(np.diff(pts, axis=0), axis=1)))

    def _edges(self):
        a = self.samples
        b = np.roll(a, -1, axis=0)
        return (a, b) if self.closed else (a[:-1], b[:-1])

    def _closest(self, P):
        A, B = self._edges()
        return _reduce_features(P, len(A), lambda Pc: _closest_on_segments(Pc, A, B))

    def quadrature(self, spacing):
        _check_spacing(spacing)
        nodes, w = _polyline_resample(self.samples, spacing, self.closed)
        return QuadratureSet(nodes, w, np.full(len(w), float(self.intensity)))

    def measure(self):
        A, B = self._edges()
        return float(np.sum(np.linalg.norm(B - A, axis=1)))

    def outline(self, spacing):
        return _polyline_resample(self.samples, spacing, self.closed)[0]

    def vertices(self):
        return self.samples

    def transformed(self, rot, shift):
        return ParamCurve(self.samples @ np.asarray(rot).T + shift, self.intensity,
                          self.closed, self.label)


@dataclass(frozen=True, eq=False)
class PlanarPolygon(Support):
    """A simple polygon given by ordered coplanar vertices."""

    corners: np.ndarray
    intensity: float = 1.0
    dim = 2
    _tris: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = _as_points(self.corners)
        if len(v) < 3:
            raise ValidationError("polygon needs at least three vertices")
        _check_intensity(self.intensity)
        origin, e1, e2, normal = _plane_frame(v)
        if np.max(np.abs((v - origin) @ normal)) > COPLANAR_TOL:
            raise ValidationError("polygon vertices are not coplanar")
        poly2 = np.column_stack([(v - origin) @ e1, (v - origin) @ e2])
        n = len(poly2)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(poly2[i], poly2[(i + 1) % n], poly2[j], poly2[(j + 1) % n]):
                    raise ValidationError("polygon is not simple")
        area = _signed_area(poly2)
        if abs(area) <= 0:
            raise ValidationError("polygon is degenerate")
        order = np.arange(n) if area > 0 else np.arange(n)[::-1]
        tris = order[_ear_clip(poly2[order])]
        object.__setattr__(self, "corners", _frozen(v))
        object.__setattr__(self, "_tris", tris)

    @property
    def triangles(self) -> np.ndarray:
        return self.corners[self._tris]

    def _closest(self, P):
        tri = self.triangles
        return _reduce_features(P, len(tri), lambda Pc: _closest_on_triangles(Pc, tri))

    def quadrature(self, spacing):
        _check_spacing(spacing)
        nodes, weights = [], []
        for a, b, c in self.triangles:
            longest = max(np.linalg.norm(b - a), np.linalg.norm(c - b), np.linalg.norm(a - c))
            m = max(1, math.ceil(longest / spacing - 1e-12))
            area = 0.5 * np.linalg.norm(np.cross(b - a, c - a))
            pts = _subdivide_triangle(a, b, c, m)
            nodes.append(pts)
            weights.append(np.full(len(pts), area / m**2))
        w = np.concatenate(weights)
        return QuadratureSet(np.vstack(nodes), w, np.full(len(w), float(self.intensity)))

    def measure(self):
        tri = self.triangles
        return float(0.5 * np.sum(np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)))

    def outline(self, spacing):
        return _polyline_resample(self.corners, spacing, closed=True)[0]

    def vertices(self):
        return self.corners

    def transformed(self, rot, shift):
        return PlanarPolygon(self.corners @ np.asarray(rot).T + shift, self.intensity)


@dataclass(frozen=True, eq=False)
class PlanarRegion(Support):
    """A planar region bounded by a sampled closed curve.

    ``boundary`` holds 2-D samples in the frame ``origin + u e1 + v e2``.
    Containment uses the even-odd rule against the sampled boundary.
    """

    origin: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    boundary: np.ndarray
    intensity: float = 1.0
    label: str = "region"
    dim = 2

    def __post_init__(self):
        o = _as_points(self.origin)[0]
        e1 = _as_points(self.e1)[0]
        e2 = _as_points(self.e2)[0]
        e1 = e1 / np.linalg.norm(e1)
        e2 = e2 - np.dot(e2, e1) * e1
        if np.linalg.norm(e2) < 1e-12:
            raise ValidationError("region frame axes are parallel")
        e2 = e2 / np.linalg.norm(e2)
        bd = np.array(self.boundary, dtype=float)
        if bd.ndim != 2 or bd.shape[1] != 2 or len(bd) < 3:
            raise ValidationError("region boundary must be >= 3 two-dimensional samples")
        if np.allclose(bd[0], bd[-1]):
            bd = bd[:-1]
        if abs(_signed_area(bd)) <= 0:
            raise ValidationError("region boundary encloses no area")
        _check_intensity(self.intensity)
        for name, val in (("origin", o), ("e1", e1), ("e2", e2), ("boundary", bd)):
            object.__setattr__(self, name, _frozen(val))

    @classmethod
    def from_curve(cls, fn2, spacing=0.01, origin=(0, 0, 0), e1=(1, 0, 0), e2=(0, 1, 0), **kw):
        """Sample a closed 2-D curve ``fn2(zeta) -> (n, 2)`` over ``[0, 2 pi]``."""
        fn3 = lambda z: np.column_stack([np.asarray(fn2(z), float), np.zeros(len(z))])
        curve = ParamCurve.from_function(fn3, 0.0, 2 * np.pi, spacing, closed=True)
        return cls(origin, e1, e2, curve.samples[:, :2], **kw)

    @property
    def normal(self):
        return np.cross(self.e1, self.e2)

    def lift(self, uv):
        uv = np.atleast_2d(uv)
        return self.origin + uv[:, :1] * self.e1 + uv[:, 1:2] * self.e2

    def boundary3(self):
        return self.lift(self.boundary)

    def _closest(self, P):
        W = P - self.origin
        uv = np.column_stack([W @ self.e1, W @ self.e2])
        off = W @ self.normal
        inside = _inside_chunked(uv, self.boundary)
        A = self.boundary3()
        B = np.roll(A, -1, axis=0)
        dist, near = _reduce_features(P, len(A), lambda Pc: _closest_on_segments(Pc, A, B))
        dist[inside] = np.abs(off[inside])
        near[inside] = self.lift(uv[inside])
        return dist, near

    def quadrature(self, spacing):
        """Cell centres of an in-plane lattice of pitch ``spacing / 2``; the
        weights share the enclosed area equally."""
        _check_spacing(spacing)
        h = 0.5 * spacing
        lo, hi = self.boundary.min(axis=0), self.boundary.max(axis=0)
        us = np.arange(lo[0] + h / 2, hi[0], h)
        vs = np.arange(lo[1] + h / 2, hi[1], h)
        U, V = np.meshgrid(us, vs, indexing="ij")
        uv = np.column_stack([U.ravel(), V.ravel()])
        uv = uv[_inside_chunked(uv, self.boundary)]
        if len(uv) == 0:
            uv = self.boundary.mean(axis=0, keepdims=True)
        w = np.full(len(uv), self.measure() / len(uv))
        return QuadratureSet(self.lift(uv), w, np.full(len(w), float(self.intensity)))

    def measure(self):
        return abs(_signed_area(self.boundary))

    def outline(self, spacing):
        return _polyline_resample(self.boundary3(), spacing, closed=True)[0]

    def vertices(self):
        return self.boundary3()

    def transformed(self, rot, shift):
        rot = np.asarray(rot)
        return PlanarRegion(rot @ self.origin + shift, rot @ self.e1, rot @ self.e2,
                            self.boundary, self.intensity, self.label)


@dataclass(frozen=True, eq=False)
class ConvexPolyhedron(Support):
    """A convex polyhedron with triangulated, outward-oriented faces."""

    corners: np.ndarray
    faces: np.ndarray
    intensity: float = 1.0
    dim = 3
    _planes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        v = _as_points(self.corners)
        f = np.array(self.faces, dtype=int)
        if len(v) < 4 or f.ndim != 2 or f.shape[1] != 3 or len(f) < 4:
            raise ValidationError("polyhedron needs >= 4 vertices and >= 4 triangular faces")
        _check_intensity(self.intensity)
        centre = v.mean(axis=0)
        f = f.copy()
        tri = v[f]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        flip = np.einsum("ij,ij->i", n, tri[:, 0] - centre) < 0
        f[flip] = f[flip][:, ::-1]
        tri = v[f]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(n, axis=1)
        if np.any(norm <= 0):
            raise ValidationError("polyhedron has degenerate faces")
        n /= norm[:, None]
        off = np.einsum("ij,ij->i", n, tri[:, 0])
        if np.max(v @ n.T - off) > CONVEX_TOL * max(1.0, np.abs(v).max()):
            raise ValidationError("polyhedron is not convex")
        object.__setattr__(self, "corners", _frozen(v))
        object.__setattr__(self, "faces", f)
        object.__setattr__(self, "_planes", np.column_stack([n, off]))

    @classmethod
    def from_vertices(cls, vertices, intensity=1.0):
        v = _as_points(vertices)
        hull = ConvexHull(v)
        return cls(v[hull.vertices], _reindex(hull.simplices, hull.vertices), intensity)

    @property
    def triangles(self):
        return self.corners[self.faces]

    def contains(self, P, tol=1e-12):
        P = _as_points(P)
        return np.all(P @ self._planes[:, :3].T - self._planes[:, 3] <= tol, axis=1)

    def _closest(self, P):
        tri = self.triangles
        dist, near = _reduce_features(P, len(tri), lambda Pc: _closest_on_triangles(Pc, tri))
        inside = self.contains(P)
        dist[inside] = 0.0
        near[inside] = P[inside]
        return dist, near

    def quadrature(self, spacing):
        """Cell centres of a lattice of pitch ``spacing / 2`` inside the solid,
        sharing the volume equally."""
        _check_spacing(spacing)
        h = 0.5 * spacing
        lo, hi = self.bounds()
        axes = [np.arange(lo[k] + h / 2, hi[k], h) for k in range(3)]
        G = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        G = G[self.contains(G)]
        if len(G) == 0:
            G = self.corners.mean(axis=0, keepdims=True)
        w = np.full(len(G), self.measure() / len(G))
        return QuadratureSet(G, w, np.full(len(w), float(self.intensity)))

    def measure(self):
        tri = self.triangles
        return float(np.sum(np.einsum("ij,ij->i", tri[:, 0], np.cross(tri[:, 1], tri[:, 2]))) / 6.0)

    def edges(self):
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        # drop diagonals of coplanar face pairs so only true arrises remain
        keep = []
        for i, j in e:
            adj = [k for k, f in enumerate(self.faces) if i in f and j in f]
            n = self._planes[adj, :3]
            keep.append(len(adj) != 2 or abs(np.dot(n[0], n[1])) < 1 - 1e-9)
        return e[np.array(keep)]

    def outline(self, spacing):
        pts = [_polyline_resample(self.corners[[i, j]], spacing)[0] for i, j in self.edges()]
        return np.unique(np.vstack(pts), axis=0)

    def vertices(self):
        return self.corners

    def transformed(self, rot, shift):
        return ConvexPolyhedron(self.corners @ np.asarray(rot).T + shift, self.faces, self.intensity)


@dataclass(frozen=True, eq=False)
class Union(Support):
    """Disjoint union of supports; queries go to the nearest part."""

    parts: tuple

    def __post_init__(self):
        if len(self.parts) == 0:
            raise ValidationError("union of zero supports")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def dim(self):
        return max(p.dim for p in self.parts)

    def _closest(self, P):
        res = [p._closest(P) for p in self.parts]
        d = np.stack([r[0] for r in res])
        k = np.argmin(d, axis=0)
        rows = np.arange(len(P))
        return d[k, rows], np.stack([r[1] for r in res])[k, rows]

    def quadrature(self, spacing):
        qs = [p.quadrature(spacing) for p in self.parts]
        return QuadratureSet(np.vstack([q.nodes for q in qs]), np.concatenate([q.weights for q in qs]),
                             np.concatenate([q.intensities for q in qs]))

    def measure(self):
        return float(sum(p.measure() for p in self.parts))

    def outline(self, spacing):
        return np.vstack([p.outline(spacing) for p in self.parts])

    def vertices(self):
        return np.vstack([p.vertices() for p in self.parts])

    def transformed(self, rot, shift):
        return Union(tuple(p.transformed(rot, shift) for p in self.parts))


def _reindex(simplices, kept):
    lookup = {int(old): new for new, old in enumerate(kept)}
    return np.vectorize(lookup.__getitem__)(simplices)


def _check_spacing(h):
    if not (np.isfinite(h) and h > 0):
        raise ValidationError(f"quadrature spacing must be positive, got {h}")


def _check_intensity(tau):
    if not (np.isfinite(tau) and tau > 0):
        raise ValidationError(f"intensity must be positive, got {tau}")


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def min_distance(support: Support, x):
    """Distance from ``x`` to the support and one nearest support point."""
    if support is None:
        raise ValidationError("empty support")
    d, near = support.closest(x)
    return float(d[0]), near[0]


def quadrature(support: Support, target_spacing: float) -> QuadratureSet:
    return support.quadrature(target_spacing)


def control_residual(support: Support, sensor, arrival: float, onset: float, c: float) -> float:
    """``min_distance - c (arrival - onset)``; zero when the arrival is the
    geometric first arrival from the support."""
    if not c > 0:
        raise ValidationError("sound speed must be positive")
    return min_distance(support, sensor)[0] - c * (arrival - onset)


def oracle_arrivals(support: Support, sensors, onset: float = 0.0, c: float = 1.0) -> np.ndarray:
    """Exact first-arrival times ``onset + dist / c`` at each sensor."""
    return onset + support.distance(sensors) / c


# ---------------------------------------------------------------------------
# named shapes used by the bundled scenarios
# ---------------------------------------------------------------------------

def helix(radius, pitch):
    return lambda z: np.column_stack([radius * np.cos(z), radius * np.sin(z), pitch / (2 * np.pi) * z])


def parabola(a=1.0, shift=-1.0):
    return lambda z: np.column_stack([z, a * z**2 + shift, np.zeros_like(z)])


def circle2(radius, center=(0.0, 0.0)):
    return lambda z: np.column_stack([center[0] + radius * np.cos(z), center[1] + radius * np.sin(z)])


def egg2(scale=1.0, center=(0.0, 0.0)):
    def fn(z):
        r = (1 + 0.6 * np.cos(z)) / (1 + 0.8 * np.cos(z))
        return np.column_stack([center[0] + scale * r * np.cos(z), center[1] + scale * r * np.sin(z)])
    return fn


def star2(scale=0.6, center=(0.0, 0.0)):
    def fn(z):
        r = scale * np.sqrt(17.0 / (4.0 + 2.0 * np.cos(3 * z)))
        return np.column_stack([center[0] + r * np.cos(z), center[1] + r * np.sin(z)])
    return fn


CURVES = {"helix": helix, "parabola": parabola}
REGIONS = {"disk": circle2, "egg": egg2, "star": star2}
