"""Face-to-face simplicial partitions: construction, validation, queries, refinement.

Types are dimension-generic; the algorithms (Delaunay triangulation, hull
projection, longest-edge bisection) are implemented for d = 2, which is the
setting of the image-gradient application.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, Delaunay

from .errors import DegenerateInput, OutsideHull, UnsupportedDimension
from .linalg2 import spectral_norm2

# Numeric tolerances: double-precision geometry at image-gradient scale.
CONTAINMENT_TOL = 1e-9
RECONSTRUCTION_TOL = 1e-10
MEASURE_REL_TOL = 1e-9
EDGE_TIE_TOL = 1e-12


@dataclass(frozen=True)
class NodeSet:
    """A finite set of m distinct points in R^d spanning the full dimension."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=float))
        if pts.ndim != 2:
            raise ValueError("points must be a (m, d) array")
        object.__setattr__(self, "points", pts)
        m, d = pts.shape
        if m < d + 1:
            raise DegenerateInput(f"need at least d+1 = {d + 1} points, got {m}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        # pairwise distinct
        order = np.lexsort(pts.T[::-1])
        srt = pts[order]
        if np.any(np.all(srt[1:] == srt[:-1], axis=1)):
            raise DegenerateInput("points must be pairwise distinct")
        centered = pts - pts.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-12 * max(1.0, np.abs(pts).max())) < d:
            raise DegenerateInput("points lie on a lower-dimensional hyperplane")

    @property
    def dim(self):
        return self.points.shape[1]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True)
class BarycentricLocation:
    """A containing simplex index and the barycentric weights of the query."""

    simplex_index: int
    weights: np.ndarray


@dataclass
class ValidationReport:
    """Pass/fail of the partition properties, with offenders on failure."""

    p1: bool
    p2: bool
    p3: bool
    p1_deficit: float = 0.0
    p2_failures: list = field(default_factory=list)
    p3_failures: list = field(default_factory=list)

    @property
    def ok(self):
        return self.p1 and self.p2 and self.p3


@dataclass(frozen=True)
class PartitionMetrics:
    longest_edge: float
    min_measure: float
    min_inv_edge_norm: float


class SimplicialPartition:
    """A node set plus (d+1)-index simplices covering conv(nodes).

    Immutable after construction; all queries are read-only. Heavyweight
    caches (edge matrices, point locator, hull polygon) are built lazily.
    """

    def __init__(self, nodes, simplices):
        if not isinstance(nodes, NodeSet):
            nodes = NodeSet(np.asarray(nodes, dtype=float))
        self.nodes = nodes
        simp = np.asarray(simplices, dtype=np.intp)
        d = nodes.dim
        if simp.ndim != 2 or simp.shape[1] != d + 1:
            raise ValueError(f"simplices must be (l, {d + 1})")
        if simp.shape[0] == 0:
            raise ValueError("partition needs at least one simplex")
        if simp.min() < 0 or simp.max() >= len(nodes):
            raise ValueError("simplex index out of range")
        self.simplices = simp
        self._edge_mats = None
        self._edge_mats_inv = None
        self._trifinder = None
        self._hull = None

    @property
    def dim(self):
        return self.nodes.dim

    @property
    def n_simplices(self):
        return self.simplices.shape[0]

    def edge_matrices(self):
        """Per-simplex matrices A_t = [x_{i1}-x_{i0} | ... | x_{id}-x_{i0}]."""
        if self._edge_mats is None:
            pts = self.nodes.points
            base = pts[self.simplices[:, 0]]  # (l, d)
            # columns are vertex differences
            a = pts[self.simplices[:, 1:]] - base[:, None, :]  # (l, d, d) rows
            self._edge_mats = np.swapaxes(a, 1, 2).copy()
        return self._edge_mats

    def inverse_edge_matrices(self):
        if self._edge_mats_inv is None:
            self._edge_mats_inv = np.linalg.inv(self.edge_matrices())
        return self._edge_mats_inv

    def measures(self):
        """d-measures of all simplices."""
        d = self.dim
        det = np.linalg.det(self.edge_matrices())
        return np.abs(det) / _factorial(d)

    def hull_polygon(self):
        """CCW convex hull polygon of the nodes (d = 2 only)."""
        if self.dim != 2:
            raise UnsupportedDimension("hull polygon requires d = 2")
        if self._hull is None:
            self._hull = convex_hull_polygon(self.nodes.points)
        return self._hull

    def _get_trifinder(self):
        if self.dim != 2:
            raise UnsupportedDimension("point location requires d = 2")
        if self._trifinder is None:
            from matplotlib.tri import Triangulation

            pts = self.nodes.points
            tri = Triangulation(pts[:, 0], pts[:, 1], self.simplices)
            self._trifinder = tri.get_trifinder()
        return self._trifinder

    # -- point location -------------------------------------------------

    def barycentric_weights(self, x, t):
        """Barycentric weights of x in simplex t, in vertex order i0..id."""
        ainv = self.inverse_edge_matrices()[t]
        base = self.nodes.points[self.simplices[t, 0]]
        lam = ainv @ (np.asarray(x, dtype=float) - base)
        return np.concatenate([[1.0 - lam.sum()], lam])

    def locate(self, x):
        """Lowest-index simplex containing x, with barycentric weights."""
        x = np.asarray(x, dtype=float)
        pts = self.nodes.points
        ainv = self.inverse_edge_matrices()
        base = pts[self.simplices[:, 0]]
        lam = np.einsum("tij,tj->ti", ainv, x[None, :] - base)
        w0 = 1.0 - lam.sum(axis=1)
        w = np.column_stack([w0, lam])
        inside = np.all(w >= -CONTAINMENT_TOL, axis=1)
        hits = np.flatnonzero(inside)
        if hits.size == 0:
            raise OutsideHull(f"point {x} is outside the convex hull")
        t = int(hits[0])
        weights = np.clip(w[t], 0.0, None)
        weights /= weights.sum()
        return BarycentricLocation(t, weights)

    def locate_batch(self, xs):
        """Simplex indices and barycentric weights for many points.

        Uses the trapezoid-map locator; points it misses (boundary fuzz)
        fall back to a full scan. Raises OutsideHull if any point is not
        contained within tolerance.
        """
        xs = np.asarray(xs, dtype=float)
        finder = self._get_trifinder()
        idx = np.asarray(finder(xs[:, 0], xs[:, 1]), dtype=np.intp)
        miss = idx < 0
        if np.any(miss):
            for k in np.flatnonzero(miss):
                idx[k] = self.locate(xs[k]).simplex_index
        ainv = self.inverse_edge_matrices()[idx]
        base = self.nodes.points[self.simplices[idx, 0]]
        lam = np.einsum("kij,kj->ki", ainv, xs - base)
        w = np.column_stack([1.0 - lam.sum(axis=1), lam])
        w = np.clip(w, 0.0, None)
        w /= w.sum(axis=1, keepdims=True)
        return idx, w

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "points": self.nodes.points.tolist(),
            "simplices": self.simplices.tolist(),
        }

    @classmethod
    def from_dict(cls, obj):
        if int(obj["dim"]) != len(obj["points"][0]):
            raise ValueError("dim field inconsistent with point coordinates")
        return cls(NodeSet(np.array(obj["points"], dtype=float)), obj["simplices"])

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def _factorial(d):
    out = 1
    for k in range(2, d + 1):
        out *= k
    return out


# -- convex hull helpers (d = 2) ------------------------------------------


def convex_hull_polygon(points):
    """CCW hull polygon of a 2-D point set via the monotone chain."""
    pts = np.asarray(points, dtype=float)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    srt = [tuple(p) for p in pts[order]]
    srt = sorted(set(srt))
    if len(srt) < 3:
        raise DegenerateInput("hull needs at least 3 distinct points")

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in srt:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(srt):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    poly = np.array(lower[:-1] + upper[:-1], dtype=float)
    if poly.shape[0] < 3:
        raise DegenerateInput("all points collinear")
    return poly


def _inside_polygon(poly, xs, tol):
    """Vectorized membership of points in a CCW convex polygon."""
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a  # (h, 2)
    rel = xs[:, None, :] - a[None, :, :]  # (k, h, 2)
    cr = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
    return np.all(cr >= -tol, axis=1)


def project_hull_batch(nodes, xs):
    """Euclidean projection of many points onto conv(nodes) (d = 2)."""
    if isinstance(nodes, NodeSet):
        if nodes.dim != 2:
            raise UnsupportedDimension("hull projection requires d = 2")
        poly = convex_hull_polygon(nodes.points)
    else:
        poly = np.asarray(nodes, dtype=float)
    xs = np.asarray(xs, dtype=float)
    scale = max(1.0, np.abs(poly).max())
    inside = _inside_polygon(poly, xs, 1e-12 * scale)
    out = xs.copy()
    if np.all(inside):
        return out
    q = xs[~inside]
    a = poly
    b = np.roll(poly, -1, axis=0)
    e = b - a
    ee = np.einsum("hj,hj->h", e, e)
    rel = q[:, None, :] - a[None, :, :]
    t = np.clip(np.einsum("khj,hj->kh", rel, e) / ee[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * e[None, :, :]
    d2 = np.sum((proj - q[:, None, :]) ** 2, axis=2)
    best = np.argmin(d2, axis=1)
    out[~inside] = proj[np.arange(q.shape[0]), best]
    return out


def project_hull(nodes, x):
    """Euclidean projection of a point onto conv(nodes) (d = 2)."""
    if isinstance(nodes, NodeSet) and nodes.dim != 2:
        raise UnsupportedDimension("hull projection requires d = 2")
    return project_hull_batch(nodes, np.asarray(x, dtype=float)[None, :])[0]


# -- construction -----------------------------------------------------------


def delaunay_triangulate(nodes):
    """Delaunay triangulation of a 2-D node set.

    Simplices are canonicalized (sorted indices, lexicographic row order) so
    the result is deterministic for a given point set.
    """
    if not isinstance(nodes, NodeSet):
        nodes = NodeSet(np.asarray(nodes, dtype=float))
    if nodes.dim != 2:
        raise UnsupportedDimension(f"unsupported dimension d = {nodes.dim}")
    try:
        tri = Delaunay(nodes.points)
    except Exception as exc:  # qhull failure on degenerate input
        raise DegenerateInput(f"triangulation failed: {exc}") from exc
    simp = np.sort(tri.simplices, axis=1)
    simp = simp[np.lexsort(simp.T[::-1])]
    used = np.unique(simp)
    if used.size != len(nodes):
        missing = sorted(set(range(len(nodes))) - set(used.tolist()))
        raise DegenerateInput(f"nodes {missing} dropped by the triangulation")
    return SimplicialPartition(nodes, simp)


# -- queries ----------------------------------------------------------------


def locate(partition, x):
    """Barycentric location of x in the partition (lowest containing simplex)."""
    return partition.locate(x)


def partition_metrics(partition):
    """Longest edge, minimal simplex measure, and max ||A_t^{-1}|| (spectral)."""
    pts = partition.nodes.points
    simp = partition.simplices
    d = partition.dim
    longest = 0.0
    for a in range(d + 1):
        for b in range(a + 1, d + 1):
            dist = np.linalg.norm(pts[simp[:, a]] - pts[simp[:, b]], axis=1)
            longest = max(longest, float(dist.max()))
    min_meas = float(partition.measures().min())
    ainv = partition.inverse_edge_matrices()
    if d == 2:
        inv_norm = float(spectral_norm2(ainv).max())
    else:
        inv_norm = float(np.linalg.svd(ainv, compute_uv=False)[..., 0].max())
    return PartitionMetrics(longest, min_meas, inv_norm)


# -- validation -------------------------------------------------------------


def validate_partition(partition):
    """Check partition properties (P1) coverage, (P2) nondegeneracy, (P3) conformity."""
    p = partition
    d = p.dim
    meas = p.measures()
    longest = partition_metrics(p).longest_edge

    # (P2): d+1 distinct indices and strictly positive measure
    p2_failures = []
    for t, s in enumerate(p.simplices):
        if len(set(s.tolist())) != d + 1:
            p2_failures.append(t)
        elif meas[t] <= 1e-12 * max(1.0, longest**d):
            p2_failures.append(t)

    # (P1): total measure equals hull measure within relative tolerance
    hull_meas = ConvexHull(p.nodes.points).volume
    total = float(meas.sum())
    deficit = hull_meas - total
    p1_ok = abs(deficit) <= MEASURE_REL_TOL * hull_meas

    # (P3): pairwise intersections are hulls of common vertices (d = 2)
    p3_failures = []
    if d == 2:
        p3_failures = _check_conformity_2d(p, longest)
    p1_ok = p1_ok and not _has_overlap(p3_failures)

    return ValidationReport(
        p1=p1_ok,
        p2=not p2_failures,
        p3=not p3_failures,
        p1_deficit=float(deficit),
        p2_failures=p2_failures,
        p3_failures=p3_failures,
    )


def _has_overlap(p3_failures):
    return any(kind == "overlap" for _, _, kind in p3_failures)


def _check_conformity_2d(partition, longest):
    from shapely import STRtree
    from shapely.geometry import Polygon

    pts = partition.nodes.points
    simp = partition.simplices
    polys = [Polygon(pts[s]) for s in simp]
    tree = STRtree(polys)
    area_tol = 1e-12 * max(1.0, longest**2)
    len_tol = 1e-9 * max(1.0, longest)
    failures = []
    pairs = tree.query(polys, predicate="intersects")
    seen = set()
    for a, b in zip(*pairs):
        if a >= b or (a, b) in seen:
            continue
        seen.add((int(a), int(b)))
        shared = set(simp[a].tolist()) & set(simp[b].tolist())
        inter = polys[a].intersection(polys[b])
        if inter.is_empty:
            continue
        if inter.area > area_tol:
            failures.append((int(a), int(b), "overlap"))
            continue
        if len(shared) == 2:
            i, j = sorted(shared)
            expected = float(np.linalg.norm(pts[i] - pts[j]))
            if abs(inter.length - expected) > len_tol:
                failures.append((int(a), int(b), "partial-edge"))
        elif len(shared) == 1:
            if inter.length > len_tol:
                failures.append((int(a), int(b), "edge-through-vertex"))
        else:  # no common vertices but touching with extent
            if inter.length > len_tol:
                failures.append((int(a), int(b), "non-conforming-contact"))
    return failures


# -- refinement -------------------------------------------------------------


def bisect_longest_edge(partition):
    """One refinement sweep of face-to-face longest-edge bisection (d = 2).

    All triangles tied (within 1e-12) for the global longest edge are
    bisected through that edge's midpoint; conformity is restored by
    recursively bisecting neighbors through their own longest edges.
    """
    if partition.dim != 2:
        raise UnsupportedDimension("longest-edge bisection requires d = 2")
    pts = [p for p in partition.nodes.points]
    tris = {t: tuple(int(i) for i in s) for t, s in enumerate(partition.simplices)}
    next_tid = len(tris)
    edge_tris = {}
    for tid, s in tris.items():
        for e in _tri_edges(s):
            edge_tris.setdefault(e, set()).add(tid)
    midpoints = {}

    def edge_len(e):
        return float(np.linalg.norm(pts[e[0]] - pts[e[1]]))

    def longest_edge_of(s):
        # strict total order (length, i, j): guarantees Rivara termination
        return max(_tri_edges(s), key=lambda e: (edge_len(e), e))

    def do_split(tid, e, mid):
        nonlocal next_tid
        s = tris.pop(tid)
        for ed in _tri_edges(s):
            edge_tris[ed].discard(tid)
        apex = next(v for v in s if v not in e)
        for child in ((e[0], mid, apex), (mid, e[1], apex)):
            tris[next_tid] = child
            for ed in _tri_edges(child):
                edge_tris.setdefault(ed, set()).add(next_tid)
            next_tid += 1

    def refine(tid):
        if tid not in tris:
            return
        e = longest_edge_of(tris[tid])
        nb = _neighbor(edge_tris, e, tid)
        while nb is not None and longest_edge_of(tris[nb]) != e:
            refine(nb)
            nb = _neighbor(edge_tris, e, tid)
        if e not in midpoints:
            pts.append((pts[e[0]] + pts[e[1]]) / 2.0)
            midpoints[e] = len(pts) - 1
        mid = midpoints[e]
        do_split(tid, e, mid)
        if nb is not None:
            do_split(nb, e, mid)

    global_longest = max(edge_len(e) for e in edge_tris)
    marked = sorted(
        tid
        for tid, s in tris.items()
        if edge_len(longest_edge_of(s)) >= global_longest - EDGE_TIE_TOL
    )
    for tid in marked:
        refine(tid)

    new_simp = np.array([tris[tid] for tid in sorted(tris)], dtype=np.intp)
    return SimplicialPartition(NodeSet(np.array(pts)), new_simp)


def _tri_edges(s):
    return (
        tuple(sorted((s[0], s[1]))),
        tuple(sorted((s[1], s[2]))),
        tuple(sorted((s[0], s[2]))),
    )


def _neighbor(edge_tris, e, tid):
    others = edge_tris.get(e, set()) - {tid}
    return next(iter(others)) if others else None
