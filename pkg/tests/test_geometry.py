import json

import numpy as np
import pytest

from fnelearn import (
    DegenerateInput,
    NodeSet,
    OutsideHull,
    SimplicialPartition,
    UnsupportedDimension,
    bisect_longest_edge,
    delaunay_triangulate,
    locate,
    partition_metrics,
    project_hull,
    validate_partition,
)
from fnelearn.geometry import convex_hull_polygon, project_hull_batch

SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
RIGHT_TRI = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def gift_wrap_hull_count(pts):
    """Independent hull-vertex count by gift wrapping."""
    pts = np.asarray(pts, dtype=float)
    start = int(np.lexsort((pts[:, 1], pts[:, 0]))[0])
    hull = [start]
    while True:
        p = hull[-1]
        q = (p + 1) % len(pts)
        for r in range(len(pts)):
            if r == p:
                continue
            cr = np.cross(pts[q] - pts[p], pts[r] - pts[p])
            if cr < 0 or (cr == 0 and np.linalg.norm(pts[r] - pts[p]) > np.linalg.norm(pts[q] - pts[p])):
                q = r
        if q == start:
            break
        hull.append(q)
    return len(hull)


class TestNodeSet:
    def test_rejects_too_few_points(self):
        with pytest.raises(DegenerateInput):
            NodeSet(np.array([[0.0, 0.0], [1.0, 0.0]]))

    def test_rejects_duplicates(self):
        with pytest.raises(DegenerateInput):
            NodeSet(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]]))

    def test_rejects_collinear(self):
        with pytest.raises(DegenerateInput):
            NodeSet(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]))


class TestDelaunay:
    def test_three_points_single_triangle(self):
        part = delaunay_triangulate(NodeSet(RIGHT_TRI))
        assert part.n_simplices == 1

    def test_unit_square_two_triangles(self):
        part = delaunay_triangulate(NodeSet(SQUARE))
        assert part.n_simplices == 2
        assert np.isclose(part.measures().sum(), 1.0)

    def test_euler_relation_random_points(self):
        rng = np.random.default_rng(42)
        pts = rng.uniform(0, 1, (50, 2))
        part = delaunay_triangulate(NodeSet(pts))
        b = gift_wrap_hull_count(pts)
        assert part.n_simplices == 2 * 50 - 2 - b

    def test_empty_circumcircle(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, (30, 2))
        part = delaunay_triangulate(NodeSet(pts))
        for s in part.simplices:
            a, b, c = pts[s]
            # circumcenter from perpendicular bisectors
            m = 2 * np.array([b - a, c - a])
            rhs = np.array([b @ b - a @ a, c @ c - a @ a])
            center = np.linalg.solve(m, rhs)
            r2 = np.sum((a - center) ** 2)
            d2 = np.sum((pts - center) ** 2, axis=1)
            others = np.setdiff1d(np.arange(30), s)
            assert np.all(d2[others] >= r2 - 1e-9)

    def test_every_node_used(self):
        rng = np.random.default_rng(7)
        pts = rng.uniform(0, 1, (25, 2))
        part = delaunay_triangulate(NodeSet(pts))
        assert set(np.unique(part.simplices)) == set(range(25))

    def test_unsupported_dimension(self):
        pts = np.random.default_rng(0).uniform(0, 1, (10, 3))
        with pytest.raises(UnsupportedDimension):
            delaunay_triangulate(NodeSet(pts))

    def test_deterministic(self):
        pts = np.random.default_rng(11).uniform(0, 1, (40, 2))
        a = delaunay_triangulate(NodeSet(pts))
        b = delaunay_triangulate(NodeSet(pts.copy()))
        assert np.array_equal(a.simplices, b.simplices)


class TestValidate:
    def test_delaunay_passes(self):
        pts = np.random.default_rng(0).uniform(0, 1, (20, 2))
        rep = validate_partition(delaunay_triangulate(NodeSet(pts)))
        assert rep.ok

    def test_t_vertex_fails_p3(self):
        # second triangle attaches to only half of the shared edge
        pts = np.array(
            [[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, 0.0], [0.5, -1.0]]
        )
        part = SimplicialPartition(NodeSet(pts), [[0, 1, 2], [0, 3, 4]])
        rep = validate_partition(part)
        assert not rep.p3
        assert (0, 1) in [(a, b) for a, b, _ in rep.p3_failures]

    def test_missing_triangle_fails_p1(self):
        part = SimplicialPartition(NodeSet(SQUARE), [[0, 1, 2]])
        rep = validate_partition(part)
        assert not rep.p1
        assert rep.p1_deficit == pytest.approx(0.5)

    def test_overlap_fails(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        part = SimplicialPartition(NodeSet(pts), [[0, 1, 2], [0, 1, 3], [0, 2, 3]])
        rep = validate_partition(part)
        assert not rep.p3


class TestLocate:
    @pytest.fixture(scope="class")
    def part(self):
        pts = np.random.default_rng(5).uniform(0, 1, (30, 2))
        return delaunay_triangulate(NodeSet(pts))

    def test_vertex_kronecker(self, part):
        for i in [0, 7, 29]:
            loc = locate(part, part.nodes.points[i])
            s = part.simplices[loc.simplex_index]
            expected = (s == i).astype(float)
            assert np.allclose(loc.weights, expected, atol=1e-12)

    def test_centroid_weights(self, part):
        s = part.simplices[4]
        centroid = part.nodes.points[s].mean(axis=0)
        loc = locate(part, centroid)
        assert loc.simplex_index == 4 or np.allclose(loc.weights, 1 / 3, atol=1e-9)
        if loc.simplex_index == 4:
            assert np.allclose(loc.weights, 1 / 3)

    def test_reconstruction_many_points(self, part):
        rng = np.random.default_rng(0)
        # random convex combinations of simplex vertices: guaranteed interior
        idx = rng.integers(0, part.n_simplices, 10000)
        w = rng.dirichlet([1.0, 1.0, 1.0], 10000)
        xs = np.einsum("kj,kjd->kd", w, part.nodes.points[part.simplices[idx]])
        tri, weights = part.locate_batch(xs)
        rec = np.einsum("kj,kjd->kd", weights, part.nodes.points[part.simplices[tri]])
        assert np.abs(rec - xs).max() < 1e-10
        assert weights.min() >= -1e-12

    def test_outside_hull_raises(self, part):
        with pytest.raises(OutsideHull):
            locate(part, np.array([5.0, 5.0]))

    def test_locate_after_projection_total(self, part):
        rng = np.random.default_rng(1)
        for _ in range(50):
            x = rng.uniform(-3, 3, 2)
            p = project_hull(part.nodes, x)
            locate(part, p)  # must not raise


class TestProjectHull:
    def test_interior_point_fixed(self):
        x = np.array([0.25, 0.75])
        assert np.allclose(project_hull(NodeSet(SQUARE), x), x)

    def test_face_projection(self):
        assert np.allclose(
            project_hull(NodeSet(SQUARE), np.array([2.0, 0.5])), [1.0, 0.5]
        )

    def test_corner_projection(self):
        assert np.allclose(
            project_hull(NodeSet(SQUARE), np.array([2.0, 2.0])), [1.0, 1.0]
        )

    def test_nearest_against_random_probes(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(0, 1, (15, 2))
        nodes = NodeSet(pts)
        poly = convex_hull_polygon(pts)
        x = np.array([1.8, -0.4])
        proj = project_hull(nodes, x)
        # random probes inside the hull: convex combinations of hull vertices
        w = rng.dirichlet(np.ones(len(poly)), 10000)
        probes = w @ poly
        assert np.all(
            np.linalg.norm(x - proj) <= np.linalg.norm(x - probes, axis=1) + 1e-12
        )

    def test_batch_matches_single(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(0, 1, (12, 2))
        xs = rng.uniform(-2, 3, (200, 2))
        batch = project_hull_batch(NodeSet(pts), xs)
        for k in range(0, 200, 17):
            assert np.allclose(batch[k], project_hull(NodeSet(pts), xs[k]))


class TestBisection:
    def test_single_triangle_split_in_two(self):
        part = SimplicialPartition(NodeSet(RIGHT_TRI), [[0, 1, 2]])
        ref = bisect_longest_edge(part)
        assert ref.n_simplices == 2
        assert len(ref.nodes) == 4
        # midpoint of the hypotenuse appears
        assert np.any(np.all(np.isclose(ref.nodes.points, [0.5, 0.5]), axis=1))

    def test_longest_edge_after_one_sweep(self):
        part = SimplicialPartition(NodeSet(RIGHT_TRI), [[0, 1, 2]])
        ref = bisect_longest_edge(part)
        assert partition_metrics(ref).longest_edge == pytest.approx(1.0)

    def test_longest_edge_monotone(self):
        pts = np.random.default_rng(8).uniform(0, 1, (10, 2))
        part = delaunay_triangulate(NodeSet(pts))
        prev = partition_metrics(part).longest_edge
        for _ in range(6):
            part = bisect_longest_edge(part)
            cur = partition_metrics(part).longest_edge
            assert cur <= prev + 1e-12
            prev = cur

    def test_validity_preserved_8_sweeps(self):
        pts = np.random.default_rng(9).uniform(0, 1, (12, 2))
        part = delaunay_triangulate(NodeSet(pts))
        for _ in range(8):
            part = bisect_longest_edge(part)
            assert validate_partition(part).ok

    def test_nodes_nested(self):
        pts = np.random.default_rng(10).uniform(0, 1, (8, 2))
        part = delaunay_triangulate(NodeSet(pts))
        ref = bisect_longest_edge(part)
        assert np.array_equal(ref.nodes.points[: len(pts)], part.nodes.points)

    def test_children_nested_in_parents(self):
        pts = np.random.default_rng(12).uniform(0, 1, (8, 2))
        part = delaunay_triangulate(NodeSet(pts))
        ref = bisect_longest_edge(part)
        # every child vertex must lie inside some parent triangle (weights >= 0)
        for s in ref.simplices:
            centroid = ref.nodes.points[s].mean(axis=0)
            loc = part.locate(centroid)
            assert loc.weights.min() >= -1e-12

    def test_strong_regularity_diagnostic(self):
        part = SimplicialPartition(NodeSet(RIGHT_TRI), [[0, 1, 2]])
        for _ in range(6):
            part = bisect_longest_edge(part)
        m = partition_metrics(part)
        assert m.min_measure >= 1e-3 * m.longest_edge**2  # bounded shape quality


class TestMetrics:
    def test_unit_right_triangle(self):
        part = SimplicialPartition(NodeSet(RIGHT_TRI), [[0, 1, 2]])
        m = partition_metrics(part)
        assert m.longest_edge == pytest.approx(np.sqrt(2))
        assert m.min_measure == pytest.approx(0.5)

    def test_equilateral_area(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
        part = SimplicialPartition(NodeSet(pts), [[0, 1, 2]])
        assert partition_metrics(part).min_measure == pytest.approx(np.sqrt(3) / 4)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        pts = np.random.default_rng(4).uniform(0, 1000, (20, 2))
        part = delaunay_triangulate(NodeSet(pts))
        path = tmp_path / "part.json"
        part.save(path)
        back = SimplicialPartition.load(path)
        assert np.array_equal(back.nodes.points, part.nodes.points)  # bit-exact
        assert np.array_equal(back.simplices, part.simplices)

    def test_schema_fields(self, tmp_path):
        part = delaunay_triangulate(NodeSet(SQUARE))
        path = tmp_path / "p.json"
        part.save(path)
        obj = json.loads(path.read_text())
        assert set(obj) == {"dim", "points", "simplices"}
        assert obj["dim"] == 2
