import json

import numpy as np
import pytest

from fnelearn import (
    FirmlyNonexpansiveOperator,
    NodeSet,
    NotNonexpansive,
    PiecewiseAffineOperator,
    check_fne,
    delaunay_triangulate,
    to_firmly_nonexpansive,
)
from fnelearn.linalg2 import clip_singular_values2, spectral_norm2, svd2


def random_operator(seed, n_nodes=25, contraction=0.9):
    """A piecewise-affine map built from a contraction of the nodes."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(0, 1, (n_nodes, 2))
    part = delaunay_triangulate(NodeSet(pts))
    theta = 0.3
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    values = contraction * pts @ rot.T + 0.1
    return PiecewiseAffineOperator(part, values)


class TestSvd2:
    def test_matches_numpy_on_random_stack(self):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((500, 2, 2)) * rng.lognormal(0, 2, (500, 1, 1))
        u, s, vt = svd2(m)
        assert np.allclose(u @ (s[..., None] * vt), m, atol=1e-12)
        # s2 carries the sign of det(m); magnitudes match an unsigned SVD
        s_np = np.linalg.svd(m, compute_uv=False)
        assert np.allclose(np.abs(s), s_np, atol=1e-10)
        assert np.all(s[:, 0] >= np.abs(s[:, 1]) - 1e-15)
        signs = np.sign(np.linalg.det(m))
        assert np.all(np.sign(s[:, 1]) * signs >= 0)

    def test_orthogonality(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((200, 2, 2))
        u, s, vt = svd2(m)
        eye = np.broadcast_to(np.eye(2), (200, 2, 2))
        assert np.allclose(u @ np.swapaxes(u, 1, 2), eye, atol=1e-12)
        assert np.allclose(vt @ np.swapaxes(vt, 1, 2), eye, atol=1e-12)

    def test_special_matrices(self):
        for m in [np.zeros((2, 2)), np.eye(2), np.diag([3.0, -2.0]),
                  np.array([[0.0, 1.0], [1.0, 0.0]]), np.array([[1e-30, 0], [0, 0]])]:
            u, s, vt = svd2(m)
            assert np.allclose(u @ (s[..., None] * vt), m, atol=1e-12)

    def test_spectral_norm(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((300, 2, 2))
        assert np.allclose(
            spectral_norm2(m), np.linalg.norm(m, ord=2, axis=(1, 2)), atol=1e-10
        )

    def test_clip_matches_full_svd_projection(self):
        rng = np.random.default_rng(3)
        m = rng.standard_normal((300, 2, 2)) * 3
        clipped = clip_singular_values2(m, 1.0)
        u, s, vt = np.linalg.svd(m)
        ref = u @ (np.clip(s, None, 1.0)[..., None] * vt)
        assert np.allclose(clipped, ref, atol=1e-10)


class TestPiecewiseAffine:
    def test_interpolates_node_values(self):
        op = random_operator(0)
        out = op.evaluate_batch(op.partition.nodes.points)
        assert np.allclose(out, op.values, atol=1e-10)

    def test_affine_on_each_simplex(self):
        op = random_operator(1)
        part = op.partition
        rng = np.random.default_rng(0)
        for t in range(min(5, part.n_simplices)):
            verts = part.nodes.points[part.simplices[t]]
            w = rng.dirichlet([1, 1, 1], 20)
            xs = w @ verts
            expected = xs @ op.jacobian(t).T + (
                op.evaluate(verts[0]) - verts[0] @ op.jacobian(t).T
            )
            assert np.allclose(op.evaluate_batch(xs), expected, atol=1e-9)

    def test_continuity_across_edges(self):
        op = random_operator(2)
        part = op.partition
        # midpoints of all edges evaluated from both sides agree by construction;
        # check global continuity by perturbing across edge midpoints
        rng = np.random.default_rng(1)
        for t in range(part.n_simplices):
            s = part.simplices[t]
            for a, b in [(0, 1), (1, 2), (0, 2)]:
                mid = (part.nodes.points[s[a]] + part.nodes.points[s[b]]) / 2
                vals = op.evaluate_batch(
                    mid + rng.standard_normal((10, 2)) * 1e-9
                )
                assert np.abs(vals - op.evaluate(mid)).max() < 1e-6

    def test_outside_points_use_hull_projection(self):
        op = random_operator(3)
        x = np.array([50.0, -50.0])
        from fnelearn import project_hull

        p = project_hull(op.partition.nodes, x)
        assert np.allclose(op.evaluate(x), op.evaluate(p), atol=1e-12)

    def test_lipschitz_audit(self):
        op = random_operator(4, contraction=0.9)
        audit = op.lipschitz_audit()
        assert audit.max <= 0.9 + 1e-9
        assert len(audit.per_simplex) == op.partition.n_simplices
        assert audit.max == pytest.approx(max(audit.per_simplex))

    def test_audit_flags_expansion(self):
        op = random_operator(5, contraction=1.3)
        assert op.lipschitz_audit().max > 1.0

    def test_nonexpansive_in_practice(self):
        op = random_operator(6, contraction=0.95)
        rng = np.random.default_rng(2)
        xs = rng.uniform(-1, 2, (400, 2))
        ys = rng.uniform(-1, 2, (400, 2))
        fx, fy = op.evaluate_batch(xs), op.evaluate_batch(ys)
        lhs = np.linalg.norm(fx - fy, axis=1)
        rhs = np.linalg.norm(xs - ys, axis=1)
        assert np.all(lhs <= rhs + 1e-10)

    def test_jacobian_index_error(self):
        op = random_operator(7)
        with pytest.raises(IndexError):
            op.jacobian(op.partition.n_simplices)

    def test_round_trip_bit_exact(self, tmp_path):
        op = random_operator(8)
        path = tmp_path / "op.json"
        op.save(path)
        back = PiecewiseAffineOperator.load(path)
        assert np.array_equal(back.values, op.values)
        assert np.array_equal(back.partition.nodes.points, op.partition.nodes.points)
        xs = np.random.default_rng(0).uniform(0, 1, (100, 2))
        assert np.array_equal(back.evaluate_batch(xs), op.evaluate_batch(xs))

    def test_schema_fields(self, tmp_path):
        op = random_operator(9)
        path = tmp_path / "op.json"
        op.save(path)
        obj = json.loads(path.read_text())
        assert {"dim", "points", "simplices", "values", "meta"} <= set(obj)


class TestFirmlyNonexpansive:
    def test_halved_combination(self):
        op = random_operator(10, contraction=0.8)
        t = FirmlyNonexpansiveOperator(op)
        xs = np.random.default_rng(0).uniform(0, 1, (50, 2))
        expected = 0.5 * (xs + op.evaluate_batch(xs))
        assert np.allclose(t.evaluate_batch(xs), expected, atol=1e-12)

    def test_wrapper_rejects_expansive(self):
        op = random_operator(11, contraction=1.2)
        with pytest.raises(NotNonexpansive):
            to_firmly_nonexpansive(op)

    def test_wrapper_accepts_nonexpansive(self):
        op = random_operator(12, contraction=0.99)
        t = to_firmly_nonexpansive(op)
        assert isinstance(t, FirmlyNonexpansiveOperator)

    def test_fne_inequality_monte_carlo(self):
        op = random_operator(13, contraction=0.95)
        t = to_firmly_nonexpansive(op)
        rng = np.random.default_rng(3)
        pairs = rng.uniform(-0.5, 1.5, (2000, 2, 2))
        assert check_fne(t, pairs) <= 1e-10

    def test_check_fne_detects_violation(self):
        op = random_operator(14, contraction=1.5)
        t = FirmlyNonexpansiveOperator(op)  # bypass the audit on purpose
        rng = np.random.default_rng(4)
        pairs = rng.uniform(-0.5, 1.5, (2000, 2, 2))
        assert check_fne(t, pairs) > 0.0
