"""Piecewise-affine operators on simplicial partitions and their audits.

An operator is defined by node values y_i on a partition of conv(D); inside
each simplex it is the affine map y_{i0} + B_t A_t^{-1} (x - x_{i0}), and
points outside the hull are routed through the Euclidean hull projection.
The per-simplex spectral norms ||B_t A_t^{-1}|| characterize nonexpansivity,
and T = (Id + N)/2 lifts a nonexpansive N to a firmly nonexpansive operator.
"""

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NotNonexpansive
from .geometry import SimplicialPartition, project_hull_batch
from .linalg2 import spectral_norm2

AUDIT_WARN = 1.0 + 1e-6
AUDIT_ERROR = 1.05


@dataclass(frozen=True)
class LipschitzAudit:
    """Per-simplex Lipschitz constants ||J_t|| and their maximum."""

    per_simplex: np.ndarray
    max: float
    argmax_simplex: int


class PiecewiseAffineOperator:
    """Continuous piecewise-affine map with cached per-simplex Jacobians."""

    def __init__(self, partition, values, meta=None):
        if not isinstance(partition, SimplicialPartition):
            raise TypeError("partition must be a SimplicialPartition")
        values = np.ascontiguousarray(np.asarray(values, dtype=float))
        if values.shape != partition.nodes.points.shape:
            raise ValueError("values must be one point per node")
        self.partition = partition
        self.values = values
        self.meta = dict(meta) if meta else {}
        self._ainv = partition.inverse_edge_matrices()
        base = values[partition.simplices[:, 0]]
        b = np.swapaxes(values[partition.simplices[:, 1:]] - base[:, None, :], 1, 2)
        self._jac = b @ self._ainv
        self._hull = partition.hull_polygon() if partition.dim == 2 else None

    @property
    def dim(self):
        return self.partition.dim

    def with_values(self, values):
        """New operator on the same partition (caches A_t^{-1} are shared)."""
        return PiecewiseAffineOperator(self.partition, values, meta=self.meta)

    def evaluate(self, x):
        return self.evaluate_batch(np.asarray(x, dtype=float)[None, :])[0]

    def evaluate_batch(self, xs):
        """Evaluate at many points; points outside the hull are projected."""
        xs = np.asarray(xs, dtype=float)
        proj = project_hull_batch(self._hull, xs)
        idx, w = self.partition.locate_batch(proj)
        vals = self.values[self.partition.simplices[idx]]  # (k, d+1, d)
        return np.einsum("kj,kjd->kd", w, vals)

    __call__ = evaluate

    def jacobian(self, t):
        if not 0 <= t < self.partition.n_simplices:
            raise IndexError(f"simplex index {t} out of range")
        return self._jac[t]

    def lipschitz_audit(self):
        if self.dim == 2:
            sig = spectral_norm2(self._jac)
        else:
            sig = np.linalg.svd(self._jac, compute_uv=False)[..., 0]
        k = int(np.argmax(sig))
        return LipschitzAudit(sig, float(sig[k]), k)

    # -- serialization -----------------------------------------------------

    def to_dict(self):
        d = self.partition.to_dict()
        d["values"] = self.values.tolist()
        d["meta"] = self.meta
        return d

    @classmethod
    def from_dict(cls, obj):
        part = SimplicialPartition.from_dict(obj)
        op = cls(part, np.array(obj["values"], dtype=float), meta=obj.get("meta"))
        # loading recomputes the caches; verify their defining identities
        a = part.edge_matrices()
        eye = np.eye(part.dim)
        res = np.linalg.norm(a @ op._ainv - eye, axis=(1, 2))
        if res.max() > 1e-10:
            raise ValueError("inverse edge-matrix cache fails verification")
        return op

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


class FirmlyNonexpansiveOperator:
    """The lift T = (Id + N)/2 of a nonexpansive piecewise-affine N."""

    def __init__(self, op):
        self.op = op

    def evaluate(self, x):
        return 0.5 * (np.asarray(x, dtype=float) + self.op.evaluate(x))

    def evaluate_batch(self, xs):
        return 0.5 * (np.asarray(xs, dtype=float) + self.op.evaluate_batch(xs))

    __call__ = evaluate


def to_firmly_nonexpansive(op):
    """Lift a piecewise-affine N to T = (Id + N)/2.

    Warns when the audited Lipschitz constant slightly exceeds 1 (trained
    operators can sit marginally above due to finite solver tolerance) and
    refuses beyond 1.05.
    """
    audit = op.lipschitz_audit()
    if audit.max > AUDIT_ERROR:
        raise NotNonexpansive(
            f"audit max {audit.max:.6g} > {AUDIT_ERROR} (simplex {audit.argmax_simplex})"
        )
    if audit.max > AUDIT_WARN:
        warnings.warn(
            f"operator slightly expansive: audit max = {audit.max:.8g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return FirmlyNonexpansiveOperator(op)


def check_fne(t, pairs):
    """Max violation of the firmly-nonexpansive inequality over point pairs.

    For each pair (x, x'): ||Tx - Tx'||^2 + ||(x - Tx) - (x' - Tx')||^2
    must not exceed ||x - x'||^2. Returns max(lhs - rhs); <= 0 means pass.
    """
    xs = np.asarray([p[0] for p in pairs], dtype=float)
    ys = np.asarray([p[1] for p in pairs], dtype=float)
    if hasattr(t, "evaluate_batch"):
        tx, ty = t.evaluate_batch(xs), t.evaluate_batch(ys)
    else:
        tx = np.asarray([t(x) for x in xs])
        ty = np.asarray([t(y) for y in ys])
    lhs = np.sum((tx - ty) ** 2, axis=1)
    lhs += np.sum(((xs - tx) - (ys - ty)) ** 2, axis=1)
    rhs = np.sum((xs - ys) ** 2, axis=1)
    return float(np.max(lhs - rhs))
