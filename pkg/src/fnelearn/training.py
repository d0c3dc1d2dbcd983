"""Constrained empirical-risk training of piecewise-affine nonexpansive maps.

Fits node values Y = [y_1 ... y_m] to targets ybar_i = 2*zbar_i - xbar_i by
minimizing (1/n) sum ||y_i - ybar_i||^2 subject to the per-simplex spectral
constraints ||B_t(Y) A_t^{-1}|| <= 1 - eps, via ADMM with one auxiliary
matrix U_t per simplex. Also provides a small-instance solver that enforces
only the pairwise node constraints ||y_i - y_j|| <= ||x_i - x_j|| and so
lower-bounds the simplex-constrained objective.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import NodeMismatch, ScaleExceeded, SingularSystem
from .linalg2 import clip_singular_values2, spectral_norm2
from .operators import PiecewiseAffineOperator

DEGENERACY_TOL = 1e-12


@dataclass(frozen=True)
class TrainingSet:
    """Input/target pairs (xbar_i, zbar_i) with derived ybar_i = 2 zbar - xbar."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.ascontiguousarray(np.asarray(self.inputs, dtype=float))
        z = np.ascontiguousarray(np.asarray(self.targets, dtype=float))
        if x.ndim != 2 or x.shape != z.shape:
            raise ValueError("inputs and targets must be matching (n, d) arrays")
        n, d = x.shape
        if n <= d:
            raise ValueError(f"need n > d, got n = {n}, d = {d}")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", z)

    @property
    def n(self):
        return self.inputs.shape[0]

    @property
    def dim(self):
        return self.inputs.shape[1]

    @property
    def nonexpansive_targets(self):
        """ybar_i = 2 zbar_i - xbar_i."""
        return 2.0 * self.targets - self.inputs

    def to_dict(self):
        return {
            "pairs": [
                {"x": x.tolist(), "z": z.tolist()}
                for x, z in zip(self.inputs, self.targets)
            ]
        }

    @classmethod
    def from_dict(cls, obj):
        xs = np.array([p["x"] for p in obj["pairs"]], dtype=float)
        zs = np.array([p["z"] for p in obj["pairs"]], dtype=float)
        return cls(xs, zs)

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


@dataclass
class AdmmConfig:
    """Penalty schedule and stopping rule for the trainer.

    Two-phase schedule: rho stays at `rho0` while the objective converges,
    then from iteration `k_grow_start` grows by `rho_growth` every
    `grow_every` iterations (capped at `rho_max`, constant from
    `k_stationary` on) to drive the per-simplex feasibility residual down.
    The sequence is non-decreasing and eventually stationary. Iterates are
    over-relaxed with factor `over_relaxation` (1.0 disables).
    """

    rho0: float = 1.0
    rho_growth: float = 2.0
    rho_max: float = 256.0
    k_grow_start: int = 8000
    grow_every: int = 500
    k_stationary: int = 12000
    max_iters: int = 20000
    tol_primal: float = 1e-6
    tol_dual: float = 1e-6
    epsilon_margin: float = 0.01
    over_relaxation: float = 1.8

    def __post_init__(self):
        if self.rho0 <= 0 or self.rho_growth < 1 or self.rho_max < self.rho0:
            raise ValueError("penalty schedule must be positive and non-decreasing")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if not 0 <= self.epsilon_margin < 1:
            raise ValueError("epsilon_margin must lie in [0, 1)")
        if self.grow_every < 1 or self.k_grow_start < 0:
            raise ValueError("growth schedule must be positive")
        if not 0 < self.over_relaxation < 2:
            raise ValueError("over_relaxation must lie in (0, 2)")

    @classmethod
    def from_file(cls, path):
        text = open(path, "rb").read()
        if str(path).endswith(".toml"):
            import tomllib

            obj = tomllib.loads(text.decode())
        else:
            obj = json.loads(text)
        return cls(**obj)


@dataclass
class ConvergenceLog:
    iters: list = field(default_factory=list)
    rho: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    primal_residual: list = field(default_factory=list)
    dual_residual: list = field(default_factory=list)
    max_lipschitz: list = field(default_factory=list)
    converged: bool = False

    def append(self, k, rho, obj, rp, rd, lip):
        self.iters.append(k)
        self.rho.append(rho)
        self.objective.append(obj)
        self.primal_residual.append(rp)
        self.dual_residual.append(rd)
        self.max_lipschitz.append(lip)

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(
                ["iter", "rho", "objective", "primal_residual", "dual_residual", "max_lipschitz"]
            )
            for row in zip(
                self.iters,
                self.rho,
                self.objective,
                self.primal_residual,
                self.dual_residual,
                self.max_lipschitz,
            ):
                w.writerow(row)


class ConstraintMaps:
    """The linear maps L_t : Y -> (Y E_t) A_t^{-1} of a fixed partition.

    E_t is the signed incidence matrix of simplex t (+1 on vertex i_j,
    -1 on i_0 in column j); the adjoint is L_t^*(M) = M A_t^{-T} E_t^T.
    """

    def __init__(self, partition, n_data):
        self.partition = partition
        self.n_data = n_data
        self.m = len(partition.nodes)
        self.idx = partition.simplices  # (l, d+1)
        self.ainv = partition.inverse_edge_matrices()  # (l, d, d)

    @property
    def n_simplices(self):
        return self.idx.shape[0]

    def apply(self, y):
        """All L_t Y at once; y is (d, m), result (l, d, d)."""
        base = y[:, self.idx[:, 0]]  # (d, l)
        diff = y[:, self.idx[:, 1:]] - base[:, :, None]  # (d, l, d)
        b = np.moveaxis(diff, 1, 0)  # (l, d, d) columns are differences
        return b @ self.ainv

    def adjoint_sum(self, mats):
        """sum_t L_t^*(M_t) as a (d, m) matrix."""
        p = mats @ np.swapaxes(self.ainv, 1, 2)  # (l, d, d)
        out = np.zeros((mats.shape[1], self.m))
        cols = np.moveaxis(p, 0, 1)  # (d, l, d)
        for j in range(self.idx.shape[1] - 1):
            np.add.at(out.T, self.idx[:, j + 1], cols[:, :, j].T)
            np.subtract.at(out.T, self.idx[:, 0], cols[:, :, j].T)
        return out

    def gram(self):
        """sum_t E_t A_t^{-1} A_t^{-T} E_t^T as a dense (m, m) matrix."""
        d = self.ainv.shape[1]
        g = self.ainv @ np.swapaxes(self.ainv, 1, 2)  # (l, d, d)
        c = np.zeros((d + 1, d))
        c[0, :] = -1.0
        c[1:, :] = np.eye(d)
        blocks = np.einsum("ab,tbc,dc->tad", c, g, c)  # (l, d+1, d+1)
        out = np.zeros((self.m, self.m))
        np.add.at(out, (self.idx[:, :, None], self.idx[:, None, :]), blocks)
        return out


def assemble_constraint_maps(ts, partition):
    """Constraint maps for a partition whose first n nodes are the inputs."""
    pts = partition.nodes.points
    n = ts.n
    if len(partition.nodes) < n or not np.array_equal(pts[:n], ts.inputs):
        raise NodeMismatch("partition nodes must start with the training inputs")
    return ConstraintMaps(partition, n)


def project_spectral_ball(m, radius):
    """Frobenius-nearest matrix with spectral norm <= radius (SVD clamping)."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] == (2, 2):
        return clip_singular_values2(m, radius)
    u, s, vt = np.linalg.svd(m)
    return u @ (np.clip(s, None, radius)[..., None] * vt)


def empirical_risk(op_or_values, ts):
    """(1/n) sum ||N(xbar_i) - ybar_i||^2 against the nonexpansive targets."""
    ybar = ts.nonexpansive_targets
    if isinstance(op_or_values, PiecewiseAffineOperator):
        vals = op_or_values.values[: ts.n]
    else:
        vals = np.asarray(op_or_values, dtype=float)[: ts.n]
    return float(np.sum((vals - ybar) ** 2) / ts.n)


def admm_train(ts, partition, cfg=None, y0=None):
    """Solve the spectrally constrained least-squares fit by consensus ADMM.

    Returns the trained operator and a per-iteration convergence log. The
    partition may carry extra constraint-only nodes beyond the n inputs;
    only the first n values enter the data term. `y0` optionally warm-starts
    the node values as an (m, d) array (e.g. a coarser solution interpolated
    onto a refined partition).
    """
    cfg = cfg or AdmmConfig()
    maps = assemble_constraint_maps(ts, partition)
    n, d, m = ts.n, ts.dim, maps.m
    radius = 1.0 - cfg.epsilon_margin

    meas = partition.measures()
    longest = np.float64(0.0)
    pts, simp = partition.nodes.points, partition.simplices
    for a in range(d + 1):
        for b in range(a + 1, d + 1):
            longest = max(longest, np.linalg.norm(pts[simp[:, a]] - pts[simp[:, b]], axis=1).max())
    bad = np.flatnonzero(meas * _fact(d) < DEGENERACY_TOL * max(1.0, longest**d))
    if bad.size:
        raise SingularSystem(f"degenerate simplices {bad.tolist()}")

    ybar = ts.nonexpansive_targets.T  # (d, n)
    data_diag = np.zeros(m)
    data_diag[:n] = 2.0 / n
    gram = maps.gram()

    # deterministic start: targets on data nodes, node positions elsewhere
    if y0 is not None:
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (m, d):
            raise ValueError(f"y0 must have shape {(m, d)}, got {y0.shape}")
        y = y0.T.copy()
    else:
        y = np.empty((d, m))
        y[:, :n] = ybar
        y[:, n:] = pts[n:].T
    u = project_spectral_ball(maps.apply(y), radius)
    lam = np.zeros_like(u)

    rho = cfg.rho0
    factor = _factor_normal(data_diag, gram, rho)
    rhs_data = data_diag[None, :] * np.pad(ybar, ((0, 0), (0, m - n)))

    alpha = cfg.over_relaxation
    log = ConvergenceLog()
    for k in range(1, cfg.max_iters + 1):
        rhs = rhs_data + rho * maps.adjoint_sum(u - lam)
        y = cho_solve(factor, rhs.T).T
        ly = maps.apply(y)
        ly_relaxed = alpha * ly + (1.0 - alpha) * u
        u_prev = u
        u = project_spectral_ball(ly_relaxed + lam, radius)
        lam = lam + ly_relaxed - u

        rp = float(np.linalg.norm(ly - u, axis=(1, 2)).max())
        rd = rho * float(np.linalg.norm(u - u_prev, axis=(1, 2)).max())
        obj = float(np.sum((y[:, :n] - ybar) ** 2) / n)
        lip = float(spectral_norm2(ly).max()) if d == 2 else float(
            np.linalg.svd(ly, compute_uv=False)[..., 0].max()
        )
        log.append(k, rho, obj, rp, rd, lip)

        if rp <= cfg.tol_primal and rd <= cfg.tol_dual:
            log.converged = True
            break

        if (
            cfg.k_grow_start <= k < cfg.k_stationary
            and (k - cfg.k_grow_start) % cfg.grow_every == 0
            and cfg.rho_growth > 1
            and rho < cfg.rho_max
        ):
            new_rho = min(cfg.rho_max, cfg.rho_growth * rho)
            lam *= rho / new_rho
            rho = new_rho
            factor = _factor_normal(data_diag, gram, rho)

    op = PiecewiseAffineOperator(
        partition,
        y.T,
        meta={"epsilon_margin": cfg.epsilon_margin, "converged": log.converged},
    )
    return op, log


def _fact(d):
    out = 1
    for k in range(2, d + 1):
        out *= k
    return out


def _factor_normal(data_diag, gram, rho):
    k = rho * gram
    k[np.diag_indices_from(k)] += data_diag
    try:
        return cho_factor(k)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"normal matrix not positive definite: {exc}") from exc


def solve_sololip(ts, tol=1e-10, max_iters=200000, rho0=1.0):
    """Best fit under only the pairwise constraints ||y_i - y_j|| <= ||x_i - x_j||.

    Consensus ADMM over the n(n-1)/2 pair constraints with the closed-form
    per-pair projection (keep the midpoint, shrink the difference onto the
    admissible ball), followed by a cyclic-projection polish so the returned
    values are feasible to ~1e-9. Small-instance oracle: n <= 200.
    """
    n, d = ts.n, ts.dim
    if n > 200:
        raise ScaleExceeded(f"solve_sololip supports n <= 200, got {n}")
    x = ts.inputs
    ybar = ts.nonexpansive_targets
    ii, jj = np.triu_indices(n, k=1)
    caps = np.linalg.norm(x[ii] - x[jj], axis=1)  # (npairs,)

    def project_pairs(a, b):
        # nearest (u, v) with ||u - v|| <= cap, preserving the midpoint
        diff = a - b
        dist = np.linalg.norm(diff, axis=1)
        over = dist > caps
        if not np.any(over):
            return a, b
        a, b = a.copy(), b.copy()
        mid = (a[over] + b[over]) / 2
        e = diff[over] / dist[over][:, None]
        half = (caps[over] / 2)[:, None]
        a[over] = mid + half * e
        b[over] = mid - half * e
        return a, b

    y = ybar.copy()
    wa, wb = project_pairs(y[ii], y[jj])
    la = np.zeros_like(wa)
    lb = np.zeros_like(wb)
    rho = rho0
    degree = n - 1  # each node participates in n-1 pairs
    for k in range(max_iters):
        # y-step: separable quadratic, closed form per node
        num = (2.0 / n) * ybar.copy()
        np.add.at(num, ii, rho * (wa - la))
        np.add.at(num, jj, rho * (wb - lb))
        y = num / (2.0 / n + rho * degree)
        a_in, b_in = y[ii] + la, y[jj] + lb
        wa_prev, wb_prev = wa, wb
        wa, wb = project_pairs(a_in, b_in)
        la = la + y[ii] - wa
        lb = lb + y[jj] - wb
        rp = max(
            float(np.abs(y[ii] - wa).max(initial=0.0)),
            float(np.abs(y[jj] - wb).max(initial=0.0)),
        )
        rd = rho * max(
            float(np.abs(wa - wa_prev).max(initial=0.0)),
            float(np.abs(wb - wb_prev).max(initial=0.0)),
        )
        if rp <= tol and rd <= tol:
            break
        if k < 100:
            rho = min(1e4, rho * 1.2)

    # feasibility polish: cyclic projection onto the pair constraints
    for _ in range(1000):
        dist = np.linalg.norm(y[ii] - y[jj], axis=1)
        viol = dist - caps
        if viol.max(initial=0.0) <= 1e-9:
            break
        ya, yb = project_pairs(y[ii], y[jj])
        contrib = np.zeros_like(y)
        count = np.zeros(n)
        np.add.at(contrib, ii, ya)
        np.add.at(contrib, jj, yb)
        np.add.at(count, ii, 1.0)
        np.add.at(count, jj, 1.0)
        y = contrib / count[:, None]
    return y


def max_pairwise_violation(values, ts):
    """Max of ||y_i - y_j|| - ||x_i - x_j|| over all pairs."""
    y = np.asarray(values, dtype=float)
    x = ts.inputs
    ii, jj = np.triu_indices(ts.n, k=1)
    return float(
        (np.linalg.norm(y[ii] - y[jj], axis=1) - np.linalg.norm(x[ii] - x[jj], axis=1)).max()
    )
