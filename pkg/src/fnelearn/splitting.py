"""Plug-and-Play splitting drivers over abstract operator handles.

Three drivers are provided: forward-backward (PnP-FBS), Douglas-Rachford
(PnP-DR) and the primal-dual iteration (PnP-CP) whose dual step plugs a
firmly nonexpansive operator in through Moreau's identity
J_{sigma A^{-1}}(x) = sigma (Id - J_{A / sigma})(x / sigma).
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import StepSizeViolation

DENSE_HISTORY_LIMIT = 100_000


@dataclass
class LinearHandle:
    """A linear map with its adjoint and a declared operator-norm bound."""

    fn: callable
    adjoint: callable
    norm_bound: float

    def validate_norm(self, shape, iters=50, seed=0):
        """Power-iteration check that the declared bound covers the true norm."""
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(shape)
        v /= np.linalg.norm(v)
        est = 0.0
        for _ in range(iters):
            w = self.adjoint(self.fn(v))
            nw = np.linalg.norm(w)
            if nw == 0:
                return 0.0
            est = np.sqrt(nw)
            v = w / nw
        if est > self.norm_bound * 1.01:
            raise ValueError(
                f"declared norm bound {self.norm_bound} below power-iteration "
                f"estimate {est:.6g}"
            )
        return float(est)


def identity_linear_handle():
    return LinearHandle(fn=lambda x: x, adjoint=lambda x: x, norm_bound=1.0)


@dataclass
class PnPConfig:
    tau: float
    sigma: float = 1.0
    max_iters: int = 1000
    tol: float = 1e-8
    record_residuals: bool = True

    def __post_init__(self):
        if self.tau <= 0 or self.sigma <= 0:
            raise ValueError("step sizes must be positive")


@dataclass
class IterationHistory:
    """Per-iteration residuals, dense up to 1e5 iterations, then 1:10."""

    columns: tuple
    rows: list = field(default_factory=list)
    iterations: int = 0

    def record(self, k, *vals):
        self.iterations = k
        if k <= DENSE_HISTORY_LIMIT or k % 10 == 0:
            self.rows.append((k, *vals))

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(("iter",) + self.columns)
            w.writerows(self.rows)

    def column(self, name):
        j = (("iter",) + self.columns).index(name)
        return np.array([r[j] for r in self.rows])


def pnp_fbs(a1, beta, t, cfg, x0):
    """Forward-backward: x <- T(x - tau * A1 x), A1 beta-cocoercive."""
    if not 0 < cfg.tau < 2.0 / beta:
        raise StepSizeViolation(f"tau = {cfg.tau} outside (0, {2.0 / beta})")
    x = np.asarray(x0, dtype=float)
    hist = IterationHistory(("fp_residual",))
    for k in range(1, cfg.max_iters + 1):
        x_new = t(x - cfg.tau * a1(x))
        res = float(np.linalg.norm(x_new - x))
        if cfg.record_residuals:
            hist.record(k, res)
        if res <= cfg.tol * (1.0 + np.linalg.norm(x)):
            x = x_new
            break
        x = x_new
    return x, hist


def pnp_dr(j_tau_a1, t, cfg, w0):
    """Douglas-Rachford with the second resolvent replaced by a plug-in T."""
    w = np.asarray(w0, dtype=float)
    hist = IterationHistory(("fp_residual",))
    x1 = x2 = w
    for k in range(1, cfg.max_iters + 1):
        x1 = j_tau_a1(w)
        x2 = t(2.0 * x1 - w)
        gap = x2 - x1
        w = w + gap
        res = float(np.linalg.norm(gap))
        if cfg.record_residuals:
            hist.record(k, res)
        if res <= cfg.tol * (1.0 + np.linalg.norm(x1)):
            break
    return x1, x2, hist


def pnp_cp(j_tau_a1, t, linear, cfg, x0, y0):
    """Primal-dual iteration with the dual prox replaced by a plug-in T.

        x <- J_{tau A1}(x - tau L* y)
        y <- sigma (Id - T)(y / sigma + L(2 x_new - x))

    Requires tau * sigma * ||L||^2 <= 1. History records the standard
    primal residual ||(x_k - x_{k+1}) / tau - L*(y_k - y_{k+1})|| and dual
    residual ||(y_k - y_{k+1}) / sigma - L(x_k - x_{k+1})||.
    """
    if cfg.tau * cfg.sigma * linear.norm_bound**2 > 1.0 + 1e-12:
        raise StepSizeViolation(
            f"tau*sigma*||L||^2 = {cfg.tau * cfg.sigma * linear.norm_bound ** 2:.6g} > 1"
        )
    linear.validate_norm(np.asarray(x0, dtype=float).shape)
    x = np.asarray(x0, dtype=float)
    y = np.asarray(y0, dtype=float)
    hist = IterationHistory(("primal_residual", "dual_residual"))
    for k in range(1, cfg.max_iters + 1):
        x_new = j_tau_a1(x - cfg.tau * linear.adjoint(y))
        arg = y / cfg.sigma + linear.fn(2.0 * x_new - x)
        y_new = cfg.sigma * (arg - t(arg))
        rp = float(
            np.linalg.norm((x - x_new) / cfg.tau - linear.adjoint(y - y_new))
        )
        rd = float(np.linalg.norm((y - y_new) / cfg.sigma - linear.fn(x - x_new)))
        if cfg.record_residuals:
            hist.record(k, rp, rd)
        x, y = x_new, y_new
        if rp <= cfg.tol and rd <= cfg.tol:
            break
    return x, y, hist


def moreau_check(resolvent, inverse_resolvent, sigma, samples):
    """Max gap of Moreau's identity over sample points.

    `resolvent(x, s)` must evaluate J_{s A}(x) and `inverse_resolvent(x, s)`
    must evaluate J_{s A^{-1}}(x); both sides should be closed forms. For
    each sample x the identity J_{sigma A^{-1}}(x) =
    sigma (Id - J_{A / sigma})(x / sigma) is evaluated and the worst norm
    discrepancy returned.
    """
    worst = 0.0
    for x in samples:
        x = np.asarray(x, dtype=float)
        lhs = inverse_resolvent(x, sigma)
        rhs = sigma * (x / sigma - resolvent(x / sigma, 1.0 / sigma))
        worst = max(worst, float(np.linalg.norm(lhs - rhs)))
    return worst
