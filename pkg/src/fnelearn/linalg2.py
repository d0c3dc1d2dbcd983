"""Closed-form 2x2 singular value routines.

The per-simplex Jacobians of piecewise-affine operators in the plane are 2x2
matrices; their spectral norms and spectral-ball projections sit in the hot
path of both the audit and the ADMM trainer, so we avoid iterative SVD there.
All routines accept stacked inputs of shape (..., 2, 2).
"""

import numpy as np


def svd2(m):
    """Closed-form SVD of stacked 2x2 matrices.

    Returns (U, s, Vt) with m = U @ diag(s) @ Vt, where U and Vt are
    rotations and s = (s1, s2) satisfies s1 >= |s2|; s2 carries the sign
    of det(m).
    """
    m = np.asarray(m, dtype=float)
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    e = (a + d) / 2
    f = (a - d) / 2
    g = (c + b) / 2
    h = (c - b) / 2
    q = np.hypot(e, h)
    r = np.hypot(f, g)
    s = np.stack([q + r, q - r], axis=-1)
    a1 = np.arctan2(g, f)
    a2 = np.arctan2(h, e)
    u = _rot((a2 + a1) / 2)
    vt = _rot((a2 - a1) / 2)
    return u, s, vt


def _rot(t):
    ct, st = np.cos(t), np.sin(t)
    return np.stack(
        [np.stack([ct, -st], axis=-1), np.stack([st, ct], axis=-1)], axis=-2
    )


def spectral_norm2(m):
    """Largest singular value of stacked 2x2 matrices, without SVD vectors."""
    m = np.asarray(m, dtype=float)
    a = m[..., 0, 0]
    b = m[..., 0, 1]
    c = m[..., 1, 0]
    d = m[..., 1, 1]
    q = np.hypot((a + d) / 2, (c - b) / 2)
    r = np.hypot((a - d) / 2, (c + b) / 2)
    return q + r


def clip_singular_values2(m, radius):
    """Clamp the singular values of stacked 2x2 matrices to [0, radius].

    This is the Frobenius-nearest matrix with spectral norm <= radius.
    """
    u, s, vt = svd2(m)
    sc = np.clip(s, -radius, radius)
    return u @ (sc[..., None] * vt)
