"""Image denoising application: discrete gradients, separable proxes,
training-set construction from image gradients, the primal-dual denoisers,
quality metrics, and grayscale image I/O.

The discrete gradient D uses forward differences with Neumann boundary
(last row/column difference zero); its adjoint is the matching negative
divergence, and ||D||^2 <= 8.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ShapeMismatch, StepSizeViolation
from .splitting import IterationHistory
from .training import TrainingSet

GRAD_NORM_SQ = 8.0


def gradient(u):
    """Forward-difference gradient, (p, q) -> (p, q, 2)."""
    u = np.asarray(u, dtype=float)
    g = np.zeros(u.shape + (2,))
    g[:-1, :, 0] = u[1:, :] - u[:-1, :]
    g[:, :-1, 1] = u[:, 1:] - u[:, :-1]
    return g


def adjoint(v):
    """Adjoint of the gradient (negative divergence), (p, q, 2) -> (p, q)."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 3 or v.shape[2] != 2:
        raise ShapeMismatch(f"expected (p, q, 2) field, got {v.shape}")
    out = np.zeros(v.shape[:2])
    v0, v1 = v[..., 0], v[..., 1]
    out[:-1, :] -= v0[:-1, :]
    out[1:, :] += v0[:-1, :]
    out[:, :-1] -= v1[:, :-1]
    out[:, 1:] += v1[:, :-1]
    return out


def gradient_norm_sq_estimate(shape, iters=50, seed=0):
    """Power-iteration estimate of ||D||^2 on images of the given shape."""
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(shape)
    u /= np.linalg.norm(u)
    est = 0.0
    for _ in range(iters):
        w = adjoint(gradient(u))
        est = np.linalg.norm(w)
        u = w / est
    return float(est)


# -- separable proxes --------------------------------------------------------


def prox_h1(z, alpha, sigma):
    """prox of (alpha/2)||.||^2 at penalty 1/sigma: plain shrinkage."""
    return np.asarray(z, dtype=float) / (1.0 + alpha / sigma)


def prox_l1(z, alpha, sigma):
    """prox of alpha*||.||_1 at penalty 1/sigma: componentwise soft-threshold."""
    z = np.asarray(z, dtype=float)
    thr = alpha / sigma
    return np.sign(z) * np.maximum(np.abs(z) - thr, 0.0)


def prox_l2(z, alpha, sigma):
    """prox of alpha*||.||_2 at penalty 1/sigma: block soft-threshold."""
    z = np.asarray(z, dtype=float)
    thr = alpha / sigma
    norms = np.linalg.norm(z, axis=-1, keepdims=True)
    scale = np.maximum(0.0, 1.0 - thr / np.maximum(norms, 1e-300))
    return scale * z


PROX_BY_NAME = {"h1": prox_h1, "tv-aniso": prox_l1, "tv-iso": prox_l2}


# -- training set construction ----------------------------------------------


def kmeans(points, k, iters=100, rng=None):
    """Plain Lloyd iterations with deterministic seeding.

    Returns (labels, centroids); empty clusters keep their previous centroid.
    """
    rng = rng or np.random.default_rng(0)
    pts = np.asarray(points, dtype=float)
    if k > pts.shape[0]:
        raise ValueError("more clusters than points")
    centroids = pts[rng.choice(pts.shape[0], size=k, replace=False)].copy()
    labels = np.zeros(pts.shape[0], dtype=np.intp)
    for _ in range(iters):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        for c in range(k):
            members = labels == c
            if np.any(members):
                centroids[c] = pts[members].mean(axis=0)
    return labels, centroids


def build_training_set(
    images, eta_tilde=10.0, n_clusters=250, seed=0, noise_on_images=False
):
    """Training pairs (noisy gradient, clean gradient) from sample images.

    Clean per-pixel gradients are noised with N(0, eta_tilde^2 I_2) (or,
    with `noise_on_images`, the images are noised before differencing),
    clustered to `n_clusters` representatives by k-means on the noisy
    coordinate, and symmetrized over both axes, yielding 4 * n_clusters
    pairs (exact duplicates dropped).
    """
    if not images:
        raise EmptyInput("need at least one image")
    if n_clusters < 1:
        raise ValueError("n_clusters must be >= 1")
    rng = np.random.default_rng(seed)
    clean, noisy = [], []
    for img in images:
        img = np.asarray(img, dtype=float)
        z = gradient(img).reshape(-1, 2)
        if noise_on_images:
            x = gradient(img + rng.normal(0.0, eta_tilde, img.shape)).reshape(-1, 2)
        else:
            x = z + rng.normal(0.0, eta_tilde, z.shape)
        clean.append(z)
        noisy.append(x)
    z = np.concatenate(clean)
    x = np.concatenate(noisy)

    labels, centroids = kmeans(x, n_clusters, rng=rng)
    z_means = np.zeros_like(centroids)
    for c in range(n_clusters):
        members = labels == c
        if np.any(members):
            z_means[c] = z[members].mean(axis=0)
            centroids[c] = x[members].mean(axis=0)

    signs = np.array([[1, 1], [1, -1], [-1, 1], [-1, -1]], dtype=float)
    xs = (centroids[:, None, :] * signs[None, :, :]).reshape(-1, 2)
    zs = (z_means[:, None, :] * signs[None, :, :]).reshape(-1, 2)
    _, keep = np.unique(xs, axis=0, return_index=True)
    keep = np.sort(keep)
    return TrainingSet(xs[keep], zs[keep])


# -- primal-dual denoisers ---------------------------------------------------


@dataclass
class DenoiseConfig:
    sigma: float = 1.0 / np.sqrt(GRAD_NORM_SQ)
    tau: float = None
    alpha: float = 1.0
    max_iters: int = 5000
    tol: float = 1e-6

    def __post_init__(self):
        if self.tau is None:
            self.tau = 1.0 / (GRAD_NORM_SQ * self.sigma)
        if self.tau * self.sigma * GRAD_NORM_SQ > 1.0 + 1e-9:
            raise StepSizeViolation(
                f"tau*sigma*||D||^2 = {self.tau * self.sigma * GRAD_NORM_SQ:.6g} > 1"
            )


def _cp_denoise(noisy, dual_map, cfg):
    """Shared primal-dual loop; `dual_map` maps stacked 2-vectors z/sigma
    to the plug-in output T_r(z/sigma) (a prox for the baselines)."""
    noisy = np.asarray(noisy, dtype=float)
    u = noisy.copy()
    v = np.zeros(noisy.shape + (2,))
    tau, sigma = cfg.tau, cfg.sigma
    hist = IterationHistory(("primal_residual", "dual_residual"))
    for k in range(1, cfg.max_iters + 1):
        u_new = (u - tau * adjoint(v) + tau * noisy) / (1.0 + tau)
        z = v + sigma * gradient(2.0 * u_new - u)
        w = z / sigma
        tw = dual_map(w.reshape(-1, 2)).reshape(w.shape)
        v_new = sigma * (w - tw)
        rp = float(np.linalg.norm((u - u_new) / tau - adjoint(v - v_new)))
        rd = float(np.linalg.norm((v - v_new) / sigma - gradient(u - u_new)))
        hist.record(k, rp, rd)
        u, v = u_new, v_new
        if rp <= cfg.tol and rd <= cfg.tol:
            break
    return u, hist


def denoise_pnp(noisy, plug_in, cfg):
    """PnP primal-dual denoising with a learned 2-D plug-in operator.

    `plug_in` is applied per pixel to the dual points z_ij/sigma; it may be
    a FirmlyNonexpansiveOperator or any callable on (k, 2) arrays.
    """
    audit = getattr(getattr(plug_in, "op", None), "lipschitz_audit", None)
    if audit is not None and audit().max > 1.0 + 1e-6:
        warnings.warn(
            f"plug-in operator audit max = {audit().max:.6g} > 1",
            RuntimeWarning,
            stacklevel=2,
        )
    fn = plug_in.evaluate_batch if hasattr(plug_in, "evaluate_batch") else plug_in
    return _cp_denoise(noisy, fn, cfg)


def denoise_variational(noisy, regularizer, cfg):
    """Classical primal-dual denoising with an H1/TV prox, same iteration."""
    prox = PROX_BY_NAME[regularizer]
    return _cp_denoise(noisy, lambda w: prox(w, cfg.alpha, cfg.sigma), cfg)


def h1_direct_solve(noisy, alpha, tol=1e-12, max_iters=10000):
    """Conjugate-gradient solve of (I + alpha D*D) u = noisy (H1 oracle)."""
    noisy = np.asarray(noisy, dtype=float)

    def apply(u):
        return u + alpha * adjoint(gradient(u))

    u = noisy.copy()
    r = noisy - apply(u)
    p = r.copy()
    rs = float(np.sum(r * r))
    for _ in range(max_iters):
        ap = apply(p)
        a = rs / float(np.sum(p * ap))
        u += a * p
        r -= a * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * np.linalg.norm(noisy):
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    return u


# -- quality metrics ---------------------------------------------------------


def psnr(a, b):
    """Peak signal-to-noise ratio at peak 255, in dB (inf for equal images)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(255.0**2 / mse)


def ssim(a, b, window=8, k1=0.01, k2=0.03, peak=255.0):
    """Structural similarity with a uniform sliding window (stride 1)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ShapeMismatch(f"{a.shape} vs {b.shape}")
    from numpy.lib.stride_tricks import sliding_window_view

    wa = sliding_window_view(a, (window, window)).reshape(-1, window * window)
    wb = sliding_window_view(b, (window, window)).reshape(-1, window * window)
    mu_a = wa.mean(axis=1)
    mu_b = wb.mean(axis=1)
    var_a = wa.var(axis=1)
    var_b = wb.var(axis=1)
    cov = (wa * wb).mean(axis=1) - mu_a * mu_b
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    )
    return float(s.mean())


# -- image I/O and synthetic test images -------------------------------------


def read_pgm(path):
    """8-bit binary PGM (P5) to float array."""
    with open(path, "rb") as f:
        data = f.read()
    fields = []
    i = 0
    while len(fields) < 4:
        if data[i : i + 1] == b"#":
            i = data.index(b"\n", i) + 1
            continue
        j = i
        while data[j : j + 1] not in b" \t\r\n":
            j += 1
        if j > i:
            fields.append(data[i:j])
        i = j + 1
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    if magic != b"P5" or maxval != 255:
        raise ValueError("only 8-bit binary PGM (P5) supported")
    pix = np.frombuffer(data[i : i + w * h], dtype=np.uint8)
    return pix.reshape(h, w).astype(float)


def write_pgm(path, img):
    img = np.asarray(img, dtype=float)
    pix = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        f.write(pix.tobytes())


def read_png(path):
    """8-bit grayscale PNG to float array (color inputs are converted)."""
    from PIL import Image

    with Image.open(path) as im:
        return np.asarray(im.convert("L"), dtype=float)


def read_image(path):
    path = str(path)
    if path.endswith(".pgm"):
        return read_pgm(path)
    return read_png(path)


def make_circles_image(size=256):
    """Procedural circles-and-shadows test image in [0, 255]."""
    yy, xx = np.mgrid[0:size, 0:size].astype(float) / size
    img = 40.0 + 50.0 * xx + 20.0 * yy  # background shadow ramp
    circles = [
        (0.30, 0.32, 0.20, 220.0),
        (0.68, 0.28, 0.12, 150.0),
        (0.62, 0.68, 0.22, 245.0),
        (0.25, 0.75, 0.10, 110.0),
        (0.50, 0.50, 0.05, 70.0),
    ]
    for cx, cy, r, val in circles:
        mask = (xx - cx) ** 2 + (yy - cy) ** 2 <= r**2
        img[mask] = val
    return img


def make_texture_image(size=256, seed=7):
    """Smooth random-field image standing in for a natural photo."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    field = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 16)
    field -= field.min()
    field /= field.max()
    return 30.0 + 190.0 * field


def add_gaussian_noise(img, eta, seed=0):
    rng = np.random.default_rng(seed)
    return np.asarray(img, dtype=float) + rng.normal(0.0, eta, np.shape(img))
