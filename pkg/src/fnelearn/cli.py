"""Batch command-line front end for the training and denoising pipeline.

Exit codes: 0 success, 1 audit/validation failure, 2 non-convergence,
3 configuration violation, 4 I/O error. Every artifact-producing command
writes a manifest JSON (schema "fne-learn/1") alongside its outputs with
input hashes, the config snapshot, the seed, and wall-clock seconds.
"""

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FneLearnError, StepSizeViolation
from .geometry import (
    NodeSet,
    SimplicialPartition,
    bisect_longest_edge,
    delaunay_triangulate,
    partition_metrics,
    validate_partition,
)
from .imaging import (
    DenoiseConfig,
    add_gaussian_noise,
    build_training_set,
    denoise_pnp,
    denoise_variational,
    psnr,
    read_image,
    ssim,
    write_pgm,
)
from .operators import PiecewiseAffineOperator, to_firmly_nonexpansive
from .training import AdmmConfig, TrainingSet, admm_train, empirical_risk

MANIFEST_SCHEMA = "fne-learn/1"

EXIT_OK = 0
EXIT_AUDIT = 1
EXIT_NONCONVERGENCE = 2
EXIT_CONFIG = 3
EXIT_IO = 4


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(out_dir, command, config, inputs, outputs, seed, seconds):
    manifest = {
        "schema": MANIFEST_SCHEMA,
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "seconds": round(seconds, 3),
    }
    path = Path(out_dir) / f"{command}.manifest.json"
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def _load_config_defaults(args):
    """Config-file values fill in only the flags the user left at None."""
    if not getattr(args, "config", None):
        return
    text = open(args.config, "rb").read()
    if str(args.config).endswith(".toml"):
        import tomllib

        obj = tomllib.loads(text.decode())
    else:
        obj = json.loads(text)
    for key, val in obj.items():
        attr = key.replace("-", "_")
        if getattr(args, attr, None) is None:
            setattr(args, attr, val)


def cmd_build_trainset(args):
    _load_config_defaults(args)
    eta_tilde = args.eta_tilde if args.eta_tilde is not None else 10.0
    clusters = args.clusters if args.clusters is not None else 250
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    images = [read_image(p) for p in args.images]
    ts = build_training_set(
        images,
        eta_tilde=eta_tilde,
        n_clusters=clusters,
        seed=args.seed,
        noise_on_images=args.noise_on_images,
    )
    ts_path = out_dir / "trainset.json"
    ts.save(ts_path)
    _write_manifest(
        out_dir,
        "build-trainset",
        {
            "eta_tilde": eta_tilde,
            "clusters": clusters,
            "noise_on_images": args.noise_on_images,
        },
        args.images,
        [ts_path],
        args.seed,
        time.perf_counter() - t0,
    )
    print(f"wrote {ts_path} with {ts.n} pairs")
    return EXIT_OK


def cmd_train(args):
    _load_config_defaults(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ts = TrainingSet.load(args.trainset)
    cfg = AdmmConfig(
        rho0=args.rho0 if args.rho0 is not None else AdmmConfig.rho0,
        max_iters=args.max_iters if args.max_iters is not None else AdmmConfig.max_iters,
        tol_primal=args.tol if args.tol is not None else AdmmConfig.tol_primal,
        tol_dual=args.tol if args.tol is not None else AdmmConfig.tol_dual,
        epsilon_margin=args.epsilon if args.epsilon is not None else 0.01,
    )
    partition = delaunay_triangulate(NodeSet(ts.inputs))
    op, log = admm_train(ts, partition, cfg)
    op.meta["seed"] = args.seed
    op_path = out_dir / "operator.json"
    log_path = out_dir / "convergence.csv"
    op.save(op_path)
    log.to_csv(log_path)
    audit = op.lipschitz_audit()
    _write_manifest(
        out_dir,
        "train",
        {
            "rho0": cfg.rho0,
            "rho_growth": cfg.rho_growth,
            "rho_max": cfg.rho_max,
            "k_stationary": cfg.k_stationary,
            "max_iters": cfg.max_iters,
            "tol_primal": cfg.tol_primal,
            "tol_dual": cfg.tol_dual,
            "epsilon_margin": cfg.epsilon_margin,
        },
        [args.trainset],
        [op_path, log_path],
        args.seed,
        time.perf_counter() - t0,
    )
    print(
        f"final objective {empirical_risk(op, ts):.6f}, "
        f"max Lipschitz {audit.max:.6f}, "
        f"{'converged' if log.converged else 'NOT converged'} "
        f"after {log.iters[-1]} iterations"
    )
    if not log.converged:
        return EXIT_NONCONVERGENCE
    return EXIT_OK


def cmd_denoise(args):
    _load_config_defaults(args)
    if (args.operator is None) == (args.method is None):
        print("error: exactly one of --operator / --method is required", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    clean = read_image(args.image)
    if args.noise_eta is not None:
        noisy = add_gaussian_noise(clean, args.noise_eta, seed=args.seed)
        reference = clean
    else:
        noisy = clean
        reference = read_image(args.clean) if args.clean else None

    kwargs = {}
    if args.sigma is not None:
        kwargs["sigma"] = args.sigma
    if args.tau is not None:
        kwargs["tau"] = args.tau
    if args.alpha is not None:
        kwargs["alpha"] = args.alpha
    if args.max_iters is not None:
        kwargs["max_iters"] = args.max_iters
    cfg = DenoiseConfig(**kwargs)

    inputs = [args.image]
    if args.operator is not None:
        op = PiecewiseAffineOperator.load(args.operator)
        plug_in = to_firmly_nonexpansive(op)
        method = "learned"
        denoised, hist = denoise_pnp(noisy, plug_in, cfg)
        inputs.append(args.operator)
    else:
        method = args.method
        denoised, hist = denoise_variational(noisy, method, cfg)

    img_path = out_dir / "denoised.pgm"
    res_path = out_dir / "residuals.csv"
    write_pgm(img_path, denoised)
    hist.to_csv(res_path)
    outputs = [img_path, res_path]

    metric_path = out_dir / "metrics.csv"
    with open(metric_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["image", "method", "eta", "sigma", "alpha", "psnr", "ssim", "iters", "seconds"]
        )
        secs = time.perf_counter() - t0
        if reference is not None:
            p, s = psnr(reference, denoised), ssim(reference, denoised)
        else:
            p, s = "", ""
        w.writerow(
            [args.image, method, args.noise_eta, cfg.sigma, cfg.alpha, p, s,
             hist.iterations, round(secs, 3)]
        )
    outputs.append(metric_path)
    _write_manifest(
        out_dir,
        "denoise",
        {
            "method": method,
            "sigma": cfg.sigma,
            "tau": cfg.tau,
            "alpha": cfg.alpha,
            "max_iters": cfg.max_iters,
            "noise_eta": args.noise_eta,
        },
        inputs,
        outputs,
        args.seed,
        time.perf_counter() - t0,
    )
    if reference is not None:
        print(f"PSNR {p:.4f} dB, SSIM {s:.4f} ({hist.iterations} iterations)")
    else:
        print(f"done ({hist.iterations} iterations)")
    return EXIT_OK


def cmd_refine_study(args):
    _load_config_defaults(args)
    if args.sweeps > 8:
        print("error: at most 8 refinement sweeps supported", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    ts = TrainingSet.load(args.trainset)
    partition = delaunay_triangulate(NodeSet(ts.inputs))
    rows = []
    op = None
    for level in range(args.sweeps + 1):
        if level > 0:
            partition = bisect_longest_edge(partition)
        y0 = None
        if op is not None:
            # Warm start each level from the previous solution interpolated
            # onto the refined partition; the interpolant is feasible with
            # the same objective, so the study is monotone by construction.
            m_old = len(op.values)
            y0 = np.empty((len(partition.nodes), ts.inputs.shape[1]))
            y0[:m_old] = op.values
            y0[m_old:] = op.evaluate_batch(partition.nodes.points[m_old:])
        op, _ = admm_train(ts, partition, y0=y0)
        m = partition_metrics(partition)
        rows.append(
            (
                level,
                m.longest_edge,
                m.min_measure,
                empirical_risk(op, ts),
                op.lipschitz_audit().max,
            )
        )
        print(
            f"level {level}: longest_edge {m.longest_edge:.6f}, "
            f"objective {rows[-1][3]:.6f}, max Lipschitz {rows[-1][4]:.6f}"
        )
    csv_path = Path(out_dir) / "refine_study.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["level", "longest_edge", "min_measure", "objective", "max_lipschitz"])
        w.writerows(rows)
    _write_manifest(
        out_dir,
        "refine-study",
        {"sweeps": args.sweeps},
        [args.trainset],
        [csv_path],
        args.seed,
        time.perf_counter() - t0,
    )
    return EXIT_OK


def cmd_audit(args):
    op = PiecewiseAffineOperator.load(args.operator)
    audit = op.lipschitz_audit()
    per = np.asarray(audit.per_simplex)
    edges = [0.0, 0.5, 0.9, 0.99, 1.0, 1.0 + 1e-6, np.inf]
    counts, _ = np.histogram(per, bins=edges)
    print(f"{len(per)} simplices, max Lipschitz {audit.max:.9f}")
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        print(f"  [{lo:g}, {hi:g}): {c}")
    tol = 1.0 + 1e-6
    if audit.max > tol:
        worst = np.argsort(per)[::-1][:10]
        print("audit FAILED; worst simplices:")
        for t in worst:
            if per[t] > tol:
                print(f"  simplex {t}: {per[t]:.9f}")
        return EXIT_AUDIT
    print("audit passed")
    return EXIT_OK


def cmd_validate(args):
    part = SimplicialPartition.load(args.partition)
    report = validate_partition(part)
    print(f"coverage (P1): {'pass' if report.p1 else f'FAIL, deficit {report.p1_deficit:g}'}")
    print(f"positive measures (P2): {'pass' if report.p2 else f'FAIL: {report.p2_failures}'}")
    print(f"face-to-face (P3): {'pass' if report.p3 else f'FAIL: {report.p3_failures[:10]}'}")
    return EXIT_OK if report.ok else EXIT_AUDIT


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fnelearn",
        description="Learn nonexpansive piecewise-affine operators and use "
        "them in convergent Plug-and-Play image denoising.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-trainset", help="build training pairs from image gradients")
    p.add_argument("--images", nargs="+", required=True, help="input images (PGM/PNG)")
    p.add_argument("--eta-tilde", type=float, default=None, help="gradient noise level (default 10)")
    p.add_argument("--clusters", type=int, default=None, help="k-means clusters (default 250)")
    p.add_argument("--noise-on-images", action="store_true",
                   help="noise the images before differencing instead of the gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None, help="JSON/TOML file with flag defaults")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_build_trainset)

    p = sub.add_parser("train", help="train a nonexpansive operator on a trainset")
    p.add_argument("--trainset", required=True)
    p.add_argument("--epsilon", type=float, default=None, help="Lipschitz margin (default 0.01)")
    p.add_argument("--rho0", type=float, default=None)
    p.add_argument("--tol", type=float, default=None, help="primal/dual tolerance")
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("denoise", help="denoise an image with a learned operator or baseline")
    p.add_argument("--image", required=True)
    p.add_argument("--operator", default=None, help="trained operator JSON")
    p.add_argument("--method", default=None, choices=["h1", "tv-aniso", "tv-iso"])
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--noise-eta", type=float, default=None,
                   help="synthesize Gaussian noise of this level before denoising")
    p.add_argument("--clean", default=None, help="reference image for metrics")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("refine-study", help="train across bisection refinements")
    p.add_argument("--trainset", required=True)
    p.add_argument("--sweeps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_refine_study)

    p = sub.add_parser("audit", help="per-simplex Lipschitz audit of an operator file")
    p.add_argument("--operator", required=True)
    p.set_defaults(fn=cmd_audit)

    p = sub.add_parser("validate", help="validate a partition file")
    p.add_argument("--partition", required=True)
    p.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except StepSizeViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except FneLearnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
