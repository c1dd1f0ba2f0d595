"""Command-line pipeline: generate data, index geodesics, train, inspect, verify.

Every command is a pure function of (config, seed) at the artifact level;
reports carry the config hash so a CSV or checkpoint can be traced back to
the run that produced it. Exit codes: 0 success, 2 config error, 3 numerical
failure, 4 tolerance failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .analysis import (
    dim_report_dict,
    estimate_dim_cumvar,
    interpolate,
    latent_variances,
    smoothness,
)
from .datasets import Dataset, gen_factor_manifold, gen_flat_strip, gen_swiss_roll, load_csv, save_csv
from .geodesic import build_index, covering_radius, load_index, save_index
from .linalg import qr_orthonormalize
from .network import decode, encode, load_checkpoint, save_checkpoint
from .parallel import thread_count
from .theory_verify import StiefelProblem, solve_stiefel, verify_theorem2
from .training import RunConfig, config_from_dict, config_hash, report_to_dict, train

log = logging.getLogger(__name__)

OK, CONFIG_ERROR, NUMERICAL_FAILURE, TOLERANCE_FAILURE = 0, 2, 3, 4


def realize_dataset(spec: dict, seed: int) -> Dataset:
    """Materialize a dataset spec: either a named generator or a CSV path."""
    spec = dict(spec)
    if "csv" in spec:
        path = spec.pop("csv")
        if spec:
            raise ValueError(f"unknown dataset keys: {sorted(spec)}")
        return load_csv(path)
    name = spec.pop("generator", None)
    n = spec.pop("n", None)
    if name is None or n is None:
        raise ValueError("dataset spec needs a generator name and n (or a csv path)")
    if name == "swiss_roll":
        ds = gen_swiss_roll(n, noise_sd=spec.pop("noise_sd", 0.0), seed=seed)
    elif name == "factor_manifold":
        try:
            ds = gen_factor_manifold(
                d_true=spec.pop("d_true"),
                p=spec.pop("p"),
                n=n,
                variance_profile=spec.pop("variance_profile"),
                seed=seed,
            )
        except KeyError as exc:
            raise ValueError(f"factor_manifold spec is missing {exc}") from None
    elif name == "flat_strip":
        ds = gen_flat_strip(
            n,
            seed=seed,
            length=spec.pop("length", 6.0),
            width=spec.pop("width", 2.0),
            bend_radius=spec.pop("bend_radius", 2.2),
            p=spec.pop("p", 3),
        )
    else:
        raise ValueError(f"unknown generator {name!r}")
    if spec:
        raise ValueError(f"unknown dataset keys: {sorted(spec)}")
    return ds


# ------------------------------------------------------------- config plumbing


def _floats(text: str) -> list:
    return [float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list:
    return [int(x) for x in text.split(",") if x.strip()]


def _load_raw_config(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config file not found: {p}")
    return json.loads(p.read_text())


_OVERRIDES = (
    # (flag attr, config key, parser)
    ("latent_dim", "latent_dim", int),
    ("beta", "beta", float),
    ("iso_variant", "iso_variant", str),
    ("k_neighbors", "k_neighbors", int),
    ("landmark_count", "landmark_count", int),
    ("epochs", "epochs", int),
    ("batch_size", "batch_size", int),
    ("learning_rate", "learning_rate", float),
    ("scheduler_t", "scheduler_t", float),
    ("scheduler_K", "scheduler_K", int),
    ("seed", "seed", int),
    ("loss", "loss", str),
    ("hidden", "hidden", _ints),
    ("taus", "taus", _floats),
)


_DATASET_FLAGS = ("generator", "n", "d_true", "p", "noise_sd", "length", "width", "bend_radius")


def build_run_config(args) -> RunConfig:
    """Config file first, then command-line flags on top (flag wins)."""
    raw = _load_raw_config(args.config) if getattr(args, "config", None) else {}
    if getattr(args, "data", None):
        raw["dataset"] = {"csv": args.data}
    spec_overrides = {
        key: getattr(args, key) for key in _DATASET_FLAGS if getattr(args, key, None) is not None
    }
    if getattr(args, "variance_profile", None):
        spec_overrides["variance_profile"] = _floats(args.variance_profile)
    if spec_overrides:
        raw["dataset"] = {**raw.get("dataset", {}), **spec_overrides}
    for attr, key, parse in _OVERRIDES:
        val = getattr(args, attr, None)
        if val is not None:
            raw[key] = parse(val) if isinstance(val, str) else val
    ablate = getattr(args, "ablate", None)
    if ablate is not None:
        raw["ablate"] = None if ablate == "none" else ablate
    if "dataset" not in raw:
        raise ValueError(
            "no dataset given: pass --data (or --generator for gen-data) "
            "or a config with a dataset spec"
        )
    return config_from_dict(raw)


def _write_json(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ------------------------------------------------------------- subcommands


def cmd_gen_data(args) -> int:
    cfg = build_run_config(args)
    if "csv" in cfg.dataset:
        raise ValueError("gen-data needs a generator spec, not a csv path")
    ds = realize_dataset(cfg.dataset, cfg.seed)
    save_csv(ds, args.out)
    print(f"wrote {args.out} ({ds.ambient_dim} columns, {ds.n} samples, seed {cfg.seed})")
    return OK


def cmd_build_geodesic(args) -> int:
    cfg = build_run_config(args)
    ds = realize_dataset(cfg.dataset, cfg.seed)
    index = build_index(
        ds.samples, cfg.k_neighbors, cfg.landmark_count, seed=cfg.seed
    )
    save_index(index, args.out)
    radius = covering_radius(ds.samples, index)
    mode = "exact" if index.exact else f"{len(index.landmarks)} landmarks"
    print(
        f"wrote {args.out} ({mode}, k={index.k}, repaired edges: {index.repair_count}, "
        f"covering radius {radius:.6g})"
    )
    return OK


def cmd_train(args) -> int:
    cfg = build_run_config(args)
    ds = realize_dataset(cfg.dataset, cfg.seed)
    geo = Path(args.geo)
    if not geo.exists():
        raise FileNotFoundError(f"geodesic index not found: {geo}")
    index = load_index(geo)
    t0 = time.perf_counter()
    model, report = train(cfg, ds, index)
    wall = time.perf_counter() - t0

    ckpt_path = Path(str(args.out) + ".ckpt")
    report_path = Path(str(args.out) + ".report.json")
    save_checkpoint(
        model, ckpt_path, epoch=report.epochs_run, extra={"config_hash": report.config_hash}
    )
    payload = report_to_dict(report)
    payload["wall_seconds"] = wall
    _write_json(payload, str(report_path))
    print(f"wrote {ckpt_path} and {report_path} ({report.stop_reason}, {wall:.1f}s)")
    if report.stop_reason != "completed":
        print(f"error: {report.stop_reason}; checkpoint holds the last good parameters",
              file=sys.stderr)
        return NUMERICAL_FAILURE
    return OK


def _load_model_and_data(args):
    model, manifest = load_checkpoint(args.ckpt)
    ds = load_csv(args.data)
    if ds.ambient_dim != model.input_dim:
        raise ValueError(
            f"data has {ds.ambient_dim} columns but the checkpoint expects {model.input_dim}"
        )
    return model, manifest, ds


def cmd_estimate_dim(args) -> int:
    model, manifest, ds = _load_model_and_data(args)
    variances = latent_variances(model, ds.samples)
    if float(variances.sum()) <= 0.0:
        print("error: all-zero variances in the checkpoint's latents", file=sys.stderr)
        return NUMERICAL_FAILURE
    estimates = []
    for tau in _floats(args.tau):
        est = estimate_dim_cumvar(variances, tau, descending=args.descending)
        estimates.append(dim_report_dict(est))
    payload = {
        "config_hash": manifest.get("extra", {}).get("config_hash"),
        "descending": bool(args.descending),
        "estimates": estimates,
    }
    _write_json(payload, args.out)
    return OK


def cmd_smoothness(args) -> int:
    model, manifest, ds = _load_model_and_data(args)
    rep = smoothness(model, ds.samples, N=args.pairs, m=args.steps, seed=args.seed)
    payload = {
        "config_hash": manifest.get("extra", {}).get("config_hash"),
        "score": rep.score,
        "pairs": rep.pair_count,
        "steps": rep.steps,
        "seed": args.seed,
    }
    _write_json(payload, args.out)
    return OK


def cmd_interpolate(args) -> int:
    model, _, ds = _load_model_and_data(args)
    n = ds.n
    if not (0 <= args.i < n and 0 <= args.j < n and args.i != args.j):
        raise ValueError(f"endpoints must be distinct indices in 0..{n - 1}")
    Z = encode(model, ds.samples[:, [args.i, args.j]])
    codes = np.stack(interpolate(Z[:, 0], Z[:, 1], args.steps), axis=1)
    decoded = decode(model, codes)
    header = ",".join(f"x{i + 1}" for i in range(decoded.shape[0]))
    lines = [header] + [
        ",".join(f"{v:.17g}" for v in decoded[:, t]) for t in range(decoded.shape[1])
    ]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out} ({decoded.shape[1]} points along the path)")
    else:
        sys.stdout.write(text)
    return OK


def _verify_theorem1(args) -> int:
    rng = np.random.default_rng(args.seed)
    rows, t0 = [], time.perf_counter()
    for _ in range(args.instances):
        p = args.p if args.p else int(rng.integers(3, 9))
        Q = qr_orthonormalize(rng.normal(size=(p, p)))
        lam = np.sort(rng.uniform(0.2, 9.0, size=p))[::-1]
        Sigma = Q @ np.diag(lam) @ Q.T
        g = np.sort(rng.uniform(0.05, 1.95, size=p))
        while np.any(np.diff(g) < 1e-3):  # keep the weights clearly separated
            g = np.sort(rng.uniform(0.05, 1.95, size=p))
        rep = solve_stiefel(StiefelProblem(Sigma=Sigma, gammas=g), seed=int(rng.integers(2**31)))
        rows.append(
            {
                "p": p,
                "gap": rep.gap,
                "alignment_min": float(rep.alignment.min()),
                "iterations": rep.iterations,
                "converged": rep.converged,
            }
        )
    wall = time.perf_counter() - t0
    ok = all(abs(r["gap"]) <= args.tol_gap and r["alignment_min"] >= args.tol_align for r in rows)
    payload = {
        "theorem": 1,
        "instances": rows,
        "max_abs_gap": max(abs(r["gap"]) for r in rows),
        "min_alignment": min(r["alignment_min"] for r in rows),
        "wall_seconds": wall,
        "ok": ok,
    }
    _write_json(payload, args.out)
    return OK if ok else TOLERANCE_FAILURE


def _verify_theorem2(args) -> int:
    ds = gen_flat_strip(args.n, seed=args.seed)
    rep = verify_theorem2(
        ds,
        _floats(args.gammas),
        epochs=args.epochs,
        lr=args.learning_rate,
        seed=args.seed,
        stop_at=args.stop_at,
    )
    ok = rep.mean_rel_err <= args.tol_mean and rep.p95_rel_err <= args.tol_p95
    payload = {
        "theorem": 2,
        "mean_rel_err": rep.mean_rel_err,
        "p95_rel_err": rep.p95_rel_err,
        "epochs_run": rep.epochs_run,
        "pair_count": rep.pair_count,
        "ok": ok,
    }
    _write_json(payload, args.out)
    return OK if ok else TOLERANCE_FAILURE


def cmd_verify(args) -> int:
    if args.which == "theorem1":
        return _verify_theorem1(args)
    return _verify_theorem2(args)


# ------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcae",
        description="Variance-ordered autoencoding: data, geodesics, training, verification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(sp, with_train_flags=False):
        sp.add_argument("--config", help="JSON config file; flags override its fields")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--k-neighbors", dest="k_neighbors", type=int, default=None)
        sp.add_argument("--landmark-count", dest="landmark_count", type=int, default=None)
        if with_train_flags:
            sp.add_argument("--latent-dim", dest="latent_dim", type=int, default=None)
            sp.add_argument("--hidden", default=None, help="comma list, e.g. 64,64")
            sp.add_argument("--beta", type=float, default=None)
            sp.add_argument("--iso-variant", dest="iso_variant", default=None,
                            choices=["abs_sq_diff", "square", "log_sq"])
            sp.add_argument("--epochs", type=int, default=None)
            sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
            sp.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
            sp.add_argument("--scheduler-t", dest="scheduler_t", type=float, default=None)
            sp.add_argument("--scheduler-K", dest="scheduler_K", type=int, default=None)
            sp.add_argument("--taus", default=None, help="comma list, e.g. 0.99,0.999")
            sp.add_argument("--loss", default=None, choices=["pcae", "hae", "recon-only"])
            sp.add_argument("--ablate", default=None,
                            choices=["none", "var-only", "iso-only"])

    sp = sub.add_parser("gen-data", help="materialize a generator to CSV + sidecar")
    add_config_flags(sp)
    sp.add_argument("--generator", default=None,
                    choices=["swiss_roll", "factor_manifold", "flat_strip"])
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--d-true", dest="d_true", type=int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--noise-sd", dest="noise_sd", type=float, default=None)
    sp.add_argument("--variance-profile", dest="variance_profile", default=None,
                    help="comma list, e.g. 4,3,2.5,2")
    sp.add_argument("--length", type=float, default=None)
    sp.add_argument("--width", type=float, default=None)
    sp.add_argument("--bend-radius", dest="bend_radius", type=float, default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("build-geodesic", help="kNN graph + landmark distances to .geo")
    add_config_flags(sp)
    sp.add_argument("--data", help="input CSV (overrides the config's dataset)")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_build_geodesic)

    sp = sub.add_parser("train", help="train a model; writes .ckpt and .report.json")
    add_config_flags(sp, with_train_flags=True)
    sp.add_argument("--data", help="training CSV (overrides the config's dataset)")
    sp.add_argument("--geo", required=True, help=".geo index over the same data")
    sp.add_argument("--out", required=True, help="output prefix")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("estimate-dim", help="cumulative-variance dimension estimates")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--tau", default="0.99", help="comma list of thresholds")
    sp.add_argument("--descending", action="store_true",
                    help="sort variances first (for unordered baselines)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_estimate_dim)

    sp = sub.add_parser("smoothness", help="decoded step-size variance along latent paths")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--pairs", type=int, default=100)
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_smoothness)

    sp = sub.add_parser("interpolate", help="decode the latent segment between two samples")
    sp.add_argument("--ckpt", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--i", type=int, required=True)
    sp.add_argument("--j", type=int, required=True)
    sp.add_argument("--steps", type=int, default=10)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_interpolate)

    sp = sub.add_parser("verify", help="check the two recovery guarantees numerically")
    sp.add_argument("--which", required=True, choices=["theorem1", "theorem2"])
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", default=None)
    # theorem 1 knobs
    sp.add_argument("--instances", type=int, default=20)
    sp.add_argument("--p", type=int, default=0, help="fixed size; 0 draws from 3..8")
    sp.add_argument("--tol-gap", dest="tol_gap", type=float, default=1e-6)
    sp.add_argument("--tol-align", dest="tol_align", type=float, default=0.999)
    # theorem 2 knobs
    sp.add_argument("--n", type=int, default=2000)
    sp.add_argument("--gammas", default="0.5,1.0")
    sp.add_argument("--epochs", type=int, default=2000)
    sp.add_argument("--learning-rate", dest="learning_rate", type=float, default=3e-3)
    sp.add_argument("--stop-at", dest="stop_at", type=float, default=0.015)
    sp.add_argument("--tol-mean", dest="tol_mean", type=float, default=0.05)
    sp.add_argument("--tol-p95", dest="tol_p95", type=float, default=0.12)
    sp.set_defaults(func=cmd_verify)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(name)s: %(message)s")
    try:
        thread_count()  # surface a bad PCAE_THREADS before any real work
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
