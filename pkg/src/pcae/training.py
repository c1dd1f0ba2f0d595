"""Minibatch Adam training of the full objective, with the dynamic weight schedule.

One trainer owns the model and mutates it in place; everything it decides is
replayable from (config, seed). The report keeps enough per-epoch state to
audit a run after the fact: loss components, wall-clock, every schedule
update, and the final variance-based dimension estimates.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .analysis import DimEstimate, estimate_dim_cumvar, latent_variances
from .datasets import Dataset
from .geodesic import GeodesicIndex
from .network import AdamState, MlpModel, adam_step, backward, forward_cached, init_model
from .objective import (
    ISO_VARIANTS,
    LossBreakdown,
    PairBatch,
    hae_loss_and_grads,
    pcae_loss,
    sample_pairs,
)
from .scheduler import GammaSchedule, init_gammas, should_update, update_gammas

log = logging.getLogger(__name__)

LOSS_MODES = ("pcae", "hae", "recon-only")
ABLATIONS = (None, "var-only", "iso-only")

CONFIG_VERSION = 1


@dataclass
class RunConfig:
    """Everything a run needs, shared across the artifact-producing commands.

    `dataset` is either {"generator": name, ...params} or {"csv": path}.
    Hidden widths apply to the encoder; the decoder mirrors them reversed.
    """

    dataset: dict
    hidden: tuple = (64, 64)
    latent_dim: int = 16
    beta: float = 5e-3
    iso_variant: str = "abs_sq_diff"
    k_neighbors: int = 10
    landmark_count: int = 300
    epochs: int = 60
    batch_size: int = 128
    learning_rate: float = 1e-4
    scheduler_t: float = 0.99
    scheduler_K: int = 10
    taus: tuple = (0.99,)
    seed: int = 0
    loss: str = "pcae"
    ablate: str | None = None

    def __post_init__(self):
        if not isinstance(self.dataset, dict) or not self.dataset:
            raise ValueError("dataset spec must be a nonempty dict")
        self.hidden = tuple(int(h) for h in self.hidden)
        if any(h < 1 for h in self.hidden):
            raise ValueError("hidden widths must be positive")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        # beta = 0 is allowed: it degrades the objective to plain
        # reconstruction while keeping the var/iso columns in the report
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.iso_variant not in ISO_VARIANTS:
            raise ValueError(f"iso_variant must be one of {ISO_VARIANTS}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        self.taus = tuple(float(t) for t in self.taus)
        if not self.taus or any(not 0.0 < t < 1.0 for t in self.taus):
            raise ValueError("every tau must lie in (0, 1)")
        if self.loss not in LOSS_MODES:
            raise ValueError(f"loss must be one of {LOSS_MODES}")
        if self.ablate not in ABLATIONS:
            raise ValueError(f"ablate must be one of {ABLATIONS}")
        if self.ablate is not None and self.loss != "pcae":
            raise ValueError("ablations only apply to the pcae loss")

    @property
    def include_var(self) -> bool:
        return self.loss == "pcae" and self.ablate != "iso-only"

    @property
    def include_iso(self) -> bool:
        return self.loss == "pcae" and self.ablate != "var-only"


def config_to_dict(config: RunConfig) -> dict:
    out = asdict(config)
    out["hidden"] = list(config.hidden)
    out["taus"] = list(config.taus)
    out["version"] = CONFIG_VERSION
    return out


def config_from_dict(raw: dict) -> RunConfig:
    """Inverse of config_to_dict; unknown keys are config errors, not typos to ignore."""
    raw = dict(raw)
    version = raw.pop("version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ValueError(f"unsupported config version {version}")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    if "dataset" not in raw:
        raise ValueError("config needs a dataset spec")
    return RunConfig(**raw)


def config_hash(config: RunConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # LossBreakdown per completed epoch
    epoch_seconds: list = field(default_factory=list)
    initial_gammas: list = field(default_factory=list)
    schedule_history: list = field(default_factory=list)  # dicts: epoch, pivot, gammas
    final_variances: np.ndarray | None = None
    dim_estimates: dict = field(default_factory=dict)  # tau -> DimEstimate | None
    stop_reason: str = "completed"
    epochs_run: int = 0
    config_hash: str = ""


def _batch_slices(n: int, batch_size: int, perm: np.ndarray):
    """Contiguous batches over a permutation; a trailing singleton joins its neighbor."""
    starts = list(range(0, n, batch_size))
    for s in starts:
        e = min(s + batch_size, n)
        if n - e == 1:  # variance needs >= 2 columns per batch
            e = n
        yield perm[s:e]
        if e == n:
            return


def _abort_breakdown(beta: float) -> LossBreakdown:
    return LossBreakdown(recon=float("inf"), var=0.0, iso=0.0, total=float("inf"), beta=beta)


def _hae_step(model, X_batch, state) -> LossBreakdown:
    try:
        total, grads = hae_loss_and_grads(X_batch, model)
    except ValueError as exc:
        # exploded activations fail loss-side input validation; report them
        # as a non-finite loss so the abort path owns the rollback
        if "non-finite" in str(exc):
            return _abort_breakdown(0.0)
        raise
    if np.isfinite(total):
        adam_step(model, grads, state)
    return LossBreakdown(recon=total, var=0.0, iso=0.0, total=total, beta=0.0)


def _pcae_step(model, X_batch, batch_global, index, config, gammas, pair_seed, state):
    Z, Xhat, cache = forward_cached(model, X_batch)
    if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(Xhat))):
        return _abort_breakdown(config.beta)
    batch = None
    include_iso = config.include_iso
    if include_iso:
        batch = sample_pairs(batch_global, index, seed=pair_seed)
        if config.iso_variant == "log_sq":
            # same-landmark pairs carry a zero target the log cannot take;
            # drop them rather than poison the batch
            keep = batch.target_dists > 0.0
            if not np.all(keep):
                pairs = [p for p, k in zip(batch.pairs, keep) if k]
                if pairs:
                    batch = PairBatch(pairs=pairs, target_dists=batch.target_dists[keep])
                else:
                    include_iso = False
    breakdown, grad_Z, grad_Xhat = pcae_loss(
        X_batch,
        Z,
        Xhat,
        batch,
        gammas,
        config.beta,
        variant=config.iso_variant,
        include_var=config.include_var,
        include_iso=include_iso,
    )
    if np.isfinite(breakdown.total):
        grads = backward(model, cache, grad_Z, grad_Xhat)
        adam_step(model, grads, state)
    return breakdown


def _mean_breakdown(parts: list, weights: list, beta: float) -> LossBreakdown:
    w = np.asarray(weights, dtype=np.float64)
    w = w / w.sum()
    recon = float(sum(wi * b.recon for wi, b in zip(w, parts)))
    var = float(sum(wi * b.var for wi, b in zip(w, parts)))
    iso = float(sum(wi * b.iso for wi, b in zip(w, parts)))
    # recompute the total from the averaged components so the breakdown
    # identity holds exactly, not merely to rounding
    return LossBreakdown(recon=recon, var=var, iso=iso, total=recon + beta * (var + iso), beta=beta)


def train(
    config: RunConfig,
    ds: Dataset,
    index: GeodesicIndex | None = None,
    model: MlpModel | None = None,
) -> tuple[MlpModel, TrainReport]:
    """Run the configured training loop on ds; returns the model and its report.

    The geodesic index is only consulted when the objective carries the
    isometry term; it must cover exactly the columns of ds.
    """
    X = ds.samples
    p, n = X.shape
    if n < config.batch_size:
        raise ValueError(f"dataset has {n} samples, fewer than one batch of {config.batch_size}")
    if ds.intrinsic_dim is not None and config.latent_dim < ds.intrinsic_dim:
        raise ValueError(
            f"latent_dim {config.latent_dim} is below the known intrinsic dimension {ds.intrinsic_dim}"
        )
    if config.include_iso:
        if index is None:
            raise ValueError("the isometry term needs a geodesic index")
        if index.n != n:
            raise ValueError(f"geodesic index covers {index.n} points but the dataset has {n}")
    if model is None:
        enc = [p, *config.hidden, config.latent_dim]
        dec = [config.latent_dim, *reversed(config.hidden), p]
        model = init_model(enc, dec, seed=config.seed)
    if model.latent_dim != config.latent_dim or model.input_dim != p:
        raise ValueError("model shape does not match config and data")

    sched = init_gammas(config.latent_dim, config.scheduler_t, config.scheduler_K)
    report = TrainReport(
        initial_gammas=[float(g) for g in sched.gammas],
        config_hash=config_hash(config),
    )
    rng = np.random.default_rng(config.seed)
    state = AdamState.for_model(model, config.learning_rate)
    last_good = model.clone()

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        parts, weights = [], []
        aborted = False
        for batch_idx in _batch_slices(n, config.batch_size, perm):
            Xb = X[:, batch_idx]
            if config.loss == "hae":
                b = _hae_step(model, Xb, state)
            else:
                pair_seed = int(rng.integers(2**62))
                b = _pcae_step(
                    model, Xb, batch_idx, index, config, sched.gammas, pair_seed, state
                )
            if not np.isfinite(b.total):
                aborted = True
                break
            parts.append(b)
            weights.append(len(batch_idx))
        if aborted:
            # roll back to the end of the last clean epoch
            for good, cur in zip(last_good.parameters(), model.parameters()):
                cur[...] = good
            report.stop_reason = f"nan-abort at epoch {epoch}"
            log.warning("non-finite loss at epoch %d; restored last good parameters", epoch)
            break
        beta = config.beta if config.loss != "hae" else 0.0
        report.epochs.append(_mean_breakdown(parts, weights, beta))
        report.epoch_seconds.append(time.perf_counter() - t0)
        report.epochs_run = epoch
        last_good = model.clone()

        if config.include_var and should_update(sched, epoch):
            variances = latent_variances(model, X)
            sched = update_gammas(sched, variances, epoch=epoch)
            report.schedule_history.append(
                {
                    "epoch": epoch,
                    "pivot": sched.pivot,
                    "gammas": [float(g) for g in sched.gammas],
                }
            )

    report.final_variances = latent_variances(model, X)
    for tau in config.taus:
        try:
            report.dim_estimates[tau] = estimate_dim_cumvar(report.final_variances, tau)
        except ValueError as exc:
            log.warning("dimension estimate at tau=%s failed: %s", tau, exc)
            report.dim_estimates[tau] = None
    return model, report


def report_to_dict(report: TrainReport) -> dict:
    """JSON-ready view of a report; arrays become plain lists."""

    def est(d: DimEstimate | None):
        if d is None:
            return None
        return {"k": d.k, "tau": d.tau}

    return {
        "config_hash": report.config_hash,
        "stop_reason": report.stop_reason,
        "epochs_run": report.epochs_run,
        "initial_gammas": report.initial_gammas,
        "schedule_history": report.schedule_history,
        "epoch_seconds": report.epoch_seconds,
        "losses": [
            {"recon": b.recon, "var": b.var, "iso": b.iso, "total": b.total, "beta": b.beta}
            for b in report.epochs
        ],
        "final_variances": [float(v) for v in np.asarray(report.final_variances)],
        "dim_estimates": {str(t): est(d) for t, d in report.dim_estimates.items()},
    }
