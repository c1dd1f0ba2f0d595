"""Executable checks of the two guarantees behind the ordered latent space.

The first: over orthonormal frames, the gamma-weighted trace of a covariance
is minimized at the eigenvector basis, with value sum_i lambda_i gamma_i
(eigenvalues descending, weights ascending). A closed-form oracle computes
that value; a projected-gradient solver on the orthogonality manifold must
reach it from random starts.

The second: minimizing the absolute squared-distance mismatch plus the
weighted variance penalty (all weights below 2) over encoders recovers an
isometry. The harness trains an encoder alone on a developable surface whose
chart distances are known exactly and reports held-out relative errors.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .datasets import Dataset, SplitSpec, split
from .geodesic import GeodesicIndex, approx_dist
from .linalg import (
    as_matrix,
    principal_angle_cosines,
    qr_orthonormalize,
    sym_eig,
    weighted_trace,
)
from .network import (
    AdamState,
    Gradients,
    MlpModel,
    adam_step,
    backward_encoder,
    encode,
    encode_cached,
    init_model,
    zero_gradients_like,
)
from .objective import PairBatch, iso_loss, weighted_variance_loss

log = logging.getLogger(__name__)


def _check_gammas(gammas, upper: float | None = None) -> np.ndarray:
    g = np.asarray(gammas, dtype=np.float64)
    if g.ndim != 1 or g.size == 0:
        raise ValueError("gammas must be a nonempty 1-d array")
    if g[0] < 0.0 or np.any(np.diff(g) <= 0.0):
        raise ValueError("gammas must be nonnegative and strictly ascending")
    if upper is not None and g[-1] >= upper:
        raise ValueError(
            f"isometric recovery requires every gamma below {upper}; got max {g[-1]}"
        )
    return g


@dataclass
class StiefelProblem:
    Sigma: np.ndarray
    gammas: np.ndarray
    tol: float = 1e-14
    max_iters: int = 20000

    def __post_init__(self):
        self.Sigma = as_matrix(self.Sigma, "Sigma")
        p = self.Sigma.shape[0]
        if self.Sigma.shape != (p, p):
            raise ValueError("Sigma must be square")
        if not np.allclose(self.Sigma, self.Sigma.T, atol=1e-10):
            raise ValueError("Sigma must be symmetric")
        self.gammas = _check_gammas(self.gammas)
        if self.gammas.size != p:
            raise ValueError("gammas length must match Sigma")
        scale = max(1.0, float(np.abs(self.Sigma).max()))
        if sym_eig(self.Sigma).values.min() < -1e-8 * scale:
            raise ValueError("Sigma must be positive semidefinite")


@dataclass
class Theorem1Report:
    achieved: float
    optimal: float
    gap: float
    alignment: np.ndarray  # per-column agreement with the eigen oracle, in [0,1]
    orthogonality_residual: float
    converged: bool
    iterations: int


def oracle_theorem1(Sigma, gammas) -> tuple:
    """Closed-form optimum: eigenvalues descending paired with ascending weights."""
    Sigma = as_matrix(Sigma, "Sigma")
    g = _check_gammas(gammas)
    eig = sym_eig(Sigma)
    if g.size != eig.values.size:
        raise ValueError("gammas length must match Sigma")
    value = float(eig.values @ g)
    return value, eig.vectors


def solve_stiefel(problem: StiefelProblem, seed: int = 0) -> Theorem1Report:
    """Projected gradient descent with QR retraction on the orthonormal frames.

    Euclidean gradient of Tr(U^T Sigma U Gamma) is 2 Sigma U Gamma, projected
    onto the tangent space before stepping; steps that fail to decrease the
    objective are halved, accepted steps let the length recover. Reports
    converged=False instead of raising when the budget runs out.
    """
    Sigma, g = problem.Sigma, problem.gammas
    p = Sigma.shape[0]
    optimal, U_star = oracle_theorem1(Sigma, g)
    eig = sym_eig(Sigma)
    spectral = float(np.max(np.abs(eig.values))) or 1.0
    step = 1e-2 / spectral
    step_cap = 2.0 / spectral

    rng = np.random.default_rng(seed)
    U = qr_orthonormalize(rng.normal(size=(p, p)))
    obj = weighted_trace(U, Sigma, g)
    worst_residual = float(np.max(np.abs(U.T @ U - np.eye(p))))
    converged = False
    iters = 0
    for iters in range(1, problem.max_iters + 1):
        grad = 2.0 * Sigma @ (U * g[None, :])
        # project onto the tangent space first: the QR retraction follows a
        # tangent direction exactly, but an unprojected step can point uphill
        UtG = U.T @ grad
        grad = grad - U @ ((UtG + UtG.T) / 2.0)
        if float(np.linalg.norm(grad)) < 1e-10 * spectral:
            converged = True
            break
        cand = qr_orthonormalize(U - step * grad)
        cand_obj = weighted_trace(cand, Sigma, g)
        while cand_obj > obj and step > 1e-18:
            step *= 0.5
            cand = qr_orthonormalize(U - step * grad)
            cand_obj = weighted_trace(cand, Sigma, g)
        if cand_obj > obj:
            converged = True  # no descent at underflowed step: stationary
            break
        decrease = obj - cand_obj
        U, obj = cand, cand_obj
        step = min(step * 1.3, step_cap)
        worst_residual = max(worst_residual, float(np.max(np.abs(U.T @ U - np.eye(p)))))
        if decrease < problem.tol:
            converged = True
            break

    # ties in the spectrum leave eigenvectors free inside each eigenspace, so
    # alignment is measured per degenerate block via principal angles
    alignment = np.empty(p)
    for group in eig.degenerate_groups(tol=1e-8 * spectral):
        cos = principal_angle_cosines(U[:, group], U_star[:, group])
        alignment[group] = cos
    return Theorem1Report(
        achieved=float(obj),
        optimal=optimal,
        gap=float(obj - optimal),
        alignment=alignment,
        orthogonality_residual=worst_residual,
        converged=converged,
        iterations=iters,
    )


# ------------------------------------------------------- isometry recovery


@dataclass
class Theorem2Report:
    mean_rel_err: float
    p95_rel_err: float
    epochs_run: int
    pair_count: int
    curve: list = field(default_factory=list)  # (epoch, held-out mean rel err)
    final_loss: float = float("nan")


def _chart_dist(factors: np.ndarray, i: int, j: int) -> float:
    d = factors[:, i] - factors[:, j]
    return float(np.sqrt(d @ d))


def _pair_targets(ds: Dataset, idx_a, idx_b, index: GeodesicIndex | None) -> np.ndarray:
    if index is None:
        return np.array(
            [_chart_dist(ds.factors, int(a), int(b)) for a, b in zip(idx_a, idx_b)]
        )
    out = np.array([approx_dist(index, int(a), int(b)) for a, b in zip(idx_a, idx_b)])
    if not np.all(np.isfinite(out)):
        raise ValueError("geodesic graph is disconnected; repair it before training")
    return out


def _eval_rel_errors(model: MlpModel, X, targets, pairs) -> np.ndarray:
    Z = encode(model, X)
    diffs = Z[:, pairs[0]] - Z[:, pairs[1]]
    dhat = np.linalg.norm(diffs, axis=0)
    return np.abs(dhat - targets) / targets


def verify_theorem2(
    ds: Dataset,
    gammas,
    epochs: int = 2000,
    lr: float = 3e-3,
    hidden=(64, 64),
    seed: int = 0,
    eval_pairs: int = 2000,
    eval_every: int = 20,
    model: MlpModel | None = None,
    index: GeodesicIndex | None = None,
    stop_at: float | None = None,
) -> Theorem2Report:
    """Encoder-only training against exact chart distances on a flat manifold.

    The objective is the absolute squared-distance mismatch over freshly
    matched pairs each epoch plus the weighted variance penalty; no decoder
    is involved. Held-out pairs are scored as |dhat - d| / d.
    """
    g = _check_gammas(gammas, upper=2.0)
    if g[0] <= 0.0:
        raise ValueError("isometric recovery requires strictly positive gammas")
    if index is None and ds.factors is None:
        raise ValueError("flat-chart targets need the dataset's generative factors")
    latent = g.size
    p = ds.ambient_dim

    train, _, test = split(ds, SplitSpec(0.8, 0.1, 0.1), seed=seed)
    rng = np.random.default_rng(seed)

    # training pairs index into the train split; targets come from its chart
    if model is None:
        widths = [p, *hidden, latent]
        model = init_model(widths, [latent, p], seed=seed)
    if model.latent_dim != latent:
        raise ValueError("model latent width must match gammas length")

    n_test = test.n
    a = rng.integers(0, n_test, size=eval_pairs)
    b = rng.integers(0, n_test, size=eval_pairs)
    keep = a != b
    a, b = a[keep], b[keep]
    test_targets = _pair_targets(test, a, b, None if index is None else index)
    test_pairs = (a, b)

    state = AdamState.for_model(model, lr)
    Xtr = train.samples
    n_tr = train.n
    curve = []
    errs = _eval_rel_errors(model, test.samples, test_targets, test_pairs)
    curve.append((0, float(errs.mean())))
    final_loss = float("nan")
    epochs_run = 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n_tr)
        pairs = [(int(order[t]), int(order[t + 1])) for t in range(0, n_tr - 1, 2)]
        targets = _pair_targets(
            train, [i for i, _ in pairs], [j for _, j in pairs], index
        )
        batch = PairBatch(pairs=pairs, target_dists=targets)

        Z, cache = encode_cached(model, Xtr)
        v_val, v_grad = weighted_variance_loss(Z, g)
        i_val, i_grad = iso_loss(Z, batch, "abs_sq_diff")
        final_loss = v_val + i_val
        enc_grads = backward_encoder(model, cache, v_grad + i_grad)
        grads = zero_gradients_like(model)
        adam_step(model, Gradients(encoder=enc_grads, decoder=grads.decoder), state)

        epochs_run = epoch
        if epoch % eval_every == 0 or epoch == epochs:
            errs = _eval_rel_errors(model, test.samples, test_targets, test_pairs)
            curve.append((epoch, float(errs.mean())))
            if stop_at is not None and errs.mean() <= stop_at:
                break

    errs = _eval_rel_errors(model, test.samples, test_targets, test_pairs)
    return Theorem2Report(
        mean_rel_err=float(errs.mean()),
        p95_rel_err=float(np.percentile(errs, 95)),
        epochs_run=epochs_run,
        pair_count=int(errs.size),
        curve=curve,
        final_loss=final_loss,
    )
