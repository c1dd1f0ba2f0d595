"""The PCAE loss family and the hierarchical-reconstruction baseline.

Every loss returns its value together with the exact gradient a trainer needs:
reconstruction grads land on Xhat, variance and isometry grads land on Z, and
the combined objective keeps the component identity
total = recon + beta * (var + iso) exact so reports can be cross-checked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geodesic import GeodesicIndex, approx_dist
from .linalg import as_matrix
from .network import (
    Gradients,
    MlpModel,
    backward_decoder,
    backward_encoder,
    decode_cached,
    encode_cached,
)

ISO_VARIANTS = ("abs_sq_diff", "square", "log_sq")


@dataclass
class LossBreakdown:
    recon: float
    var: float
    iso: float
    total: float
    beta: float


@dataclass
class PairBatch:
    """Index pairs within a minibatch plus their geodesic target distances."""

    pairs: list  # (i, j) positions into the minibatch
    target_dists: np.ndarray

    def __post_init__(self):
        self.target_dists = np.asarray(self.target_dists, dtype=np.float64)
        if len(self.pairs) != len(self.target_dists):
            raise ValueError("pairs and target_dists lengths differ")
        if any(i == j for i, j in self.pairs):
            raise ValueError("a pair must join two distinct points")
        if np.any(self.target_dists < 0):
            raise ValueError("target distances must be nonnegative")


def recon_loss(X, Xhat) -> tuple:
    """Mean squared reconstruction error (1/n) sum_i ||x_i - xhat_i||^2."""
    X = as_matrix(X, "X")
    Xhat = as_matrix(Xhat, "Xhat")
    if X.shape != Xhat.shape:
        raise ValueError(f"shape mismatch: X {X.shape} vs Xhat {Xhat.shape}")
    n = X.shape[1]
    diff = Xhat - X
    return float(np.sum(diff * diff) / n), 2.0 * diff / n


def weighted_variance_loss(Z, gammas) -> tuple:
    """sum_i gamma_i * sigma_i^2 with population (1/n) variances per latent row."""
    Z = as_matrix(Z, "Z")
    g = np.asarray(gammas, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] != Z.shape[0]:
        raise ValueError(f"gammas must have one entry per latent row ({Z.shape[0]})")
    n = Z.shape[1]
    if n < 2:
        raise ValueError("variance needs a batch of at least 2")
    centered = Z - Z.mean(axis=1, keepdims=True)
    variances = np.mean(centered * centered, axis=1)
    loss = float(g @ variances)
    # d sigma_i^2 / d z_ij = 2 (z_ij - mean_i) / n; the mean term cancels
    grad = (2.0 / n) * centered * g[:, None]
    return loss, grad


def iso_elementwise(d: float, dhat: float, variant: str) -> tuple:
    """Per-pair isometry penalty and its partial derivative.

    For abs_sq_diff the partial is with respect to dhat^2 (subgradient 0 at
    the kink); for square and log_sq it is with respect to dhat.
    """
    if variant not in ISO_VARIANTS:
        raise ValueError(f"unknown iso variant {variant!r}; choose from {ISO_VARIANTS}")
    if d < 0 or dhat < 0:
        raise ValueError("distances must be nonnegative")
    if variant == "abs_sq_diff":
        gap = dhat * dhat - d * d
        return abs(gap), float(np.sign(gap))
    if variant == "square":
        return (d - dhat) ** 2, 2.0 * (dhat - d)
    if d <= 0.0 or dhat <= 0.0:
        raise ValueError("log_sq requires strictly positive distances")
    r = np.log(dhat) - np.log(d)
    return float(r * r), float(2.0 * r / dhat)


def iso_loss(Z, batch: PairBatch, variant: str = "abs_sq_diff") -> tuple:
    """Mean isometry penalty over pairs, with the chain-rule gradient on Z."""
    Z = as_matrix(Z, "Z")
    if len(batch.pairs) == 0:
        raise ValueError("iso_loss needs at least one pair")
    n_pairs = len(batch.pairs)
    grad = np.zeros_like(Z)
    total = 0.0
    for (i, j), d in zip(batch.pairs, batch.target_dists):
        delta = Z[:, i] - Z[:, j]
        dhat_sq = float(delta @ delta)
        dhat = float(np.sqrt(dhat_sq))
        value, partial = iso_elementwise(float(d), dhat, variant)
        total += value
        if variant == "abs_sq_diff":
            g = partial * 2.0 * delta  # partial is wrt dhat^2
        elif dhat > 0.0:
            g = partial * delta / dhat  # partial is wrt dhat
        else:
            g = np.zeros_like(delta)  # nonsmooth at coincident codes
        grad[:, i] += g / n_pairs
        grad[:, j] -= g / n_pairs
    return total / n_pairs, grad


def pcae_loss(
    X,
    Z,
    Xhat,
    batch: PairBatch,
    gammas,
    beta: float,
    variant: str = "abs_sq_diff",
    include_var: bool = True,
    include_iso: bool = True,
) -> tuple:
    """Combined objective: recon + beta * (var + iso).

    Returns (LossBreakdown, grad on Z, grad on Xhat). The include_* switches
    ablate a component entirely (value and gradient report as zero) while
    keeping the breakdown identity intact.
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    r_val, r_grad = recon_loss(X, Xhat)
    Z = as_matrix(Z, "Z")
    v_val, v_grad = 0.0, np.zeros_like(Z)
    i_val, i_grad = 0.0, np.zeros_like(Z)
    if include_var:
        v_val, v_grad = weighted_variance_loss(Z, gammas)
    if include_iso:
        i_val, i_grad = iso_loss(Z, batch, variant)
    breakdown = LossBreakdown(
        recon=r_val,
        var=v_val,
        iso=i_val,
        total=r_val + beta * (v_val + i_val),
        beta=beta,
    )
    return breakdown, beta * (v_grad + i_grad), r_grad


def sample_pairs(
    batch_indices, index: GeodesicIndex, seed: int = 0, rounds: int = 1
) -> PairBatch:
    """Random perfect matchings within a minibatch, targets from the landmark index.

    One round pairs each batch position exactly once (the odd one out is
    dropped); extra rounds concatenate further independent matchings to
    densify the isometry expectation at O(n) cost per round.
    """
    batch_indices = np.asarray(batch_indices, dtype=np.int64)
    b = len(batch_indices)
    if b < 2:
        raise ValueError("need a batch of at least 2 to form pairs")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    targets = []
    for _ in range(rounds):
        order = rng.permutation(b)
        for a in range(0, b - 1, 2):
            i, j = int(order[a]), int(order[a + 1])
            pairs.append((i, j))
            targets.append(approx_dist(index, int(batch_indices[i]), int(batch_indices[j])))
    return PairBatch(pairs=pairs, target_dists=np.asarray(targets))


# ------------------------------------------------------------- HAE baseline


def hae_loss(X, model: MlpModel, alpha=None) -> float:
    """Hierarchical reconstruction: sum_k alpha_k * L_k with prefix-k latents.

    L_k is the (1/n) reconstruction loss after zeroing latent coordinates
    above k, so early coordinates must carry reconstruction on their own.
    """
    X = as_matrix(X, "X")
    d = model.latent_dim
    alpha = np.ones(d) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (d,):
        raise ValueError(f"alpha must have length {d}")
    Z, _ = encode_cached(model, X)
    total = 0.0
    for k in range(1, d + 1):
        Zk = Z.copy()
        Zk[k:, :] = 0.0
        Xhat_k, _ = decode_cached(model, Zk)
        lk, _ = recon_loss(X, Xhat_k)
        total += float(alpha[k - 1]) * lk
    return total


def hae_loss_and_grads(X, model: MlpModel, alpha=None) -> tuple:
    """hae_loss plus exact parameter gradients.

    Runs one decoder pass per prefix k (each with its own cache), accumulates
    decoder gradients and the masked gradients arriving at Z, then walks the
    encoder once with the summed latent gradient.
    """
    X = as_matrix(X, "X")
    d = model.latent_dim
    alpha = np.ones(d) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (d,):
        raise ValueError(f"alpha must have length {d}")
    Z, enc_cache = encode_cached(model, X)
    total = 0.0
    grad_Z = np.zeros_like(Z)
    dec_acc = None
    for k in range(1, d + 1):
        Zk = Z.copy()
        Zk[k:, :] = 0.0
        Xhat_k, dec_cache = decode_cached(model, Zk)
        lk, g_xhat = recon_loss(X, Xhat_k)
        total += float(alpha[k - 1]) * lk
        dec_grads, g_at_Zk = backward_decoder(model, dec_cache, g_xhat)
        g_at_Zk[k:, :] = 0.0  # masked coordinates pass no gradient
        grad_Z += alpha[k - 1] * g_at_Zk
        if dec_acc is None:
            dec_acc = [(alpha[k - 1] * dW, alpha[k - 1] * db) for dW, db in dec_grads]
        else:
            dec_acc = [
                (aW + alpha[k - 1] * dW, ab + alpha[k - 1] * db)
                for (aW, ab), (dW, db) in zip(dec_acc, dec_grads)
            ]
    enc_grads = backward_encoder(model, enc_cache, grad_Z)
    return total, Gradients(encoder=enc_grads, decoder=dec_acc)


def hae_prefix_losses(X, model: MlpModel) -> np.ndarray:
    """L_k for every prefix k; useful for the monotone-decrease check."""
    X = as_matrix(X, "X")
    Z, _ = encode_cached(model, X)
    out = np.empty(model.latent_dim)
    for k in range(1, model.latent_dim + 1):
        Zk = Z.copy()
        Zk[k:, :] = 0.0
        Xhat_k, _ = decode_cached(model, Zk)
        out[k - 1], _ = recon_loss(X, Xhat_k)
    return out
