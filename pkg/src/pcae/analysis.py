"""Post-hoc estimators: intrinsic dimension, latent interpolation, smoothness.

Variance-ordered latents make dimension estimation a threshold scan over the
coordinate variances; an MLE neighbor-distance estimator is kept alongside as
a model-free reference. The smoothness score follows the interpolate-decode
procedure step by step: equal latent steps should decode to equal-size image
steps, and the per-pair variance of those step sizes is averaged over pairs.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix
from .network import MlpModel, decode, encode
from .parallel import parallel_map

log = logging.getLogger(__name__)

_CHUNK = 512


@dataclass
class DimEstimate:
    k: int
    tau: float
    variance_profile: np.ndarray  # variances in the order the scan consumed them
    cumulative: np.ndarray

    def __post_init__(self):
        self.variance_profile = np.asarray(self.variance_profile, dtype=np.float64)
        self.cumulative = np.asarray(self.cumulative, dtype=np.float64)
        if not (1 <= self.k <= self.variance_profile.size):
            raise ValueError("k outside 1..d")


@dataclass
class SmoothnessReport:
    score: float
    pair_count: int
    steps: int
    per_pair: np.ndarray

    def __post_init__(self):
        self.per_pair = np.asarray(self.per_pair, dtype=np.float64)
        if self.per_pair.shape != (self.pair_count,):
            raise ValueError("per_pair length must equal pair_count")


def latent_variances(model: MlpModel, X) -> np.ndarray:
    """Population variance of each latent coordinate over the whole of X."""
    X = as_matrix(X, "X")
    if X.shape[1] < 2:
        raise ValueError("variance needs at least 2 samples")
    Z = encode(model, X)
    centered = Z - Z.mean(axis=1, keepdims=True)
    return np.mean(centered * centered, axis=1)


def estimate_dim_cumvar(variances, tau: float, descending: bool = False) -> DimEstimate:
    """Smallest k whose leading coordinates explain at least tau of the variance.

    Coordinates are consumed in index order by default; variance-ordered
    latents need no sorting. Baselines without an intrinsic ordering pass
    descending=True to rank coordinates by variance first.
    """
    v = np.asarray(variances, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("variances must be a nonempty 1-d array")
    if np.any(v < 0.0):
        raise ValueError("variances must be nonnegative")
    total = float(v.sum())
    if total <= 0.0:
        raise ValueError("variances are all zero")
    if not (0.0 < tau < 1.0):
        raise ValueError("tau must lie in (0, 1)")
    profile = np.sort(v)[::-1] if descending else v
    cum = np.cumsum(profile)
    # the final ratio is exactly 1, so the scan always terminates
    k = int(np.nonzero(cum / total >= tau)[0][0]) + 1
    return DimEstimate(k=k, tau=tau, variance_profile=profile, cumulative=cum)


def _knn_distances(X: np.ndarray, k: int) -> np.ndarray:
    """Sorted distances to the k nearest neighbors of every column, self excluded."""
    n = X.shape[1]
    sq = np.sum(X * X, axis=0)
    out = np.empty((n, k))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        block = sq[start:stop, None] + sq[None, :] - 2.0 * (X[:, start:stop].T @ X)
        np.maximum(block, 0.0, out=block)
        block[np.arange(start, stop) - start, np.arange(start, stop)] = np.inf
        part = np.partition(block, k - 1, axis=1)[:, :k]
        part.sort(axis=1)
        out[start:stop] = np.sqrt(part)
    return out


def mle_dim(X, k_neighbors: int) -> float:
    """Neighbor-distance maximum-likelihood dimension estimate.

    Per point, inverse dimension is the mean log-ratio of the k-th neighbor
    distance to the nearer ones; the aggregate averages the inverses across
    points and inverts once at the end, which removes the small-sample bias
    of averaging the per-point estimates directly.
    """
    X = as_matrix(X, "X")
    n = X.shape[1]
    if k_neighbors < 3:
        raise ValueError("k_neighbors must be >= 3")
    if n <= k_neighbors:
        raise ValueError("need more samples than neighbors")
    T = _knn_distances(X, k_neighbors)
    ok = np.all(T > 0.0, axis=1)
    dropped = int(n - ok.sum())
    if dropped:
        log.warning("mle_dim: excluded %d points with duplicate neighbors", dropped)
    if not np.any(ok):
        raise ValueError("every point has a duplicate neighbor")
    T = T[ok]
    inv = np.mean(np.log(T[:, -1:] / T[:, :-1]), axis=1)
    return float(1.0 / np.mean(inv))


def interpolate(z_a, z_b, m: int) -> list:
    """m+1 equally spaced codes from z_a to z_b, endpoints exact."""
    if m < 1:
        raise ValueError("m must be >= 1")
    z_a = np.asarray(z_a, dtype=np.float64).ravel()
    z_b = np.asarray(z_b, dtype=np.float64).ravel()
    if z_a.shape != z_b.shape:
        raise ValueError("endpoint codes must have the same shape")
    return [(1.0 - t / m) * z_a + (t / m) * z_b for t in range(m + 1)]


def smoothness(model: MlpModel, X, N: int = 100, m: int = 10, seed: int = 0) -> SmoothnessReport:
    """Average per-pair variance of decoded inter-step distances.

    For each sampled pair: encode, walk the latent segment in m equal steps,
    decode every code, measure consecutive decoded distances d_1..d_m, and
    take their population variance. Lower means the decoder turns uniform
    latent motion into uniform output motion.
    """
    X = as_matrix(X, "X")
    n = X.shape[1]
    if n < 2:
        raise ValueError("need at least 2 samples")
    if N < 1:
        raise ValueError("N must be >= 1")
    if m < 2:
        raise ValueError("m must be >= 2")
    rng = np.random.default_rng(seed)
    # all draws happen up front so the pair sequence is independent of how the
    # per-pair work is scheduled; PCAE_THREADS then only changes wall-clock
    chosen = [rng.choice(n, size=2, replace=False) for _ in range(N)]

    def one_pair(ij) -> float:
        i, j = ij
        Z = encode(model, X[:, [i, j]])
        codes = np.stack(interpolate(Z[:, 0], Z[:, 1], m), axis=1)
        decoded = decode(model, codes)
        steps = np.linalg.norm(np.diff(decoded, axis=1), axis=0)
        return float(np.var(steps))

    per_pair = np.asarray(parallel_map(one_pair, chosen))
    return SmoothnessReport(score=float(per_pair.mean()), pair_count=N, steps=m, per_pair=per_pair)


# ------------------------------------------------------------- report output


def dim_report_dict(est: DimEstimate) -> dict:
    return {
        "k": est.k,
        "tau": est.tau,
        "variances": [float(v) for v in est.variance_profile],
        "cumulative": [float(c) for c in est.cumulative],
    }


def save_dim_report(est: DimEstimate, path) -> None:
    with open(path, "w") as fh:
        json.dump(dim_report_dict(est), fh, indent=2)
        fh.write("\n")


def save_variance_csv(path, variances) -> None:
    """Two-column profile (coordinate, variance) for plotting."""
    v = np.asarray(variances, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["coordinate", "variance"])
        for i, val in enumerate(v, start=1):
            w.writerow([i, f"{val:.17g}"])
