"""Synthetic manifold datasets with known intrinsic dimension, plus CSV persistence.

All sample matrices are float64 with one sample per column and zero row means
(generators center before returning). Factor matrices keep the raw generative
coordinates so tests can compare against ground truth.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .linalg import as_matrix, qr_orthonormalize


@dataclass
class Dataset:
    """A sample matrix with optional generative ground truth.

    samples: p x n, column per sample. factors: d_true x n generative
    coordinates when the generator knows them, else None.
    """

    samples: np.ndarray
    factors: np.ndarray | None = None
    intrinsic_dim: int | None = None
    seed: int = 0
    generator: str = "unknown"

    def __post_init__(self):
        self.samples = as_matrix(self.samples, "samples")
        # split parts may hold a single sample; generators enforce their own minima
        if self.samples.shape[1] < 1:
            raise ValueError("dataset needs at least 1 sample")
        if self.factors is not None:
            self.factors = as_matrix(self.factors, "factors")
            if self.factors.shape[1] != self.samples.shape[1]:
                raise ValueError("factors and samples disagree on sample count")
            if self.factors.shape[0] > self.samples.shape[0]:
                raise ValueError("more factors than ambient dimensions")

    @property
    def ambient_dim(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]


@dataclass
class SplitSpec:
    """Train/val/test fractions; must be positive and sum to 1."""

    train_frac: float = 0.7
    val_frac: float = 0.15
    test_frac: float = 0.15

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f <= 0 for f in fracs):
            raise ValueError(f"split fractions must be positive, got {fracs}")
        if abs(sum(fracs) - 1.0) > 1e-12:
            raise ValueError(f"split fractions must sum to 1, got {sum(fracs)!r}")


def center(X) -> np.ndarray:
    """Subtract each row's mean so every row has zero mean."""
    X = as_matrix(X, "X")
    if X.shape[1] == 0:
        return X.copy()
    return X - X.mean(axis=1, keepdims=True)


def gen_swiss_roll(n: int, noise_sd: float = 0.0, seed: int = 0) -> Dataset:
    """Classic 2-factor roll in R^3: (t cos t, h, t sin t), t in [1.5pi, 4.5pi], h in [0, 21]."""
    if n < 10:
        raise ValueError("swiss roll needs n >= 10")
    if noise_sd < 0:
        raise ValueError("noise_sd must be non-negative")
    rng = np.random.default_rng(seed)
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=n)
    h = rng.uniform(0.0, 21.0, size=n)
    samples = np.vstack([t * np.cos(t), h, t * np.sin(t)])
    if noise_sd > 0:
        samples = samples + rng.normal(0.0, noise_sd, size=samples.shape)
    return Dataset(
        samples=center(samples),
        factors=np.vstack([t, h]),
        intrinsic_dim=2,
        seed=seed,
        generator="swiss_roll",
    )


def gen_factor_manifold(
    d_true: int,
    p: int,
    n: int,
    variance_profile,
    seed: int = 0,
) -> Dataset:
    """Uniform latent factors with prescribed variances, pushed through a smooth injection.

    Factors z_i ~ U(-a_i, a_i) with a_i chosen so Var(z_i) = variance_profile[i].
    Ambient map: random orthonormal p x d_true injection, then the fixed
    coordinate-wise nonlinearity u + 0.1 u^3 (invertible, full-rank Jacobian
    everywhere, so intrinsic dimension is preserved).
    """
    if not 1 <= d_true < p:
        raise ValueError(f"need 1 <= d_true < p, got d_true={d_true}, p={p}")
    profile = np.asarray(variance_profile, dtype=np.float64)
    if profile.shape != (d_true,):
        raise ValueError(f"variance_profile must have length {d_true}")
    if np.any(profile <= 0):
        raise ValueError("variance_profile entries must be strictly positive")
    if np.any(np.diff(profile) > 0):
        raise ValueError("variance_profile must be descending")
    rng = np.random.default_rng(seed)
    half_width = np.sqrt(3.0 * profile)  # U(-a, a) has variance a^2 / 3
    Z = rng.uniform(-1.0, 1.0, size=(d_true, n)) * half_width[:, None]
    W = qr_orthonormalize(rng.normal(size=(p, d_true)))
    A = W @ Z
    samples = A + 0.1 * A**3
    return Dataset(
        samples=center(samples),
        factors=Z,
        intrinsic_dim=d_true,
        seed=seed,
        generator="factor_manifold",
    )


def gen_flat_strip(
    n: int,
    seed: int = 0,
    length: float = 6.0,
    width: float = 2.0,
    bend_radius: float = 2.2,
    p: int = 3,
) -> Dataset:
    """Rectangle bent along a circular arc: developable, so exactly isometric to its chart.

    Factors are the chart coordinates (u, v) with u ~ U(0, length), v ~ U(0, width).
    Geodesic distance on the surface equals plain Euclidean distance between
    factor columns, which gives harnesses an exact d_M with no graph error.
    Bend angle length/bend_radius must stay below pi so the sheet cannot
    self-intersect.
    """
    if n < 10:
        raise ValueError("flat strip needs n >= 10")
    if p < 3:
        raise ValueError("ambient dimension must be at least 3")
    if length / bend_radius >= np.pi:
        raise ValueError("bend angle length/bend_radius must be < pi")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, length, size=n)
    v = rng.uniform(0.0, width, size=n)
    # arc-length parametrization: |d(arc)/du| = 1, so the bend preserves distances
    arc_x = bend_radius * np.sin(u / bend_radius)
    arc_z = bend_radius * (1.0 - np.cos(u / bend_radius))
    base = np.vstack([arc_x, v, arc_z])
    if p > 3:
        W = qr_orthonormalize(rng.normal(size=(p, 3)))
        base = W @ base
    return Dataset(
        samples=center(base),
        factors=np.vstack([u, v]),
        intrinsic_dim=2,
        seed=seed,
        generator="flat_strip",
    )


def _round_half_down(x: float) -> int:
    # round-to-nearest with exact halves going down, so (0.7, 0.15, 0.15) of
    # n=10 gives val=1, test=1, train=8
    return int(np.ceil(x - 0.5))


def split(ds: Dataset, spec: SplitSpec, seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Disjoint column partition into train/val/test; remainder goes to train."""
    n = ds.n
    n_val = _round_half_down(n * spec.val_frac)
    n_test = _round_half_down(n * spec.test_frac)
    n_train = n - n_val - n_test
    if min(n_train, n_val, n_test) < 1:
        raise ValueError(
            f"split of n={n} with fractions "
            f"({spec.train_frac}, {spec.val_frac}, {spec.test_frac}) leaves an empty part"
        )
    perm = np.random.default_rng(seed).permutation(n)
    parts = (
        perm[:n_train],
        perm[n_train : n_train + n_val],
        perm[n_train + n_val :],
    )

    def take(idx):
        return Dataset(
            samples=ds.samples[:, idx],
            factors=None if ds.factors is None else ds.factors[:, idx],
            intrinsic_dim=ds.intrinsic_dim,
            seed=ds.seed,
            generator=ds.generator,
        )

    return take(parts[0]), take(parts[1]), take(parts[2])


# ------------------------------------------------------------- CSV + sidecar

def sidecar_path(csv_path) -> Path:
    return Path(str(csv_path) + ".meta.json")


def save_csv(ds: Dataset, path) -> None:
    """Write samples as CSV (header x1..xp, one sample per line) plus a metadata sidecar.

    Factors are ground truth internal to generators and are not persisted.
    """
    path = Path(path)
    p = ds.ambient_dim
    header = ",".join(f"x{i + 1}" for i in range(p))
    np.savetxt(path, ds.samples.T, fmt="%.17g", delimiter=",", header=header, comments="")
    meta = {"intrinsic_dim": ds.intrinsic_dim, "seed": ds.seed, "generator": ds.generator}
    sidecar_path(path).write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_csv(path, center_samples: bool = True) -> Dataset:
    """Read a CSV written by save_csv (or any headered numeric CSV); centers by default."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"dataset file not found: {path}")
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    samples = rows.T
    if center_samples:
        samples = center(samples)
    meta_file = sidecar_path(path)
    meta = json.loads(meta_file.read_text()) if meta_file.exists() else {}
    return Dataset(
        samples=samples,
        factors=None,
        intrinsic_dim=meta.get("intrinsic_dim"),
        seed=int(meta.get("seed", 0)),
        generator=str(meta.get("generator", "csv")),
    )
