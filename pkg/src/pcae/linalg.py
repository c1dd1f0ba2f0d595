"""Dense symmetric linear algebra: covariance, Jacobi eigendecomposition, weighted traces.

Conventions: data matrices are float64 with one sample per column, so the
covariance of a zero-row-mean X is plain X @ X.T (no 1/n factor; training
losses that need sample variances apply their own 1/n).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class CenteringError(ValueError):
    """Input rows were expected to have zero mean but do not."""


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D float64 array with finite entries."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def covariance(X) -> np.ndarray:
    """Scatter matrix X @ X.T of a zero-row-mean sample matrix (p x n, column per sample).

    No 1/n factor. Raises CenteringError naming the worst row if any row mean
    exceeds 1e-9 relative to the data scale.
    """
    X = as_matrix(X, "X")
    scale = max(1.0, float(np.max(np.abs(X))) if X.size else 1.0)
    means = X.mean(axis=1) if X.shape[1] else np.zeros(X.shape[0])
    worst = int(np.argmax(np.abs(means))) if means.size else 0
    if means.size and abs(means[worst]) > 1e-9 * scale:
        raise CenteringError(
            f"rows are not zero-mean: worst row {worst} has mean {means[worst]:.3e}"
        )
    C = X @ X.T
    # exact symmetry regardless of BLAS accumulation order
    return (C + C.T) / 2.0


@dataclass
class EigenDecomposition:
    """Eigenpairs of a symmetric matrix, values sorted descending.

    vectors[:, i] is the unit eigenvector paired with values[i].
    """

    values: np.ndarray
    vectors: np.ndarray

    def degenerate_groups(self, tol: float = 1e-10) -> list[list[int]]:
        """Indices grouped by (near-)equal eigenvalues; singleton groups for distinct ones.

        Eigenvectors are non-unique inside a group, so alignment checks must
        compare subspaces there, not individual columns.
        """
        groups: list[list[int]] = [[0]] if len(self.values) else []
        for i in range(1, len(self.values)):
            if abs(self.values[i] - self.values[i - 1]) < tol:
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups


def _jacobi_rotate(A: np.ndarray, V: np.ndarray, p: int, q: int) -> None:
    apq = A[p, q]
    if abs(apq) < 1e-300:
        # coupling is denormal; the exact rotation is numerically the identity
        A[p, q] = 0.0
        A[q, p] = 0.0
        return
    tau = (A[q, q] - A[p, p]) / (2.0 * apq)
    if abs(tau) > 1e150:
        t = 0.5 / tau  # asymptotic root, tau*tau would overflow
    elif tau >= 0.0:
        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c
    # two-sided rotation A <- J^T A J, J = plane rotation in (p, q)
    cp, cq = A[:, p].copy(), A[:, q].copy()
    A[:, p] = c * cp - s * cq
    A[:, q] = s * cp + c * cq
    rp, rq = A[p, :].copy(), A[q, :].copy()
    A[p, :] = c * rp - s * rq
    A[q, :] = s * rp + c * rq
    A[p, q] = 0.0
    A[q, p] = 0.0
    vp, vq = V[:, p].copy(), V[:, q].copy()
    V[:, p] = c * vp - s * vq
    V[:, q] = s * vp + c * vq


def sym_eig(A, off_tol: float = 1e-12, max_sweeps: int = 100) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below off_tol * ||A||_F
    (or max_sweeps). Robust and dependency-free for the desk-scale p used here.
    """
    A = as_matrix(A, "A")
    p = A.shape[0]
    if A.shape[1] != p:
        raise ValueError(f"matrix must be square, got {A.shape}")
    amax = float(np.max(np.abs(A))) if A.size else 0.0
    asym = float(np.max(np.abs(A - A.T))) if A.size else 0.0
    if asym > 1e-9 * max(amax, 1e-300):
        raise ValueError(f"matrix is not symmetric: max |A - A^T| = {asym:.3e}")
    work = (A + A.T) / 2.0
    V = np.eye(p)
    norm = float(np.linalg.norm(work))
    if norm > 0.0:
        off_mask = ~np.eye(p, dtype=bool)
        for _ in range(max_sweeps):
            off_sq = float(np.sum(work[off_mask] ** 2))
            if off_sq <= (off_tol * norm) ** 2:
                break
            for i in range(p - 1):
                for j in range(i + 1, p):
                    _jacobi_rotate(work, V, i, j)
    values = np.diag(work).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = V[:, order]
    # deterministic sign: largest-magnitude entry of each column is positive
    for i in range(p):
        k = int(np.argmax(np.abs(vectors[:, i])))
        if vectors[k, i] < 0:
            vectors[:, i] = -vectors[:, i]
    return EigenDecomposition(values=values, vectors=vectors)


def weighted_trace(U, sigma, gammas) -> float:
    """Tr(U^T Sigma U Gamma) for diagonal Gamma given as a 1-D weight array.

    Uses the cyclic-trace identity: with Gamma diagonal this is
    sum_i gammas[i] * u_i^T Sigma u_i, computed without forming the product.
    """
    U = as_matrix(U, "U")
    sigma = as_matrix(sigma, "sigma")
    g = np.asarray(gammas, dtype=np.float64)
    p = U.shape[0]
    if U.shape[1] != p:
        raise ValueError(f"U must be square, got {U.shape}")
    if sigma.shape != (p, p):
        raise ValueError(f"sigma shape {sigma.shape} does not match U shape {U.shape}")
    if g.ndim != 1 or g.shape[0] != p:
        raise ValueError(f"gammas must be a length-{p} vector, got shape {g.shape}")
    if np.any(g < 0):
        raise ValueError("gammas must be non-negative")
    if np.any(np.diff(g) < 0):
        raise ValueError("gammas must be ascending")
    return float(np.einsum("ij,ij,j->", U, sigma @ U, g))


def qr_orthonormalize(M) -> np.ndarray:
    """Orthonormal factor of M via QR, with signs fixed so diag(R) >= 0.

    The sign fix makes the factor a deterministic function of M, which keeps
    retraction-based solvers reproducible.
    """
    M = as_matrix(M, "M")
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def principal_angle_cosines(A, B) -> np.ndarray:
    """Cosines of the principal angles between the column spans of A and B, descending.

    Computed as the singular values of Q_A^T Q_B; both inputs are
    orthonormalized first so only the spans matter.
    """
    Qa = qr_orthonormalize(A)
    Qb = qr_orthonormalize(B)
    M = Qa.T @ Qb
    eig = sym_eig(M.T @ M)
    return np.sqrt(np.clip(eig.values, 0.0, 1.0))
