"""Dynamic weighting coefficients for the variance penalty.

The schedule starts linear in the latent index and is periodically reshaped
around a pivot: the first coordinate whose cumulative variance share exceeds
a threshold. Coordinates before the pivot get weights below 1 (cheap to keep),
coordinates after it get weights above 1 (pressure to drain), and the whole
array stays strictly increasing and under the critical value 2 that the
encoder-only recovery guarantee requires.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class GammaSchedule:
    gammas: np.ndarray
    threshold_t: float = 0.99
    update_period_K: int = 10
    last_update_epoch: int = 0
    pivot: int | None = None  # 1-based j of the most recent update

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=np.float64)
        object.__setattr__(self, "gammas", g)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("gammas must be a nonempty 1-d array")
        if not (0.0 < self.threshold_t < 1.0):
            raise ValueError("threshold_t must lie in (0, 1)")
        if self.update_period_K < 1:
            raise ValueError("update_period_K must be >= 1")
        if g[0] <= 0.0 or np.any(np.diff(g) <= 0.0):
            raise ValueError("gammas must be strictly increasing and positive")
        if g[-1] >= 2.0:
            raise ValueError("gammas must stay below 2")

    @property
    def d(self) -> int:
        return int(self.gammas.size)


def init_gammas(
    d_latent: int, threshold_t: float = 0.99, update_period_K: int = 10
) -> GammaSchedule:
    """Linear ramp gamma_i = 1.9 i / d, i = 1..d."""
    if d_latent < 1:
        raise ValueError("d_latent must be >= 1")
    idx = np.arange(1, d_latent + 1, dtype=np.float64)
    return GammaSchedule(
        gammas=1.9 * idx / d_latent,
        threshold_t=threshold_t,
        update_period_K=update_period_K,
        last_update_epoch=0,
    )


def find_pivot(variances, threshold_t: float) -> int:
    """Smallest 1-based j whose cumulative variance strictly exceeds t * total."""
    v = np.asarray(variances, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ValueError("variances must be a nonempty 1-d array")
    if np.any(v < 0.0):
        raise ValueError("variances must be nonnegative")
    total = float(v.sum())
    if total <= 0.0:
        raise ValueError("variances are all zero")
    cum = np.cumsum(v)
    above = np.nonzero(cum > threshold_t * total)[0]
    # the full sum always exceeds t * total for t < 1, so the scan cannot miss
    return int(above[0]) + 1


def piecewise_gammas(d: int, j: int) -> np.ndarray:
    """The pivot reweighting: 0.5 i/(j-1) below j, 1 at j, 1 + 0.5 (i-j)/(d-j) above."""
    if not (1 <= j <= d):
        raise ValueError(f"pivot {j} outside 1..{d}")
    i = np.arange(1, d + 1, dtype=np.float64)
    g = np.ones(d)
    if j > 1:
        g[: j - 1] = 0.5 * i[: j - 1] / (j - 1)
    if j < d:
        g[j:] = 1.0 + 0.5 * (i[j:] - j) / (d - j)
    return g


def update_gammas(sched: GammaSchedule, variances, epoch: int | None = None) -> GammaSchedule:
    """Reshape the schedule around the current variance allocation.

    All-zero variances leave the schedule untouched (warned, not raised): a
    collapsed latent carries no signal about where the pivot should sit.
    """
    v = np.asarray(variances, dtype=np.float64)
    if v.shape != (sched.d,):
        raise ValueError(f"variances must have length {sched.d}")
    if np.any(v < 0.0):
        raise ValueError("variances must be nonnegative")
    if float(v.sum()) <= 0.0:
        log.warning("gamma update skipped: all latent variances are zero")
        return sched if epoch is None else replace(sched, last_update_epoch=epoch)
    j = find_pivot(v, sched.threshold_t)
    g = piecewise_gammas(sched.d, j)
    # formula guarantees: positive, strictly increasing, capped at 1.5
    assert g[0] > 0.0 and np.all(np.diff(g) > 0.0) and g[-1] <= 1.5
    return GammaSchedule(
        gammas=g,
        threshold_t=sched.threshold_t,
        update_period_K=sched.update_period_K,
        last_update_epoch=sched.last_update_epoch if epoch is None else epoch,
        pivot=j,
    )


def should_update(sched: GammaSchedule, epoch: int) -> bool:
    return epoch - sched.last_update_epoch >= sched.update_period_K
