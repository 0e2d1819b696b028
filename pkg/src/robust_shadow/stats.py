"""Median-of-means aggregation and the empirical bootstrap."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MoMConfig:
    N: int  # bin size
    K: int  # bin count

    def __post_init__(self):
        if int(self.N) < 1 or int(self.K) < 1:
            raise ValueError("N and K must be at least 1")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "K", int(self.K))

    @property
    def R(self) -> int:
        return self.N * self.K

    @classmethod
    def from_tail(cls, var: float, gamma: float, delta: float) -> MoMConfig:
        """Bin sizes giving ``P(|mom - mu| > gamma) <= delta``: ``N = 34 var/gamma**2``, ``K = 2 ln(2/delta)``."""
        return cls(math.ceil(34 * var / gamma**2), math.ceil(2 * math.log(2 / delta)))


def _as_cfg(cfg, K=None) -> MoMConfig:
    if isinstance(cfg, MoMConfig):
        return cfg
    return MoMConfig(cfg, K)


def bin_means(xs, cfg: MoMConfig | int, K: int | None = None) -> np.ndarray:
    """Means of the K consecutive blocks ``[kN, (k+1)N)``; extra trailing axes are kept."""
    cfg = _as_cfg(cfg, K)
    xs = np.asarray(xs, dtype=float)
    if xs.shape[0] != cfg.R:
        raise ValueError(f"expected N*K = {cfg.R} samples, got {xs.shape[0]}")
    return xs.reshape((cfg.K, cfg.N) + xs.shape[1:]).mean(axis=1)


def median_of_means(xs, cfg: MoMConfig | int, K: int | None = None):
    """Median of the K bin means.

    Even K takes the mean of the two central bin means (numpy's median rule).
    A 2-D input is treated column by column.
    """
    return np.median(bin_means(xs, cfg, K), axis=0)


def bootstrap_std(xs, cfg: MoMConfig | int, K: int | None = None, B: int = 200, rng=None):
    """Standard deviation of the median-of-means over ``B`` resamples with replacement.

    Columns of a 2-D input share the resampled indices, so correlated
    observables see the same bootstrap replicas.
    """
    cfg = _as_cfg(cfg, K)
    xs = np.asarray(xs, dtype=float)
    if xs.shape[0] != cfg.R:
        raise ValueError(f"expected N*K = {cfg.R} samples, got {xs.shape[0]}")
    if B < 2:
        raise ValueError("need at least two bootstrap replicas")
    rng = np.random.default_rng(rng)
    reps = np.empty((B,) + xs.shape[1:])
    for i in range(B):
        idx = rng.integers(0, cfg.R, size=cfg.R)
        reps[i] = median_of_means(xs[idx], cfg)
    return reps.std(axis=0, ddof=1)
