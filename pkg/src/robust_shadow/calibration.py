"""Calibration of the effective measurement channel.

Each calibration round prepares ``|0^n>``, applies a random Clifford and the
device noise, and measures.  Single-round estimators:

* global group: ``(d |<b|U|0>|**2 - 1) / (d - 1)``, an unbiased estimate of
  ``f = (d F_Z - 1) / (d**2 - 1)``;
* local group: ``prod_i <b_i| U_i Z**z_i U_i^dag |b_i>``, an unbiased
  estimate of ``f_z = 3**-|z| Gamma(z)``.

The rounds are aggregated with median of means and the resulting diagonal
map is inverted for the estimation phase.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .clifford import LOCAL_FACTOR_TABLE, amplitude_probability
from .device import DeviceConfig, SampleBatch, ShadowSample, iter_batches
from .pauli import BitString, PTMDiagonal, popcount
from .stats import MoMConfig, bin_means, bootstrap_std

BOOTSTRAP_TAG = 3


class NonInvertibleChannelError(ValueError):
    """A calibrated coefficient is too close to zero to invert reliably."""


class InfeasiblePlanError(ValueError):
    """The requested accuracy cannot be guaranteed for these parameters."""


def _zval(z) -> int:
    return z.value if isinstance(z, BitString) else int(z)


def patterns_up_to_weight(n: int, k: int) -> list[int]:
    """All nonzero ``z`` with ``|z| <= k``, by weight then value."""
    out = []
    for w in range(1, min(k, n) + 1):
        for qs in itertools.combinations(range(n), w):
            out.append(sum(1 << (n - 1 - q) for q in qs))
    return out


def nearest_neighbor_patterns(n: int) -> list[int]:
    """Single sites plus adjacent pairs of an open chain: ``n + (n - 1)`` patterns."""
    singles = [1 << (n - 1 - q) for q in range(n)]
    pairs = [(1 << (n - 1 - q)) | (1 << (n - 2 - q)) for q in range(n - 1)]
    return singles + pairs


# single-round estimators


def noise_est_global(sample: ShadowSample) -> float:
    n = sample.outcome.n
    d = 2**n
    p = amplitude_probability(sample.clifford, sample.outcome)
    return float((d * p - 1) / (d - 1))


def noise_est_local(z, sample: ShadowSample) -> float:
    zv = _zval(z)
    n = sample.outcome.n
    out = 1.0
    for q, c in enumerate(sample.clifford.indices):
        if zv >> (n - 1 - q) & 1:
            out *= LOCAL_FACTOR_TABLE[c, 3, sample.outcome.bit(q)]
    return out


def global_round_values(batch: SampleBatch) -> np.ndarray:
    d = 2**batch.n
    vals = np.empty(len(batch))
    for i, tab in enumerate(batch.tableaux):
        p = tab.zero_state.probability(int(batch.outcomes[i]))
        vals[i] = float((d * p - 1) / (d - 1))
    return vals


def local_z_factors(batch: SampleBatch) -> np.ndarray:
    """``<b_i| U_i Z U_i^dag |b_i>`` for every round and qubit, shape (B, n)."""
    return LOCAL_FACTOR_TABLE[batch.local_indices, 3, batch.bits()]


def estimate_all_patterns(samples, z_set: Iterable, k: int | None = None) -> np.ndarray:
    """Per-round local estimators for every pattern, shape (B, len(z_set)).

    The per-qubit factors are computed once per round and each pattern is a
    product over its support.
    """
    batch = samples if isinstance(samples, SampleBatch) else SampleBatch.from_samples(samples)
    zs = [_zval(z) for z in z_set]
    if k is not None:
        bad = [format(z, f"0{batch.n}b") for z in zs if popcount(z) > k]
        if bad:
            raise ValueError(f"patterns heavier than k={k}: {bad}")
    out = np.ones((len(batch), len(zs)))
    if not zs:
        return out
    fac = local_z_factors(batch)
    n = batch.n
    for j, z in enumerate(zs):
        for q in range(n):
            if z >> (n - 1 - q) & 1:
                out[:, j] *= fac[:, q]
    return out


# aggregation


@dataclass
class CalibrationEstimate:
    group: str
    n: int
    N: int
    K: int
    z_set: list[int]
    bin_means: np.ndarray  # (K,) global or (K, |z_set|) local
    sigma: np.ndarray
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return self.N * self.K

    @property
    def values(self) -> np.ndarray:
        return np.median(self.bin_means, axis=0)

    @property
    def f(self) -> float:
        if self.group != "global":
            raise AttributeError("local calibrations have one coefficient per pattern")
        return float(self.values)

    def coefficient(self, z) -> float:
        zv = _zval(z)
        if zv == 0:
            return 1.0
        if self.group == "global":
            return self.f
        return float(self.values[self.z_set.index(zv)])

    def sigma_of(self, z) -> float:
        if self.group == "global":
            return float(self.sigma)
        return float(self.sigma[self.z_set.index(_zval(z))])

    @property
    def coefficients(self) -> dict[str, float]:
        if self.group == "global":
            return {"f": self.f}
        return {format(z, f"0{self.n}b"): float(v) for z, v in zip(self.z_set, self.values)}

    def to_ptm(self) -> PTMDiagonal:
        if self.group == "global":
            return PTMDiagonal.global_(self.n, self.f)
        return PTMDiagonal.local(self.n, dict(zip(self.z_set, map(float, self.values))))

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "n": self.n,
            "N": self.N,
            "K": self.K,
            "R": self.R,
            "seed": self.seed,
            "coefficients": self.coefficients,
            "sigma": (
                float(self.sigma)
                if self.group == "global"
                else {format(z, f"0{self.n}b"): float(s) for z, s in zip(self.z_set, self.sigma)}
            ),
            "bin_means": np.asarray(self.bin_means).tolist(),
            "z_set": [format(z, f"0{self.n}b") for z in self.z_set],
            "meta": self.meta,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict) -> CalibrationEstimate:
        n = int(d["n"])
        z_set = [int(s, 2) for s in d.get("z_set", [])]
        if d["group"] == "global":
            sigma = np.asarray(d["sigma"], dtype=float)
        else:
            sigma = np.array([d["sigma"][format(z, f"0{n}b")] for z in z_set], dtype=float)
        return cls(
            d["group"], n, int(d["N"]), int(d["K"]), z_set, np.asarray(d["bin_means"], dtype=float), sigma, d.get("seed"), d.get("meta", {})
        )

    @classmethod
    def from_json(cls, text: str) -> CalibrationEstimate:
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_json(indent=2) + "\n")

    @classmethod
    def load(cls, path) -> CalibrationEstimate:
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())


def calibration_round_values(cfg: DeviceConfig, group: str, R: int, z_set=None, workers: int = 1) -> np.ndarray:
    """Per-round estimators for rounds ``0..R-1``: shape (R,) global, (R, |z_set|) local."""
    parts = []
    for batch in iter_batches(cfg, group, "calibration", R, workers=workers):
        if group == "global":
            parts.append(global_round_values(batch))
        else:
            parts.append(estimate_all_patterns(batch, z_set))
    if not parts:
        return np.zeros((0,) if group == "global" else (0, len(z_set)))
    return np.concatenate(parts)


def calibrate(
    device: DeviceConfig,
    group: str,
    N: int,
    K: int,
    z_set: Sequence | None = None,
    B: int = 200,
    workers: int = 1,
    return_rounds: bool = False,
):
    """Run ``R = N K`` calibration rounds and aggregate by median of means.

    ``z_set`` defaults to every pattern of weight at most 2 (local group).
    """
    cfg = MoMConfig(N, K)
    zs: list[int] = []
    if group == "local":
        zs = [_zval(z) for z in (z_set if z_set is not None else patterns_up_to_weight(device.n, 2))]
        if 0 in zs:
            zs.remove(0)
    vals = calibration_round_values(device, group, cfg.R, zs, workers)
    means = bin_means(vals, cfg)
    if B > 0 and cfg.R > 1:
        sigma = bootstrap_std(vals, cfg, B=B, rng=np.random.default_rng([device.master_seed, BOOTSTRAP_TAG]))
    else:
        sigma = np.zeros(vals.shape[1:])
    est = CalibrationEstimate(
        group,
        device.n,
        cfg.N,
        cfg.K,
        zs,
        means,
        np.asarray(sigma, dtype=float),
        device.master_seed,
        {"noise": device.noise.to_config(), "backend": device.backend},
    )
    return (est, vals) if return_rounds else est


def build_inverse(est: CalibrationEstimate, floor: float | None = None) -> PTMDiagonal:
    """Reciprocal diagonal; refuses coefficients with ``|f| < floor``.

    The default floor is ten bootstrap standard deviations of each coefficient.
    """
    if est.group == "global":
        items = [(0, est.f, float(est.sigma))]
    else:
        items = [(z, float(v), float(s)) for z, v, s in zip(est.z_set, est.values, est.sigma)]
    bad = []
    for z, v, s in items:
        fl = 10 * s if floor is None else floor
        if v == 0 or abs(v) < fl:
            bad.append((format(z, f"0{est.n}b") if est.group == "local" else "f", v, fl))
    if bad:
        desc = ", ".join(f"{name}={v:.4g} (floor {fl:.3g})" for name, v, fl in bad)
        raise NonInvertibleChannelError(f"coefficients below the inversion floor: {desc}")
    return est.to_ptm().inverse()


# sample-size planning


@dataclass(frozen=True)
class SamplePlan:
    N: int
    K: int
    R_bound: float  # continuous R before rounding N and K separately

    @property
    def R(self) -> int:
        return self.N * self.K


def plan_samples(
    eps: float,
    delta: float,
    F_Z: float,
    group: str,
    n: int,
    k: int | None = None,
    variant: str = "proof",
) -> SamplePlan:
    """Calibration rounds guaranteeing relative error ``eps`` with probability ``1 - delta``.

    Global: ``K = 2 ln(2/delta)``, ``N = 34 Var / gamma**2`` with
    ``Var <= 2/(d-1)**2`` and ``gamma = eps |f| / (1 + eps)``.  ``variant``
    selects the derivation's ``(1 + eps)**2`` factor or the ``(1 + eps**2)`` that
    appears in the stated bound.

    Local: ``F_Z`` is the per-qubit Z fidelity, so ``Gamma(z) >= (2 F_Z - 1)**k``;
    ``N = 34 * 3**k (1 + eps)**2 / (eps**2 Gamma**2)`` and ``K = 2 ln(2 n**k / delta)``.
    """
    if not (0 < eps < 1 and 0 < delta < 1):
        raise InfeasiblePlanError("eps and delta must lie in (0, 1)")
    if variant not in ("proof", "statement"):
        raise ValueError("variant must be 'proof' or 'statement'")
    factor = (1 + eps) ** 2 if variant == "proof" else 1 + eps**2
    if group == "global":
        d = 2**n
        if F_Z <= 1 / d:
            raise InfeasiblePlanError(f"F_Z = {F_Z} is not above 1/d = {1 / d}; the twirled channel is not invertible")
        Kf = 2 * math.log(2 / delta)
        Nf = 68 * factor * (1 + 1 / d) ** 2 / (eps**2 * (F_Z - 1 / d) ** 2)
    elif group == "local":
        if k is None:
            raise ValueError("local planning needs the locality k")
        gamma = (2 * F_Z - 1) ** k
        if gamma <= 0:
            raise InfeasiblePlanError("Gamma lower bound is not positive (need F_Z > 1/2 per qubit)")
        Kf = 2 * math.log(2 * n**k / delta)
        Nf = 34 * 3**k * factor / (eps**2 * gamma**2)
    else:
        raise ValueError(f"unknown group {group!r}")
    return SamplePlan(math.ceil(Nf), math.ceil(Kf), Nf * Kf)
