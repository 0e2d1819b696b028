"""Shadow estimation with a (calibrated or ideal) inverse measurement channel.

For a round with Clifford ``U`` and outcome ``b`` the single-round estimate of
``Tr(O rho)`` is ``<<O| M^-1 U^dag |b>>``:

* Pauli term ``c P_a``: ``c * Minv(z(a)) * <b| U P_a U^dag |b>``;
* stabilizer projector (global group): ``1/d + Minv * (|<b|U|psi>|**2 - 1/d)``.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channels import NoiseSpec, expected_f_global, expected_f_local
from .clifford import LOCAL_FACTOR_TABLE
from .device import DeviceConfig, SampleBatch, ShadowSample, iter_batches
from .observables import Observable, PauliSum, StabilizerProjector
from .pauli import MissingCoefficientError, PTMDiagonal, PauliString, all_paulis, noiseless_diagonal
from .stats import MoMConfig, bin_means, bootstrap_std

BOOTSTRAP_TAG = 4
_LETTER = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}


class GroupMismatchError(ValueError):
    """Samples, inverse channel and observable disagree on the Clifford group."""


def standard_shadow_inverse(group: str, n: int) -> PTMDiagonal:
    """Inverse of the noiseless twirled channel: ``2**n + 1`` globally, ``3**|z|`` locally."""
    return noiseless_diagonal(group, n).inverse()


def _letters(p: PauliString) -> list[int]:
    n = p.n
    return [_LETTER[((p.ax >> (n - 1 - q)) & 1, (p.az >> (n - 1 - q)) & 1)] for q in range(n)]


def _check(obs: Observable, minv: PTMDiagonal, group: str) -> None:
    if minv.group != group:
        raise GroupMismatchError(f"inverse channel is {minv.group} but samples are {group}")
    if obs.n != minv.n:
        raise GroupMismatchError("observable size does not match the inverse channel")
    if isinstance(obs, StabilizerProjector) and group != "global":
        raise GroupMismatchError("stabilizer projectors are estimated with the global group; expand to a Pauli sum for local")


def _required(obs: Observable, minv: PTMDiagonal) -> None:
    """Fail early, naming every uncalibrated pattern."""
    if minv.group != "local" or not isinstance(obs, PauliSum):
        return
    missing = []
    for z in sorted(obs.patterns):
        try:
            minv.coefficient(z)
        except MissingCoefficientError:
            missing.append(format(z, f"0{obs.n}b"))
    if missing:
        raise MissingCoefficientError(f"{obs.name}: uncalibrated patterns {missing}")


def single_round_estimate(obs: Observable, minv: PTMDiagonal, sample: ShadowSample) -> float:
    group = sample.group
    _check(obs, minv, group)
    b = sample.outcome
    if isinstance(obs, StabilizerProjector):
        d = 2**obs.n
        p = float(obs.state.evolve(sample.clifford).probability(b))
        return 1 / d + minv.f * (p - 1 / d)
    total = 0.0
    for c, p in obs.terms:
        if p.is_identity:
            total += c
            continue
        inv = minv.apply(p)
        if group == "global":
            q = sample.clifford.conjugate(p)
            val = 0.0 if q.ax else float(np.real(q.diag_value(b)))
        else:
            val = 1.0
            for i, (cl, letter) in enumerate(zip(sample.clifford.indices, _letters(p))):
                if letter:
                    val *= LOCAL_FACTOR_TABLE[cl, letter, b.bit(i)]
        total += c * inv * val
    return total


@dataclass
class _Raw:
    """Inverse-independent part of the estimates: ``value = const + sum_t coeff_t Minv(z_t) raw[:, t]``."""

    const: float
    coeffs: np.ndarray
    paulis: list[PauliString]
    raw: np.ndarray  # (B, T)

    def combine(self, minv: PTMDiagonal) -> np.ndarray:
        w = self.coeffs * np.array([minv.apply(p) for p in self.paulis])
        return self.const + self.raw @ w


def _raw_values(obs: Observable, batch: SampleBatch) -> _Raw:
    B = len(batch)
    if isinstance(obs, StabilizerProjector):
        d = 2**obs.n
        raw = np.empty((B, 1))
        for i in range(B):
            p = obs.state.evolve(batch.tableaux[i]).probability(int(batch.outcomes[i]))
            raw[i, 0] = float(p) - 1 / d
        # the traceless part lives on the non-identity block; any non-identity Pauli selects it
        marker = PauliString(obs.n, 0, 1)
        return _Raw(1 / d, np.ones(1), [marker], raw)
    const = sum(c for c, p in obs.terms if p.is_identity)
    terms = [(c, p) for c, p in obs.terms if not p.is_identity]
    raw = np.ones((B, len(terms)))
    if batch.group == "local":
        bits = batch.bits()
        idx = batch.local_indices
        for t, (_, p) in enumerate(terms):
            for q, letter in enumerate(_letters(p)):
                if letter:
                    raw[:, t] *= LOCAL_FACTOR_TABLE[idx[:, q], letter, bits[:, q]]
    else:
        for i, tab in enumerate(batch.tableaux):
            b = int(batch.outcomes[i])
            for t, (_, p) in enumerate(terms):
                q = tab.conjugate(p)
                raw[i, t] = 0.0 if q.ax else float(np.real(q.diag_value(b)))
    return _Raw(const, np.array([c for c, _ in terms]), [p for _, p in terms], raw)


def round_values_multi(observables: Sequence[Observable], inverses: Sequence[PTMDiagonal], batch: SampleBatch) -> list[np.ndarray]:
    """Single-round estimates under each inverse, each of shape (B, M)."""
    for minv in inverses:
        if minv.n != batch.n:
            raise GroupMismatchError(f"inverse channel acts on {minv.n} qubits but samples have {batch.n}")
        for obs in observables:
            _check(obs, minv, batch.group)
            _required(obs, minv)
    raws = [_raw_values(o, batch) for o in observables]
    return [np.stack([r.combine(minv) for r in raws], axis=1) if raws else np.zeros((len(batch), 0)) for minv in inverses]


def round_values(observables: Sequence[Observable], minv: PTMDiagonal, batch: SampleBatch) -> np.ndarray:
    """Single-round estimates for every round and observable, shape (B, M)."""
    return round_values_multi(observables, [minv], batch)[0]


@dataclass
class EstimationResult:
    names: list[str]
    values: np.ndarray
    sigma: np.ndarray
    N: int
    K: int
    seed: int | None = None
    calibration: dict | None = None
    bin_means: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, name: str) -> tuple[float, float]:
        j = self.names.index(name)
        return float(self.values[j]), float(self.sigma[j])

    def rows(self) -> list[dict]:
        return [
            {"observable": nm, "value": float(v), "sigma": float(s), "N": self.N, "K": self.K, "seed": self.seed}
            for nm, v, s in zip(self.names, self.values, self.sigma)
        ]

    def to_json(self, **kw) -> str:
        return json.dumps({"rows": self.rows(), "calibration": self.calibration}, **kw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["observable", "value", "sigma", "N", "K", "seed"], lineterminator="\n")
        w.writeheader()
        for r in self.rows():
            w.writerow(r)
        return buf.getvalue()


def estimation_round_values(
    device: DeviceConfig,
    state,
    observables: Sequence[Observable],
    inverses: Sequence[PTMDiagonal],
    group: str,
    R: int,
    workers: int = 1,
) -> list[np.ndarray]:
    """Per-round estimates under several inverse channels from one shared sample stream."""
    parts: list[list[np.ndarray]] = [[] for _ in inverses]
    for batch in iter_batches(device, group, "estimation", R, state, workers=workers):
        for slot, v in zip(parts, round_values_multi(observables, inverses, batch)):
            slot.append(v)
    return [np.concatenate(p) if p else np.zeros((0, len(observables))) for p in parts]


def aggregate(
    vals: np.ndarray,
    names: list[str],
    N: int,
    K: int,
    seed: int | None = None,
    B: int = 200,
    calibration: dict | None = None,
) -> EstimationResult:
    cfg = MoMConfig(N, K)
    means = bin_means(vals, cfg)
    if B > 0 and cfg.R > 1:
        sigma = bootstrap_std(vals, cfg, B=B, rng=np.random.default_rng([seed or 0, BOOTSTRAP_TAG]))
    else:
        sigma = np.zeros(vals.shape[1])
    return EstimationResult(names, np.median(means, axis=0), np.asarray(sigma), cfg.N, cfg.K, seed, calibration, means)


def _warn_negative(minv: PTMDiagonal) -> None:
    vals = [minv.f] if minv.group == "global" else list(minv.coeffs.values())
    if any(v < 0 for v in vals):
        warnings.warn(
            "inverse channel has negative coefficients (calibrated f below zero); "
            "estimates keep the sign but the accuracy guarantees assume F_Z well above 1/d",
            RuntimeWarning,
            stacklevel=3,
        )


def estimate(
    device: DeviceConfig,
    state,
    observables: Sequence[Observable],
    minv: PTMDiagonal,
    N: int,
    K: int,
    B: int = 200,
    workers: int = 1,
    baseline: bool = False,
    calibration: dict | None = None,
):
    """Run ``R = N K`` estimation rounds shared by all observables.

    With ``baseline=True`` the same samples are also processed with the
    noiseless inverse and ``(robust, standard)`` results are returned.
    """
    group = minv.group
    _warn_negative(minv)
    names = [o.name for o in observables]
    inverses = [minv] + ([standard_shadow_inverse(group, device.n)] if baseline else [])
    vals = estimation_round_values(device, state, observables, inverses, group, N * K, workers)
    results = [aggregate(v, names, N, K, device.master_seed, B, calibration) for v in vals]
    return tuple(results) if baseline else results[0]


# dense oracle for the expected estimate


def pauli_coefficients(op: np.ndarray, n: int) -> list[tuple[float, PauliString]]:
    """``op = sum_a c_a P_a`` with ``c_a = Tr(P_a op) / d`` (nonzero terms)."""
    d = 2**n
    out = []
    for p in all_paulis(n):
        c = np.trace(p.to_matrix() @ op) / d
        if abs(c) > 1e-14:
            out.append((complex(c), p))
    return out


def _expect(p: PauliString, rho: np.ndarray) -> complex:
    if rho.ndim == 1:
        return np.vdot(rho, p.apply_to_vector(rho))
    return np.trace(p.to_matrix() @ rho)


def expected_estimate(obs, rho: np.ndarray, noise: NoiseSpec, group: str, minv: PTMDiagonal) -> float:
    """``<<O| Minv M~ |rho>>`` with the true twirled channel ``M~`` built from ``noise``.

    ``rho`` is a state vector or a density matrix.  With ``minv`` the
    noiseless inverse this is the mean of the standard shadow estimate; the
    gap to ``Tr(O rho)`` is its bias.
    """
    n = noise.n
    rho = np.asarray(rho, dtype=complex)
    f_glob = expected_f_global(noise) if group == "global" else None
    if isinstance(obs, StabilizerProjector) and group == "global":
        d = 2**n
        if rho.ndim == 1:
            v = obs.state.to_vector()
            fid = abs(np.vdot(v, rho)) ** 2
        else:
            fid = np.real(np.trace(obs.to_matrix() @ rho))
        return float(1 / d + minv.f * f_glob * (fid - 1 / d))
    if isinstance(obs, StabilizerProjector):
        obs = obs.to_pauli_sum()
    if isinstance(obs, PauliSum):
        terms = [(complex(c), p) for c, p in obs.terms]
    else:
        terms = pauli_coefficients(np.asarray(obs), n)
    total = 0.0
    for c, p in terms:
        tr = _expect(p, rho)
        if p.is_identity:
            total += (c * tr).real
            continue
        f_true = f_glob if group == "global" else expected_f_local(noise, p.ax | p.az)
        total += (c * minv.apply(p) * f_true * tr).real
    return float(total)
