"""Simulated noisy shadow experiment.

One round prepares a state, applies a uniformly random Clifford ``U``, then
the noise channel, then measures every qubit in the Z basis.  Every round
owns an independent counter-based random stream derived from
``(master_seed, purpose, r)`` so results do not depend on how rounds are
batched or split across worker processes.

Per-round draw order: Clifford, state-preparation uniforms, noise uniforms,
one outcome uniform.  The outcome is drawn by inverse CDF in basis-index
order, which the dense and stabilizer backends implement identically, so for
Pauli or classical noise both backends return the same samples.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .channels import DENSE_LIMIT, NoiseSpec, StatePrepSpec, _P1, identity, pauli_from_index
from .clifford import (
    LOCAL_UNITARIES,
    CliffordElement,
    CliffordTableau,
    LocalCliffordWord,
    StabilizerState,
    clifford_from_text,
    sample_global_clifford,
)
from .pauli import BitString, PauliString, qubit_bit

PURPOSES = {"calibration": 1, "estimation": 2}
GROUPS = ("global", "local")
DEFAULT_CHUNK = 4096


class BackendError(ValueError):
    """The requested backend cannot simulate this noise or input state."""


def round_rng(seed: int, purpose: str, r: int) -> np.random.Generator:
    """Independent Philox stream for round ``r`` of a given purpose."""
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, PURPOSES[purpose]]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(r)]))


def _check_group(group: str) -> None:
    if group not in GROUPS:
        raise ValueError(f"group must be 'global' or 'local', got {group!r}")


@dataclass(frozen=True, eq=False)
class TargetState:
    """Input state of an estimation round: stabilizer, pure vector or density matrix."""

    n: int
    stabilizer: StabilizerState | None = None
    vector: np.ndarray | None = None
    rho: np.ndarray | None = None

    @classmethod
    def from_any(cls, state) -> TargetState:
        if isinstance(state, TargetState):
            return state
        if isinstance(state, StabilizerState):
            return cls(state.n, stabilizer=state)
        a = np.asarray(state, dtype=complex)
        n = int(round(np.log2(a.shape[0])))
        if 2**n != a.shape[0]:
            raise ValueError("state dimension is not a power of two")
        if a.ndim == 1:
            return cls(n, vector=a / np.linalg.norm(a))
        if a.shape != (2**n, 2**n):
            raise ValueError("density matrix must be square")
        return cls(n, rho=a)

    @property
    def num_uniforms(self) -> int:
        return 1 if self.rho is not None else 0

    def dense_vector(self) -> np.ndarray:
        if self.vector is not None:
            return self.vector
        return self.stabilizer.to_vector()

    def density_matrix(self) -> np.ndarray:
        if self.rho is not None:
            return self.rho
        v = self.dense_vector()
        return np.outer(v, v.conj())

    @property
    def ensemble(self):
        from .channels import _ensemble

        if "_ens" not in self.__dict__:
            self.__dict__["_ens"] = _ensemble(self.rho)
        return self.__dict__["_ens"]


@dataclass(frozen=True, eq=False)
class DeviceConfig:
    n: int
    noise: NoiseSpec | None = None
    state_prep: StatePrepSpec | None = None
    backend: str = "dense"
    master_seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.noise is None:
            object.__setattr__(self, "noise", identity(self.n))
        if self.state_prep is None:
            object.__setattr__(self, "state_prep", StatePrepSpec.ideal(self.n))
        if self.noise.n != self.n or self.state_prep.n != self.n:
            raise ValueError("noise / state preparation size does not match n")
        if self.backend == "auto":
            ok = self.stabilizer_compatible
            object.__setattr__(self, "backend", "stabilizer" if ok and self.n > 8 else "dense")
        if self.backend == "dense":
            if self.n > DENSE_LIMIT:
                raise BackendError(f"dense backend needs n <= {DENSE_LIMIT}")
        elif self.backend == "stabilizer":
            if not self.stabilizer_compatible:
                raise BackendError("stabilizer backend needs Pauli or classical noise and a basis-state preparation")
        else:
            raise ValueError(f"unknown backend {self.backend!r}")

    @property
    def stabilizer_compatible(self) -> bool:
        return (self.noise.is_pauli_diagonal or self.noise.is_classical) and self.state_prep.is_stabilizer_representable

    def with_seed(self, seed: int) -> DeviceConfig:
        return DeviceConfig(self.n, self.noise, self.state_prep, self.backend, seed)


@dataclass(frozen=True)
class ShadowSample:
    r: int
    clifford: CliffordElement
    outcome: BitString

    @property
    def group(self) -> str:
        return "local" if isinstance(self.clifford, LocalCliffordWord) else "global"

    def to_record(self) -> dict:
        return {"r": int(self.r), "clifford": self.clifford.to_text(), "outcome": str(self.outcome)}

    @classmethod
    def from_record(cls, rec: dict) -> ShadowSample:
        return cls(int(rec["r"]), clifford_from_text(rec["clifford"]), BitString.from_str(rec["outcome"]))


@dataclass
class SampleBatch:
    """A run of consecutive rounds in columnar form."""

    group: str
    n: int
    rounds: np.ndarray
    outcomes: np.ndarray  # int64, or object ints when n > 62
    local_indices: np.ndarray | None = None  # (B, n) indices into the 24 single-qubit Cliffords
    tableaux: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.rounds)

    def clifford(self, i: int) -> CliffordElement:
        if self.group == "local":
            return LocalCliffordWord(tuple(self.local_indices[i]))
        return self.tableaux[i]

    def __getitem__(self, i: int) -> ShadowSample:
        return ShadowSample(int(self.rounds[i]), self.clifford(i), BitString(self.n, int(self.outcomes[i])))

    def __iter__(self) -> Iterator[ShadowSample]:
        return (self[i] for i in range(len(self)))

    def bits(self) -> np.ndarray:
        """Outcome bits as a ``(B, n)`` array, column ``i`` = qubit ``i``."""
        shifts = [self.n - 1 - i for i in range(self.n)]
        if self.outcomes.dtype == object:
            return np.array([[(int(v) >> s) & 1 for s in shifts] for v in self.outcomes], dtype=np.int64)
        return (self.outcomes[:, None] >> np.array(shifts, dtype=np.int64)) & 1

    @classmethod
    def from_samples(cls, samples: Sequence[ShadowSample]) -> SampleBatch:
        samples = list(samples)
        if not samples:
            raise ValueError("empty sample list")
        group, n = samples[0].group, samples[0].outcome.n
        rounds = np.array([s.r for s in samples], dtype=np.int64)
        outs = _outcome_array([s.outcome.value for s in samples], n)
        if group == "local":
            idx = np.array([s.clifford.indices for s in samples], dtype=np.int64)
            return cls(group, n, rounds, outs, local_indices=idx)
        return cls(group, n, rounds, outs, tableaux=[s.clifford for s in samples])

    @classmethod
    def concat(cls, parts: Sequence[SampleBatch]) -> SampleBatch:
        parts = list(parts)
        first = parts[0]
        idx = None
        if first.group == "local":
            idx = np.concatenate([p.local_indices for p in parts])
        tabs = [t for p in parts for t in p.tableaux]
        return cls(
            first.group,
            first.n,
            np.concatenate([p.rounds for p in parts]),
            np.concatenate([p.outcomes for p in parts]),
            idx,
            tabs,
        )


def _outcome_array(values, n: int) -> np.ndarray:
    if n > 62:
        return np.array(values, dtype=object)
    return np.asarray(values, dtype=np.int64)


# dense primitives on batches of state vectors ``psi`` of shape (B, 2**n)


def _apply_1q(psi: np.ndarray, n: int, q: int, mats: np.ndarray) -> np.ndarray:
    """Apply per-row 2x2 matrices ``mats`` (B, 2, 2) or one (2, 2) matrix to qubit ``q``."""
    B = psi.shape[0]
    t = psi.reshape(B, 2**q, 2, 2 ** (n - 1 - q))
    if mats.ndim == 2:
        out = np.einsum("aj,bmjk->bmak", mats, t)
    else:
        out = np.einsum("baj,bmjk->bmak", mats, t)
    return out.reshape(B, -1)


def _pick(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF index per row; ``cum`` (B, m) unnormalised cumulative weights."""
    tot = cum[:, -1:]
    k = (cum <= u[:, None] * tot).sum(axis=1)
    return np.minimum(k, cum.shape[1] - 1)


def _sample_outcomes(psi: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(np.abs(psi) ** 2, axis=1)
    return _pick(cum, u).astype(np.int64)


def _pauli_letters(noise: NoiseSpec, u: np.ndarray) -> np.ndarray:
    """Per-qubit letters 0..3 (I, X, Y, Z) for a product Pauli channel."""
    cum = np.cumsum(noise.pauli_local, axis=1)  # (n, 4)
    out = np.empty(u.shape, dtype=np.int64)
    for q in range(noise.n):
        c = np.broadcast_to(cum[q], (u.shape[0], 4))
        out[:, q] = _pick(c, u[:, q])
    return out


def _global_pauli_index(noise: NoiseSpec, u: float) -> int:
    n = noise.n
    if noise.kind == "pauli" and noise.pauli_global is None:
        # uniform mixture: identity with weight 1 - p + p/4**n, every other Pauli p/4**n
        d2 = 4**n
        p0 = 1.0 - noise.depol * (1 - 1 / d2)
        if u < p0:
            return 0
        return min(1 + int((u - p0) / (1 - p0) * (d2 - 1)), d2 - 1)
    cum = np.cumsum(noise.pauli_global)
    return int(min(np.searchsorted(cum, u * cum[-1], side="right"), len(cum) - 1))


def _letters_to_pauli(letters: Sequence[int], n: int) -> PauliString:
    ax = az = 0
    for q, c in enumerate(letters):
        m = qubit_bit(q, n)
        if c in (1, 2):
            ax |= m
        if c in (2, 3):
            az |= m
    return PauliString(n, ax, az)


def _sampled_paulis(noise: NoiseSpec, u: np.ndarray) -> list[PauliString]:
    """The Pauli error realised in each row for a Pauli channel."""
    if noise.pauli_local is not None:
        return [_letters_to_pauli(row, noise.n) for row in _pauli_letters(noise, u)]
    return [pauli_from_index(_global_pauli_index(noise, float(x)), noise.n) for x in u[:, 0]]


def _apply_noise_dense(psi: np.ndarray, noise: NoiseSpec, u: np.ndarray) -> np.ndarray:
    n = noise.n
    if noise.kind in ("identity", "classical"):
        return psi
    if noise.kind == "pauli":
        if noise.pauli_local is not None:
            letters = _pauli_letters(noise, u)
            for q in range(n):
                psi = _apply_1q(psi, n, q, _P1[letters[:, q]])
            return psi
        out = np.empty_like(psi)
        for i, e in enumerate(_sampled_paulis(noise, u)):
            out[i] = e.apply_to_vector(psi[i])
        return out
    if noise.kind == "local_kraus":
        for q, ops in enumerate(noise.local_kraus):
            if len(ops) == 1:
                psi = _apply_1q(psi, n, q, ops[0])
                continue
            branches = np.stack([_apply_1q(psi, n, q, k) for k in ops], axis=1)
            psi = _choose_branch(branches, u[:, q])
        return psi
    ops = noise.kraus
    if len(ops) == 1:
        return psi @ ops[0].T
    branches = np.stack([psi @ k.T for k in ops], axis=1)
    return _choose_branch(branches, u[:, 0])


def _choose_branch(branches: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Quantum-trajectory step: pick Kraus branch t with probability ``||K_t psi||**2``."""
    w = (np.abs(branches) ** 2).sum(axis=2)
    t = _pick(np.cumsum(w, axis=1), u)
    rows = branches[np.arange(len(t)), t]
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def _flip_outcomes(outcomes: np.ndarray, noise: NoiseSpec, u: np.ndarray) -> np.ndarray:
    n = noise.n
    out = outcomes.copy()
    if noise.flip_local is not None:
        for q in range(n):
            m = qubit_bit(q, n)
            b = ((out & m) != 0).astype(np.int64) if out.dtype != object else np.array([(int(v) & m) != 0 for v in out], dtype=np.int64)
            p_flip = noise.flip_local[q][1 - b, b]
            flip = u[:, q] < p_flip
            for i in np.flatnonzero(flip):
                out[i] = out[i] ^ m
        return out
    t = noise.flip_global
    for i in range(len(out)):
        cum = np.cumsum(t[:, int(out[i])])
        out[i] = int(min(np.searchsorted(cum, u[i, 0] * cum[-1], side="right"), len(cum) - 1))
    return out


def _global_apply(tab: CliffordTableau, psi: np.ndarray, basis_index: int | None) -> np.ndarray:
    """``U psi`` for one row, via ``U X^j|0> = (U X^j U^dag) U|0>``."""
    n = tab.n
    if basis_index == 0:
        return tab.zero_state.to_vector()
    if basis_index is not None:
        return StabilizerState.basis(BitString(n, basis_index)).evolve(tab).to_vector()
    v0 = tab.zero_state.to_vector()
    out = np.zeros_like(v0)
    for j in np.flatnonzero(np.abs(psi) > 1e-14):
        out += psi[j] * tab.conjugate(PauliString(n, int(j), 0)).apply_to_vector(v0)
    return out


# round generation


def _layout(cfg: DeviceConfig, purpose: str, target: TargetState | None) -> tuple[int, int]:
    n_state = cfg.state_prep.num_uniforms if purpose == "calibration" else target.num_uniforms
    return n_state, cfg.noise.num_uniforms


def _draw(cfg: DeviceConfig, group: str, purpose: str, r: int, n_state: int, n_noise: int):
    g = round_rng(cfg.master_seed, purpose, r)
    if group == "local":
        cliff = g.integers(0, 24, size=cfg.n)
    else:
        cliff = sample_global_clifford(cfg.n, g)
    u = g.random(n_state + n_noise + 1)
    return cliff, u


def _initial_dense(cfg: DeviceConfig, purpose: str, target: TargetState | None, us: np.ndarray):
    """Initial vectors (B, d) and, when each row is a basis state, its index."""
    B, d = us.shape[0], 2**cfg.n
    if purpose == "estimation":
        if target.rho is not None:
            w, vecs = target.ensemble
            k = _pick(np.broadcast_to(np.cumsum(w), (B, len(w))), us[:, 0])
            return vecs[k], None
        return np.broadcast_to(target.dense_vector(), (B, d)).copy(), None
    sp = cfg.state_prep
    if sp.is_ideal:
        psi = np.zeros((B, d), dtype=complex)
        psi[:, 0] = 1
        return psi, np.zeros(B, dtype=np.int64)
    ens = sp.ensembles
    if sp.global_rho is not None:
        w, vecs = ens[0]
        k = _pick(np.broadcast_to(np.cumsum(w), (B, len(w))), us[:, 0])
        psi = vecs[k]
    else:
        psi = np.ones((B, 1), dtype=complex)
        for q, (w, vecs) in enumerate(ens):
            k = _pick(np.broadcast_to(np.cumsum(w), (B, len(w))), us[:, q])
            psi = (psi[:, :, None] * vecs[k][:, None, :]).reshape(B, -1)
    basis = None
    if sp.is_stabilizer_representable:
        basis = np.argmax(np.abs(psi), axis=1).astype(np.int64)
    return psi, basis


def _initial_stabilizer(cfg: DeviceConfig, purpose: str, target: TargetState | None, u: np.ndarray) -> StabilizerState:
    if purpose == "estimation":
        if target.stabilizer is None:
            raise BackendError("stabilizer backend needs a stabilizer input state")
        return target.stabilizer
    psi, basis = _initial_dense(cfg, purpose, None, u[None, :])
    return StabilizerState.basis(BitString(cfg.n, int(basis[0])))


def run_rounds(
    cfg: DeviceConfig,
    group: str,
    purpose: str,
    start: int,
    stop: int,
    state=None,
) -> SampleBatch:
    """Simulate rounds ``start..stop-1``."""
    _check_group(group)
    n = cfg.n
    target = None
    if purpose == "estimation":
        target = TargetState.from_any(state)
        if target.n != n:
            raise ValueError("state size does not match the device")
    elif purpose != "calibration":
        raise ValueError(f"unknown purpose {purpose!r}")
    n_state, n_noise = _layout(cfg, purpose, target)
    draws = [_draw(cfg, group, purpose, r, n_state, n_noise) for r in range(start, stop)]
    rounds = np.arange(start, stop, dtype=np.int64)
    us = np.array([u for _, u in draws]).reshape(len(draws), n_state + n_noise + 1)
    u_state, u_noise, u_out = us[:, :n_state], us[:, n_state : n_state + n_noise], us[:, -1]
    local_idx = np.array([c for c, _ in draws], dtype=np.int64) if group == "local" else None
    tabs = [] if group == "local" else [c for c, _ in draws]

    if cfg.backend == "dense":
        psi, basis = _initial_dense(cfg, purpose, target, u_state)
        if group == "local":
            for q in range(n):
                psi = _apply_1q(psi, n, q, LOCAL_UNITARIES[local_idx[:, q]])
        else:
            tgt_vec = None
            if purpose == "estimation" and target.stabilizer is not None:
                tgt_vec = target.stabilizer
            rows = []
            for i, tab in enumerate(tabs):
                if tgt_vec is not None:
                    rows.append(tgt_vec.evolve(tab).to_vector())
                else:
                    rows.append(_global_apply(tab, psi[i], None if basis is None else int(basis[i])))
            psi = np.array(rows) if rows else psi
        psi = _apply_noise_dense(psi, cfg.noise, u_noise)
        outcomes = _sample_outcomes(psi, u_out)
    else:
        errs = _sampled_paulis(cfg.noise, u_noise) if cfg.noise.kind == "pauli" else None
        vals = []
        for i, r in enumerate(rounds):
            st = _initial_stabilizer(cfg, purpose, target, u_state[i])
            u_el = LocalCliffordWord(tuple(local_idx[i])) if group == "local" else tabs[i]
            st = st.evolve(u_el)
            if errs is not None:
                st = st.apply_pauli(errs[i])
            vals.append(st.sample_from_uniform(float(u_out[i])).value)
        outcomes = _outcome_array(vals, n)
    if cfg.noise.is_classical:
        outcomes = _flip_outcomes(outcomes, cfg.noise, u_noise)
    return SampleBatch(group, n, rounds, outcomes, local_idx, tabs)


def run_calibration_round(cfg: DeviceConfig, group: str, r: int) -> ShadowSample:
    return run_rounds(cfg, group, "calibration", r, r + 1)[0]


def run_estimation_round(cfg: DeviceConfig, state, group: str, r: int) -> ShadowSample:
    return run_rounds(cfg, group, "estimation", r, r + 1, state)[0]


def _job(args):
    return run_rounds(*args)


def iter_batches(
    cfg: DeviceConfig,
    group: str,
    purpose: str,
    R: int,
    state=None,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> Iterator[SampleBatch]:
    """Rounds ``0..R-1`` in fixed-size chunks, in round order.

    Chunk boundaries do not depend on ``workers``, and each round has its own
    stream, so output is identical for any worker count.
    """
    jobs = [(cfg, group, purpose, s, min(s + chunk, R), state) for s in range(0, R, chunk)]
    if workers <= 1 or len(jobs) <= 1:
        for j in jobs:
            yield _job(j)
        return
    with ProcessPoolExecutor(max_workers=workers) as ex:
        yield from ex.map(_job, jobs)


def collect(cfg: DeviceConfig, group: str, purpose: str, R: int, state=None, workers: int = 1) -> SampleBatch:
    return SampleBatch.concat(list(iter_batches(cfg, group, purpose, R, state, workers=workers)))


# sample logs


def write_sample_log(path, batches) -> int:
    """Append rounds as JSON lines; returns the number of records written."""
    if isinstance(batches, SampleBatch):
        batches = [batches]
    count = 0
    with open(path, "a", encoding="utf-8") as fh:
        for b in batches:
            for s in b:
                fh.write(json.dumps(s.to_record()) + "\n")
                count += 1
    return count


def read_sample_log(path) -> SampleBatch:
    with open(path, encoding="utf-8") as fh:
        samples = [ShadowSample.from_record(json.loads(line)) for line in fh if line.strip()]
    return SampleBatch.from_samples(samples)
