"""Exact dense reference computations for small systems.

Everything here is brute force: Pauli-transfer matrices from dense channel
application, group twirls by enumerating every Clifford, Weingarten calculus
for the 3-fold Haar twirl, and exact diagonalisation for the TFIM.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from .channels import DENSE_LIMIT, NoiseSpec
from .clifford import SINGLE_QUBIT_CLIFFORDS, LocalCliffordWord, _canonical_key
from .device import ShadowSample
from .estimation import single_round_estimate
from .observables import StabilizerProjector, ghz_projector
from .pauli import BitString, PTMDiagonal, all_paulis

PTM_LIMIT = 4


def pauli_basis(n: int) -> np.ndarray:
    """Normalised Paulis ``sigma_a = P_a / sqrt(d)``, shape (4**n, d, d), Kronecker ``(I, X, Y, Z)`` order."""
    d = 2**n
    return np.array([p.to_matrix() for p in all_paulis(n)]) / np.sqrt(d)


def _as_map(channel) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(channel, NoiseSpec):
        return channel.apply_dense
    if callable(channel):
        return channel
    u = np.asarray(channel)
    return lambda rho: u @ rho @ u.conj().T


def measure_z(rho: np.ndarray) -> np.ndarray:
    """Computational-basis dephasing ``M_Z``."""
    return np.diag(np.diag(rho))


def exact_ptm(channel, n: int) -> np.ndarray:
    """``E[a, b] = Tr(sigma_a E(sigma_b))`` for a NoiseSpec, a map on matrices, or a unitary."""
    if n > PTM_LIMIT:
        raise ValueError(f"dense PTMs are limited to n <= {PTM_LIMIT}")
    f = _as_map(channel)
    basis = pauli_basis(n)
    out = np.empty((4**n, 4**n))
    for b, sb in enumerate(basis):
        img = f(sb)
        out[:, b] = np.real(np.einsum("aij,ji->a", basis, img))
    return out


def unitary_ptm(u: np.ndarray, n: int) -> np.ndarray:
    basis = pauli_basis(n)
    imgs = np.einsum("ij,bjk,lk->bil", u, basis, u.conj())
    return np.real(np.einsum("aij,bji->ab", basis, imgs))


# group enumeration


def cl2_unitaries() -> list[np.ndarray]:
    return list(SINGLE_QUBIT_CLIFFORDS)


def local_unitaries(n: int) -> list[np.ndarray]:
    """All ``24**n`` products of single-qubit Cliffords (n <= 2 by default use)."""
    out = []
    for word in itertools.product(range(24), repeat=n):
        u = np.ones((1, 1), dtype=complex)
        for c in word:
            u = np.kron(u, SINGLE_QUBIT_CLIFFORDS[c])
        out.append(u)
    return out


@lru_cache(maxsize=1)
def cl4_unitaries() -> list[np.ndarray]:
    """The 11520 two-qubit Cliffords modulo phase, by breadth-first search."""
    h, s = SINGLE_QUBIT_CLIFFORDS[1], SINGLE_QUBIT_CLIFFORDS[2]
    i2 = np.eye(2)
    cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
    gens = [np.kron(h, i2), np.kron(i2, h), np.kron(s, i2), np.kron(i2, s), cnot]
    elems = [np.eye(4, dtype=complex)]
    seen = {_canonical_key(elems[0])}
    frontier = list(elems)
    while frontier:
        nxt = []
        for u in frontier:
            for g in gens:
                w = g @ u
                key = _canonical_key(w)
                if key not in seen:
                    seen.add(key)
                    elems.append(w)
                    nxt.append(w)
        frontier = nxt
    return elems


def group_unitaries(group: str, n: int, allow_large: bool = False) -> list[np.ndarray]:
    if group == "local":
        if n > 2 and not allow_large:
            raise ValueError("local enumeration is limited to n <= 2")
        return local_unitaries(n)
    if group == "global":
        if n == 1:
            return cl2_unitaries()
        if n == 2:
            if not allow_large:
                raise ValueError("full Cl(4) enumeration is opt-in: pass allow_large=True")
            return cl4_unitaries()
    raise ValueError(f"cannot enumerate the {group} group on {n} qubits")


def brute_force_twirl(noise, group: str, n: int, allow_large: bool = False) -> np.ndarray:
    """``E_U U^dag M_Z Lambda U`` as a dense PTM, averaged over the whole group."""
    mz = exact_ptm(measure_z, n)
    lam = exact_ptm(noise, n)
    core = mz @ lam
    acc = np.zeros_like(core)
    us = group_unitaries(group, n, allow_large)
    for u in us:
        r = unitary_ptm(u, n)
        acc += r.T @ core @ r
    return acc / len(us)


def irrep_projectors(group: str, n: int) -> list[tuple[int, np.ndarray]]:
    """Diagonal projectors of the twirl: ``(z, Pi_z)`` locally, ``(0, Pi_0), (1, Pi_1)`` globally."""
    paulis = all_paulis(n)
    if group == "global":
        p0 = np.diag([1.0 if p.is_identity else 0.0 for p in paulis])
        return [(0, p0), (1, np.eye(4**n) - p0)]
    return [(z, np.diag([1.0 if (p.ax | p.az) == z else 0.0 for p in paulis])) for z in range(2**n)]


def diagonal_from_coefficients(values: PTMDiagonal) -> np.ndarray:
    return values.to_matrix()


# Weingarten calculus, k = 3

S3 = [(0, 1, 2), (1, 0, 2), (2, 1, 0), (0, 2, 1), (1, 2, 0), (2, 0, 1)]
# order: (), (12), (13), (23), (123), (132); tuples give the image of each point


def _compose(p, q):
    return tuple(p[q[i]] for i in range(3))


def _cycles(p) -> int:
    seen, c = set(), 0
    for i in range(3):
        if i not in seen:
            c += 1
            j = i
            while j not in seen:
                seen.add(j)
                j = p[j]
    return c


@dataclass(frozen=True)
class WeingartenData:
    d: int
    perms: tuple
    Q: np.ndarray
    c: np.ndarray


def weingarten(d: int) -> WeingartenData:
    """Gram matrix ``Q[pi, sigma] = d**cycles(pi sigma)`` over S_3 and ``c = pinv(Q)``."""
    if d < 2:
        raise ValueError("d must be at least 2")
    q = np.array([[float(d) ** _cycles(_compose(p, s)) for s in S3] for p in S3])
    return WeingartenData(d, tuple(S3), q, np.linalg.pinv(q))


def weingarten_closed_form(d: int) -> np.ndarray:
    """The explicit Weingarten matrix (1/144 table at d = 2, rational form for d >= 3)."""
    if d == 2:
        m = [
            [17, 1, 1, 1, -7, -7],
            [1, 17, -7, -7, 1, 1],
            [1, -7, 17, -7, 1, 1],
            [1, -7, -7, 17, 1, 1],
            [-7, 1, 1, 1, -7, 17],
            [-7, 1, 1, 1, 17, -7],
        ]
        return np.array(m, dtype=float) / 144
    a, b, c = d * d - 2, -d, 2.0
    m = [
        [a, b, b, b, c, c],
        [b, a, c, c, b, b],
        [b, c, a, c, b, b],
        [b, c, c, a, b, b],
        [c, b, b, b, c, a],
        [c, b, b, b, a, c],
    ]
    return np.array(m, dtype=float) / (d * (d * d - 1) * (d * d - 4))


def permutation_operator(perm, d: int) -> np.ndarray:
    """``W_pi |a_1 a_2 a_3> = |a_pi(1) a_pi(2) a_pi(3)>`` on ``(C^d)^{(x)3}``."""
    D = d**3
    w = np.zeros((D, D))
    for idx in itertools.product(range(d), repeat=3):
        out = [idx[perm[j]] for j in range(3)]
        w[(out[0] * d + out[1]) * d + out[2], (idx[0] * d + idx[1]) * d + idx[2]] = 1
    return w


def haar_threefold_twirl(a: np.ndarray, d: int) -> np.ndarray:
    """``sum_{pi, sigma} c[pi, sigma] W_pi Tr(W_sigma A)``."""
    a = np.asarray(a, dtype=complex)
    if a.shape != (d**3, d**3):
        raise ValueError("operand must act on three copies of C^d")
    wd = weingarten(d)
    ws = [permutation_operator(p, d) for p in wd.perms]
    tr = np.array([np.trace(w @ a) for w in ws])
    out = np.zeros_like(a)
    for i, wp in enumerate(ws):
        out += wp * (wd.c[i] @ tr)
    return out


def clifford_threefold_twirl(a: np.ndarray) -> np.ndarray:
    """Average of ``U^{(x)3} A U^dag^{(x)3}`` over the 24 single-qubit Cliffords."""
    out = np.zeros((8, 8), dtype=complex)
    for u in SINGLE_QUBIT_CLIFFORDS:
        u3 = np.kron(np.kron(u, u), u)
        out += u3 @ a @ u3.conj().T
    return out / 24


def symmetric_projector(k: int, d: int) -> np.ndarray:
    """Projector onto the symmetric subspace of ``(C^d)^{(x)k}`` for k in (2, 3)."""
    if k == 2:
        swap = np.zeros((d * d, d * d))
        for i in range(d):
            for j in range(d):
                swap[j * d + i, i * d + j] = 1
        return (np.eye(d * d) + swap) / 2
    if k == 3:
        return sum(permutation_operator(p, d) for p in S3) / 6
    raise ValueError("k must be 2 or 3")


def symmetric_projector_traces(a: np.ndarray, b: np.ndarray) -> tuple[complex, complex]:
    """``Tr(P_sym2 A(x)B)`` and ``Tr(P_sym3 A(x)B(x)B)`` by the closed forms."""
    ta, tb = np.trace(a), np.trace(b)
    ab = a @ b
    two = (ta * tb + np.trace(ab)) / 2
    three = (ta * tb**2 + ta * np.trace(b @ b) + 2 * np.trace(ab) * tb + 2 * np.trace(ab @ b)) / 6
    return two, three


def symmetric_projector_traces_explicit(a: np.ndarray, b: np.ndarray) -> tuple[complex, complex]:
    d = a.shape[0]
    two = np.trace(symmetric_projector(2, d) @ np.kron(a, b))
    three = np.trace(symmetric_projector(3, d) @ np.kron(np.kron(a, b), b))
    return two, three


# states and observables


def ghz_state(n: int) -> tuple[StabilizerProjector, np.ndarray]:
    v = np.zeros(2**n, dtype=complex)
    v[0] = v[-1] = 1 / np.sqrt(2)
    return ghz_projector(n), v


def tfim_matrix(n: int, J: float = 1.0, h: float = 1.0) -> sp.csr_matrix:
    """``J sum Z_i Z_{i+1} + h sum X_i``, open boundary, sparse."""
    d = 2**n
    idx = np.arange(d)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
    z = 1 - 2 * bits
    diag = J * (z[:, :-1] * z[:, 1:]).sum(axis=1)
    rows, cols, vals = [idx], [idx], [diag.astype(float)]
    for i in range(n):
        rows.append(idx)
        cols.append(idx ^ (1 << (n - 1 - i)))
        vals.append(np.full(d, float(h)))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(d, d))


def tfim_ground_state(n: int, J: float = 1.0, h: float = 1.0) -> tuple[float, np.ndarray]:
    """Lowest eigenpair of the open-chain TFIM by exact diagonalisation."""
    if n > DENSE_LIMIT:
        raise ValueError(f"exact diagonalisation is limited to n <= {DENSE_LIMIT}")
    hm = tfim_matrix(n, J, h)
    if n <= 8:
        w, v = np.linalg.eigh(hm.toarray())
        e, vec = w[0], v[:, 0]
    else:
        w, v = eigsh(hm, k=1, which="SA", tol=1e-12)
        e, vec = w[0], v[:, 0]
    return float(e), vec.astype(complex)


def exact_expectation(obs, rho) -> float:
    """``Tr(O rho)`` with ``rho`` a state vector or density matrix."""
    omat = obs.to_matrix() if hasattr(obs, "to_matrix") else np.asarray(obs)
    r = np.asarray(rho, dtype=complex)
    if r.shape[0] != omat.shape[0]:
        raise ValueError("observable and state dimensions differ")
    if r.ndim == 1:
        return float(np.real(r.conj() @ omat @ r))
    return float(np.real(np.trace(omat @ r)))


# exact moments of the single-round estimators


def _group_elements(group: str, n: int, allow_large: bool = False):
    if group == "local":
        if n > 2 and not allow_large:
            raise ValueError("local enumeration is limited to n <= 2")
        return [LocalCliffordWord(w) for w in itertools.product(range(24), repeat=n)]
    if n == 1:
        return [LocalCliffordWord((c,)).to_tableau() for c in range(24)]
    raise ValueError("global enumeration as tableaux is available for n = 1 only")


def outcome_distribution(u, noise: NoiseSpec | None, rho: np.ndarray) -> np.ndarray:
    """``p(b) = <b| Lambda(U rho U^dag) |b>``."""
    m = u.to_unitary() if hasattr(u, "to_unitary") else np.asarray(u)
    out = m @ rho @ m.conj().T
    if noise is not None:
        out = noise.apply_dense(out)
    return np.clip(np.real(np.diag(out)), 0, None)


def exact_estimator_moments(
    estimator: Callable[[ShadowSample], float],
    group: str,
    n: int,
    rho: np.ndarray,
    noise: NoiseSpec | None = None,
) -> tuple[float, float]:
    """``(E x, E x**2)`` of a single-round estimator over the full joint (U, b) distribution."""
    els = _group_elements(group, n)
    m1 = m2 = 0.0
    for u in els:
        probs = outcome_distribution(u, noise, rho)
        for b, p in enumerate(probs):
            if p <= 0:
                continue
            x = estimator(ShadowSample(0, u, BitString(n, b)))
            m1 += p * x
            m2 += p * x * x
    return m1 / len(els), m2 / len(els)


def exact_mean_estimate(obs, minv: PTMDiagonal, rho: np.ndarray, noise: NoiseSpec | None = None) -> float:
    """Mean of :func:`single_round_estimate` by full enumeration (n = 1 global, n <= 2 local)."""
    return exact_estimator_moments(lambda s: single_round_estimate(obs, minv, s), minv.group, minv.n, rho, noise)[0]


def zero_state(n: int) -> np.ndarray:
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    return rho
