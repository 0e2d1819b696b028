"""Observables for shadow estimation: weighted Pauli sums and stabilizer projectors.

Observable files are plain text::

    # comment
    pauli zz01 k=2
    1.0 ZZII
    end

    stabilizer ghz4
    XXXX
    ZZII
    IZZI
    IIZZ
    end

A ``pauli`` block lists ``coefficient label`` lines; ``k=`` declares the
locality (defaults to the heaviest term).  A ``stabilizer`` block lists the
generators of ``|psi>`` and denotes the projector ``|psi><psi|``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .clifford import StabilizerState
from .pauli import PauliString, pauli_multiply


class ObservableError(ValueError):
    """Malformed observable definition."""


@dataclass(frozen=True)
class PauliSum:
    """``sum_j c_j P_j`` with real ``c_j`` and unsigned Hermitian ``P_j``."""

    n: int
    terms: tuple[tuple[float, PauliString], ...]
    name: str = "O"
    k: int | None = None

    def __post_init__(self):
        clean = []
        for c, p in self.terms:
            if isinstance(p, str):
                p = PauliString.from_label(p)
            if p.n != self.n:
                raise ObservableError(f"term {p.label} does not act on {self.n} qubits")
            c = complex(c) * (1j) ** p.phase
            if abs(c.imag) > 1e-12:
                raise ObservableError(f"term {p.label} has a non-real coefficient; observable is not Hermitian")
            clean.append((float(c.real), p.unsigned()))
        object.__setattr__(self, "terms", tuple(clean))
        heaviest = max((p.weight for _, p in clean), default=0)
        if self.k is None:
            object.__setattr__(self, "k", heaviest)
        elif heaviest > self.k:
            raise ObservableError(f"{self.name}: a term has weight {heaviest} > declared locality k={self.k}")

    @classmethod
    def from_terms(cls, terms: Sequence[tuple[float, str]], name: str = "O", k: int | None = None) -> PauliSum:
        ps = [(c, PauliString.from_label(s)) for c, s in terms]
        if not ps:
            raise ObservableError("empty Pauli sum")
        return cls(ps[0][1].n, tuple(ps), name, k)

    @classmethod
    def single(cls, label: str, coeff: float = 1.0, name: str | None = None) -> PauliSum:
        return cls.from_terms([(coeff, label)], name or label.lstrip("+-"))

    def to_matrix(self) -> np.ndarray:
        d = 2**self.n
        out = np.zeros((d, d), dtype=complex)
        for c, p in self.terms:
            out += c * p.to_matrix()
        return out

    @property
    def patterns(self) -> set[int]:
        return {p.ax | p.az for _, p in self.terms if not p.is_identity}


@dataclass(frozen=True)
class StabilizerProjector:
    """``|psi><psi|`` for a stabilizer state ``|psi>``."""

    state: StabilizerState
    name: str = "P"

    def __post_init__(self):
        gens = self.state.generators
        for a, b in itertools.combinations(gens, 2):
            if not a.commutes(b):
                raise ObservableError(f"{self.name}: generators {a.label} and {b.label} anticommute")
        if any(not g.is_hermitian or g.is_identity for g in gens):
            raise ObservableError(f"{self.name}: generators must be non-identity Hermitian Paulis")
        # independence: the support computation fails on a dependent or inconsistent set
        rank = _gf2_rank([(g.ax << self.n) | g.az for g in gens])
        if rank != self.n:
            raise ObservableError(f"{self.name}: generators are not independent")

    @property
    def n(self) -> int:
        return self.state.n

    @classmethod
    def from_labels(cls, labels: Sequence[str], name: str = "P") -> StabilizerProjector:
        return cls(StabilizerState.from_labels(labels), name)

    def to_matrix(self) -> np.ndarray:
        v = self.state.to_vector()
        return np.outer(v, v.conj())

    def to_pauli_sum(self, k: int | None = None) -> PauliSum:
        """Expand as ``2**-n sum_{S in stabilizer group} S``; ``k`` enforces locality."""
        n = self.n
        terms = []
        gens = self.state.generators
        for mask in range(2**n):
            p = PauliString.identity(n)
            for j in range(n):
                if mask >> j & 1:
                    p = pauli_multiply(p, gens[j])
            terms.append((2.0**-n, p))
        return PauliSum(n, tuple(terms), self.name, k)


def _gf2_rank(rows: list[int]) -> int:
    rank = 0
    rows = list(rows)
    while rows:
        pivot = rows.pop()
        if not pivot:
            continue
        rank += 1
        top = pivot.bit_length() - 1
        rows = [r ^ pivot if r >> top & 1 else r for r in rows]
    return rank


Observable = Union[PauliSum, StabilizerProjector]


def ghz_projector(n: int, name: str | None = None) -> StabilizerProjector:
    labels = ["X" * n] + ["I" * i + "ZZ" + "I" * (n - i - 2) for i in range(n - 1)]
    return StabilizerProjector.from_labels(labels, name or f"ghz{n}_fidelity")


def zz_correlator(n: int, i: int, j: int) -> PauliSum:
    return PauliSum.from_terms([(1.0, PauliString.from_sites(n, {i: "Z", j: "Z"}).letters)], name=f"Z{i}Z{j}")


def tfim_hamiltonian(n: int, J: float = 1.0, h: float = 1.0) -> PauliSum:
    """``J sum Z_i Z_{i+1} + h sum X_i`` on an open chain."""
    terms = [(J, PauliString.from_sites(n, {i: "Z", i + 1: "Z"}).letters) for i in range(n - 1)]
    terms += [(h, PauliString.from_sites(n, {i: "X"}).letters) for i in range(n)]
    return PauliSum.from_terms(terms, name="energy", k=2)


def parse_observables(text: str) -> list[Observable]:
    out: list[Observable] = []
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    it = iter(enumerate(lines, 1))
    for lineno, ln in it:
        if not ln:
            continue
        head = ln.split()
        kind = head[0]
        if kind not in ("pauli", "stabilizer") or len(head) < 2:
            raise ObservableError(f"line {lineno}: expected 'pauli NAME' or 'stabilizer NAME'")
        name = head[1]
        k = None
        for opt in head[2:]:
            key, _, val = opt.partition("=")
            if key != "k":
                raise ObservableError(f"line {lineno}: unknown option {opt!r}")
            k = int(val)
        body = []
        for lineno2, ln2 in it:
            if ln2 == "end":
                break
            if ln2:
                body.append((lineno2, ln2))
        else:
            raise ObservableError(f"block {name!r} is missing 'end'")
        if kind == "pauli":
            terms = []
            for no, b in body:
                parts = b.split()
                if len(parts) != 2:
                    raise ObservableError(f"line {no}: expected 'coefficient label'")
                try:
                    terms.append((float(parts[0]), parts[1]))
                except ValueError:
                    raise ObservableError(f"line {no}: bad coefficient {parts[0]!r}") from None
            out.append(PauliSum.from_terms(terms, name, k))
        else:
            out.append(StabilizerProjector.from_labels([b for _, b in body], name))
    return out


def load_observables(path) -> list[Observable]:
    with open(path, encoding="utf-8") as fh:
        return parse_observables(fh.read())
