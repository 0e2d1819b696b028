"""Clifford sampling and stabilizer simulation.

Global Clifford elements are stored as tableaux: the signed images
``U X_i U^dag`` and ``U Z_i U^dag`` of the single-qubit generators.  Local
elements are words of indices into :data:`SINGLE_QUBIT_CLIFFORDS`.

The 24 single-qubit Cliffords are enumerated breadth first from the identity,
left-multiplying by the generators ``H`` then ``S`` and keeping each new
element (modulo global phase) the first time it is reached.  Index 0 is the
identity, 1 is ``H``, 2 is ``S``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .pauli import BitString, DimensionError, PauliString, parity, qubit_bit

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)
_PAULI_1Q = [PauliString.from_label(c) for c in "IXYZ"]


def _canonical_key(u: np.ndarray) -> tuple:
    flat = u.ravel()
    k = int(np.flatnonzero(np.abs(flat) > 1e-9)[0])
    v = flat * (abs(flat[k]) / flat[k])
    return tuple(np.round(v, 8).view(float))


def _enumerate_single_qubit() -> list[np.ndarray]:
    elems = [np.eye(2, dtype=complex)]
    seen = {_canonical_key(elems[0])}
    frontier = list(elems)
    while frontier:
        nxt = []
        for u in frontier:
            for g in (_H, _S):
                w = g @ u
                key = _canonical_key(w)
                if key not in seen:
                    seen.add(key)
                    elems.append(w)
                    nxt.append(w)
        frontier = nxt
    assert len(elems) == 24
    return elems


def _identify_pauli(m: np.ndarray) -> PauliString:
    """Write a signed single-qubit Pauli matrix as a PauliString."""
    for p in _PAULI_1Q:
        c = np.trace(p.to_matrix().conj().T @ m) / 2
        if abs(abs(c) - 1) < 1e-9:
            for ph in range(4):
                if abs(c - 1j**ph) < 1e-9:
                    return p.with_phase(ph)
    raise ValueError("matrix is not a signed Pauli")


SINGLE_QUBIT_CLIFFORDS: list[np.ndarray] = _enumerate_single_qubit()
LOCAL_UNITARIES = np.array(SINGLE_QUBIT_CLIFFORDS)
# images of X and Z under U . U^dag for each of the 24 elements
_LOCAL_X_IMAGE = [_identify_pauli(u @ _PAULI_1Q[1].to_matrix() @ u.conj().T) for u in SINGLE_QUBIT_CLIFFORDS]
_LOCAL_Z_IMAGE = [_identify_pauli(u @ _PAULI_1Q[3].to_matrix() @ u.conj().T) for u in SINGLE_QUBIT_CLIFFORDS]


def _local_factor_table() -> np.ndarray:
    # table[c, p, b] = <b| U_c P_p U_c^dag |b>, p indexes (I, X, Y, Z)
    t = np.zeros((24, 4, 2))
    for c, u in enumerate(SINGLE_QUBIT_CLIFFORDS):
        for p in range(4):
            m = u @ _PAULI_1Q[p].to_matrix() @ u.conj().T
            t[c, p] = np.real(np.diag(m))
    return np.rint(t)


LOCAL_FACTOR_TABLE = _local_factor_table()


def _random_bits(rng: np.random.Generator, nbits: int) -> int:
    if nbits <= 62:
        return int(rng.integers(0, 1 << nbits))
    raw = int.from_bytes(rng.bytes((nbits + 7) // 8), "little")
    return raw & ((1 << nbits) - 1)


class _Symplectic:
    """GF(2)^2n with vectors packed as ``(x << n) | z``."""

    def __init__(self, n: int):
        self.n = n
        self.mask = (1 << n) - 1

    def omega(self, u: int, v: int) -> int:
        n, m = self.n, self.mask
        return (((u >> n) & v) ^ (u & (v >> n)) & m).bit_count() & 1

    def project(self, u: int, v: int, w: int) -> int:
        # component of u symplectically orthogonal to span(v, w), with omega(v, w) = 1
        if self.omega(u, w):
            u ^= v
        if self.omega(u, v):
            u ^= w
        return u

    def basis(self, vecs) -> list[int]:
        """Extract hyperbolic pairs from a spanning set of a nondegenerate space."""
        pool = [v for v in vecs if v]
        out = []
        while pool:
            a = pool.pop(0)
            j = next((j for j, b in enumerate(pool) if self.omega(a, b)), None)
            if j is None:
                raise AssertionError("degenerate subspace in symplectic Gram-Schmidt")
            b = pool.pop(j)
            out += [a, b]
            pool = [u for u in (self.project(u, a, b) for u in pool) if u]
        return out


def _combo(vecs, mask: int) -> int:
    out = 0
    i = 0
    while mask:
        if mask & 1:
            out ^= vecs[i]
        mask >>= 1
        i += 1
    return out


@dataclass(frozen=True)
class CliffordTableau:
    """Clifford unitary ``U`` (mod global phase) via ``U X_i U^dag`` and ``U Z_i U^dag``."""

    n: int
    x_images: tuple[PauliString, ...]
    z_images: tuple[PauliString, ...]

    def __post_init__(self):
        if len(self.x_images) != self.n or len(self.z_images) != self.n:
            raise DimensionError("tableau needs n X-images and n Z-images")

    @classmethod
    def identity(cls, n: int) -> CliffordTableau:
        xs = tuple(PauliString(n, qubit_bit(i, n), 0) for i in range(n))
        zs = tuple(PauliString(n, 0, qubit_bit(i, n)) for i in range(n))
        return cls(n, xs, zs)

    def conjugate(self, p: PauliString) -> PauliString:
        """``U p U^dag``."""
        if p.n != self.n:
            raise DimensionError(f"{p.n}-qubit Pauli vs {self.n}-qubit Clifford")
        n = self.n
        # running product i^ph P_(ax, az); same phase rule as pauli_multiply
        ax = az = 0
        ph = p.phase + (p.ax & p.az).bit_count()
        for bits, images in ((p.ax, self.x_images), (p.az, self.z_images)):
            i = 0
            while bits:
                if bits >> (n - 1 - i) & 1:
                    g = images[i]
                    cx, cz = ax ^ g.ax, az ^ g.az
                    ph += (
                        g.phase
                        + (ax & az).bit_count()
                        + (g.ax & g.az).bit_count()
                        + 2 * (az & g.ax).bit_count()
                        - (cx & cz).bit_count()
                    )
                    ax, az = cx, cz
                    bits &= ~(1 << (n - 1 - i))
                i += 1
        return PauliString(n, ax, az, ph)

    def then(self, other: CliffordTableau) -> CliffordTableau:
        """Tableau of ``other @ self`` (apply ``self`` first)."""
        return CliffordTableau(
            self.n,
            tuple(other.conjugate(p) for p in self.x_images),
            tuple(other.conjugate(p) for p in self.z_images),
        )

    def is_valid(self) -> bool:
        rows = list(self.x_images) + list(self.z_images)
        n = self.n
        for i, a in enumerate(rows):
            if not a.is_hermitian:
                return False
            for j, b in enumerate(rows):
                expect = 1 if abs(i - j) == n else 0
                if (not a.commutes(b)) != bool(expect):
                    return False
        return True

    def to_tableau(self) -> CliffordTableau:
        return self

    @cached_property
    def zero_state(self) -> StabilizerState:
        """``U|0^n>``."""
        return StabilizerState(self.n, self.z_images)

    def to_unitary(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` matrix, correct up to a global phase."""
        d = 1 << self.n
        psi0 = self.zero_state.to_vector()
        u = np.empty((d, d), dtype=complex)
        for j in range(d):
            u[:, j] = self.conjugate(PauliString(self.n, j, 0)).apply_to_vector(psi0)
        return u

    def to_text(self) -> str:
        return "G:" + ",".join(p.label for p in self.x_images + self.z_images)

    @classmethod
    def from_text(cls, text: str) -> CliffordTableau:
        body = text[2:] if text.startswith("G:") else text
        ps = [PauliString.from_label(s) for s in body.split(",")]
        n = len(ps) // 2
        return cls(n, tuple(ps[:n]), tuple(ps[n:]))


@dataclass(frozen=True)
class LocalCliffordWord:
    """Tensor product of single-qubit Cliffords, one index in ``0..23`` per qubit."""

    indices: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if any(not 0 <= i < 24 for i in self.indices):
            raise ValueError("local Clifford index out of range")

    @property
    def n(self) -> int:
        return len(self.indices)

    def conjugate(self, p: PauliString) -> PauliString:
        return self.to_tableau().conjugate(p)

    @cached_property
    def _tableau(self) -> CliffordTableau:
        n = self.n
        xs, zs = [], []
        for i, c in enumerate(self.indices):
            m = qubit_bit(i, n)
            gx, gz = _LOCAL_X_IMAGE[c], _LOCAL_Z_IMAGE[c]
            xs.append(PauliString(n, m * gx.ax, m * gx.az, gx.phase))
            zs.append(PauliString(n, m * gz.ax, m * gz.az, gz.phase))
        return CliffordTableau(n, tuple(xs), tuple(zs))

    def to_tableau(self) -> CliffordTableau:
        return self._tableau

    def to_unitary(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for c in self.indices:
            out = np.kron(out, SINGLE_QUBIT_CLIFFORDS[c])
        return out

    def to_text(self) -> str:
        return "L:" + ",".join(str(i) for i in self.indices)

    @classmethod
    def from_text(cls, text: str) -> LocalCliffordWord:
        body = text[2:] if text.startswith("L:") else text
        return cls(tuple(int(s) for s in body.split(",")))


CliffordElement = Union[CliffordTableau, LocalCliffordWord]


def clifford_from_text(text: str) -> CliffordElement:
    if text.startswith("G:"):
        return CliffordTableau.from_text(text)
    if text.startswith("L:"):
        return LocalCliffordWord.from_text(text)
    raise ValueError(f"unknown Clifford encoding {text[:8]!r}")


def sample_global_clifford(n: int, rng: np.random.Generator) -> CliffordTableau:
    """Exactly uniform element of the n-qubit Clifford group modulo phase.

    Builds the symplectic part one hyperbolic pair at a time: a uniform
    nonzero vector ``v`` of the remaining symplectic subspace, a uniform
    partner ``w`` with ``omega(v, w) = 1``, then recurses into the symplectic
    complement of ``span(v, w)``.  Every step has a fixed number of equally
    likely outcomes, so the result is uniform; the 2n sign bits are uniform
    and independent.
    """
    if n < 1:
        raise ValueError("n must be positive")
    sp = _Symplectic(n)
    basis = []
    for i in range(n):
        m = qubit_bit(i, n)
        basis += [m << n, m]
    pairs = []
    for _ in range(n):
        dim = len(basis)
        while True:
            mask = _random_bits(rng, dim)
            if mask:
                break
        v = _combo(basis, mask)
        while True:
            w = _combo(basis, _random_bits(rng, dim))
            if sp.omega(v, w):
                break
        pairs.append((v, w))
        basis = sp.basis([sp.project(u, v, w) for u in basis])
    signs = _random_bits(rng, 2 * n)
    m = sp.mask
    xs = tuple(PauliString(n, v >> n, v & m, 2 * ((signs >> i) & 1)) for i, (v, _) in enumerate(pairs))
    zs = tuple(PauliString(n, w >> n, w & m, 2 * ((signs >> (n + i)) & 1)) for i, (_, w) in enumerate(pairs))
    return CliffordTableau(n, xs, zs)


def sample_local_clifford(n: int, rng: np.random.Generator) -> LocalCliffordWord:
    return LocalCliffordWord(tuple(rng.integers(0, 24, size=n)))


def conjugate_pauli(u: CliffordElement, p: PauliString) -> PauliString:
    return u.conjugate(p)


@dataclass(frozen=True)
class StabilizerState:
    """Pure stabilizer state given by ``n`` independent commuting Hermitian generators."""

    n: int
    generators: tuple[PauliString, ...]

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        if len(self.generators) != self.n:
            raise DimensionError("need exactly n generators")

    @classmethod
    def zero(cls, n: int) -> StabilizerState:
        return CliffordTableau.identity(n).zero_state

    @classmethod
    def basis(cls, b: BitString) -> StabilizerState:
        n = b.n
        return cls(n, tuple(PauliString(n, 0, qubit_bit(i, n), 2 * b.bit(i)) for i in range(n)))

    @classmethod
    def from_labels(cls, labels: Sequence[str]) -> StabilizerState:
        gens = tuple(PauliString.from_label(s) for s in labels)
        return cls(gens[0].n, gens)

    def evolve(self, u: CliffordElement) -> StabilizerState:
        """``U|psi>``."""
        t = u.to_tableau()
        return StabilizerState(self.n, tuple(t.conjugate(g) for g in self.generators))

    def apply_pauli(self, e: PauliString) -> StabilizerState:
        """``E|psi>`` up to phase: generators anticommuting with ``E`` flip sign."""
        return StabilizerState(self.n, tuple(g if g.commutes(e) else -g for g in self.generators))

    @cached_property
    def _support(self):
        """Affine support ``x0 + span(basis)`` of the state in the computational basis.

        ``basis`` is in reduced echelon form sorted by descending pivot and
        ``x0`` vanishes on every pivot, so ``x0 ^ combo(mask)`` is increasing
        in ``mask`` (most significant mask bit = highest pivot).
        """
        rows = list(self.generators)
        n = self.n
        r = 0
        for col in range(n - 1, -1, -1):
            bit = 1 << col
            piv = next((i for i in range(r, n) if rows[i].ax & bit), None)
            if piv is None:
                continue
            rows[r], rows[piv] = rows[piv], rows[r]
            for i in range(n):
                if i != r and rows[i].ax & bit:
                    rows[i] = rows[i] * rows[r]
            r += 1
        xrows = rows[:r]
        zrows = rows[r:]
        # Z-type generators s Z^az fix |x> iff (-1)^(az.x) = s
        eqs = []
        for g in zrows:
            if not g.is_hermitian:
                raise ValueError("generators do not define a valid stabilizer state")
            eqs.append([g.az, 1 if g.phase == 2 else 0])
        x0 = 0
        k = 0
        for col in range(n - 1, -1, -1):
            bit = 1 << col
            piv = next((i for i in range(k, len(eqs)) if eqs[i][0] & bit), None)
            if piv is None:
                continue
            eqs[k], eqs[piv] = eqs[piv], eqs[k]
            for i in range(len(eqs)):
                if i != k and eqs[i][0] & bit:
                    eqs[i][0] ^= eqs[k][0]
                    eqs[i][1] ^= eqs[k][1]
            k += 1
        for a, t in eqs[:k]:
            if t:
                x0 |= 1 << (a.bit_length() - 1)
        if any(a == 0 and t for a, t in eqs):
            raise ValueError("inconsistent stabilizer generators")
        basis = [g.ax for g in xrows]
        for v in basis:
            p = 1 << (v.bit_length() - 1)
            if x0 & p:
                x0 ^= v
        zcons = [(a, t) for a, t in eqs if a]
        return x0, basis, zcons, tuple(xrows)

    @property
    def support_dimension(self) -> int:
        return len(self._support[1])

    def probability(self, b: BitString | int) -> Fraction:
        """Exact ``|<b|psi>|**2``: either ``2**-k`` or 0."""
        v = b.value if isinstance(b, BitString) else int(b)
        _, basis, zcons, _ = self._support
        if any(parity(a & v) != t for a, t in zcons):
            return Fraction(0)
        return Fraction(1, 1 << len(basis))

    def sample_from_uniform(self, u: float) -> BitString:
        """Inverse-CDF sample in basis-index order from a uniform ``u`` in [0, 1)."""
        x0, basis, _, _ = self._support
        k = len(basis)
        m = min(int(u * (1 << k)), (1 << k) - 1)
        x = x0
        for j, v in enumerate(basis):
            if (m >> (k - 1 - j)) & 1:
                x ^= v
        return BitString(self.n, x)

    def measure_all_z(self, rng: np.random.Generator) -> BitString:
        return self.sample_from_uniform(rng.random())

    def to_vector(self) -> np.ndarray:
        """Dense state: ``prod_j (I + g_j)|x0>`` over the X-type reduced generators.

        The Z-type generators fix ``|x0>``, so only ``2**k`` amplitudes need work.
        """
        x0, _, _, xgens = self._support
        idx = np.array([x0], dtype=np.int64)
        amp = np.ones(1, dtype=complex)
        for g in xgens:
            signs = 1 - 2 * (np.bitwise_count(idx & g.az).astype(np.int64) & 1)
            coef = (1j) ** ((g.phase + (g.ax & g.az).bit_count()) % 4)
            idx = np.concatenate([idx, idx ^ g.ax])
            amp = np.concatenate([amp, coef * signs * amp])
        vec = np.zeros(1 << self.n, dtype=complex)
        vec[idx] = amp / np.sqrt(len(amp))
        return vec


def amplitude_probability(u: CliffordElement, b: BitString) -> Fraction:
    """``|<b|U|0^n>|**2`` as an exact dyadic rational."""
    t = u.to_tableau()
    if b.n != t.n:
        raise DimensionError("bit string length does not match Clifford size")
    return t.zero_state.probability(b)


def measure_all_z(state: StabilizerState, rng: np.random.Generator) -> BitString:
    return state.measure_all_z(rng)
