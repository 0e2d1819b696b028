"""Symplectic n-qubit Pauli algebra, bit strings and diagonal Pauli-transfer maps.

Bit convention used throughout the package: qubit ``i`` of an ``n``-qubit
register lives in bit ``n - 1 - i`` of an integer.  With this choice the
integer value of a :class:`BitString` is exactly the index of the basis state
in a Kronecker-ordered state vector, and ``format(value, f"0{n}b")`` reads
qubit 0 first.

A :class:`PauliString` stores ``i**phase * P_(ax, az)`` where ``P_(ax, az)`` is
the Hermitian Pauli ``i**(ax . az) X**ax Z**az``.  The X and Z parts are
Python integers, which act as packed bit vectors of arbitrary width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

_PHASE_PREFIX = {0: "+", 1: "+i", 2: "-", 3: "-i"}
_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DimensionError(ValueError):
    """Operands act on registers of different size."""


class MissingCoefficientError(KeyError):
    """A local diagonal map was queried on a support pattern it does not store."""


def popcount(x: int) -> int:
    return x.bit_count()


def parity(x: int) -> int:
    return x.bit_count() & 1


def qubit_bit(i: int, n: int) -> int:
    """Integer mask selecting qubit ``i`` of an ``n``-qubit register."""
    return 1 << (n - 1 - i)


@dataclass(frozen=True)
class BitString:
    """Computational basis label ``b`` in ``{0,1}^n``."""

    n: int
    value: int = 0

    def __post_init__(self):
        if self.n < 0 or self.value < 0 or self.value >> self.n:
            raise ValueError(f"value {self.value} does not fit in {self.n} bits")

    @classmethod
    def from_str(cls, s: str) -> BitString:
        s = s.strip()
        if not s or set(s) - {"0", "1"}:
            raise ValueError(f"not a bit string: {s!r}")
        return cls(len(s), int(s, 2))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> BitString:
        bits = list(bits)
        v = 0
        for b in bits:
            v = (v << 1) | (int(b) & 1)
        return cls(len(bits), v)

    def bit(self, i: int) -> int:
        return (self.value >> (self.n - 1 - i)) & 1

    def bits(self) -> list[int]:
        return [self.bit(i) for i in range(self.n)]

    @property
    def weight(self) -> int:
        return popcount(self.value)

    def _check(self, other: BitString) -> None:
        if self.n != other.n:
            raise DimensionError(f"bit strings of length {self.n} and {other.n}")

    def __xor__(self, other: BitString) -> BitString:
        self._check(other)
        return BitString(self.n, self.value ^ other.value)

    def dot(self, other: BitString) -> int:
        """Inner product over GF(2)."""
        self._check(other)
        return parity(self.value & other.value)

    def __str__(self) -> str:
        return format(self.value, f"0{self.n}b") if self.n else ""


@dataclass(frozen=True)
class PauliString:
    """The operator ``i**phase * P_(ax, az)`` on ``n`` qubits."""

    n: int
    ax: int = 0
    az: int = 0
    phase: int = 0

    def __post_init__(self):
        if (self.ax | self.az) >> self.n:
            raise ValueError("Pauli bits exceed register size")
        object.__setattr__(self, "phase", self.phase % 4)

    @classmethod
    def identity(cls, n: int) -> PauliString:
        return cls(n)

    @classmethod
    def from_label(cls, label: str) -> PauliString:
        """Parse ``[+|-][i]`` followed by letters from ``IXYZ``."""
        s = label.strip()
        phase = 0
        if s.startswith("-"):
            phase, s = 2, s[1:]
        elif s.startswith("+"):
            s = s[1:]
        if s.startswith("i"):
            phase, s = phase + 1, s[1:]
        n = len(s)
        ax = az = 0
        for i, ch in enumerate(s):
            m = qubit_bit(i, n)
            if ch == "X":
                ax |= m
            elif ch == "Z":
                az |= m
            elif ch == "Y":
                ax |= m
                az |= m
            elif ch != "I":
                raise ValueError(f"bad Pauli label {label!r}")
        return cls(n, ax, az, phase)

    @classmethod
    def from_sites(cls, n: int, ops: Mapping[int, str]) -> PauliString:
        """Build from a sparse ``{qubit: letter}`` map, e.g. ``{0: "Z", 3: "Z"}``."""
        chars = ["I"] * n
        for q, ch in ops.items():
            chars[q] = ch
        return cls.from_label("".join(chars))

    @classmethod
    def z_string(cls, z: BitString | int, n: int | None = None) -> PauliString:
        """``P_m = prod_i Z_i**m_i``."""
        if isinstance(z, BitString):
            return cls(z.n, 0, z.value)
        return cls(n, 0, z)

    @property
    def letters(self) -> str:
        out = []
        for i in range(self.n):
            m = qubit_bit(i, self.n)
            x, z = bool(self.ax & m), bool(self.az & m)
            out.append("Y" if x and z else "X" if x else "Z" if z else "I")
        return "".join(out)

    @property
    def label(self) -> str:
        return _PHASE_PREFIX[self.phase] + self.letters

    def __str__(self) -> str:
        return self.label

    @property
    def weight(self) -> int:
        return popcount(self.ax | self.az)

    @property
    def is_identity(self) -> bool:
        return not (self.ax | self.az)

    @property
    def is_hermitian(self) -> bool:
        return self.phase % 2 == 0

    @property
    def sign(self) -> int:
        """``+1``/``-1`` for Hermitian operators."""
        if not self.is_hermitian:
            raise ValueError(f"{self.label} is not Hermitian")
        return 1 - self.phase

    def unsigned(self) -> PauliString:
        return PauliString(self.n, self.ax, self.az)

    def with_phase(self, phase: int) -> PauliString:
        return PauliString(self.n, self.ax, self.az, phase)

    def _check(self, other: PauliString) -> None:
        if self.n != other.n:
            raise DimensionError(f"Paulis on {self.n} and {other.n} qubits")

    def __mul__(self, other: PauliString) -> PauliString:
        return pauli_multiply(self, other)

    def __neg__(self) -> PauliString:
        return self.with_phase(self.phase + 2)

    def commutes(self, other: PauliString) -> bool:
        return symplectic_product(self, other) % 2 == 0

    def support_pattern(self) -> BitString:
        return support_pattern(self)

    def diag_value(self, b: BitString | int) -> complex:
        """``<b|P|b>``: zero unless the X part vanishes."""
        if self.ax:
            return 0
        v = b.value if isinstance(b, BitString) else b
        val = (-1) ** parity(self.az & v)
        return val * (1j) ** self.phase if self.phase % 2 else val * (1 - self.phase)

    def to_matrix(self) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for ch in self.letters:
            out = np.kron(out, _SINGLE[ch])
        return (1j) ** self.phase * out

    def apply_to_vector(self, vec: np.ndarray) -> np.ndarray:
        """Act on state vector(s) whose last axis has length ``2**n``."""
        d = 1 << self.n
        idx = np.arange(d)
        signs = 1 - 2 * (np.bitwise_count(idx & self.az).astype(np.int64) & 1)
        coef = (1j) ** ((self.phase + popcount(self.ax & self.az)) % 4) * signs
        out = np.empty_like(vec, dtype=complex)
        out[..., idx ^ self.ax] = coef * vec[..., idx]
        return out


def pauli_multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with exact phase bookkeeping."""
    a._check(b)
    cx, cz = a.ax ^ b.ax, a.az ^ b.az
    phase = (
        a.phase
        + b.phase
        + popcount(a.ax & a.az)
        + popcount(b.ax & b.az)
        + 2 * popcount(a.az & b.ax)
        - popcount(cx & cz)
    )
    return PauliString(a.n, cx, cz, phase)


def symplectic_product(a: PauliString, b: PauliString) -> int:
    """``a_x . b_z - a_z . b_x`` reduced mod 4; odd iff the two anticommute."""
    a._check(b)
    return (popcount(a.ax & b.az) - popcount(a.az & b.ax)) % 4


def support_pattern(a: PauliString) -> BitString:
    return BitString(a.n, a.ax | a.az)


def all_paulis(n: int) -> list[PauliString]:
    """All ``4**n`` unsigned Paulis, ordered as the Kronecker product of ``(I, X, Y, Z)``."""
    singles = [(0, 0), (1, 0), (1, 1), (0, 1)]
    out = []
    for k in range(4**n):
        ax = az = 0
        for i in range(n):
            x, z = singles[(k >> (2 * (n - 1 - i))) & 3]
            m = qubit_bit(i, n)
            ax |= m * x
            az |= m * z
        out.append(PauliString(n, ax, az))
    return out


@dataclass(frozen=True)
class PTMDiagonal:
    """A superoperator that is diagonal in the normalised Pauli basis.

    For ``group == "global"`` every non-identity Pauli has eigenvalue ``f``.
    For ``group == "local"`` the eigenvalue depends only on the support
    pattern ``z(a)``: explicit values live in ``coeffs`` (keyed by the integer
    value of ``z``), and ``by_weight[w]`` optionally supplies a value for any
    unlisted pattern of weight ``w``.  The identity pattern is always 1.
    """

    group: str
    n: int
    f: float | None = None
    coeffs: Mapping[int, float] = field(default_factory=dict)
    by_weight: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.group not in ("global", "local"):
            raise ValueError(f"unknown group {self.group!r}")
        if self.group == "global" and self.f is None:
            raise ValueError("global diagonal needs a coefficient f")
        if self.by_weight is not None and len(self.by_weight) != self.n + 1:
            raise ValueError("by_weight needs one entry per weight 0..n")
        object.__setattr__(self, "coeffs", dict(self.coeffs))

    @classmethod
    def global_(cls, n: int, f: float) -> PTMDiagonal:
        return cls("global", n, f=float(f))

    @classmethod
    def local(cls, n: int, coeffs: Mapping[int | BitString, float], by_weight=None) -> PTMDiagonal:
        c = {(k.value if isinstance(k, BitString) else int(k)): float(v) for k, v in coeffs.items()}
        return cls("local", n, coeffs=c, by_weight=None if by_weight is None else tuple(by_weight))

    def coefficient(self, z: BitString | int) -> float:
        """Eigenvalue on the block with support pattern ``z``."""
        zv = z.value if isinstance(z, BitString) else int(z)
        if zv == 0:
            return 1.0
        if self.group == "global":
            return self.f
        if zv in self.coeffs:
            return self.coeffs[zv]
        if self.by_weight is not None:
            return self.by_weight[popcount(zv)]
        raise MissingCoefficientError(format(zv, f"0{self.n}b"))

    def apply(self, a: PauliString) -> float:
        if a.n != self.n:
            raise DimensionError(f"diagonal on {self.n} qubits applied to {a.n}-qubit Pauli")
        return self.coefficient(a.ax | a.az)

    def _values(self):
        vals = [] if self.group == "local" else [self.f]
        vals += list(self.coeffs.values())
        if self.by_weight is not None:
            vals += list(self.by_weight[1:])
        return vals

    @property
    def is_invertible(self) -> bool:
        return all(v != 0 for v in self._values())

    def inverse(self) -> PTMDiagonal:
        if not self.is_invertible:
            raise ZeroDivisionError("diagonal map has a zero coefficient")
        if self.group == "global":
            return PTMDiagonal.global_(self.n, 1.0 / self.f)
        bw = None if self.by_weight is None else tuple(1.0 / v for v in self.by_weight)
        return PTMDiagonal.local(self.n, {k: 1.0 / v for k, v in self.coeffs.items()}, bw)

    def compose(self, other: PTMDiagonal) -> PTMDiagonal:
        """Entrywise product; for local maps only patterns both sides know survive."""
        if (self.group, self.n) != (other.group, other.n):
            raise DimensionError("cannot compose diagonals of different group or size")
        if self.group == "global":
            return PTMDiagonal.global_(self.n, self.f * other.f)
        keys = set(self.coeffs) | set(other.coeffs)
        coeffs = {}
        for k in keys:
            try:
                coeffs[k] = self.coefficient(k) * other.coefficient(k)
            except MissingCoefficientError:
                continue
        bw = None
        if self.by_weight is not None and other.by_weight is not None:
            bw = tuple(x * y for x, y in zip(self.by_weight, other.by_weight))
        return PTMDiagonal.local(self.n, coeffs, bw)

    def to_matrix(self) -> np.ndarray:
        """Dense ``4**n`` diagonal matrix in the :func:`all_paulis` ordering."""
        return np.diag([self.apply(p) for p in all_paulis(self.n)])


def noiseless_diagonal(group: str, n: int) -> PTMDiagonal:
    """Twirled ideal measurement channel: ``1/(2**n + 1)`` globally, ``3**-|z|`` locally."""
    if group == "global":
        return PTMDiagonal.global_(n, 1.0 / (2**n + 1))
    return PTMDiagonal.local(n, {}, by_weight=[3.0**-w for w in range(n + 1)])
