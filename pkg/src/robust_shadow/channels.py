"""Noise channels applied between the random Clifford and the Z measurement.

A :class:`NoiseSpec` is one of

* ``kraus``        -- a list of ``2**n x 2**n`` Kraus operators,
* ``local_kraus``  -- one single-qubit Kraus list per qubit (tensor product),
* ``pauli``        -- a Pauli channel, either a probability per qubit over
  ``(I, X, Y, Z)`` or a global distribution over all ``4**n`` Paulis
  (optionally the uniform "depolarizing" mixture, which needs no table),
* ``classical``    -- an outcome flip kernel, per qubit or global.

Only trace-preserving channels are accepted: the twirl identities assume the
effective measurement channel is trace preserving.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Sequence

import numpy as np
from scipy.linalg import expm

from .pauli import PauliString, qubit_bit

DENSE_LIMIT = 12
_ATOL = 1e-12
_P1 = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


class ChannelValidationError(ValueError):
    """The channel is not CPTP, or a parameter is out of range."""


def pauli_from_index(k: int, n: int) -> PauliString:
    """Pauli number ``k`` in the Kronecker ``(I, X, Y, Z)`` ordering."""
    ax = az = 0
    for i in range(n):
        digit = (k >> (2 * (n - 1 - i))) & 3
        m = qubit_bit(i, n)
        if digit in (1, 2):
            ax |= m
        if digit in (2, 3):
            az |= m
    return PauliString(n, ax, az)


def _check_kraus(ops: Sequence[np.ndarray], what: str) -> None:
    ops = [np.asarray(k, dtype=complex) for k in ops]
    if not ops:
        raise ChannelValidationError(f"{what}: empty Kraus list")
    dim = ops[0].shape[0]
    s = sum(k.conj().T @ k for k in ops)
    if not np.allclose(s, np.eye(dim), atol=1e-10, rtol=0):
        raise ChannelValidationError(f"{what}: Kraus operators are not trace preserving")


def _check_prob(p: float, name: str) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ChannelValidationError(f"{name} must lie in [0, 1], got {p}")
    return p


def _apply_local_superop(rho: np.ndarray, n: int, q: int, kraus: Sequence[np.ndarray]) -> np.ndarray:
    """Apply single-qubit Kraus operators on qubit ``q`` of a dense ``n``-qubit matrix."""
    t = rho.reshape([2] * (2 * n))
    out = np.zeros_like(t)
    for k in kraus:
        a = np.moveaxis(np.tensordot(k, t, axes=([1], [q])), 0, q)
        a = np.moveaxis(np.tensordot(a, k.conj(), axes=([n + q], [1])), -1, n + q)
        out = out + a
    return out.reshape(rho.shape)


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    kind: str
    n: int
    kraus: tuple | None = None
    local_kraus: tuple | None = None
    pauli_local: np.ndarray | None = None
    pauli_global: np.ndarray | None = None
    depol: float | None = None
    flip_local: np.ndarray | None = None
    flip_global: np.ndarray | None = None
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ChannelValidationError("n must be positive")
        k = self.kind
        if k == "kraus":
            if self.n > DENSE_LIMIT:
                raise ChannelValidationError(f"global Kraus channels need n <= {DENSE_LIMIT}")
            ops = tuple(np.asarray(m, dtype=complex) for m in self.kraus)
            if any(m.shape != (2**self.n, 2**self.n) for m in ops):
                raise ChannelValidationError("Kraus operator has the wrong shape")
            _check_kraus(ops, self.name)
            object.__setattr__(self, "kraus", ops)
        elif k == "local_kraus":
            ops = tuple(tuple(np.asarray(m, dtype=complex) for m in q) for q in self.local_kraus)
            if len(ops) != self.n:
                raise ChannelValidationError("need one Kraus list per qubit")
            for q in ops:
                _check_kraus(q, self.name)
            object.__setattr__(self, "local_kraus", ops)
        elif k == "pauli":
            if self.pauli_local is not None:
                p = np.asarray(self.pauli_local, dtype=float)
                if p.shape != (self.n, 4) or (p < -_ATOL).any() or not np.allclose(p.sum(1), 1, atol=1e-10):
                    raise ChannelValidationError("per-qubit Pauli probabilities must be (n, 4) rows summing to 1")
                object.__setattr__(self, "pauli_local", p)
            elif self.pauli_global is not None:
                p = np.asarray(self.pauli_global, dtype=float)
                if p.shape != (4**self.n,) or (p < -_ATOL).any() or not np.isclose(p.sum(), 1, atol=1e-10):
                    raise ChannelValidationError("global Pauli probabilities must have 4**n entries summing to 1")
                object.__setattr__(self, "pauli_global", p)
            elif self.depol is not None:
                _check_prob(self.depol, "depolarizing strength")
            else:
                raise ChannelValidationError("Pauli channel needs probabilities")
        elif k == "classical":
            if self.flip_local is not None:
                t = np.asarray(self.flip_local, dtype=float)
                if t.shape != (self.n, 2, 2):
                    raise ChannelValidationError("per-qubit kernels must have shape (n, 2, 2)")
                object.__setattr__(self, "flip_local", t)
            elif self.flip_global is not None:
                if self.n > DENSE_LIMIT:
                    raise ChannelValidationError(f"global kernels need n <= {DENSE_LIMIT}")
                t = np.asarray(self.flip_global, dtype=float)
                if t.shape != (2**self.n, 2**self.n):
                    raise ChannelValidationError("global kernel must be 2**n x 2**n")
                object.__setattr__(self, "flip_global", t)
            else:
                raise ChannelValidationError("classical channel needs a kernel")
            # columns are P(out | in) distributions
            if (t < -_ATOL).any() or not np.allclose(t.sum(axis=-2), 1, atol=1e-10):
                raise ChannelValidationError("kernel columns must be probability vectors")
        elif k != "identity":
            raise ChannelValidationError(f"unknown channel kind {k!r}")

    # classification

    @property
    def is_pauli_diagonal(self) -> bool:
        return self.kind in ("pauli", "identity")

    @property
    def is_classical(self) -> bool:
        return self.kind == "classical"

    @property
    def is_local(self) -> bool:
        if self.kind == "identity" or self.kind == "local_kraus":
            return True
        if self.kind == "pauli":
            return self.pauli_local is not None
        if self.kind == "classical":
            return self.flip_local is not None
        return False

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    @property
    def num_uniforms(self) -> int:
        """Uniform variates one round consumes to realise this channel stochastically."""
        if self.kind == "identity":
            return 0
        if self.kind == "local_kraus" or (self.kind in ("pauli", "classical") and self.is_local):
            return self.n
        return 1

    # dense views

    def local_factors(self) -> list[list[np.ndarray]]:
        """Per-qubit Kraus lists, for local channels only."""
        if self.kind == "identity":
            return [[np.eye(2, dtype=complex)] for _ in range(self.n)]
        if self.kind == "local_kraus":
            return [list(q) for q in self.local_kraus]
        if self.kind == "pauli" and self.pauli_local is not None:
            return [[np.sqrt(p[j]) * _P1[j] for j in range(4) if p[j] > 0] for p in self.pauli_local]
        if self.kind == "classical" and self.flip_local is not None:
            out = []
            for t in self.flip_local:
                ops = []
                for b in range(2):
                    for bo in range(2):
                        if t[bo, b] > 0:
                            m = np.zeros((2, 2), dtype=complex)
                            m[bo, b] = np.sqrt(t[bo, b])
                            ops.append(m)
                out.append(ops)
            return out
        raise ValueError("channel is not a tensor product")

    def kraus_operators(self) -> list[np.ndarray]:
        """Full ``2**n``-dimensional Kraus list (small n only)."""
        if self.n > DENSE_LIMIT:
            raise ValueError(f"dense Kraus form needs n <= {DENSE_LIMIT}")
        if self.kind == "kraus":
            return list(self.kraus)
        if self.is_local:
            ops = [np.ones((1, 1), dtype=complex)]
            for q in self.local_factors():
                ops = [np.kron(a, b) for a in ops for b in q]
            return ops
        if self.kind == "pauli":
            probs = self.pauli_probabilities()
            return [np.sqrt(p) * pauli_from_index(k, self.n).to_matrix() for k, p in enumerate(probs) if p > 0]
        d = 2**self.n
        ops = []
        for b in range(d):
            for bo in range(d):
                if self.flip_global[bo, b] > 0:
                    m = np.zeros((d, d), dtype=complex)
                    m[bo, b] = np.sqrt(self.flip_global[bo, b])
                    ops.append(m)
        return ops

    def pauli_probabilities(self) -> np.ndarray:
        """Global Pauli error distribution in the Kronecker ``(I, X, Y, Z)`` order."""
        if self.kind == "identity":
            p = np.zeros(4**self.n)
            p[0] = 1.0
            return p
        if self.kind != "pauli":
            raise ValueError("not a Pauli channel")
        if self.pauli_global is not None:
            return self.pauli_global
        if self.pauli_local is not None:
            p = np.ones(1)
            for row in self.pauli_local:
                p = np.kron(p, row)
            return p
        d2 = 4**self.n
        p = np.full(d2, self.depol / d2)
        p[0] += 1.0 - self.depol
        return p

    def apply_dense(self, rho: np.ndarray) -> np.ndarray:
        """``Lambda(rho)`` on a dense ``2**n x 2**n`` operator."""
        rho = np.asarray(rho, dtype=complex)
        if self.kind == "identity":
            return rho.copy()
        if self.is_local:
            out = rho
            for q, ops in enumerate(self.local_factors()):
                out = _apply_local_superop(out, self.n, q, ops)
            return out
        if self.kind == "pauli" and self.depol is not None and self.pauli_global is None:
            d = 2**self.n
            return (1 - self.depol) * rho + self.depol * np.trace(rho) * np.eye(d) / d
        return sum(k @ rho @ k.conj().T for k in self.kraus_operators())

    @cached_property
    def transition_matrix(self) -> np.ndarray:
        """``T[b, x] = <b| Lambda(|x><x|) |b>``."""
        if self.n > DENSE_LIMIT:
            raise ValueError(f"transition matrix needs n <= {DENSE_LIMIT}")
        if self.is_local:
            t = np.ones((1, 1))
            for m in self.local_transitions():
                t = np.kron(t, m)
            return t
        if self.kind == "classical":
            return self.flip_global.copy()
        d = 2**self.n
        t = np.zeros((d, d))
        for k in self.kraus_operators():
            t += np.abs(k) ** 2
        return t

    def local_transitions(self) -> list[np.ndarray]:
        out = []
        for ops in self.local_factors():
            t = np.zeros((2, 2))
            for k in ops:
                t += np.abs(k) ** 2
            out.append(t)
        return out

    def to_config(self) -> dict:
        return {"name": self.name, **self.params}


# closed-form quantities


def z_basis_fidelity(noise: NoiseSpec) -> float:
    """``F_Z = 2**-n sum_b <b|Lambda(|b><b|)|b>``."""
    if noise.is_local:
        return float(np.prod([np.trace(t) / 2 for t in noise.local_transitions()]))
    return float(np.trace(noise.transition_matrix)) / 2**noise.n


def gamma_lambda(noise: NoiseSpec, z, exact: bool = False) -> float:
    """``Gamma(z) = 2**-n sum_{x,b} (-1)**(z.(x xor b)) T[b, x]``.

    Local channels use the product ``prod_{z_i=1} (2 F_Z(Lambda_i) - 1)``
    unless ``exact`` forces the double sum.
    """
    n = noise.n
    zv = z.value if hasattr(z, "value") else int(z)
    if noise.is_local and not exact:
        out = 1.0
        for i, t in enumerate(noise.local_transitions()):
            if zv & qubit_bit(i, n):
                out *= np.trace(t) - 1.0
        return float(out)
    t = noise.transition_matrix
    idx = np.arange(2**n)
    chi = 1 - 2 * (np.bitwise_count(idx & zv).astype(np.int64) & 1)
    # (-1)^{z.(x^b)} = chi[x] chi[b]
    return float(chi @ t @ chi) / 2**n


def expected_f_global(noise: NoiseSpec, n: int | None = None) -> float:
    """``f = (d F_Z - 1) / (d**2 - 1)``."""
    n = noise.n if n is None else n
    d = 2**n
    return (d * z_basis_fidelity(noise) - 1) / (d * d - 1)


def expected_f_local(noise: NoiseSpec, z) -> float:
    """``f_z = 3**-|z| Gamma(z)``."""
    zv = z.value if hasattr(z, "value") else int(z)
    return 3.0 ** -zv.bit_count() * gamma_lambda(noise, zv)


# constructors


def identity(n: int) -> NoiseSpec:
    return NoiseSpec("identity", n, name="identity")


def depolarizing(p: float, n: int, scope: str = "global") -> NoiseSpec:
    """``rho -> (1-p) rho + p I/d`` on the whole register, or on every qubit."""
    p = _check_prob(p, "p")
    params = {"p": p, "scope": scope}
    if scope == "global":
        return NoiseSpec("pauli", n, depol=p, name="depolarizing", params=params)
    if scope == "local":
        row = [1 - 0.75 * p, p / 4, p / 4, p / 4]
        return NoiseSpec("pauli", n, pauli_local=np.tile(row, (n, 1)), name="depolarizing", params=params)
    raise ChannelValidationError(f"scope must be 'global' or 'local', got {scope!r}")


def amplitude_damping(gamma: float, n: int) -> NoiseSpec:
    g = _check_prob(gamma, "gamma")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - g)]], dtype=complex)
    k1 = np.array([[0, np.sqrt(g)], [0, 0]], dtype=complex)
    return NoiseSpec("local_kraus", n, local_kraus=((k0, k1),) * n, name="amplitude_damping", params={"gamma": g})


def measurement_bitflip(p: float, n: int) -> NoiseSpec:
    p = _check_prob(p, "p")
    t = np.array([[1 - p, p], [p, 1 - p]])
    return NoiseSpec("classical", n, flip_local=np.tile(t, (n, 1, 1)), name="measurement_bitflip", params={"p": p})


def x_rotation(theta: float, n: int) -> NoiseSpec:
    """``exp(-i theta X)`` on every qubit."""
    theta = float(theta)
    u = expm(-1j * theta * _P1[1])
    return NoiseSpec("local_kraus", n, local_kraus=((u,),) * n, name="x_rotation", params={"theta": theta})


def xx_rotation(theta: float, n: int, pairs: Sequence[tuple[int, int]] | None = None) -> NoiseSpec:
    """``prod exp(-i theta X_i X_j)`` over ``pairs`` (default: open chain neighbours)."""
    theta = float(theta)
    if n > DENSE_LIMIT:
        raise ChannelValidationError(f"xx_rotation is a dense unitary and needs n <= {DENSE_LIMIT}")
    if pairs is None:
        pairs = [(i, i + 1) for i in range(n - 1)]
    pairs = [tuple(int(q) for q in pr) for pr in pairs]
    u = np.eye(2**n, dtype=complex)
    for i, j in pairs:
        if i == j or not (0 <= i < n and 0 <= j < n):
            raise ChannelValidationError(f"bad qubit pair {(i, j)}")
        xx = PauliString.from_sites(n, {i: "X", j: "X"}).to_matrix()
        # XX squares to one, so the exponential is cos - i sin XX
        u = (np.cos(theta) * np.eye(2**n) - 1j * np.sin(theta) * xx) @ u
    return NoiseSpec("kraus", n, kraus=(u,), name="xx_rotation", params={"theta": theta, "pairs": [list(p) for p in pairs]})


_BUILDERS = {
    "identity": lambda n, **kw: identity(n),
    "depolarizing": lambda n, p, scope="global": depolarizing(p, n, scope),
    "amplitude_damping": lambda n, gamma: amplitude_damping(gamma, n),
    "measurement_bitflip": lambda n, p: measurement_bitflip(p, n),
    "x_rotation": lambda n, theta: x_rotation(theta, n),
    "xx_rotation": lambda n, theta, pairs=None: xx_rotation(theta, n, pairs),
}


def noise_from_config(cfg: dict[str, Any] | None, n: int) -> NoiseSpec:
    """Build a channel from ``{"name": ..., **params}``; ``None`` means noiseless."""
    if not cfg:
        return identity(n)
    cfg = dict(cfg)
    name = cfg.pop("name")
    if name not in _BUILDERS:
        raise ChannelValidationError(f"unknown noise model {name!r}; choose from {sorted(_BUILDERS)}")
    try:
        return _BUILDERS[name](n, **cfg)
    except TypeError as exc:
        raise ChannelValidationError(f"bad parameters for {name}: {exc}") from None


# state preparation


def _check_density(rho: np.ndarray, what: str) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if not np.allclose(rho, rho.conj().T, atol=1e-10):
        raise ChannelValidationError(f"{what} is not Hermitian")
    if not np.isclose(np.trace(rho).real, 1, atol=1e-10):
        raise ChannelValidationError(f"{what} does not have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ChannelValidationError(f"{what} is not positive semidefinite")
    return rho


def _ensemble(rho: np.ndarray):
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    keep = w > 1e-15
    w, v = w[keep][::-1], v[:, keep][:, ::-1]
    return w / w.sum(), v.T.copy()


@dataclass(frozen=True, eq=False)
class StatePrepSpec:
    """How ``|0^n>`` is actually prepared: ideal, per-qubit states, or one global state."""

    n: int
    local: tuple | None = None
    global_rho: np.ndarray | None = None

    def __post_init__(self):
        if self.local is not None:
            if len(self.local) != self.n:
                raise ChannelValidationError("need one density matrix per qubit")
            object.__setattr__(self, "local", tuple(_check_density(r, f"rho_0[{i}]") for i, r in enumerate(self.local)))
        if self.global_rho is not None:
            r = _check_density(self.global_rho, "rho_0")
            if r.shape != (2**self.n, 2**self.n):
                raise ChannelValidationError("global rho_0 has the wrong shape")
            object.__setattr__(self, "global_rho", r)

    @classmethod
    def ideal(cls, n: int) -> StatePrepSpec:
        return cls(n)

    @classmethod
    def local_bitflip(cls, xi: float, n: int) -> StatePrepSpec:
        """Each qubit prepared as ``(1 - xi)|0><0| + xi|1><1|``."""
        xi = _check_prob(xi, "xi")
        return cls(n, local=tuple(np.diag([1 - xi, xi]) for _ in range(n)))

    @classmethod
    def global_flip(cls, eps: float, n: int) -> StatePrepSpec:
        """``(1 - eps)|0..0><0..0| + eps|1..1><1..1|``."""
        eps = _check_prob(eps, "eps")
        d = 2**n
        rho = np.zeros((d, d))
        rho[0, 0] = 1 - eps
        rho[-1, -1] += eps
        return cls(n, global_rho=rho)

    @property
    def is_ideal(self) -> bool:
        return self.local is None and self.global_rho is None

    @property
    def num_uniforms(self) -> int:
        if self.local is not None:
            return self.n
        return 0 if self.global_rho is None else 1

    @property
    def is_stabilizer_representable(self) -> bool:
        """True when every ensemble member is a computational basis state."""
        mats = self.local if self.local is not None else ([] if self.global_rho is None else [self.global_rho])
        return all(np.allclose(m, np.diag(np.diag(m))) for m in mats)

    def fidelities(self) -> np.ndarray:
        """``<0|rho_{0,i}|0>`` per qubit (local) or ``<0^n|rho_0|0^n>`` (global)."""
        if self.local is not None:
            return np.array([m[0, 0].real for m in self.local])
        if self.global_rho is not None:
            return np.array([self.global_rho[0, 0].real])
        return np.ones(1)

    def density_matrix(self) -> np.ndarray:
        if self.global_rho is not None:
            return self.global_rho
        if self.local is None:
            rho = np.zeros((2**self.n, 2**self.n), dtype=complex)
            rho[0, 0] = 1
            return rho
        out = np.ones((1, 1), dtype=complex)
        for m in self.local:
            out = np.kron(out, m)
        return out

    @cached_property
    def ensembles(self):
        if self.local is not None:
            return [_ensemble(m) for m in self.local]
        if self.global_rho is not None:
            return [_ensemble(self.global_rho)]
        return []
