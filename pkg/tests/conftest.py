import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.diag([1, -1]).astype(complex)
SINGLE = {"I": I2, "X": X, "Y": Y, "Z": Z}


def dense_pauli(letters: str) -> np.ndarray:
    """Independent Kronecker construction, qubit 0 leftmost."""
    out = np.ones((1, 1), dtype=complex)
    for ch in letters:
        out = np.kron(out, SINGLE[ch])
    return out


def ket(bits: str) -> np.ndarray:
    v = np.zeros(2 ** len(bits), dtype=complex)
    v[int(bits, 2)] = 1
    return v


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
