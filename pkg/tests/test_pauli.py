import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robust_shadow.pauli import (
    BitString,
    DimensionError,
    MissingCoefficientError,
    PauliString,
    PTMDiagonal,
    all_paulis,
    noiseless_diagonal,
    pauli_multiply,
    support_pattern,
    symplectic_product,
)

from conftest import dense_pauli


def paulis(n):
    return st.builds(
        lambda ax, az, ph: PauliString(n, ax, az, ph),
        st.integers(0, 2**n - 1),
        st.integers(0, 2**n - 1),
        st.integers(0, 3),
    )


def test_x_times_z_is_minus_i_y():
    prod = PauliString.from_label("X") * PauliString.from_label("Z")
    assert prod.label == "-iY"


def test_z_times_x_matches_dense():
    prod = PauliString.from_label("Z") * PauliString.from_label("X")
    assert prod.label == "+iY"
    np.testing.assert_allclose(prod.to_matrix(), dense_pauli("Z") @ dense_pauli("X"))


def test_identity_is_neutral():
    for p in all_paulis(2):
        assert pauli_multiply(PauliString.identity(2), p) == p


@pytest.mark.parametrize("a,b", list(itertools.product("IXYZ", repeat=2)))
def test_single_qubit_products_match_dense(a, b):
    prod = PauliString.from_label(a) * PauliString.from_label(b)
    np.testing.assert_allclose(prod.to_matrix(), dense_pauli(a) @ dense_pauli(b), atol=1e-15)


def test_all_products_up_to_three_qubits_match_dense():
    for n in (2, 3):
        ps = all_paulis(n)
        mats = {p.letters: dense_pauli(p.letters) for p in ps}
        for a in ps:
            for b in ps[:: 3 if n == 3 else 1]:
                np.testing.assert_allclose((a * b).to_matrix(), mats[a.letters] @ mats[b.letters], atol=1e-14)


def test_y_convention():
    # P_(1,1) = i X Z = Y
    y = PauliString(1, 1, 1)
    np.testing.assert_allclose(y.to_matrix(), dense_pauli("Y"))
    np.testing.assert_allclose(y.to_matrix(), 1j * dense_pauli("X") @ dense_pauli("Z"))


@settings(max_examples=200, deadline=None)
@given(paulis(3), paulis(3), paulis(3))
def test_multiplication_associative(a, b, c):
    assert (a * b) * c == a * (b * c)


@settings(max_examples=100, deadline=None)
@given(paulis(4))
def test_square_has_even_phase(p):
    assert (p * p).phase % 2 == 0
    assert (p * p).is_identity


@settings(max_examples=100, deadline=None)
@given(paulis(5))
def test_weight_bounds(p):
    assert 0 <= p.weight <= 5
    assert p.weight == sum(ch != "I" for ch in p.letters)


def test_symplectic_x_z():
    assert symplectic_product(PauliString.from_label("X"), PauliString.from_label("Z")) == 1


@settings(max_examples=100, deadline=None)
@given(paulis(4))
def test_symplectic_self_zero(p):
    assert symplectic_product(p, p) == 0


@settings(max_examples=100, deadline=None)
@given(paulis(3), paulis(3))
def test_symplectic_antisymmetric(a, b):
    assert (symplectic_product(a, b) + symplectic_product(b, a)) % 4 == 0


def test_commutation_matches_dense_random_pairs(rng):
    for _ in range(1000):
        n = int(rng.integers(1, 7))
        a = PauliString(n, int(rng.integers(2**n)), int(rng.integers(2**n)))
        b = PauliString(n, int(rng.integers(2**n)), int(rng.integers(2**n)))
        ma, mb = a.to_matrix(), b.to_matrix()
        commute = np.allclose(ma @ mb, mb @ ma)
        assert ((-1) ** symplectic_product(a, b) == 1) == commute


def test_dimension_mismatch():
    with pytest.raises(DimensionError):
        pauli_multiply(PauliString.identity(2), PauliString.identity(3))
    with pytest.raises(DimensionError):
        symplectic_product(PauliString.identity(1), PauliString.identity(2))


def test_support_pattern_examples():
    assert str(support_pattern(PauliString.from_label("XIZ"))) == "101"
    assert support_pattern(PauliString.identity(4)).value == 0
    assert str(support_pattern(PauliString.from_label("YY"))) == "11"


@settings(max_examples=100, deadline=None)
@given(paulis(6))
def test_support_weight(p):
    assert support_pattern(p).weight == p.weight


def test_labels_roundtrip():
    for s in ["+XYZI", "-ZZ", "+iX", "-iYI"]:
        assert PauliString.from_label(s).label == s
    with pytest.raises(ValueError):
        PauliString.from_label("XQ")


def test_apply_to_vector_matches_matrix(rng):
    for p in all_paulis(3):
        q = p.with_phase(int(rng.integers(4)))
        v = rng.normal(size=8) + 1j * rng.normal(size=8)
        np.testing.assert_allclose(q.apply_to_vector(v), q.to_matrix() @ v, atol=1e-14)


def test_diag_value_matches_matrix():
    for p in all_paulis(2):
        for b in range(4):
            assert p.diag_value(b) == pytest.approx(p.to_matrix()[b, b])


def test_bitstring_ops():
    a, b = BitString.from_str("1010"), BitString.from_str("0110")
    assert str(a ^ b) == "1100"
    assert (a ^ b) ^ b == a
    assert a.dot(b) == 1
    assert a.weight == 2
    assert a.bits() == [1, 0, 1, 0]
    assert BitString.from_bits([1, 0, 1, 0]) == a
    with pytest.raises(ValueError):
        BitString(2, 7)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 63), st.integers(0, 63), st.integers(0, 63))
def test_bitstring_dot_bilinear(x, y, z):
    a, b, c = (BitString(6, v) for v in (x, y, z))
    assert (a ^ b).dot(c) == (a.dot(c) + b.dot(c)) % 2


# PTM diagonals


def test_global_noiseless_coefficient():
    m = noiseless_diagonal("global", 2)
    assert m.apply(PauliString.from_label("XZ")) == pytest.approx(1 / 5)


def test_identity_component_is_one():
    for m in (PTMDiagonal.global_(3, 0.3), noiseless_diagonal("local", 3)):
        assert m.apply(PauliString.identity(3)) == 1


def test_local_noiseless_weight_two():
    m = noiseless_diagonal("local", 3)
    assert m.apply(PauliString.from_label("XIZ")) == pytest.approx(1 / 9)


def test_local_missing_coefficient():
    m = PTMDiagonal.local(3, {0b100: 0.3})
    assert m.apply(PauliString.from_label("XII")) == 0.3
    with pytest.raises(MissingCoefficientError):
        m.apply(PauliString.from_label("IXI"))


def test_compose_multiplicative_and_inverse():
    a = PTMDiagonal.local(2, {1: 0.3, 2: 0.2, 3: 0.1})
    b = PTMDiagonal.local(2, {1: 0.5, 2: -0.4, 3: 0.25})
    ab = a.compose(b)
    for p in all_paulis(2):
        assert ab.apply(p) == pytest.approx(a.apply(p) * b.apply(p))
    inv = a.inverse()
    for p in all_paulis(2):
        assert a.compose(inv).apply(p) == pytest.approx(1.0)
    np.testing.assert_allclose(ab.to_matrix(), a.to_matrix() @ b.to_matrix())
    g = PTMDiagonal.global_(2, 0.2)
    assert g.inverse().f == pytest.approx(5)


def test_invertibility():
    assert not PTMDiagonal.global_(2, 0.0).is_invertible
    assert not PTMDiagonal.local(2, {1: 0.3, 2: 0.0}).is_invertible
    assert PTMDiagonal.local(2, {1: 0.3, 2: -0.1}).is_invertible
    with pytest.raises(ZeroDivisionError):
        PTMDiagonal.global_(2, 0.0).inverse()
