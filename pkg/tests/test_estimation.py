import itertools
import json
import warnings

import numpy as np
import pytest

from robust_shadow.calibration import build_inverse, calibrate
from robust_shadow.channels import (
    amplitude_damping,
    depolarizing,
    expected_f_global,
    expected_f_local,
    gamma_lambda,
    identity,
    measurement_bitflip,
    x_rotation,
    xx_rotation,
    z_basis_fidelity,
)
from robust_shadow.clifford import CliffordTableau, LocalCliffordWord
from robust_shadow.device import DeviceConfig, ShadowSample, collect
from robust_shadow.estimation import (
    EstimationResult,
    GroupMismatchError,
    estimate,
    expected_estimate,
    round_values,
    single_round_estimate,
    standard_shadow_inverse,
)
from robust_shadow.observables import PauliSum, StabilizerProjector, ghz_projector
from robust_shadow.oracle import exact_estimator_moments, exact_mean_estimate, exact_expectation, ghz_state
from robust_shadow.pauli import BitString, MissingCoefficientError, PTMDiagonal

from conftest import dense_pauli, ket


def true_inverse(noise, group):
    n = noise.n
    if group == "global":
        return PTMDiagonal.global_(n, expected_f_global(noise)).inverse()
    return PTMDiagonal.local(n, {z: expected_f_local(noise, z) for z in range(1, 2**n)}).inverse()


def dm(v):
    v = np.asarray(v, dtype=complex)
    return np.outer(v, v.conj())


def channels_1q():
    return [
        identity(1),
        measurement_bitflip(0.1, 1),
        amplitude_damping(0.2, 1),
        x_rotation(np.pi / 10, 1),
        depolarizing(0.3, 1),
    ]


def channels_2q():
    return [
        identity(2),
        measurement_bitflip(0.1, 2),
        amplitude_damping(0.2, 2),
        x_rotation(np.pi / 10, 2),
        depolarizing(0.2, 2, scope="local"),
        xx_rotation(0.2, 2),
    ]


STATES_1Q = {
    "zero": dm(ket("0")),
    "plus": dm(np.array([1, 1]) / np.sqrt(2)),
    "mixed": np.eye(2) / 2,
    "y": dm(np.array([1, 1j]) / np.sqrt(2)),
}


# single-round examples


def test_standard_inverse_values():
    assert standard_shadow_inverse("global", 3).f == 9
    inv = standard_shadow_inverse("local", 2)
    assert inv.coefficient(0b10) == 3
    assert inv.coefficient(0b11) == 9
    assert inv.coefficient(0) == 1


@pytest.mark.parametrize("group,u", [("global", CliffordTableau.identity(1)), ("local", LocalCliffordWord((0,)))])
def test_single_round_z(group, u):
    obs = PauliSum.single("Z")
    minv = standard_shadow_inverse(group, 1)
    assert single_round_estimate(obs, minv, ShadowSample(0, u, BitString(1, 0))) == pytest.approx(3)
    assert single_round_estimate(obs, minv, ShadowSample(0, u, BitString(1, 1))) == pytest.approx(-3)


def test_identity_observable_is_constant():
    obs = PauliSum.from_terms([(0.7, "II")])
    minv = standard_shadow_inverse("local", 2)
    for s in collect(DeviceConfig(2, master_seed=3), "local", "estimation", 20, ket("01")):
        assert single_round_estimate(obs, minv, s) == pytest.approx(0.7)


def test_ghz2_projector_single_round():
    proj = ghz_projector(2)
    s = ShadowSample(0, CliffordTableau.identity(2), BitString(2, 0))
    # 1/4 + 5 (1/2 - 1/4)
    assert single_round_estimate(proj, standard_shadow_inverse("global", 2), s) == pytest.approx(1.5)


# errors


def test_missing_pattern_is_named():
    obs = PauliSum.from_terms([(1.0, "ZZI"), (1.0, "IZZ")], name="zz")
    minv = PTMDiagonal.local(3, {0b110: 9.0})
    batch = collect(DeviceConfig(3, master_seed=0), "local", "estimation", 4, ket("000"))
    with pytest.raises(MissingCoefficientError, match="011"):
        round_values([obs], minv, batch)


def test_group_mismatch():
    batch = collect(DeviceConfig(2, master_seed=0), "global", "estimation", 3, ket("00"))
    with pytest.raises(GroupMismatchError):
        round_values([PauliSum.single("ZZ")], standard_shadow_inverse("local", 2), batch)
    with pytest.raises(GroupMismatchError):
        round_values([PauliSum.single("ZZZ")], standard_shadow_inverse("global", 3), batch)


def test_projector_needs_global_group():
    batch = collect(DeviceConfig(2, master_seed=0), "local", "estimation", 3, ket("00"))
    with pytest.raises(GroupMismatchError, match="global"):
        round_values([ghz_projector(2)], standard_shadow_inverse("local", 2), batch)


@pytest.mark.parametrize("group", ["global", "local"])
def test_round_values_match_single_round(group):
    n = 3
    obs = [PauliSum.from_terms([(0.5, "ZZI"), (-1.0, "XIX"), (0.25, "III")], name="a"), PauliSum.single("YIZ")]
    if group == "global":
        obs.append(ghz_projector(3))
        minv = PTMDiagonal.global_(n, 7.3)
    else:
        minv = PTMDiagonal.local(n, {}, by_weight=[1, 2.5, 7.0, 20.0])
    _, v = ghz_state(3)
    batch = collect(DeviceConfig(n, x_rotation(0.2, n), master_seed=9), group, "estimation", 60, v)
    vals = round_values(obs, minv, batch)
    assert vals.shape == (60, len(obs))
    for i, s in enumerate(batch):
        for j, o in enumerate(obs):
            assert vals[i, j] == pytest.approx(single_round_estimate(o, minv, s), abs=1e-12)


# exact bias identities by full enumeration


@pytest.mark.parametrize("noise", channels_1q(), ids=lambda c: c.name)
@pytest.mark.parametrize("label", ["X", "Y", "Z"])
@pytest.mark.parametrize("state", list(STATES_1Q), ids=str)
def test_global_true_inverse_unbiased(noise, label, state):
    rho = STATES_1Q[state]
    obs = PauliSum.single(label)
    mean = exact_mean_estimate(obs, true_inverse(noise, "global"), rho, noise)
    assert mean == pytest.approx(np.real(np.trace(dense_pauli(label) @ rho)), abs=1e-12)


@pytest.mark.parametrize("noise", channels_2q(), ids=lambda c: c.name)
def test_local_true_inverse_unbiased(noise):
    rng = np.random.default_rng(5)
    a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = a @ a.conj().T
    rho /= np.trace(rho)
    minv = true_inverse(noise, "local")
    for labels in [("ZI",), ("XY",), ("ZZ", "IX"), ("YY", "XI", "IZ")]:
        obs = PauliSum.from_terms([(0.3 + i, l) for i, l in enumerate(labels)])
        mean = exact_mean_estimate(obs, minv, rho, noise)
        assert mean == pytest.approx(exact_expectation(obs, rho), abs=1e-12)


@pytest.mark.parametrize("noise", channels_1q(), ids=lambda c: c.name)
def test_expected_estimate_matches_enumeration_global(noise):
    rho = STATES_1Q["y"] * 0.6 + STATES_1Q["plus"] * 0.4
    for minv in (standard_shadow_inverse("global", 1), PTMDiagonal.global_(1, 2.2)):
        for label in "XYZ":
            obs = PauliSum.single(label)
            assert expected_estimate(obs, rho, noise, "global", minv) == pytest.approx(
                exact_mean_estimate(obs, minv, rho, noise), abs=1e-12
            )


@pytest.mark.parametrize("noise", channels_2q(), ids=lambda c: c.name)
def test_expected_estimate_matches_enumeration_local(noise):
    _, v = ghz_state(2)
    rho = dm(v)
    minv = standard_shadow_inverse("local", 2)
    for obs in (PauliSum.from_terms([(1.0, "ZZ"), (0.5, "XX"), (0.2, "IZ")]), ghz_projector(2)):
        ps = obs.to_pauli_sum() if isinstance(obs, StabilizerProjector) else obs
        assert expected_estimate(obs, v, noise, "local", minv) == pytest.approx(
            exact_mean_estimate(ps, minv, rho, noise), abs=1e-12
        )


def test_expected_estimate_projector_closed_form():
    # the global projector path must agree with the Pauli-sum expansion
    noise = measurement_bitflip(0.15, 3)
    _, v = ghz_state(3)
    proj = ghz_projector(3)
    minv = standard_shadow_inverse("global", 3)
    a = expected_estimate(proj, v, noise, "global", minv)
    b = expected_estimate(proj.to_pauli_sum(), v, noise, "global", minv)
    c = expected_estimate(proj.to_matrix(), dm(v), noise, "global", minv)
    assert a == pytest.approx(b, abs=1e-12)
    assert a == pytest.approx(c, abs=1e-12)
    assert expected_estimate(proj, v, noise, "global", true_inverse(noise, "global")) == pytest.approx(1.0)


# second moments against the shadow-norm bounds


@pytest.mark.parametrize("noise", channels_1q(), ids=lambda c: c.name)
@pytest.mark.parametrize("label", ["X", "Z"])
def test_global_second_moment_bound(noise, label):
    d = 2
    fz = z_basis_fidelity(noise)
    minv = true_inverse(noise, "global")
    o = dense_pauli(label)
    for state in STATES_1Q.values():
        _, m2 = exact_estimator_moments(
            lambda s: single_round_estimate(PauliSum.single(label), minv, s), "global", 1, state, noise
        )
        bound = 3 * np.trace(o @ o).real / (fz - 1 / d) ** 2
        assert m2 <= bound + 1e-12


@pytest.mark.parametrize("label", ["X", "Y", "Z"])
def test_global_second_moment_noiseless_exact(label):
    # f^-2 [Tr(O^2)(d - 2F + 1) + 2 Tr(rho O^2)(d F - 1)] / ((d + 2)(d^2 - 1)) with F = 1, d = 2
    d, fz = 2, 1.0
    minv = standard_shadow_inverse("global", 1)
    o = dense_pauli(label)
    for state in STATES_1Q.values():
        _, m2 = exact_estimator_moments(
            lambda s: single_round_estimate(PauliSum.single(label), minv, s), "global", 1, state
        )
        f = 1 / (d + 1)
        tr2 = np.trace(o @ o).real
        trs = np.trace(state @ o @ o).real
        exact = (tr2 * (d - 2 * fz + 1) + 2 * trs * (d * fz - 1)) / ((d + 2) * (d * d - 1)) / f**2
        assert m2 == pytest.approx(exact, abs=1e-12)


@pytest.mark.parametrize("noise", channels_2q(), ids=lambda c: c.name)
def test_local_second_moment_bound(noise):
    minv = true_inverse(noise, "local")
    _, v = ghz_state(2)
    for labels, k in [(("ZI",), 1), (("ZZ",), 2), (("XX", "ZI"), 2), (("XY", "YX", "ZZ"), 2)]:
        obs = PauliSum.from_terms([(1.0, l) for l in labels])
        norm = np.abs(np.linalg.eigvalsh(obs.to_matrix())).max()
        gam = min(abs(gamma_lambda(noise, z)) for z in range(1, 4) if bin(z).count("1") <= k)
        _, m2 = exact_estimator_moments(lambda s: single_round_estimate(obs, minv, s), "local", 2, dm(v), noise)
        assert m2 <= 4**k * norm**2 / gam**2 + 1e-12


# Monte Carlo


@pytest.mark.slow
def test_ghz4_bitflip_end_to_end():
    n = 4
    noise = measurement_bitflip(0.1, n)
    proj, v = ghz_state(n)
    dev = DeviceConfig(n, noise, backend="stabilizer", master_seed=21)
    est = calibrate(dev, "global", 2000, 10)
    minv = build_inverse(est)
    robust, standard = estimate(dev, proj.state, [proj], minv, 4000, 10, baseline=True)
    val, sig = robust["ghz4_fidelity"]
    rel_f = float(est.sigma) / est.f
    assert abs(val - 1.0) <= 4 * np.hypot(sig, rel_f)
    expect = expected_estimate(proj, v, noise, "global", standard_shadow_inverse("global", n))
    sval, ssig = standard["ghz4_fidelity"]
    assert expect == pytest.approx(0.9**4, abs=1e-12)
    assert abs(sval - expect) <= 5 * ssig
    # the robust estimate beats the biased standard one
    assert abs(val - 1.0) < abs(sval - 1.0)


def test_zero_noise_robust_and_standard_agree():
    n = 3
    proj, v = ghz_state(n)
    dev = DeviceConfig(n, identity(n), backend="stabilizer", master_seed=4)
    est = calibrate(dev, "global", 500, 4)
    robust, standard = estimate(dev, proj.state, [proj, PauliSum.single("ZZI")], build_inverse(est), 500, 4, baseline=True)
    for name in robust.names:
        a, sa = robust[name]
        b, sb = standard[name]
        assert abs(a - b) <= 3 * np.hypot(sa, sb) + 1e-9
        assert b == pytest.approx(1.0, abs=6 * sb)


def test_local_estimate_matches_oracle_with_true_inverse():
    n = 3
    noise = amplitude_damping(0.15, n)
    v = (ket("000") + ket("110")) / np.sqrt(2)
    dev = DeviceConfig(n, noise, master_seed=8)
    obs = [PauliSum.single("ZZI"), PauliSum.single("XXI"), PauliSum.single("IIZ")]
    res = estimate(dev, v, obs, true_inverse(noise, "local"), 1500, 8)
    for o in obs:
        val, sig = res[o.name]
        assert abs(val - exact_expectation(o, v)) <= 5 * sig


def test_same_seed_is_reproducible():
    dev = DeviceConfig(2, measurement_bitflip(0.05, 2), master_seed=13)
    obs = [PauliSum.single("ZZ")]
    a = estimate(dev, ket("00"), obs, standard_shadow_inverse("local", 2), 50, 3)
    b = estimate(dev, ket("00"), obs, standard_shadow_inverse("local", 2), 50, 3)
    assert a.to_csv() == b.to_csv()
    assert np.array_equal(a.bin_means, b.bin_means)


# result containers and warnings


def test_result_serialisation():
    res = EstimationResult(["a", "b"], np.array([0.5, -1.25]), np.array([0.01, 0.2]), 100, 5, seed=7)
    lines = res.to_csv().strip().splitlines()
    assert lines[0] == "observable,value,sigma,N,K,seed"
    assert lines[1].startswith("a,0.5,0.01,100,5,7")
    rows = json.loads(res.to_json())["rows"]
    assert rows[1] == {"observable": "b", "value": -1.25, "sigma": 0.2, "N": 100, "K": 5, "seed": 7}
    assert res["b"] == (-1.25, 0.2)


def test_negative_f_warns():
    dev = DeviceConfig(1, master_seed=0)
    with pytest.warns(RuntimeWarning, match="negative"):
        estimate(dev, ket("0"), [PauliSum.single("Z")], PTMDiagonal.global_(1, -3.0), 5, 2, B=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        estimate(dev, ket("0"), [PauliSum.single("Z")], PTMDiagonal.global_(1, 3.0), 5, 2, B=0)


def test_all_paulis_of_two_qubits_local_unbiased_noiseless():
    # every weight-1 and weight-2 Pauli on a product state, noiseless local shadows
    rho = dm(np.kron([1, 0], np.array([1, 1]) / np.sqrt(2)))
    minv = standard_shadow_inverse("local", 2)
    for a, b in itertools.product("IXYZ", repeat=2):
        if a == b == "I":
            continue
        obs = PauliSum.single(a + b)
        assert exact_mean_estimate(obs, minv, rho) == pytest.approx(exact_expectation(obs, rho), abs=1e-12)
