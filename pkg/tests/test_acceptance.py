"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line.

Tolerances are the contract's.  Combined uncertainties add the estimation
bootstrap sigma to the calibration sigma propagated through ``1/f``.
"""

import itertools
import time

import numpy as np
import pytest

from robust_shadow.calibration import build_inverse, calibrate, calibration_round_values, nearest_neighbor_patterns
from robust_shadow.channels import (
    StatePrepSpec,
    amplitude_damping,
    depolarizing,
    expected_f_global,
    expected_f_local,
    identity,
    measurement_bitflip,
    x_rotation,
    xx_rotation,
)
from robust_shadow.device import DeviceConfig
from robust_shadow.estimation import estimate, expected_estimate, single_round_estimate, standard_shadow_inverse
from robust_shadow.observables import PauliSum, tfim_hamiltonian, zz_correlator
from robust_shadow.oracle import (
    brute_force_twirl,
    clifford_threefold_twirl,
    exact_estimator_moments,
    ghz_state,
    haar_threefold_twirl,
    irrep_projectors,
    tfim_ground_state,
    weingarten,
)
from robust_shadow.stats import MoMConfig, median_of_means

pytestmark = pytest.mark.acceptance


@pytest.fixture
def report(capsys):
    def emit(crit: int, ok: bool, detail: str):
        with capsys.disabled():
            print(f"\n[criterion {crit}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail

    return emit


def var_stderr(x):
    """Sample variance and its standard error ``sqrt((m4 - s^4) / R)``."""
    x = np.asarray(x, dtype=float)
    c = x - x.mean()
    s2 = np.mean(c**2)
    return s2, np.sqrt(max(np.mean(c**4) - s2**2, 0.0) / len(x))


def projector_sigma(value, d, res_sigma, f, f_sigma):
    # v = 1/d + (p - 1/d)/f  ->  dv/df = -(v - 1/d)/f
    return float(np.hypot(res_sigma, abs(value - 1 / d) * f_sigma / abs(f)))


def pauli_sigma(value, res_sigma, f, f_sigma):
    return float(np.hypot(res_sigma, abs(value) * f_sigma / abs(f)))


# 1. twirl identity


def test_criterion_1_twirl_identity(report):
    t0 = time.perf_counter()
    worst = 0.0
    for noise in (identity(1), measurement_bitflip(0.1, 1), amplitude_damping(0.2, 1), x_rotation(np.pi / 10, 1)):
        f = expected_f_global(noise)
        worst = max(worst, np.abs(brute_force_twirl(noise, "global", 1) - np.diag([1, f, f, f])).max())
    for noise in (identity(2), measurement_bitflip(0.1, 2), amplitude_damping(0.2, 2), x_rotation(np.pi / 10, 2)):
        expect = sum(expected_f_local(noise, z) * pz for z, pz in irrep_projectors("local", 2))
        worst = max(worst, np.abs(brute_force_twirl(noise, "local", 2) - expect).max())
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-12 and dt < 10, f"max deviation {worst:.2e} (<= 1e-12), runtime {dt:.2f}s (< 10s)")


# 2. Weingarten suite


def test_criterion_2_weingarten(report):
    t0 = time.perf_counter()
    qcq = max(np.abs(w.Q @ w.c @ w.Q - w.Q).max() / np.abs(w.Q).max() for w in map(weingarten, (2, 3, 4)))
    table = np.array(
        [
            [17, 1, 1, 1, -7, -7],
            [1, 17, -7, -7, 1, 1],
            [1, -7, 17, -7, 1, 1],
            [1, -7, -7, 17, 1, 1],
            [-7, 1, 1, 1, -7, 17],
            [-7, 1, 1, 1, 17, -7],
        ]
    ) / 144
    tab = np.abs(weingarten(2).c - table).max()
    rng = np.random.default_rng(2024)
    tw = 0.0
    for _ in range(20):
        a = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        tw = max(tw, np.abs(haar_threefold_twirl(a, 2) - clifford_threefold_twirl(a)).max())
    dt = time.perf_counter() - t0
    ok = qcq <= 1e-12 and tab <= 1e-12 and tw <= 1e-12 and dt < 30
    report(2, ok, f"QcQ=Q rel err {qcq:.1e}, 1/144 table err {tab:.1e}, Haar vs Cl2 {tw:.1e}, runtime {dt:.2f}s")


# 3. calibration unbiasedness


def test_criterion_3_calibration_unbiased(report):
    p = 0.1
    n = 3
    dev = DeviceConfig(n, depolarizing(p, n), backend="stabilizer", master_seed=301)
    est = calibrate(dev, "global", 20_000, 10)
    f_true = (1 - p) / (2**n + 1)
    dev_g = abs(est.f - f_true) / float(est.sigma)

    n = 4
    p = 0.05
    dev = DeviceConfig(n, measurement_bitflip(p, n), master_seed=302)
    zs = [z for z in range(1, 2**n) if z.bit_count() <= 2]
    loc = calibrate(dev, "local", 20_000, 10, z_set=zs)
    devs = [abs(v - 3.0 ** -z.bit_count() * (1 - 2 * p) ** z.bit_count()) / s for z, v, s in zip(loc.z_set, loc.values, loc.sigma)]
    ok = dev_g <= 4 and max(devs) <= 4
    report(3, ok, f"global |f-f_true| = {dev_g:.2f} sigma; local worst of {len(devs)} patterns = {max(devs):.2f} sigma (<= 4)")


# 4. variance bounds


BUILTIN_3 = [
    identity(3),
    depolarizing(0.1, 3),
    depolarizing(0.1, 3, scope="local"),
    amplitude_damping(0.2, 3),
    measurement_bitflip(0.1, 3),
    x_rotation(np.pi / 10, 3),
    xx_rotation(0.2, 3),
]


def test_criterion_4_variance_bounds(report):
    R = 20_000
    lines, ok = [], True
    for i, noise in enumerate(BUILTIN_3):
        n = noise.n
        d = 2**n
        x = calibration_round_values(DeviceConfig(n, noise, master_seed=400 + i), "global", R)
        v, se = var_stderr(x)
        good = v <= 2 / (d - 1) ** 2 + 3 * se
        zs = list(range(1, d))
        y = calibration_round_values(DeviceConfig(n, noise, master_seed=450 + i), "local", R, zs)
        for j, z in enumerate(zs):
            vz, sz = var_stderr(y[:, j])
            good &= vz <= 3.0 ** -z.bit_count() + 3 * sz
        ok &= bool(good)
        lines.append(f"{noise.name}:{'ok' if good else 'VIOLATED'}")
    report(4, ok, f"n=3, R={R} per model, global and all local patterns: " + ", ".join(lines))


# 5. coherent-noise robustness, GHZ fidelity


def ghz_run(n, theta, Ncal, Nest, K, seed):
    noise = x_rotation(theta, n)
    proj, v = ghz_state(n)
    dev = DeviceConfig(n, noise, master_seed=seed)
    est = calibrate(dev, "global", Ncal, K)
    robust, standard = estimate(dev, proj.state, [proj], build_inverse(est), Nest, K, baseline=True)
    val, rs = robust[proj.name]
    sval, ss = standard[proj.name]
    sigma = projector_sigma(val, 2**n, rs, est.f, float(est.sigma))
    expect = expected_estimate(proj, v, noise, "global", standard_shadow_inverse("global", n))
    return val, sigma, sval, ss, expect


def test_criterion_5_coherent_noise(report):
    theta = 3 * np.pi / 25
    val, sig, sval, ss, expect = ghz_run(4, theta, 10_000, 10_000, 10, 501)
    bias = abs(expect - 1)
    main_ok = abs(val - 1) <= 0.05 and abs(sval - 1) > bias - 0.02
    trend = {4: (val, sig, sval)}
    for n, seed in ((2, 502), (6, 506)):
        v, s, sv, _, _ = ghz_run(n, theta, 3000, 3000, 10, seed)
        trend[n] = (v, s, sv)
    sizes = sorted(trend)
    std_err = [abs(trend[n][2] - 1) for n in sizes]
    grows = all(a < b for a, b in zip(std_err, std_err[1:]))
    flat = all(
        abs(trend[a][0] - trend[b][0]) <= 2 * np.hypot(trend[a][1], trend[b][1]) for a, b in itertools.combinations(sizes, 2)
    )
    detail = (
        f"n=4 RShadow {val:.4f}+-{sig:.4f} (|.-1|<=0.05), standard {sval:.4f} vs oracle {expect:.4f} "
        f"(|std-1|={abs(sval - 1):.3f} > bias-0.02={bias - 0.02:.3f}); trend n={sizes}: "
        f"standard error {[round(e, 3) for e in std_err]} growing={grows}, "
        f"RShadow {[round(trend[n][0], 3) for n in sizes]} flat within 2 sigma={flat}"
    )
    report(5, main_ok and grows and flat, detail)


# 6. cross-talk robustness, local group


def test_criterion_6_crosstalk(report):
    n = 5
    noise = xx_rotation(9 * np.pi / 100, n)
    proj, v = ghz_state(n)
    obs = [zz_correlator(n, 4, i) for i in range(4)]
    dev = DeviceConfig(n, noise, master_seed=601)
    zs = sorted(set().union(*(o.patterns for o in obs)))
    est = calibrate(dev, "local", 10_000, 10, z_set=zs)
    robust, standard = estimate(dev, proj.state, obs, build_inverse(est), 10_000, 10, baseline=True)
    f = dict(zip(est.z_set, zip(est.values, est.sigma)))
    vals, sigs, svals = [], [], []
    for o in obs:
        val, rs = robust[o.name]
        (z,) = o.patterns
        vals.append(val)
        sigs.append(pauli_sigma(val, rs, *f[z]))
        svals.append(standard[o.name][0])
    each = all(abs(a - 1) <= 4 * s for a, s in zip(vals, sigs))
    avg, avg_sig = np.mean(vals), np.sqrt(np.sum(np.square(sigs))) / len(sigs)
    std_avg = np.mean(svals)
    oracle = np.mean([expected_estimate(o, v, noise, "local", standard_shadow_inverse("local", n)) for o in obs])
    ok = each and abs(avg - 1) <= 4 * avg_sig and all(abs(s - 1) > 0.1 for s in svals)
    detail = (
        f"RShadow <Z4Zi> {[round(x, 3) for x in vals]} (avg {avg:.3f}+-{avg_sig:.3f}); "
        f"standard {[round(x, 3) for x in svals]} (avg {std_avg:.3f}, oracle {oracle:.3f}, published ~0.69)"
    )
    report(6, ok, detail)


# 7. TFIM energy


def test_criterion_7_tfim_energy(report):
    n = 8
    noise = measurement_bitflip(0.05, n)
    e0, v = tfim_ground_state(n)
    terms = [PauliSum.from_terms([(c, p.letters)], name=f"t{j}") for j, (c, p) in enumerate(tfim_hamiltonian(n).terms)]
    dev = DeviceConfig(n, noise, master_seed=701)
    zs = sorted(set(nearest_neighbor_patterns(n)) | {1 << q for q in range(n)})
    est = calibrate(dev, "local", 20_000, 10, z_set=zs)
    energy = tfim_hamiltonian(n)
    robust, standard = estimate(dev, v, [energy, *terms], build_inverse(est), 20_000, 10, baseline=True)
    val, rs = robust["energy"]
    f = dict(zip(est.z_set, zip(est.values, est.sigma)))
    # calibration part: the terms use different f_z, errors added linearly (conservative under correlation)
    cal = sum(abs(robust[t.name][0]) * f[next(iter(t.patterns))][1] / abs(f[next(iter(t.patterns))][0]) for t in terms)
    sigma = float(np.hypot(rs, cal))
    sval, ss = standard["energy"]
    bias = abs(expected_estimate(energy, v, noise, "local", standard_shadow_inverse("local", n)) - e0)
    ok = abs(val - e0) <= 4 * sigma and abs(sval - e0) > bias - 2 * ss
    detail = (
        f"exact E0={e0:.4f}; RShadow {val:.4f}+-{sigma:.4f} (|err|={abs(val - e0):.4f} <= 4 sigma); "
        f"standard {sval:.4f}+-{ss:.4f}, |err|={abs(sval - e0):.3f} > bias-2sigma={bias - 2 * ss:.3f}"
    )
    report(7, ok, detail)


# 8. state-preparation noise bracket


def test_criterion_8_sp_bracket(report):
    eps = 0.02
    noise = depolarizing(0.1, 2)
    dev = DeviceConfig(2, noise, StatePrepSpec.global_flip(eps, 2), master_seed=801)
    x = calibration_round_values(dev, "global", 100_000)
    f = expected_f_global(noise)
    m, se = x.mean(), x.std() / np.sqrt(len(x))
    g_ok = (1 - 2 * eps) * f - 3 * se <= m <= f + 3 * se

    xi = 0.02
    noise = amplitude_damping(0.1, 3)
    dev = DeviceConfig(3, noise, StatePrepSpec.local_bitflip(xi, 3), master_seed=802)
    zs = [z for z in range(1, 8) if z.bit_count() == 2]
    y = calibration_round_values(dev, "local", 200_000, zs)
    l_ok, parts = True, []
    for j, z in enumerate(zs):
        fz = expected_f_local(noise, z)
        mz, sz = y[:, j].mean(), y[:, j].std() / np.sqrt(len(y))
        l_ok &= bool((1 - 4 * xi) * fz - 3 * sz <= mz <= fz + 3 * sz)
        parts.append(f"{z:03b}: {mz:.5f}+-{sz:.5f} in [{(1 - 4 * xi) * fz:.5f}, {fz:.5f}]")
    detail = f"global mean {m:.5f}+-{se:.5f} in [{(1 - 2 * eps) * f:.5f}, {f:.5f}]; local " + "; ".join(parts)
    report(8, bool(g_ok) and l_ok, detail)


# 9. median-of-means tail


def test_criterion_9_mom_tail(report):
    delta, var, gamma = 0.1, 4.0, 0.1
    cfg = MoMConfig.from_tail(var, gamma, delta)
    assert cfg.N == int(np.ceil(34 * var / gamma**2)) and cfg.K == int(np.ceil(2 * np.log(2 / delta)))
    rng = np.random.default_rng(901)
    reps, fails = 2000, 0
    for _ in range(reps):
        x = rng.normal(1.5, np.sqrt(var), size=cfg.R)
        fails += abs(median_of_means(x, cfg) - 1.5) > gamma
    rate = fails / reps
    report(9, rate <= delta, f"N={cfg.N}, K={cfg.K}: failure rate {rate:.4f} over {reps} repetitions (<= {delta})")


# 10. noiseless shadow identity


def test_criterion_10_noiseless_identity(report):
    plus = np.array([1, 1]) / np.sqrt(2)
    states = {"|0>": np.diag([1.0, 0.0]).astype(complex), "|+>": np.outer(plus, plus).astype(complex), "I/2": np.eye(2) / 2}
    worst = 0.0
    for group in ("global", "local"):
        minv = standard_shadow_inverse(group, 1)
        for label in "XYZ":
            obs = PauliSum.single(label)
            for rho in states.values():
                mean, _ = exact_estimator_moments(lambda s: single_round_estimate(obs, minv, s), group, 1, rho)
                worst = max(worst, abs(mean - np.real(np.trace(obs.to_matrix() @ rho))))
    report(10, worst <= 1e-12, f"max |E[estimate] - Tr(O rho)| = {worst:.1e} over both groups, O in X,Y,Z, 3 states")
