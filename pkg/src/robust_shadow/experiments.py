"""Config-driven experiment pipelines: calibrate, estimate, compare to exact values.

Configuration files are TOML::

    kind = "ghz-fidelity"        # ghz-fidelity | ghz-size-sweep | tfim-correlation
                                 # | tfim-energy | calibration-only | custom
    n = 4
    group = "global"             # global | local (default depends on kind)
    seed = 7
    backend = "auto"             # auto | dense | stabilizer
    bootstrap = 200              # bootstrap resamples for sigma
    tolerance = 0.05             # absolute tolerance for pass/fail
    nsigma = 4.0                 # ... or this many bootstrap sigma, whichever is larger
    levels = [0.05, 0.1, 0.2]    # optional sweep of the noise model's main parameter
    sizes = [2, 4, 6]            # ghz-size-sweep / tfim-energy system sizes
    state = "ghz"                # custom / estimate: ghz | tfim | zero | plus
    observables = "obs.txt"      # custom / estimate: observable file
    output = "out/run1"          # output directory

    [noise]
    name = "x_rotation"          # identity | depolarizing | amplitude_damping
    theta = "3*pi/25"            # | measurement_bitflip | x_rotation | xx_rotation

    [state_prep]
    xi = 0.02                    # per-qubit flip of |0>, or eps = ... for |1..1> admixture

    [calibration]
    N = 2000
    K = 10
    z_set = "observables"        # observables | nearest-neighbor | "weight<=2" | ["0011", ...]

    [estimation]
    N = 2000
    K = 10

    [tfim]
    J = 1.0
    h = 1.0

Numbers may be given as arithmetic strings in ``pi`` (``"3*pi/25"``).
Desk-scale defaults use ``R = 2*10**4`` rounds per phase; ``paper_scale``
switches both phases to ``N = 10**4, K = 10``.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import math
import operator
import os
from dataclasses import asdict, dataclass, field
from typing import Any, Sequence

import numpy as np

from . import oracle
from .calibration import (
    CalibrationEstimate,
    NonInvertibleChannelError,
    build_inverse,
    calibrate,
    nearest_neighbor_patterns,
    patterns_up_to_weight,
)
from .channels import (
    DENSE_LIMIT,
    ChannelValidationError,
    NoiseSpec,
    StatePrepSpec,
    expected_f_global,
    expected_f_local,
    noise_from_config,
)
from .device import GROUPS, DeviceConfig
from .estimation import estimate, expected_estimate, standard_shadow_inverse
from .observables import (
    Observable,
    PauliSum,
    StabilizerProjector,
    ghz_projector,
    load_observables,
    tfim_hamiltonian,
    zz_correlator,
)
from .pauli import PauliString, popcount

KINDS = ("ghz-fidelity", "ghz-size-sweep", "tfim-correlation", "tfim-energy", "calibration-only", "custom")
STATES = ("ghz", "tfim", "zero", "plus")
DESK_SCALE = (2000, 10)
PAPER_SCALE = (10000, 10)
MAIN_PARAM = {
    "depolarizing": "p",
    "measurement_bitflip": "p",
    "amplitude_damping": "gamma",
    "x_rotation": "theta",
    "xx_rotation": "theta",
}
_DEFAULT_GROUP = {
    "ghz-fidelity": "global",
    "ghz-size-sweep": "global",
    "tfim-correlation": "local",
    "tfim-energy": "local",
    "calibration-only": "global",
    "custom": "global",
}


class ConfigError(ValueError):
    """Invalid experiment configuration (raised before any sampling)."""


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(v) -> float:
    """Float from a number or a small arithmetic expression in ``pi``."""
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v)
    if not isinstance(v, str):
        raise ConfigError(f"expected a number, got {v!r}")

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            x = ev(node.operand)
            return -x if isinstance(node.op, ast.USub) else x
        raise ConfigError(f"unsupported expression {v!r}")

    try:
        return ev(ast.parse(v, mode="eval"))
    except SyntaxError:
        raise ConfigError(f"cannot parse number {v!r}") from None


@dataclass
class ExperimentConfig:
    kind: str = "ghz-fidelity"
    n: int = 4
    group: str | None = None
    noise: dict = field(default_factory=dict)
    levels: list | None = None
    sizes: list | None = None
    state_prep: dict = field(default_factory=dict)
    calibration: dict = field(default_factory=dict)
    estimation: dict = field(default_factory=dict)
    state: str = "ghz"
    observables: str | None = None
    tfim: dict = field(default_factory=dict)
    seed: int = 0
    backend: str = "auto"
    bootstrap: int = 200
    tolerance: float = 0.05
    nsigma: float = 4.0
    workers: int = 1
    paper_scale: bool = False
    output: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(d) - known)
        if extra:
            raise ConfigError(f"unknown config keys: {extra}")
        cfg = cls(**d)
        if cfg.group is None:
            cfg.group = _DEFAULT_GROUP.get(cfg.kind, "global")
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    # resolved views

    @property
    def system_sizes(self) -> list[int]:
        if self.kind in ("ghz-size-sweep", "tfim-energy") and self.sizes:
            return [int(s) for s in self.sizes]
        return [int(self.n)]

    def phase_plan(self, phase: str) -> tuple[int, int]:
        sec = self.calibration if phase == "calibration" else self.estimation
        if self.paper_scale:
            return PAPER_SCALE
        return int(sec.get("N", DESK_SCALE[0])), int(sec.get("K", DESK_SCALE[1]))

    def noise_points(self, n: int) -> list[tuple[float | None, NoiseSpec]]:
        """``(level, channel)`` for every requested noise level at size ``n``."""
        base = {k: (parse_number(v) if k not in ("name", "scope", "pairs") else v) for k, v in self.noise.items()}
        if not base or base.get("name") == "identity":
            return [(None, noise_from_config(None, n))]
        if self.levels is None:
            key = MAIN_PARAM.get(base["name"])
            return [(base.get(key) if key else None, noise_from_config(base, n))]
        key = MAIN_PARAM.get(base["name"])
        if key is None:
            raise ConfigError(f"noise model {base['name']!r} has no sweepable parameter")
        out = []
        for lv in self.levels:
            lv = parse_number(lv)
            out.append((lv, noise_from_config({**base, key: lv}, n)))
        return out

    def state_prep_spec(self, n: int) -> StatePrepSpec:
        sp = self.state_prep or {}
        if "xi" in sp and "eps" in sp:
            raise ConfigError("state_prep takes either xi (local) or eps (global), not both")
        if "xi" in sp:
            return StatePrepSpec.local_bitflip(parse_number(sp["xi"]), n)
        if "eps" in sp:
            return StatePrepSpec.global_flip(parse_number(sp["eps"]), n)
        if sp:
            raise ConfigError(f"unknown state_prep keys {sorted(sp)}")
        return StatePrepSpec.ideal(n)

    def validate(self) -> None:
        """Check every parameter range; never samples."""
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {list(KINDS)}")
        if self.group not in GROUPS:
            raise ConfigError(f"group must be one of {list(GROUPS)}")
        if self.backend not in ("auto", "dense", "stabilizer"):
            raise ConfigError("backend must be auto, dense or stabilizer")
        if self.kind.startswith("ghz") and self.group != "global":
            raise ConfigError("GHZ fidelity experiments estimate a stabilizer projector and need the global group")
        for n in self.system_sizes:
            if not 1 <= n <= DENSE_LIMIT:
                raise ConfigError(f"system size {n} outside 1..{DENSE_LIMIT} (exact reference values need dense states)")
            if self.kind.startswith("tfim") and n < 2:
                raise ConfigError("TFIM experiments need n >= 2")
            try:
                self.noise_points(n)
                self.state_prep_spec(n)
            except (ChannelValidationError, ValueError, TypeError, KeyError) as exc:
                raise ConfigError(f"bad noise / state_prep settings: {exc}") from None
        for phase in ("calibration", "estimation"):
            N, K = self.phase_plan(phase)
            if N < 1 or K < 1:
                raise ConfigError(f"{phase}: N and K must be positive")
        if self.bootstrap < 0 or self.tolerance < 0 or self.nsigma < 0 or self.workers < 1:
            raise ConfigError("bootstrap, tolerance and nsigma must be non-negative, workers positive")
        if self.state not in STATES:
            raise ConfigError(f"state must be one of {list(STATES)}")
        if self.kind == "custom" and not self.observables:
            raise ConfigError("custom experiments need an observables file")
        zs = self.calibration.get("z_set")
        if zs is not None and not isinstance(zs, list) and zs not in ("observables", "nearest-neighbor") and not str(zs).startswith("weight<="):
            raise ConfigError(f"unrecognised z_set {zs!r}")


def load_config(path) -> dict:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def merge_overrides(base: dict, overrides: dict) -> dict:
    """Dotted-key overrides (``calibration.N``) on top of a config dict."""
    out = json.loads(json.dumps(base))
    for key, val in overrides.items():
        if val is None:
            continue
        parts = key.split(".")
        node = out
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return out


# states, observables, calibration patterns


def target_state(cfg: ExperimentConfig, n: int, kind: str | None = None) -> tuple[Any, np.ndarray]:
    """``(state for the device, dense vector for the exact values)``."""
    name = {"ghz-fidelity": "ghz", "ghz-size-sweep": "ghz", "tfim-correlation": "tfim", "tfim-energy": "tfim"}.get(
        kind or cfg.kind, cfg.state
    )
    if name == "ghz":
        proj, vec = oracle.ghz_state(n)
        return proj.state, vec
    if name == "tfim":
        _, vec = oracle.tfim_ground_state(n, parse_number(cfg.tfim.get("J", 1.0)), parse_number(cfg.tfim.get("h", 1.0)))
        return vec, vec
    if name == "zero":
        vec = np.zeros(2**n, dtype=complex)
        vec[0] = 1
        return vec, vec
    vec = np.full(2**n, 2 ** (-n / 2), dtype=complex)
    return vec, vec


def experiment_observables(cfg: ExperimentConfig, n: int) -> list[Observable]:
    J = parse_number(cfg.tfim.get("J", 1.0))
    h = parse_number(cfg.tfim.get("h", 1.0))
    if cfg.kind in ("ghz-fidelity", "ghz-size-sweep"):
        return [ghz_projector(n, "ghz_fidelity")]
    if cfg.kind == "tfim-correlation":
        return [zz_correlator(n, 0, i) for i in range(1, n)]
    if cfg.kind == "tfim-energy":
        terms = [PauliSum.from_terms([(J, PauliString.from_sites(n, {i: "Z", i + 1: "Z"}).letters)], f"J*Z{i}Z{i + 1}") for i in range(n - 1)]
        terms += [PauliSum.from_terms([(h, PauliString.from_sites(n, {i: "X"}).letters)], f"h*X{i}") for i in range(n)]
        return terms + [tfim_hamiltonian(n, J, h)]
    if cfg.kind == "custom":
        obs = load_observables(cfg.observables)
        bad = [o.name for o in obs if o.n != n]
        if bad:
            raise ConfigError(f"observables {bad} do not act on n={n} qubits")
        return obs
    return []


def calibration_patterns(cfg: ExperimentConfig, n: int, observables: Sequence[Observable] = ()) -> list[int] | None:
    if cfg.group != "local":
        return None
    spec = cfg.calibration.get("z_set", "observables" if observables else "weight<=2")
    if isinstance(spec, list):
        zs = []
        for s in spec:
            if len(s) != n or set(s) - {"0", "1"}:
                raise ConfigError(f"z pattern {s!r} is not an {n}-bit string")
            zs.append(int(s, 2))
        return zs
    if spec == "nearest-neighbor":
        return nearest_neighbor_patterns(n)
    if spec == "observables":
        pats: set[int] = set()
        for o in observables:
            pats |= (o.to_pauli_sum() if isinstance(o, StabilizerProjector) else o).patterns
        return sorted(pats, key=lambda z: (popcount(z), -z))
    return patterns_up_to_weight(n, int(str(spec).split("<=")[1]))


def make_device(cfg: ExperimentConfig, n: int, noise: NoiseSpec) -> DeviceConfig:
    return DeviceConfig(n, noise, cfg.state_prep_spec(n), cfg.backend, int(cfg.seed))


# pipelines


def _passed(value: float, truth: float, sigma: float, cfg: ExperimentConfig) -> bool:
    return bool(abs(value - truth) <= max(cfg.tolerance, cfg.nsigma * sigma))


def run_calibration(cfg: ExperimentConfig, n: int, noise: NoiseSpec, observables=()) -> CalibrationEstimate:
    N, K = cfg.phase_plan("calibration")
    zs = calibration_patterns(cfg, n, observables)
    return calibrate(make_device(cfg, n, noise), cfg.group, N, K, zs, B=cfg.bootstrap, workers=cfg.workers)


def calibration_rows(cfg: ExperimentConfig, est: CalibrationEstimate, noise: NoiseSpec, level) -> list[dict]:
    rows = []
    pats = [0] if est.group == "global" else est.z_set
    for z in pats:
        expect = expected_f_global(noise) if est.group == "global" else expected_f_local(noise, z)
        val = est.f if est.group == "global" else est.coefficient(z)
        sig = est.sigma_of(z)
        rows.append(
            {
                "n": est.n,
                "noise": noise.name,
                "level": level,
                "pattern": "f" if est.group == "global" else format(z, f"0{est.n}b"),
                "f_hat": float(val),
                "sigma": float(sig),
                "expected": float(expect),
                # the exact coefficient ignores state-preparation noise, which biases f low
                "passed": bool(abs(val - expect) <= cfg.nsigma * sig + 1e-12) if cfg.state_prep_spec(est.n).is_ideal else None,
            }
        )
    return rows


def estimation_rows(
    cfg: ExperimentConfig,
    n: int,
    noise: NoiseSpec,
    level,
    est: CalibrationEstimate,
    observables: Sequence[Observable],
    state,
    vec: np.ndarray,
) -> list[dict]:
    N, K = cfg.phase_plan("estimation")
    base = {"n": n, "noise": noise.name, "level": level}
    try:
        minv = build_inverse(est)
    except NonInvertibleChannelError as exc:
        return [{**base, "observable": o.name, "error": str(exc), "passed": False} for o in observables]
    robust, standard = estimate(
        make_device(cfg, n, noise), state, observables, minv, N, K, B=cfg.bootstrap, workers=cfg.workers, baseline=True
    )
    standard_inverse = standard_shadow_inverse(cfg.group, n)
    rows = []
    for o in observables:
        truth = oracle.exact_expectation(o, vec)
        r, rs = robust[o.name]
        s, ss = standard[o.name]
        biased = expected_estimate(o, vec, noise, cfg.group, standard_inverse)
        rows.append(
            {
                **base,
                "observable": o.name,
                "truth": truth,
                "rshadow": r,
                "rshadow_sigma": rs,
                "standard": s,
                "standard_sigma": ss,
                "standard_expected": biased,
                "passed": _passed(r, truth, rs, cfg),
            }
        )
    return rows


def run_experiment(cfg: ExperimentConfig, log=None) -> dict:
    """Full pipeline; returns the JSON-ready summary with one row per point."""
    cfg.validate()
    rows: list[dict] = []
    calibrations = []
    for n in cfg.system_sizes:
        observables = experiment_observables(cfg, n)
        state = vec = None
        if observables:
            state, vec = target_state(cfg, n)
        for level, noise in cfg.noise_points(n):
            if log:
                log(f"n={n} noise={noise.name} level={level}: calibrating")
            est = run_calibration(cfg, n, noise, observables)
            calibrations.append(est.to_dict())
            if cfg.kind == "calibration-only":
                rows += calibration_rows(cfg, est, noise, level)
                continue
            if log:
                log(f"n={n} noise={noise.name} level={level}: estimating {len(observables)} observables")
            rows += estimation_rows(cfg, n, noise, level, est, observables, state, vec)
    checked = [r["passed"] for r in rows if r.get("passed") is not None]
    return {
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "rows": rows,
        "calibrations": calibrations,
        "passed": all(checked),
    }


# output


def rows_to_csv(rows: Sequence[dict]) -> str:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else repr(r[k]) if isinstance(r.get(k), float) else r[k]) for k in cols})
    return buf.getvalue()


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_outputs(summary: dict, out_dir) -> tuple[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    js = os.path.join(out_dir, "summary.json")
    cs = os.path.join(out_dir, "results.csv")
    with open(js, "w", encoding="utf-8") as fh:
        fh.write(dumps(summary))
    with open(cs, "w", encoding="utf-8") as fh:
        fh.write(rows_to_csv(summary["rows"]))
    return js, cs
