"""Command-line entry point: ``robust-shadow {calibrate,estimate,experiment,plan}``.

Every subcommand that runs the device reads an experiment config (see
``robust_shadow.experiments`` for the schema); flags override file keys and
``--set key=value`` overrides any (dotted) key.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .calibration import (
    CalibrationEstimate,
    InfeasiblePlanError,
    NonInvertibleChannelError,
    build_inverse,
    plan_samples,
)
from .channels import ChannelValidationError
from .estimation import GroupMismatchError
from .experiments import (
    ConfigError,
    ExperimentConfig,
    calibration_rows,
    dumps,
    estimation_rows,
    load_config,
    merge_overrides,
    rows_to_csv,
    run_calibration,
    run_experiment,
    target_state,
    write_outputs,
)
from .observables import ObservableError, load_observables
from .pauli import MissingCoefficientError

EXIT_FAIL = 1
EXIT_USAGE = 2


def _value(text: str):
    try:
        import tomllib
    except ModuleNotFoundError:
        import tomli as tomllib
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML experiment config")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output path")
    p.add_argument("--workers", type=int, help="worker processes for sampling")
    p.add_argument("--paper-scale", action="store_true", default=None, help="use N=10^4, K=10 for both phases")
    p.add_argument("--n", type=int, help="number of qubits")
    p.add_argument("--group", choices=["global", "local"])
    p.add_argument("--backend", choices=["auto", "dense", "stabilizer"])
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key (dotted)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="robust-shadow", description="Noise-robust classical shadow estimation")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="estimate the twirled measurement channel")
    _common(p)

    p = sub.add_parser("estimate", help="estimate observables with a calibration file")
    _common(p)
    p.add_argument("--calibration", required=True, help="calibration JSON from 'calibrate'")
    p.add_argument("--observables", help="observable file (overrides the config)")

    p = sub.add_parser("experiment", help="calibrate, estimate and compare to exact values")
    _common(p)
    p.add_argument("--kind", help="experiment kind")

    p = sub.add_parser("plan", help="calibration sample sizes for a target accuracy")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--fz", type=float, required=True, help="Z-basis fidelity (per qubit for the local group)")
    p.add_argument("--group", choices=["global", "local"], default="global")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, help="locality (local group)")
    p.add_argument("--variant", choices=["proof", "statement"], default="proof")
    return ap


def resolve_config(args) -> ExperimentConfig:
    base = load_config(args.config) if args.config else {}
    if args.command in ("calibrate", "estimate"):
        # the experiment kind is irrelevant here; avoid the GHZ-only group restriction
        base.setdefault("kind", "calibration-only")
    over = {
        "seed": args.seed,
        "workers": args.workers,
        "paper_scale": args.paper_scale,
        "n": args.n,
        "group": args.group,
        "backend": args.backend,
        "kind": getattr(args, "kind", None),
        "observables": getattr(args, "observables", None),
    }
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key.strip()] = _value(val.strip())
    cfg = ExperimentConfig.from_dict(merge_overrides(base, over))
    cfg.validate()
    return cfg


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _table(rows, cols) -> str:
    def fmt(v):
        if isinstance(v, float):
            return f"{v:.5f}"
        return "" if v is None else str(v)

    cells = [[c for c in cols]] + [[fmt(r.get(c)) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    return "\n".join("  ".join(x.ljust(w) for x, w in zip(row, widths)) for row in cells) + "\n"


def cmd_calibrate(args) -> int:
    cfg = resolve_config(args)
    if cfg.levels and len(cfg.levels) > 1:
        raise ConfigError("calibrate runs one noise point; drop 'levels' or use 'experiment'")
    level, noise = cfg.noise_points(cfg.n)[0]
    est = run_calibration(cfg, cfg.n, noise)
    out = args.out or (f"{cfg.output}/calibration.json" if cfg.output else None)
    _emit(est.to_json(indent=2, sort_keys=True) + "\n", out)
    report = sys.stdout if out else sys.stderr
    report.write(_table(calibration_rows(cfg, est, noise, level), ["pattern", "f_hat", "sigma", "expected"]))
    try:
        build_inverse(est)
    except NonInvertibleChannelError as exc:
        report.write(f"warning: {exc}\n")
    return 0


def cmd_estimate(args) -> int:
    cfg = resolve_config(args)
    est = CalibrationEstimate.load(args.calibration)
    if est.group != cfg.group:
        raise GroupMismatchError(f"calibration file is for the {est.group} group but the config asks for {cfg.group}")
    if est.n != cfg.n:
        raise ConfigError(f"calibration file has n={est.n} but the config has n={cfg.n}")
    if not cfg.observables:
        raise ConfigError("estimate needs --observables or an 'observables' config key")
    observables = load_observables(cfg.observables)
    state, vec = target_state(cfg, cfg.n, kind="custom")
    level, noise = cfg.noise_points(cfg.n)[0]
    rows = estimation_rows(cfg, cfg.n, noise, level, est, observables, state, vec)
    errors = [r["error"] for r in rows if "error" in r]
    if errors:
        raise NonInvertibleChannelError(errors[0])
    out = args.out or (f"{cfg.output}/estimates.csv" if cfg.output else None)
    _emit(rows_to_csv(rows), out)
    if out:
        sys.stdout.write(_table(rows, ["observable", "rshadow", "rshadow_sigma", "standard", "standard_sigma", "truth"]))
    return 0


def cmd_experiment(args) -> int:
    cfg = resolve_config(args)
    summary = run_experiment(cfg, log=lambda m: print(m, file=sys.stderr))
    out = args.out or cfg.output
    if out:
        js, cs = write_outputs(summary, out)
        print(f"wrote {js} and {cs}")
    else:
        sys.stdout.write(dumps(summary))
    cols = (
        ["n", "level", "pattern", "f_hat", "sigma", "expected", "passed"]
        if cfg.kind == "calibration-only"
        else ["n", "level", "observable", "truth", "rshadow", "rshadow_sigma", "standard", "standard_sigma", "passed"]
    )
    sys.stderr.write(_table(summary["rows"], cols))
    if not summary["passed"]:
        print("FAIL: at least one estimate is outside the declared tolerance", file=sys.stderr)
        return EXIT_FAIL
    return 0


def cmd_plan(args) -> int:
    plan = plan_samples(args.eps, args.delta, args.fz, args.group, args.n, args.k, args.variant)
    print(json.dumps({"N": plan.N, "K": plan.K, "R": plan.R, "R_bound": plan.R_bound, "variant": args.variant}))
    return 0


COMMANDS = {"calibrate": cmd_calibrate, "estimate": cmd_estimate, "experiment": cmd_experiment, "plan": cmd_plan}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            return COMMANDS[args.command](args)
    except (
        ConfigError,
        ChannelValidationError,
        ObservableError,
        GroupMismatchError,
        MissingCoefficientError,
        NonInvertibleChannelError,
        InfeasiblePlanError,
        OSError,
    ) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
