"""Command line front end.

Subcommands:

* ``run``    one configured run, writing trace.csv, summary.json and the
             fully resolved config.json into the output directory
* ``sweep``  one run per value of a single swept axis, each in its own
             subdirectory, plus a combined sweep.csv and a manifest.json
             index
* ``verify`` the built-in identity battery, one PASS/FAIL line per check
* ``advise`` stability conditions and schedule suggestions, no run

Exit codes: 0 on success, 1 on any configuration problem (including bad
flags), 2 when a run diverged.  A diverged run still writes its partial
trace before exiting.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import ConfigError, RunConfig
from .metrics import sweep_to_csv, trace_to_csv
from .objectives import (
    QuadraticPairProblem,
    PartitionedLogistic,
    least_squares_problem,
    load_csv_dataset,
    logistic_problem,
    make_partition,
)
from .simulator import SWEEP_AXES, check_hyperparams, run, sweep

PROBLEMS = ("quadratic-pair", "least-squares", "logistic", "csv")

DEFAULTS = {
    "algorithm": "vrlsgd",
    "gamma": 0.05,
    "k": 10,
    "n_workers": 4,
    "total_iters": 1000,
    "batch_size": 1,
    "warm_up": False,
    "seed": 0,
    "easgd_alpha": None,
    "partition": "non_identical",
    "metric_stride": None,
    "diagnostics": False,
    "freeze_delta": False,
    "x0": None,
    "problem": "least-squares",
    "sigma": 0.0,
    "b_param": 1.0,
    "n_samples": 200,
    "n_features": 5,
    "n_classes": None,
    "data_seed": 1,
    "target_noise": 0.1,
    "heterogeneity": 1.0,
    "data": None,
    "threads": None,
}

CONFIG_KEYS = frozenset(DEFAULTS)


class _Parser(argparse.ArgumentParser):
    """Routes usage errors through the config-error exit code."""

    def error(self, message):
        raise ConfigError(message)


def _parse_x0(text: str) -> list[float]:
    try:
        return [float(part) for part in text.split(",")]
    except ValueError as exc:
        raise ConfigError(f"bad x0 {text!r}: expected comma-separated floats") from exc


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("run configuration")
    g.add_argument("--config", metavar="FILE", help="JSON config; explicit flags override it")
    g.add_argument("--algorithm", "-a", choices=("ssgd", "localsgd", "easgd", "vrlsgd"))
    g.add_argument("--gamma", type=float, help="learning rate")
    g.add_argument("--k", type=int, help="iterations between synchronizations")
    g.add_argument("--workers", dest="n_workers", type=int)
    g.add_argument("--iters", dest="total_iters", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--warm-up", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--seed", type=int)
    g.add_argument("--easgd-alpha", type=float, help="elastic pull strength, default 0.9/N")
    g.add_argument("--partition", choices=("identical", "non_identical"))
    g.add_argument("--metric-stride", type=int, help="trace row spacing; default ~1000 rows")
    g.add_argument("--diagnostics", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--freeze-delta", action=argparse.BooleanOptionalAction, default=None)
    g.add_argument("--x0", type=_parse_x0, help="initial point, comma-separated floats")
    g.add_argument("--threads", type=int, help="worker threads; 0 = one per worker")

    d = p.add_argument_group("problem")
    d.add_argument("--problem", choices=PROBLEMS)
    d.add_argument("--sigma", type=float, help="gradient noise level")
    d.add_argument("--b-param", type=float, help="center separation of the quadratic pair")
    d.add_argument("--samples", dest="n_samples", type=int)
    d.add_argument("--features", dest="n_features", type=int)
    d.add_argument("--classes", dest="n_classes", type=int)
    d.add_argument("--data-seed", type=int)
    d.add_argument("--target-noise", type=float)
    d.add_argument("--heterogeneity", type=float)
    d.add_argument("--data", metavar="CSV", help="dataset file for --problem csv")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="localsgd-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run and write its trace")
    _add_common_flags(p_run)
    p_run.add_argument("--out", default="out", help="output directory (default: out)")

    p_sweep = sub.add_parser("sweep", help="run one configuration per swept value")
    _add_common_flags(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--out", default="out", help="output directory (default: out)")

    p_verify = sub.add_parser("verify", help="run the identity battery")
    p_verify.add_argument("--seed", type=int, default=0)

    p_advise = sub.add_parser("advise", help="report stability conditions, no run")
    _add_common_flags(p_advise)

    return parser


def load_settings(args: argparse.Namespace) -> dict:
    """DEFAULTS, overlaid by the config file, overlaid by explicit flags."""
    settings = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            with open(path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        unknown = sorted(set(loaded) - CONFIG_KEYS)
        if unknown:
            raise ConfigError(f"config {path} has unknown keys: {', '.join(unknown)}")
        settings.update(loaded)
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def settings_to_config(settings: dict) -> RunConfig:
    x0 = settings["x0"]
    return RunConfig(
        algorithm=settings["algorithm"],
        gamma=float(settings["gamma"]),
        k=int(settings["k"]),
        n_workers=int(settings["n_workers"]),
        total_iters=int(settings["total_iters"]),
        batch_size=int(settings["batch_size"]),
        warm_up=bool(settings["warm_up"]),
        seed=int(settings["seed"]),
        easgd_alpha=settings["easgd_alpha"],
        partition=settings["partition"],
        metric_stride=settings["metric_stride"],
        diagnostics=bool(settings["diagnostics"]),
        freeze_delta=bool(settings["freeze_delta"]),
        x0=tuple(float(v) for v in x0) if x0 is not None else None,
    )


def make_problem(settings: dict):
    name = settings["problem"]
    sigma = float(settings["sigma"])
    n_workers = int(settings["n_workers"])
    if name == "quadratic-pair":
        if n_workers != 2:
            raise ConfigError("the quadratic pair is defined for exactly 2 workers")
        return QuadraticPairProblem(b_param=float(settings["b_param"]), sigma=sigma)
    if name == "least-squares":
        return least_squares_problem(
            n_workers,
            settings["partition"],
            n_samples=int(settings["n_samples"]),
            n_features=int(settings["n_features"]),
            n_classes=settings["n_classes"],
            sigma=sigma,
            data_seed=int(settings["data_seed"]),
            target_noise=float(settings["target_noise"]),
            heterogeneity=float(settings["heterogeneity"]),
        )
    if name == "logistic":
        return logistic_problem(
            n_workers,
            settings["partition"],
            n_samples=int(settings["n_samples"]),
            n_features=int(settings["n_features"]),
            n_classes=settings["n_classes"],
            sigma=sigma,
            data_seed=int(settings["data_seed"]),
        )
    if name == "csv":
        if not settings["data"]:
            raise ConfigError("--problem csv needs --data FILE")
        features, labels = load_csv_dataset(settings["data"])
        shards = make_partition(labels, n_workers, settings["partition"])
        return PartitionedLogistic(features, labels, shards, sigma=sigma)
    raise ConfigError(f"unknown problem {name!r}")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _warn_conditions(cfg: RunConfig, problem) -> None:
    report = check_hyperparams(cfg, problem)
    for cond in report.conditions:
        if not cond.satisfied:
            print(
                f"warning: condition {cond.name} violated "
                f"({cond.lhs:g} > {cond.rhs:g}); running anyway",
                file=sys.stderr,
            )


def _write_run_outputs(out_dir: Path, settings: dict, result) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trace.csv").write_text(trace_to_csv(result.trace))
    _write_json(out_dir / "summary.json", result.summary())
    _write_json(out_dir / "config.json", settings)


def cmd_run(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    cfg = settings_to_config(settings)
    cfg.validate()
    problem = make_problem(settings)
    _warn_conditions(cfg, problem)
    result = run(problem, cfg, threads=settings["threads"])
    _write_run_outputs(Path(args.out), settings, result)
    print(json.dumps(result.summary(), sort_keys=True))
    if result.diverged:
        print(f"run diverged at iteration {result.diverged_at}", file=sys.stderr)
        return 2
    return 0


def _sweep_values(axis: str, raw: str) -> list:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ConfigError("--values must list at least one value")
    if axis == "algorithm":
        return parts
    if axis in ("gamma", "b_param"):
        return [float(p) for p in parts]
    try:
        return [int(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"axis {axis} needs integer values, got {raw!r}") from exc


def cmd_sweep(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    base_cfg = settings_to_config(settings)
    values = _sweep_values(args.axis, args.values)

    def build(cfg: RunConfig, b_param):
        cell = dict(settings)
        cell["n_workers"] = cfg.n_workers
        if b_param is not None:
            cell["b_param"] = b_param
        return make_problem(cell)

    results = sweep(base_cfg, args.axis, values, build, threads=settings["threads"])
    out_dir = Path(args.out)
    cells = []
    traced = []
    any_diverged = False
    for value, cfg, result in results:
        cell_dir = out_dir / f"{args.axis}-{value}"
        cell_settings = dict(settings)
        cell_settings.update(
            algorithm=cfg.algorithm,
            gamma=cfg.gamma,
            k=cfg.k,
            n_workers=cfg.n_workers,
            batch_size=cfg.batch_size,
            warm_up=cfg.warm_up,
            freeze_delta=cfg.freeze_delta,
        )
        if args.axis == "b_param":
            cell_settings["b_param"] = float(value)
        _write_run_outputs(cell_dir, cell_settings, result)
        summary = result.summary()
        cells.append({"value": value, "path": cell_dir.name, "summary": summary})
        traced.append((value, result.trace))
        any_diverged = any_diverged or result.diverged
        print(f"{args.axis}={value}: {json.dumps(summary, sort_keys=True)}")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(sweep_to_csv(args.axis, traced))
    _write_json(out_dir / "manifest.json", {"axis": args.axis, "cells": cells})
    return 2 if any_diverged else 0


def cmd_verify(args: argparse.Namespace) -> int:
    checks = run_identity_battery(args.seed)
    failed = 0
    for name, ok, detail in checks:
        verdict = "PASS" if ok else "FAIL"
        print(f"check {name}: {verdict} ({detail})")
        failed += 0 if ok else 1
    total = len(checks)
    print(f"{total - failed}/{total} checks passed")
    return 0 if failed == 0 else 1


def run_identity_battery(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Exercise the algebraic identities on a small heterogeneous problem.

    Returns (name, passed, detail) per check.  Residual checks rerun the
    engine with diagnostics on; equivalence checks compare full traces of
    paired runs byte for byte.
    """
    problem = least_squares_problem(
        4, "non_identical", n_samples=64, n_features=4, sigma=0.5, data_seed=seed + 1
    )
    base = RunConfig(
        algorithm="vrlsgd",
        gamma=0.02,
        k=5,
        n_workers=4,
        total_iters=200,
        seed=seed,
        diagnostics=True,
    )
    r = run(problem, base)
    checks = [
        (
            "correction-sum-zero",
            r.max_delta_sum_inf <= 1e-10,
            f"max |sum_i delta_i|_inf = {r.max_delta_sum_inf:.3e}, tol 1e-10",
        ),
        (
            "averaged-iterate-recursion",
            r.diag.max_avg_recursion_residual <= 1e-12,
            f"max residual = {r.diag.max_avg_recursion_residual:.3e}, tol 1e-12",
        ),
        (
            "correction-window-form",
            r.diag.max_delta_window_diff <= 1e-9,
            f"max diff = {r.diag.max_delta_window_diff:.3e}, tol 1e-9",
        ),
        (
            "direction-window-form",
            r.diag.max_v_window_diff <= 1e-9,
            f"max diff = {r.diag.max_v_window_diff:.3e}, tol 1e-9",
        ),
    ]

    def same_trace(cfg_a: RunConfig, cfg_b: RunConfig, **kw_b) -> tuple[bool, str]:
        a = run(problem, cfg_a)
        b = run(problem, cfg_b, **kw_b)
        csv_a = trace_to_csv(a.trace)
        csv_b = trace_to_csv(b.trace)
        if csv_a == csv_b:
            return True, "traces byte-identical"
        rows_a = csv_a.splitlines()
        rows_b = csv_b.splitlines()
        for i, (la, lb) in enumerate(zip(rows_a, rows_b)):
            if la != lb:
                return False, f"traces differ first at row {i}"
        return False, f"trace lengths differ ({len(rows_a)} vs {len(rows_b)})"

    ok, detail = same_trace(
        base.with_overrides(algorithm="vrlsgd", k=1, diagnostics=False),
        base.with_overrides(algorithm="ssgd", k=1, diagnostics=False),
    )
    checks.append(("period-one-matches-ssgd", ok, detail))

    ok, detail = same_trace(
        base.with_overrides(freeze_delta=True, diagnostics=False),
        base.with_overrides(algorithm="localsgd", diagnostics=False),
    )
    checks.append(("zero-correction-matches-localsgd", ok, detail))

    warm = base.with_overrides(warm_up=True, diagnostics=False)
    a = run(problem, warm)
    b = run(problem, warm, warm_up_direct=True)
    csv_a = trace_to_csv(a.trace)
    csv_b = trace_to_csv(b.trace)
    checks.append(
        (
            "warm-up-paths-agree",
            csv_a == csv_b,
            "traces byte-identical" if csv_a == csv_b else "warm-up paths disagree",
        )
    )
    return checks


def cmd_advise(args: argparse.Namespace) -> int:
    settings = load_settings(args)
    cfg = settings_to_config(settings)
    cfg.validate()
    problem = make_problem(settings)
    report = check_hyperparams(cfg, problem)
    print(report.render())
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "run": cmd_run,
            "sweep": cmd_sweep,
            "verify": cmd_verify,
            "advise": cmd_advise,
        }[args.command]
        return handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
