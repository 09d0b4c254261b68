"""Command line: ``sexratio {run,sweep,calibrate,race,report} ...``.

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 extinction
before the horizon (outputs are still written).
"""

from __future__ import annotations

import argparse
import dataclasses
import filecmp
import json
import os
import sys
import tempfile
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from sexratio.calibration import calibrate
from sexratio.engine import Simulation, summary_values
from sexratio.environment import HarshnessSchedule
from sexratio.io import csv_text, json_text, write_atomic, write_tables
from sexratio.params import ConfigError, set_path
from sexratio.scenarios import Scenario, builtin, get_param, load_scenario_file, resolved_config, set_param
from sexratio.stats import mean_ci
from sexratio.tracking import race_configs, run_asexual, run_sexual, tracking_race

OUT_ENV = "SEXRATIO_OUT"
EXIT_CONFIG, EXIT_RUNTIME, EXIT_EXTINCT = 1, 2, 3


class Extinction(Exception):
    pass


def replicate_seeds(seed: int, n: int) -> list[int]:
    """Seed of each replicate; a single replicate uses ``seed`` itself."""
    if n == 1:
        return [int(seed)]
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)]


def _parse_set(items: Sequence[str]) -> list[tuple[str, object]]:
    out = []
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        k, v = item.split("=", 1)
        out.append((k.strip(), yaml.safe_load(v)))
    return out


def load_request_scenario(args) -> Scenario:
    if bool(args.scenario) == bool(args.config):
        raise ConfigError("give exactly one of --scenario NAME or --config PATH")
    sc = builtin(args.scenario) if args.scenario else load_scenario_file(args.config)
    for k, v in _parse_set(getattr(args, "set", None)):
        sc = set_param(sc, k, v)
    return sc


def _need_seed(args) -> int:
    if args.seed is None:
        raise ConfigError("--seed is required: every run must be reproducible from its seed, so none is picked implicitly")
    return int(args.seed)


def _out_dir(args) -> Path:
    return Path(args.out or os.environ.get(OUT_ENV) or "out")


def _formats(args) -> set:
    fm = {f.strip() for f in (args.format or "csv,json").split(",") if f.strip()}
    bad = fm - {"csv", "json"}
    if bad:
        raise ConfigError(f"unknown output format(s): {', '.join(sorted(bad))}")
    return fm


def _command_echo(args) -> dict:
    keep = ("command", "scenario", "config", "seed", "replicates", "set", "param", "grid", "budget", "drift", "asexual_set", "format")
    return {k: getattr(args, k) for k in keep if getattr(args, k, None) is not None}


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def _summarise(trajs) -> dict:
    vals = [summary_values(tr) for tr in trajs]
    names = list(vals[0])
    stats = {}
    for k in names:
        m, lo, hi = mean_ci([v[k] for v in vals])
        stats[k] = {"mean": m, "ci": [lo, hi], "values": [v[k] for v in vals]}
    return stats


def run_tracking(sc: Scenario, seeds: list[int]) -> tuple[dict, list[list]]:
    sx, ax = race_configs(sc.config)
    rows, ext = [], {"sexual": [], "asexual": []}
    for r, s in enumerate(seeds):
        for arm, fn, cfg in (("sexual", run_sexual, sx), ("asexual", run_asexual, ax)):
            tr = fn(cfg, sc.drift, s)
            ext[arm].append(tr.extinct)
            for t, n, m, o in zip(tr.times, tr.size, tr.mean_genotype, tr.optimum):
                rows.append([float(t), arm, int(n), float(m), float(o), r])
    stats = {f"p_ext_{arm}": {"mean": float(np.mean(v)), "values": v} for arm, v in ext.items()}
    return stats, rows


def cmd_run(args) -> int:
    seed = _need_seed(args)
    sc = load_request_scenario(args)
    fm = _formats(args)
    out = _out_dir(args)
    seeds = replicate_seeds(seed, args.replicates)
    stem = f"{sc.name}_seed{seed}"
    files = []
    extinct = False
    if sc.mode == "tracking":
        stats, rows = run_tracking(sc, seeds)
        if "csv" in fm:
            files.append(write_atomic(out / f"{stem}_tracking.csv", csv_text(("time", "arm", "size", "mean_genotype", "optimum", "replicate"), rows)))
    else:
        trajs = []
        for s in seeds:
            sim = Simulation(sc, s)
            trajs.append(sim.run())
        extinct = any(tr.extinct for tr in trajs)
        stats = _summarise(trajs)
        stats["extinct"]["flags"] = [bool(tr.extinct) for tr in trajs]
        stats["extinction_time"] = [tr.extinction_time for tr in trajs]
        if "csv" in fm:
            files.extend(write_tables(out, stem, trajs))
    if "json" in fm:
        summary = {
            "scenario": sc.name,
            "mode": sc.mode,
            "seed": seed,
            "replicate_seeds": seeds,
            "replicates": len(seeds),
            "statistics": stats,
            "extinct": extinct,
            "command": _command_echo(args),
            "files": [p.name for p in files],
            "resolved": resolved_config(sc),
        }
        files.append(write_atomic(out / f"{stem}_summary.json", json_text(summary)))
    for p in files:
        _log(args, f"wrote {p}")
    if extinct:
        raise Extinction("population went extinct before the horizon; partial outputs written")
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _with_value(sc: Scenario, param: str, value: float) -> Scenario:
    if param == "harshness":
        return dataclasses.replace(sc, harshness=HarshnessSchedule.constant(value))
    return set_param(sc, param, value)


def cmd_sweep(args) -> int:
    seed = _need_seed(args)
    sc = load_request_scenario(args)
    if not args.param:
        raise ConfigError("sweep needs --param")
    if args.param != "harshness":
        get_param(sc, args.param)
    grid = [float(v) for v in (args.grid or "").split(",") if v.strip()]
    if not grid:
        raise ConfigError("sweep needs a non-empty --grid (comma-separated values)")
    out = _out_dir(args)
    seeds = replicate_seeds(seed, args.replicates)
    header = ["value", "statistic", "mean", "ci_lo", "ci_hi", "failed"]
    rows, cells = [], []
    for v in grid:
        try:
            cell = _with_value(sc, args.param, v)
            trajs = [Simulation(cell, s).run() for s in seeds]
            stats = _summarise(trajs)
            failed = any(tr.extinct for tr in trajs)
        except Exception as exc:  # a failed cell is reported, the sweep goes on
            stats, failed = {}, True
            _log(args, f"cell {args.param}={v} failed: {exc}")
        cells.append({"value": v, "failed": failed, "statistics": stats})
        for name in ("sr_tb", "sr0", "t_p", "t_pQ"):
            st = stats.get(name, {"mean": float("nan"), "ci": [float("nan")] * 2})
            rows.append([v, name, st["mean"], st["ci"][0], st["ci"][1], failed])
    stem = f"{sc.name}_sweep_{args.param.replace('.', '-')}_seed{seed}"
    fm = _formats(args)
    files = []
    if "csv" in fm:
        files.append(write_atomic(out / f"{stem}.csv", csv_text(header, rows)))
    if "json" in fm:
        files.append(write_atomic(out / f"{stem}.json", json_text({
            "scenario": sc.name, "param": args.param, "grid": grid, "seed": seed, "replicate_seeds": seeds,
            "cells": cells, "command": _command_echo(args), "files": [p.name for p in files],
            "resolved": resolved_config(sc),
        })))
    for p in files:
        _log(args, f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def cmd_calibrate(args) -> int:
    seed = _need_seed(args)
    sc = load_request_scenario(args)
    spec = sc.calibration
    if args.budget is not None:
        spec = dataclasses.replace(spec, budget=int(args.budget))
    res = calibrate(sc, spec, seed)
    report = res.to_dict()
    report.update({"scenario": sc.name, "command": _command_echo(args), "resolved": resolved_config(sc)})
    path = write_atomic(_out_dir(args) / f"{sc.name}_calibration_seed{seed}.json", json_text(report))
    report["files"] = [path.name]
    write_atomic(path, json_text(report))
    _log(args, f"wrote {path}")
    _log(args, f"objective {res.objective:.4g}, feasible={res.feasible}, evaluations={res.evaluations}")
    return 0


# ---------------------------------------------------------------------------
# race
# ---------------------------------------------------------------------------


def cmd_race(args) -> int:
    seed = _need_seed(args)
    if not args.scenario and not args.config:
        args.scenario = "tracking_race"
    sc = load_request_scenario(args)
    sx, ax = race_configs(sc.config)
    for k, v in _parse_set(args.asexual_set):
        ax = set_path(ax, k, v)
    if args.drift:
        drifts = [float(v) for v in args.drift.split(",") if v.strip()]
    else:
        drifts = [0.0, sc.drift.rate, 3.0]
    if not drifts:
        raise ConfigError("--drift needs at least one value")
    results = [tracking_race(sx, ax, v, args.replicates, seed, sc.drift.diffusion) for v in drifts]
    rows = [[r.drift, r.p_ext_sexual[0], r.p_ext_sexual[1], r.p_ext_sexual[2], r.p_ext_asexual[0], r.p_ext_asexual[1], r.p_ext_asexual[2], r.significant] for r in results]
    out = _out_dir(args)
    stem = f"{sc.name}_race_seed{seed}"
    files = [write_atomic(out / f"{stem}.csv", csv_text(
        ("drift", "p_ext_sexual", "sexual_lo", "sexual_hi", "p_ext_asexual", "asexual_lo", "asexual_hi", "significant"), rows))]
    files.append(write_atomic(out / f"{stem}.json", json_text({
        "scenario": sc.name, "seed": seed, "replicates": args.replicates,
        "results": [r.to_dict() for r in results], "command": _command_echo(args),
        "files": [p.name for p in files], "resolved": resolved_config(sc),
    })))
    for p in files:
        _log(args, f"wrote {p}")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args) -> int:
    """Summarise a summary JSON; with --verify, re-run it and diff every file."""
    path = Path(args.summary)
    data = json.loads(path.read_text(encoding="utf-8"))
    cmd = data.get("command") or {}
    if not cmd:
        raise ConfigError(f"{path} does not record the command that produced it")
    print(f"{path.name}: scenario {data.get('scenario')}, seed {data.get('seed')}")
    if not args.verify:
        return 0
    with tempfile.TemporaryDirectory() as tmp:
        argv = _argv_from(cmd) + ["--out", tmp, "--quiet"]
        code = main(argv)
        if code not in (0, EXIT_EXTINCT):
            return code
        names = list(data.get("files", [])) + [path.name]
        bad = [n for n in names if not (Path(tmp) / n).exists() or not filecmp.cmp(path.parent / n, Path(tmp) / n, shallow=False)]
    if bad:
        print("verify FAILED: differing files: " + ", ".join(bad), file=sys.stderr)
        return EXIT_RUNTIME
    print(f"verify ok: {len(names)} files identical")
    return 0


def _argv_from(cmd: dict) -> list[str]:
    argv = [cmd["command"]]
    for k, v in cmd.items():
        if k == "command":
            continue
        flag = "--" + k.replace("_", "-")
        if isinstance(v, list):
            for item in v:
                argv += [flag, str(item)]
        else:
            argv += [flag, str(v)]
    return argv


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _log(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sexratio", description="Quality-driven sex-ratio population simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, replicates: int = 1):
        sp.add_argument("--scenario", help="built-in scenario name")
        sp.add_argument("--config", help="path to a scenario YAML file")
        sp.add_argument("--seed", type=int, help="root seed (required)")
        sp.add_argument("--replicates", type=int, default=replicates)
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./out)")
        sp.add_argument("--format", default="csv,json", help="comma-separated subset of csv,json")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a parameter, e.g. sensor.beta_abst=2")
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("run", help="run a scenario")
    common(sp)
    sp = sub.add_parser("sweep", help="sweep one parameter over a grid")
    common(sp, replicates=4)
    sp.add_argument("--param", help="dotted parameter path, or 'harshness' for a constant level")
    sp.add_argument("--grid", help="comma-separated values")
    sp = sub.add_parser("calibrate", help="fit a scenario's free parameters to its targets")
    common(sp)
    sp.add_argument("--budget", type=int)
    sp = sub.add_parser("race", help="sexual versus asexual tracking race")
    common(sp, replicates=200)
    sp.add_argument("--drift", help="comma-separated drift rates")
    sp.add_argument("--asexual-set", action="append", metavar="KEY=VALUE", help="override a parameter of the asexual arm only")
    sp = sub.add_parser("report", help="describe or verify a previous run")
    sp.add_argument("summary", help="summary JSON written by run/sweep/race/calibrate")
    sp.add_argument("--verify", action="store_true", help="re-run and compare outputs byte for byte")
    sp.add_argument("--quiet", action="store_true")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "calibrate": cmd_calibrate, "race": cmd_race, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        if getattr(args, "replicates", 1) is not None and getattr(args, "replicates", 1) < 1:
            raise ConfigError("--replicates must be >= 1")
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Extinction as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_EXTINCT
    except (OSError, RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
