"""Command-line front end: generate, train, evaluate, sweep.

`generate` writes the scenario artifacts (network file, arrival model,
pickup counts, sampled demand days). `train` runs forward-pass value
training and saves the table plus a per-iteration log. `evaluate` runs the
configured policies over paired replicate days at each sweep point using one
fixed table. `sweep` trains a fresh table per sweep point, then evaluates.

All evaluation outputs are plain CSV: one per-epoch file per (point, policy,
replicate) plus a merged summary.csv with mean and standard deviation of
served requests over replicates and the percentage improvement of the
value-guided policy over the myopic baseline, measured against requests seen.

Everything is deterministic given the config: demand days use seeds derived
from (seed, replicate), fleet placements from (seed, replicate) on a separate
stream, training from (seed, iteration). Exit codes: 0 success, 1 bad
configuration, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import math
import multiprocessing
import os
import sys

import numpy as np

from . import __version__
from .config import (
    CONFIG_TEMPLATE,
    ConfigError,
    ExperimentConfig,
    build_scenario,
    load_config,
    pickup_counts_from_model,
    slugify,
    sweep_points,
)
from .demand import DemandError, load_requests_path, sample_path, save_model, save_requests_csv
from .matching import MatchingError
from .network import NetworkError, save_network, save_pickup_counts
from .routing import RoutingError
from .simulate import Policy, run_episode
from .training import TrainingConfig, load_training_log, train
from .values import ValueTable


def _path_seed(master: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(replicate), 2])


def _fleet_seed(master: int, replicate: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(master), int(replicate), 3])


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------------------
# generate

def cmd_generate(cfg: ExperimentConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    scenario = build_scenario(cfg)
    net_path = os.path.join(cfg.out_dir, "network.txt")
    save_network(scenario.net, net_path)
    _say(args, f"wrote {net_path}")

    model_path = os.path.join(cfg.out_dir, "model.txt")
    save_model(scenario.model, model_path)
    _say(args, f"wrote {model_path}")

    counts_path = os.path.join(cfg.out_dir, "pickup_counts.txt")
    save_pickup_counts(pickup_counts_from_model(scenario.model), counts_path)
    _say(args, f"wrote {counts_path}")

    for k in range(cfg.replicates):
        path = sample_path(scenario.model, _path_seed(cfg.seed, k))
        req_path = os.path.join(cfg.out_dir, f"requests_rep{k}.csv")
        save_requests_csv(path, req_path)
        _say(args, f"wrote {req_path} ({path.total} requests)")
    return 0


# ---------------------------------------------------------------------------
# train

def _train_one(cfg: ExperimentConfig, table_out: str, log_out: str,
               resume: bool, args) -> None:
    scenario = build_scenario(cfg)
    table = None
    start_iteration = 1
    log_mode = "w"
    if resume:
        if not (os.path.exists(table_out) and os.path.exists(log_out)):
            raise ConfigError("--resume needs an existing table and log")
        table = ValueTable(scenario.hierarchy, scenario.n_epochs, scenario.aux)
        table.load(table_out)
        logs = load_training_log(log_out)
        start_iteration = (logs[-1].iteration + 1) if logs else 1
        log_mode = "a"
    tcfg = TrainingConfig(iterations=cfg.iterations, seed=cfg.seed)
    with open(log_out, log_mode) as fh:
        if log_mode == "w":
            fh.write("iteration,requests_seen,requests_served,mean_dual,"
                     "table_entries\n")
        table, logs = train(scenario, tcfg, table=table,
                            start_iteration=start_iteration, log_fh=fh)
    table.save(table_out)
    last = logs[-1]
    _say(args, f"trained iterations {start_iteration}.."
               f"{start_iteration + cfg.iterations - 1}: "
               f"served {last.requests_served}/{last.requests_seen} last day, "
               f"{last.table_entries} table entries")


def cmd_train(cfg: ExperimentConfig, args) -> int:
    os.makedirs(cfg.out_dir, exist_ok=True)
    table_out = args.table_out or os.path.join(cfg.out_dir, "table.txt")
    log_out = args.log_out or os.path.join(cfg.out_dir, "training_log.csv")
    _train_one(cfg, table_out, log_out, args.resume, args)
    _say(args, f"wrote {table_out}")
    _say(args, f"wrote {log_out}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / sweep

def _validate_requests_files(cfg: ExperimentConfig) -> None:
    """Fail fast on recorded demand days that don't fit the horizon."""
    for f in cfg.requests_files:
        p = load_requests_path(f, n_epochs=cfg.n_epochs)
        if any(row[0] > cfg.n_epochs for row in p.rows):
            raise ConfigError(f"{f}: request epoch beyond n_epochs")


def _episode_task(item):
    """Run all policies on one (point, replicate) with paired seeds.

    Returns (point_idx, replicate, {policy: (seen, served)}). Per-epoch CSVs
    are written here so a worker pool can run these tasks in parallel.
    """
    (point_idx, slug, cfg, rep, table_path, requests_file, out_dir) = item
    scenario = build_scenario(cfg, need_model=requests_file is None)
    if requests_file is not None:
        path = load_requests_path(requests_file, n_epochs=cfg.n_epochs)
    else:
        path = sample_path(scenario.model, _path_seed(cfg.seed, rep))

    table = None
    if "adp" in cfg.policies:
        table = ValueTable(scenario.hierarchy, scenario.n_epochs, scenario.aux)
        table.load(table_path)

    totals = {}
    for kind in cfg.policies:
        if kind == "adp":
            policy = Policy(kind="adp",
                            rebalancing=bool(scenario.rebalance_points),
                            table=table)
        else:
            policy = Policy(kind="myopic",
                            rebalancing=(cfg.myopic_rebalancing
                                         and bool(scenario.rebalance_points)))
        metrics = run_episode(scenario, policy, path,
                              _fleet_seed(cfg.seed, rep))
        fname = os.path.join(out_dir, f"epochs_{slug}_{kind}_rep{rep}.csv")
        with open(fname, "w") as fh:
            metrics.write_csv(fh)
        totals[kind] = (metrics.total_seen, metrics.total_served)
    return point_idx, rep, totals


def _mean(xs) -> float:
    return sum(xs) / len(xs)


def _std(xs) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))


SUMMARY_HEADER = ("point,replicates,seen_mean,myopic_served_mean,"
                  "myopic_served_std,adp_served_mean,adp_served_std,"
                  "pct_improvement")


def _write_summary(points, results, replicates, out_dir, args) -> str:
    """Merge per-task totals into summary.csv, one row per sweep point."""
    path = os.path.join(out_dir, "summary.csv")
    with open(path, "w") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for i, (label, cfg) in enumerate(points):
            rows = [results[(i, r)] for r in range(replicates)]
            seen = [next(iter(t.values()))[0] for t in rows]
            for t in rows:  # identical paths => identical seen counts
                assert all(v[0] == t[next(iter(t))][0] for v in t.values())
            seen_mean = _mean(seen) if rows else 0.0
            cols = {}
            for kind in ("myopic", "adp"):
                if kind in cfg.policies and rows:
                    served = [t[kind][1] for t in rows]
                    cols[kind] = (repr(_mean(served)), repr(_std(served)))
                else:
                    cols[kind] = ("", "")
            if ("myopic" in cfg.policies and "adp" in cfg.policies and rows
                    and seen_mean > 0):
                myo = _mean([t["myopic"][1] for t in rows])
                adp = _mean([t["adp"][1] for t in rows])
                pct = repr((adp - myo) / seen_mean * 100.0)
            else:
                pct = ""
            fh.write(f"{label},{replicates},{repr(seen_mean) if rows else ''},"
                     f"{cols['myopic'][0]},{cols['myopic'][1]},"
                     f"{cols['adp'][0]},{cols['adp'][1]},{pct}\n")
    _say(args, f"wrote {path}")
    return path


def _run_points(cfg: ExperimentConfig, points, tables, args) -> int:
    """Evaluate every (point, replicate) task, optionally on a worker pool."""
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.requests_files:
        _validate_requests_files(cfg)
        replicates = len(cfg.requests_files)
    else:
        replicates = cfg.replicates
    tasks = []
    for i, (label, point_cfg) in enumerate(points):
        slug = slugify(label)
        for rep in range(replicates):
            rf = cfg.requests_files[rep] if cfg.requests_files else None
            tasks.append((i, slug, point_cfg, rep, tables[i], rf, cfg.out_dir))
    if cfg.workers > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(cfg.workers) as pool:
            done = pool.map(_episode_task, tasks)
    else:
        done = [_episode_task(t) for t in tasks]
    results = {(i, rep): totals for i, rep, totals in done}
    _write_summary(points, results, replicates, cfg.out_dir, args)
    return 0


def cmd_evaluate(cfg: ExperimentConfig, args) -> int:
    points = sweep_points(cfg)
    if "adp" in cfg.policies:
        if cfg.table_file is None:
            raise ConfigError("evaluating the adp policy needs table_file "
                              "(--table); train one first")
        if not os.path.exists(cfg.table_file):
            raise ConfigError(f"table file not found: {cfg.table_file}")
    tables = [cfg.table_file] * len(points)
    return _run_points(cfg, points, tables, args)


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    """Full protocol: per sweep point, train a table, then evaluate."""
    points = sweep_points(cfg)
    os.makedirs(cfg.out_dir, exist_ok=True)
    tables: list = [None] * len(points)
    if "adp" in cfg.policies:
        for i, (label, point_cfg) in enumerate(points):
            slug = slugify(label)
            table_out = os.path.join(cfg.out_dir, f"table_{slug}.txt")
            log_out = os.path.join(cfg.out_dir, f"training_{slug}.csv")
            _say(args, f"[{label}] training {point_cfg.iterations} iterations")
            _train_one(point_cfg, table_out, log_out, resume=False, args=args)
            tables[i] = table_out
    return _run_points(cfg, points, tables, args)


# ---------------------------------------------------------------------------
# argument plumbing

def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="YAML config file")
    sub.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="override one config key")
    sub.add_argument("--out", help="output directory (out_dir)")
    sub.add_argument("--seed", type=int, help="master seed")
    sub.add_argument("--quiet", action="store_true", help="suppress progress")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="pooldispatch",
        description="Ride-pooling dispatch: scenario generation, value "
                    "training, policy evaluation, parameter sweeps.")
    ap.add_argument("--version", action="version", version=__version__)
    subs = ap.add_subparsers(dest="command", required=True)

    g = subs.add_parser("generate", help="write network/model/demand files")
    _add_common(g)
    g.add_argument("--replicates", type=int, help="demand days to sample")

    t = subs.add_parser("train", help="train a value table")
    _add_common(t)
    t.add_argument("--iterations", type=int, help="training iterations")
    t.add_argument("--table-out", help="value table output path")
    t.add_argument("--log-out", help="training log output path")
    t.add_argument("--resume", action="store_true",
                   help="continue from an existing table/log pair")

    e = subs.add_parser("evaluate", help="run policies over replicate days")
    _add_common(e)
    e.add_argument("--table", help="value table for the adp policy")
    e.add_argument("--replicates", type=int, help="demand days per point")
    e.add_argument("--workers", type=int, help="evaluation worker processes")

    s = subs.add_parser("sweep", help="train + evaluate at every sweep point")
    _add_common(s)
    s.add_argument("--iterations", type=int, help="training iterations")
    s.add_argument("--replicates", type=int, help="demand days per point")
    s.add_argument("--workers", type=int, help="evaluation worker processes")

    i = subs.add_parser("init", help="write a commented config template")
    i.add_argument("path", nargs="?", help="file to write (stdout if omitted)")
    return ap


def _overrides_from_flags(args) -> list[str]:
    out = list(args.overrides)
    flag_keys = [("out", "out_dir"), ("seed", "seed"),
                 ("replicates", "replicates"), ("iterations", "iterations"),
                 ("table", "table_file"), ("workers", "workers")]
    for attr, key in flag_keys:
        val = getattr(args, attr, None)
        if val is not None:
            out.append(f"{key}={val}")
    return out


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        code = exc.code if exc.code is not None else 0
        return 0 if code == 0 else 1

    if args.command == "init":
        if args.path:
            with open(args.path, "w") as fh:
                fh.write(CONFIG_TEMPLATE)
        else:
            sys.stdout.write(CONFIG_TEMPLATE)
        return 0

    try:
        cfg = load_config(args.config, _overrides_from_flags(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    handler = {"generate": cmd_generate, "train": cmd_train,
               "evaluate": cmd_evaluate, "sweep": cmd_sweep}[args.command]
    try:
        return handler(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (NetworkError, DemandError, RoutingError, MatchingError,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
