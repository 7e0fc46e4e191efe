"""Experiment harness: drops -> explore -> train -> evaluate -> report.

Example::

    dpbrem --profile desk --out-dir run drops
    dpbrem --profile desk --out-dir run explore
    dpbrem --profile desk --out-dir run train
    dpbrem --profile desk --out-dir run evaluate
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import baselines, dqn, rem
from .config import ExperimentConfig, make_config, read_config_file
from .encoder import encode_drop
from .netsim import build_links, drop_ues, evaluate_pattern, load_drops, reward, save_drops

log = logging.getLogger("dpbrem")

ALGORITHMS = ("no_dpb", "ref", "es", "dqn")
TABLE_FIELDS = ("drop_id", "algorithm", "mask", "cell_edge_bps", "mean_bps",
                "all_connected", "reward")


def _map(fn, items, workers: int):
    """Ordered map, fanned out to worker processes when ``workers > 1``."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(x) -> str:
    return repr(float(x))


def cmd_drops(cfg: ExperimentConfig) -> Path:
    deployment = cfg.deployment()
    drops = [drop_ues(deployment, cfg.n_ue, cfg.drop_seed(i), drop_id=i)
             for i in range(cfg.n_drops)]
    cfg.drops_file.parent.mkdir(parents=True, exist_ok=True)
    save_drops(drops, cfg.drops_file)
    log.info("wrote %d drops to %s", len(drops), cfg.drops_file)
    return cfg.drops_file


def _explore_one(job):
    cfg, drop = job
    return rem.explore_all(cfg.deployment(), drop, cfg.horizon_slots, cfg.reward_scale_bps)


def cmd_explore(cfg: ExperimentConfig, fresh: bool = False) -> Path:
    drops = load_drops(cfg.drops_file)
    store = rem.RemStore()
    if cfg.rem_file.exists() and not fresh:
        store = rem.load(cfg.rem_file)
    # refuse before spending simulation time on a re-exploration
    for drop in drops:
        if any(e.drop_id == drop.drop_id for e in store):
            raise rem.DuplicateEntryError(
                f"drop {drop.drop_id} already in {cfg.rem_file}; use --fresh to re-explore")
    for entries in _map(_explore_one, [(cfg, d) for d in drops], cfg.workers):
        for entry in entries:
            store.record(entry)
    cfg.rem_file.parent.mkdir(parents=True, exist_ok=True)
    rem.save(store, cfg.rem_file)
    log.info("REM holds %d entries -> %s", len(store), cfg.rem_file)
    return cfg.rem_file


def cmd_train(cfg: ExperimentConfig) -> Path:
    store = rem.load(cfg.rem_file)
    if len(store) == 0:
        raise ValueError(f"{cfg.rem_file} has no entries")
    dims = dqn.network_dims(store.state_dim, store.n_patterns)
    net = dqn.QNetwork.init(dims, cfg.train_seed)
    net, trace = dqn.train(net, store, steps=cfg.train_steps, batch_size=cfg.batch_size,
                           seed=cfg.train_seed)
    cfg.model_file.parent.mkdir(parents=True, exist_ok=True)
    dqn.save_model(net, cfg.model_file)
    trace_file = cfg.model_file.with_name(cfg.model_file.stem + "_loss.csv")
    with open(trace_file, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["step", "loss"])
        writer.writerows((step, _fmt(loss)) for step, loss in trace)
    log.info("trained %d steps -> %s", cfg.train_steps, cfg.model_file)
    return cfg.model_file


def _evaluate_one(job):
    cfg, drop, net, es_mask = job
    deployment = cfg.deployment()
    links = build_links(deployment, drop)
    state = encode_drop(deployment, drop)
    chosen = {
        "no_dpb": baselines.no_dpb(deployment),
        "ref": baselines.ref_csi(deployment, drop, links),
        "es": es_mask,
        "dqn": dqn.act_greedy(net, state),
    }
    cache = {}
    rows = []
    for algo in ALGORITHMS:
        mask = chosen[algo]
        if mask not in cache:
            cache[mask] = evaluate_pattern(deployment, drop, mask, cfg.horizon_slots, links)
        res = cache[mask]
        rows.append([drop.drop_id, algo, mask, _fmt(res.cell_edge_tput), _fmt(res.mean_tput),
                     int(res.all_connected), _fmt(reward(res, cfg.reward_scale_bps))])
    return rows


def cmd_evaluate(cfg: ExperimentConfig) -> Path:
    drops = load_drops(cfg.drops_file)
    net = dqn.load_model(cfg.model_file)
    store = rem.load(cfg.rem_file)
    jobs = [(cfg, d, net, rem.best_pattern(store, d.drop_id)) for d in drops]
    rows = [row for chunk in _map(_evaluate_one, jobs, cfg.workers) for row in chunk]
    cfg.reports.mkdir(parents=True, exist_ok=True)
    table = cfg.reports / "table.csv"
    with open(table, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TABLE_FIELDS)
        writer.writerows(rows)
    log.info("per-drop table -> %s", table)
    cmd_report(cfg)
    return table


def read_table(path) -> dict:
    """Per-algorithm lists of (cell_edge_bps, mean_bps) in drop order."""
    out = {a: [] for a in ALGORITHMS}
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            out[rec["algorithm"]].append((float(rec["cell_edge_bps"]), float(rec["mean_bps"])))
    return out


def summarize(table: dict) -> list[tuple]:
    """Rows of (metric, algorithm, value) mirroring the averaged-results figures."""
    avg_edge = {a: float(np.mean([r[0] for r in table[a]])) for a in ALGORITHMS}
    avg_mean = {a: float(np.mean([r[1] for r in table[a]])) for a in ALGORITHMS}
    rows = []
    for a in ALGORITHMS:
        rows.append(("avg_cell_edge_bps", a, avg_edge[a]))
    for a in ALGORITHMS:
        rows.append(("avg_mean_bps", a, avg_mean[a]))
    for a in ALGORITHMS:
        rows.append(("cell_edge_gain_vs_no_dpb", a, avg_edge[a] / avg_edge["no_dpb"] - 1.0))
    for a in ALGORITHMS:
        rows.append(("mean_change_vs_no_dpb", a, avg_mean[a] / avg_mean["no_dpb"] - 1.0))
    rows.append(("dqn_over_es_cell_edge", "dqn", avg_edge["dqn"] / avg_edge["es"]))
    es_gain = avg_edge["es"] - avg_edge["no_dpb"]
    share = (avg_edge["dqn"] - avg_edge["no_dpb"]) / es_gain if es_gain > 0 else float("nan")
    rows.append(("dqn_share_of_es_gain", "dqn", share))
    return rows


def cmd_report(cfg: ExperimentConfig) -> Path:
    table = read_table(cfg.reports / "table.csv")
    with open(cfg.reports / "cdf.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["algorithm", "rank", "cell_edge_bps", "cdf"])
        for algo in ALGORITHMS:
            values = sorted(r[0] for r in table[algo])
            n = len(values)
            for i, v in enumerate(values, start=1):
                writer.writerow([algo, i, _fmt(v), _fmt(i / n)])
    summary = cfg.reports / "summary.csv"
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "algorithm", "value"])
        writer.writerows((m, a, _fmt(v)) for m, a, v in summarize(table))
    log.info("reports -> %s", cfg.reports)
    return summary


COMMANDS = {
    "drops": cmd_drops,
    "explore": cmd_explore,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpbrem",
                                description="REM + DQN dynamic point blanking experiments")
    p.add_argument("command", choices=[*COMMANDS, "all"])
    p.add_argument("--config", help="JSON file with ExperimentConfig fields")
    p.add_argument("--profile", choices=["paper", "desk"], default=None)
    p.add_argument("--fresh", action="store_true", help="explore: discard an existing REM file")
    p.add_argument("-v", "--verbose", action="store_true")
    for f in fields(ExperimentConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=None,
                       metavar=f.type.upper())
    return p


def config_from_args(args) -> ExperimentConfig:
    file_values = read_config_file(args.config) if args.config else {}
    profile = args.profile or file_values.get("profile", "paper")
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)
                 if getattr(args, f.name) is not None}
    return make_config(profile, file_values, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        if args.command == "all":
            cmd_drops(cfg)
            cmd_explore(cfg, fresh=True)
            cmd_train(cfg)
            cmd_evaluate(cfg)
        elif args.command == "explore":
            cmd_explore(cfg, fresh=args.fresh)
        else:
            COMMANDS[args.command](cfg)
    except Exception as exc:  # surface every failure as a message + exit code
        print(f"dpbrem {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
