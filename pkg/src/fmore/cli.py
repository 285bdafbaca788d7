"""Command-line entry point: ``fmore <subcommand> [options]``.

Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import walkthrough
from .auction import ConfigError, WinProbMode
from .config import ExperimentConfig, apply_overrides, load_config
from .equilibrium import ScoreDistribution, equilibrium_payment

logger = logging.getLogger("fmore")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG = 0, 1, 2

SUMMARY_COLUMNS = ["policy", "seed", "rounds_to_threshold", "final_accuracy", "final_loss", "cum_payment"]
SWEEP_COLUMNS = ["axis", "value", "seed", "rounds_to_threshold", "final_accuracy", "winner_score_var"]
SWEEP_SUMMARY_COLUMNS = ["axis", "value", "median_rounds_to_threshold", "mean_final_accuracy",
                         "mean_winner_score_var", "n_seeds"]


def _fmt(x: Optional[float]) -> str:
    return "" if x is None else f"{x:.6f}"


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def _run_jobs(fn: Callable, jobs: list, workers: int) -> list:
    """Map ``fn`` over ``jobs`` in order, optionally in worker processes."""
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, jobs))


def _slug(policy: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", policy)


# --- subcommands --------------------------------------------------------------

def cmd_walkthrough(cfg: ExperimentConfig, args) -> int:
    records = walkthrough.run(args.seed or 0)
    print(walkthrough.table(records))
    for rec in records:
        d = rec.to_dict()
        print(f"round {rec.round_index}: winners {sorted(d['winners'])} payments "
              + " ".join(f"{n}={p:g}" for n, p in zip(d["winners"], d["payments"])))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "walkthrough.json").write_text(json.dumps([r.to_dict() for r in records], indent=2) + "\n")
    return EXIT_OK


def equilibrium_rows(cfg: ExperimentConfig) -> tuple[list[str], list[list[str]]]:
    e = cfg.equilibrium
    rule, cm, box = cfg.equilibrium_game()
    mode = WinProbMode(e.mode)
    dist = ScoreDistribution.from_types(rule, cm, box)
    thetas = np.linspace(cm.dist.lo, cm.dist.hi, e.theta_points)
    header = (["theta"] + [f"q{i + 1}" for i in range(rule.m)]
              + ["cost", "max_score", "markup", "payment", "score", "payment_trapezoid", "payment_ode", "degenerate"])
    rows = []
    for th in thetas:
        st = equilibrium_payment(rule, cm, float(th), e.n_nodes, e.n_winners, box, mode=mode, dist=dist)
        rows.append([f"{th:.6f}"] + [f"{v:.6f}" for v in st.quality]
                    + [f"{v:.6f}" for v in (st.cost, st.max_score, st.markup, st.payment, st.score,
                                            st.cost + st.markup_trapezoid, st.cost + st.markup_ode)]
                    + [str(int(st.degenerate))])
    return header, rows


def cmd_equilibrium(cfg: ExperimentConfig, args) -> int:
    header, rows = equilibrium_rows(cfg)
    path = Path(args.out) / "equilibrium.csv"
    _write_csv(path, header, rows)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def _sim_job(job):
    from .fl.sim import build_population, rounds_to_threshold, run_experiment
    cfg, policy, seed = job
    res = run_experiment(policy, cfg, seed, build_population(cfg, seed))
    return res, rounds_to_threshold(res, cfg.fl.threshold)


def cmd_simulate(cfg: ExperimentConfig, args) -> int:
    from .fl.sim import results_csv
    out = Path(args.out) / "simulate"
    jobs = [(cfg, p, s) for p in cfg.policies for s in cfg.seeds]
    summary = []
    for (_, policy, seed), (res, rtt) in zip(jobs, _run_jobs(_sim_job, jobs, args.workers)):
        path = out / f"{_slug(policy)}_seed{seed}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(results_csv(res))
        last = res[-1] if res else None
        summary.append([policy, seed, "" if rtt is None else rtt, _fmt(last and last.accuracy),
                        _fmt(last and last.loss), _fmt(last.cum_payment if last else 0.0)])
    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary)
    for policy in cfg.policies:
        med = _censored_median([r[2] for r in summary if r[0] == policy], cfg.fl.rounds)
        print(f"{policy:>16}: median rounds to {cfg.fl.threshold:.0%} = {med}")
    print(f"wrote {len(summary)} runs to {out}")
    return EXIT_OK


def _censored_median(values, rounds: int) -> str:
    """Median rounds-to-threshold with unreached runs counted as ``rounds + 1``."""
    vals = [rounds + 1 if v == "" or v is None else int(v) for v in values]
    if not vals:
        return ""
    return f"{float(np.median(vals)):g}"


def sweep_jobs(cfg: ExperimentConfig) -> list[tuple]:
    sw = cfg.sweep
    jobs = []
    for k in sw.n_winners:
        jobs += [("n_winners", k, s) for s in cfg.seeds]
    for n in sw.n_nodes:
        jobs += [("n_nodes", n, s) for s in cfg.seeds]
    for psi in sw.psi:
        jobs += [("psi", float(psi), s) for s in cfg.seeds]
    return jobs


def _sweep_job(job):
    from .fl.sim import (build_population, restrict_population, rounds_to_threshold, run_experiment,
                         winner_score_dispersion)
    cfg, (axis, value, seed) = job
    # one node pool per seed, sized for the largest N; smaller N keep its first nodes
    pool = max(max(cfg.sweep.n_nodes), cfg.auction.n_nodes)
    pop = build_population(cfg, seed, pool)
    policy = "fmore"
    if axis == "n_winners":
        c = apply_overrides(cfg, [f"auction.n_winners={value}"])
        pop = restrict_population(pop, c.auction.n_nodes)
    elif axis == "n_nodes":
        c = apply_overrides(cfg, [f"auction.n_nodes={value}"])
        pop = restrict_population(pop, value)
    else:
        c = cfg
        pop = restrict_population(pop, c.auction.n_nodes)
        policy = f"psi_fmore:{value}"
    res = run_experiment(policy, c, seed, pop)
    last = res[-1] if res else None
    return rounds_to_threshold(res, c.fl.threshold), (last.accuracy if last else None), winner_score_dispersion(res)


def cmd_sweep(cfg: ExperimentConfig, args) -> int:
    sw = cfg.sweep
    if max(sw.n_winners) > cfg.auction.n_nodes:
        raise ConfigError(f"sweep.n_winners: values must not exceed auction.n_nodes={cfg.auction.n_nodes}")
    if cfg.auction.n_winners > min(sw.n_nodes):
        raise ConfigError(f"sweep.n_nodes: values must be >= auction.n_winners={cfg.auction.n_winners}")
    jobs = sweep_jobs(cfg)
    results = _run_jobs(_sweep_job, [(cfg, j) for j in jobs], args.workers)
    rows = [[axis, f"{value:g}", seed, "" if rtt is None else rtt, _fmt(acc), f"{var:.6f}"]
            for (axis, value, seed), (rtt, acc, var) in zip(jobs, results)]
    out = Path(args.out) / "sweep"
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    summary = []
    for axis, value in dict.fromkeys((a, v) for a, v, _ in jobs):
        sel = [r for (a, v, _), r in zip(jobs, results) if (a, v) == (axis, value)]
        accs = [acc for _, acc, _ in sel if acc is not None]
        summary.append([axis, f"{value:g}", _censored_median([r for r, _, _ in sel], cfg.fl.rounds),
                        _fmt(float(np.mean(accs)) if accs else None),
                        f"{float(np.mean([v for _, _, v in sel])):.6f}", len(sel)])
    _write_csv(out / "sweep_summary.csv", SWEEP_SUMMARY_COLUMNS, summary)
    for row in summary:
        print(f"{row[0]:>9}={row[1]:<5} median rounds {row[2]:>4}  mean winner-score variance {row[4]}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, args) -> int:
    from .theory import reports_json, run_suite, suite_ok
    seed = 0 if args.seed is None else args.seed
    reports = run_suite(seed, quick=args.quick)
    path = Path(args.out) / "verify.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(reports_json(reports))
    for r in reports:
        print(f"{'ok ' if r.ok else 'BAD'} {r.verdict:<10} ({r.expect:<10}) {r.name}")
    ok = suite_ok(reports)
    print(f"{sum(r.ok for r in reports)}/{len(reports)} checks as expected; report in {path}")
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "walkthrough": (cmd_walkthrough, "reproduce the five-node worked example"),
    "equilibrium": (cmd_equilibrium, "tabulate equilibrium quality and payment over a type grid"),
    "simulate": (cmd_simulate, "run the policy x seed federated-learning matrix"),
    "verify": (cmd_verify, "run the theory checks and write a JSON report"),
    "sweep": (cmd_sweep, "sweep the winner count, node count and acceptance probability"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
    common.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    common.add_argument("--out", help="output directory (default: config output_dir)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, e.g. --set fl.rounds=10")
    common.add_argument("--workers", type=int, default=1, help="worker processes for experiment cells")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="fmore", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "verify":
            p.add_argument("--quick", action="store_true", help="fewer Monte Carlo samples")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.overrides:
            cfg = apply_overrides(cfg, args.overrides)
        if args.seed is not None:
            cfg = apply_overrides(cfg, [f"seeds=[{args.seed}]"])
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        if args.out is None:
            args.out = cfg.output_dir
        fn, _ = COMMANDS[args.command]
        return fn(cfg, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
