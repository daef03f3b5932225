"""Command-line entry points.

Subcommands: solve (policy table + boundary CSV), simulate (Monte Carlo
metrics), sweep (T or c sweeps), fit (EM estimates from a label CSV), and
run-dataset (replay protocol report). Exit codes: 0 success, 2 invalid
configuration, 3 bad input data.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace

from .data import full_data_decision_accuracy, load_dataset, run_dataset
from .errors import ConfigError, DataError
from .estimation import EstimationConfig, em_fit, initial_estimates
from .model import CostConfig, Prior, WorkerParams
from .simulate import (
    ExperimentConfig,
    Metrics,
    eb_prior_study,
    gen_worker_pool,
    simulate,
    sweep_T,
    write_boundaries_csv,
)
from .solver import GridConfig, solve


def _add_pool_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pool", help="JSON file with {'workers': [[tau00, tau11], ...]}")
    p.add_argument("--pool-size", type=int, default=50, help="generated pool size")
    p.add_argument("--pool-seed", type=int, default=0, help="generated pool seed")


def _load_pool(args) -> tuple[WorkerParams, ...]:
    if args.pool:
        try:
            with open(args.pool, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            return tuple(WorkerParams(float(a), float(b)) for a, b in payload["workers"])
        except (OSError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise DataError(f"cannot read worker pool from {args.pool}: {exc}") from exc
    return tuple(gen_worker_pool(args.pool_size, args.pool_seed))


def _parse_prior_mode(text: str) -> tuple[str, float]:
    if text == "true":
        return "true", 0.5
    if text == "eb":
        return "eb", 0.5
    if text.startswith("fixed=") or text.startswith("fixed:"):
        return "fixed", float(text[6:])
    if text == "fixed":
        return "fixed", 0.5
    raise ConfigError(f"--prior must be one of true, eb, fixed=V; got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="adasprt", description=__doc__)
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a policy table and export it")
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--w1", type=float, default=1.0)
    p.add_argument("--grid-points", type=int, default=2001)
    p.add_argument("--out", required=True, help="policy JSON path")
    _add_pool_args(p)

    p = sub.add_parser("simulate", help="Monte Carlo metrics for one cell")
    p.add_argument("--policy", choices=("ada", "kl"), default="ada")
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--c", type=float, default=2.0**-12)
    p.add_argument("--pi1", type=float, default=0.5, help="true class prior")
    p.add_argument("--prior", default="true", help="solver prior: true | eb | fixed=V")
    p.add_argument("--reps", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=2001)
    p.add_argument("--objects", type=int, default=100, help="objects per macro-run (eb prior)")
    p.add_argument("--out", help="metrics CSV (stdout when omitted)")
    _add_pool_args(p)

    p = sub.add_parser("sweep", help="sweep T or c for one policy")
    p.add_argument("--param", choices=("T", "c"), default="T")
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--policy", choices=("ada", "kl"), default="ada")
    p.add_argument("--T", type=int, default=10)
    p.add_argument("--c", type=float, default=2.0**-12)
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--prior", default="true")
    p.add_argument("--reps", type=int, default=50_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=2001)
    p.add_argument("--boundaries-dir", help="write per-T boundary CSVs here")
    p.add_argument("--out", help="metrics CSV (stdout when omitted)")
    _add_pool_args(p)

    p = sub.add_parser("fit", help="EM estimates from a label CSV")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth")
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--out", help="estimates CSV (stdout when omitted)")

    p = sub.add_parser("run-dataset", help="replay a recorded corpus")
    p.add_argument("--labels", required=True)
    p.add_argument("--truth")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--alpha", type=float, default=4.0)
    p.add_argument("--beta", type=float, default=2.0)
    p.add_argument("--orderings", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=2001)
    p.add_argument("--out", help="report JSON (stdout when omitted)")
    return top


def _metrics_out(rows: list[tuple[str, Metrics]], out: str | None) -> None:
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        wr = csv.writer(fh)
        wr.writerow(("cell",) + Metrics.CSV_FIELDS)
        for key, m in rows:
            wr.writerow((key,) + m.row())
    finally:
        if out:
            fh.close()


def _cmd_solve(args) -> int:
    pool = _load_pool(args)
    policy = solve(
        args.T,
        CostConfig(args.c),
        Prior(args.pi1, args.w0, args.w1),
        pool,
        GridConfig(num_points=args.grid_points),
    )
    policy.dump(args.out)
    stem = args.out[:-5] if args.out.endswith(".json") else args.out
    write_boundaries_csv(policy, stem + "_boundaries.csv")
    print(f"policy written to {args.out}")
    return 0


def _experiment_config(args, pool) -> ExperimentConfig:
    mode, fixed = _parse_prior_mode(args.prior)
    return ExperimentConfig(
        reps=args.reps,
        c=args.c,
        pi1_true=args.pi1,
        T=args.T,
        policy=args.policy,
        prior_mode="true" if mode != "fixed" else "fixed",
        prior_fixed=fixed,
        seed=args.seed,
        grid_points=args.grid_points,
        workers=pool,
    )


def _cmd_simulate(args) -> int:
    pool = _load_pool(args)
    mode, fixed = _parse_prior_mode(args.prior)
    if mode == "eb":
        if args.policy != "ada":
            raise ConfigError("empirical-Bayes prior runs require --policy ada")
        arms = eb_prior_study(
            pool,
            pi1_true=args.pi1,
            c=args.c,
            T=args.T,
            K=args.objects,
            macro_reps=args.reps,
            seed=args.seed,
            grid_points=min(args.grid_points, 801),
            arms=("eb",),
        )["eb"]
        m = Metrics(
            avg_stop=arms.stop_mean,
            accuracy=arms.accuracy_mean,
            avg_loss=arms.loss_mean,
            se_stop=float(arms.stops.std(ddof=1) / max(len(arms.stops), 2) ** 0.5),
            se_accuracy=float(arms.accuracies.std(ddof=1) / max(len(arms.accuracies), 2) ** 0.5),
            se_loss=arms.loss_se,
            reps=args.reps,
        )
        _metrics_out([("eb", m)], args.out)
        return 0
    cfg = _experiment_config(args, pool)
    _metrics_out([(args.policy, simulate(cfg))], args.out)
    return 0


def _cmd_sweep(args) -> int:
    pool = _load_pool(args)
    try:
        values = [
            int(v) if args.param == "T" else float(v) for v in args.values.split(",") if v.strip()
        ]
    except ValueError as exc:
        raise ConfigError(f"bad --values list: {exc}") from exc
    if not values:
        raise ConfigError("--values is empty")
    cfg = _experiment_config(args, pool)
    rows: list[tuple[str, Metrics]] = []
    if args.param == "T":
        out = sweep_T(cfg, values, boundaries_dir=args.boundaries_dir)
        rows = [(f"T={t}", m) for t, m in out.items()]
    else:
        for i, c in enumerate(values):
            rows.append((f"c={c}", simulate(replace(cfg, c=c), cell=i)))
    _metrics_out(rows, args.out)
    return 0


def _cmd_fit(args) -> int:
    ds = load_dataset(args.labels, args.truth)
    cfg = EstimationConfig(alpha=args.alpha, beta=args.beta)
    est = em_fit(ds.matrix, cfg, init=initial_estimates(ds.n_workers, cfg))
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        wr = csv.writer(fh)
        wr.writerow(("field", "worker_id", "value"))
        wr.writerow(("pi1", "", est.pi1))
        wr.writerow(("objective", "", est.objective))
        wr.writerow(("iters", "", est.iters))
        wr.writerow(("converged", "", int(est.converged)))
        for wid, t00, t11 in zip(ds.worker_ids, est.tau00, est.tau11):
            wr.writerow(("tau00", wid, float(t00)))
            wr.writerow(("tau11", wid, float(t11)))
        if ds.truth:
            wr.writerow(("full_data_accuracy", "", full_data_decision_accuracy(ds, cfg)))
    finally:
        if args.out:
            fh.close()
    return 0


def _cmd_run_dataset(args) -> int:
    ds = load_dataset(args.labels, args.truth)
    report = run_dataset(
        ds,
        CostConfig(args.c),
        args.T,
        EstimationConfig(alpha=args.alpha, beta=args.beta),
        orderings=args.orderings,
        seed=args.seed,
        grid=GridConfig(num_points=args.grid_points),
    )
    payload = json.dumps(report.to_dict(), indent=2)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "sweep": _cmd_sweep,
    "fit": _cmd_fit,
    "run-dataset": _cmd_run_dataset,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse usage errors already printed
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(cli_main())
