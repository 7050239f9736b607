"""Command line entry point: ``ldpquant <subcommand> ...``.

Experiment subcommands read an optional JSON config (``--config``) and
apply flag overrides on top. Data go to CSV, reports and pivot tables to
JSON; with no ``--out`` the result is printed.
"""

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments as ex
from .distributions import from_name
from .errors import LDPQuantError
from .estimator import EstimatorConfig, StepSchedule
from .pivot import DEFAULT_ALPHAS, DEFAULT_GRID, DEFAULT_PATHS, DEFAULT_SEED, PivotKind, PivotTable, \
    build_pivot_table, default_cache_dir
from .protocol import CuratorServer, fetch_status, user_client
from .randomizer import PrivacyLevel


def _floats(text):
    return tuple(float(t) for t in text.split(","))


def _ints(text):
    return tuple(int(float(t)) for t in text.split(","))


def _address(text):
    host, _, port = text.rpartition(":")
    return host or "127.0.0.1", int(port)


def _experiment_flags(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--dist", help="normal | uniform | cauchy | pert")
    p.add_argument("--params", type=_floats, help="distribution parameters, comma separated")
    p.add_argument("--tau", type=_floats, help="target quantile(s), comma separated")
    p.add_argument("--r", type=_floats, help="truthful response rate(s), comma separated")
    p.add_argument("--n", type=_ints, help="sample size(s), comma separated")
    p.add_argument("--reps", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--q0", type=float)
    p.add_argument("--pivot", dest="pivot_table", help="pivot table JSON from `ldpquant pivot`")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output file (stdout if omitted)")


def _experiment_config(args):
    cfg = ex.ExperimentConfig.from_json(args.config) if args.config else ex.ExperimentConfig()
    if args.dist is not None or args.params is not None:
        dist = from_name(args.dist or cfg.distribution.kind, args.params or ())
    else:
        dist = None
    return ex.with_overrides(
        cfg, distribution=dist, taus=args.tau, rs=args.r, ns=args.n, reps=args.reps,
        alpha=args.alpha, seed=args.seed, q0=args.q0, pivot_table=args.pivot_table,
        workers=args.workers,
    )


def _emit(text, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_pivot(args):
    table = build_pivot_table(
        kind=args.kind, alphas=args.alphas or DEFAULT_ALPHAS, paths=args.paths,
        grid_steps=args.grid_steps, seed=args.seed, batches=args.batches, workers=args.workers,
        cache_dir=None if args.no_cache else (args.cache_dir or default_cache_dir()),
    )
    _emit(json.dumps(table.to_dict(), indent=2) + "\n", args.out)


def cmd_simulate(args):
    cfg = _experiment_config(args)
    rows = ex.trajectory_run(cfg, checkpoints=args.checkpoints)
    _emit(ex.write_csv(rows, "trajectory"), args.out)


def cmd_coverage(args):
    cfg = _experiment_config(args)
    reports = ex.coverage_experiment(cfg, kind=args.kind)
    _emit(ex.write_csv(reports, "coverage"), args.out)


def cmd_curve(args):
    cfg = _experiment_config(args)
    if args.levels:
        cfg = ex.with_overrides(cfg, levels=args.levels)
    _emit(ex.write_csv(ex.coverage_curve(cfg), "curve"), args.out)


def cmd_boxes(args):
    cfg = _experiment_config(args)
    _emit(ex.write_csv(ex.box_summary(cfg), "boxes"), args.out)


def cmd_optimality(args):
    cfg = _experiment_config(args)
    rows = []
    for n in cfg.ns:
        for r in cfg.rs:
            ratio = ex.variance_optimality_check(
                r, n, cfg.reps, dist=cfg.distribution, seed=cfg.seed, shift=args.shift,
                schedule=cfg.schedule, workers=cfg.workers,
            )
            rows.append({"dist": cfg.distribution.kind, "r": r, "n": n, "reps": cfg.reps,
                         "shift": args.shift, "ratio": ratio})
    _emit(ex.write_csv(rows, "optimality"), args.out)


def cmd_serve(args):
    config = EstimatorConfig(tau=args.tau, level=PrivacyLevel(args.r), schedule=StepSchedule(),
                             q0=args.q0)
    pivot = PivotTable.load(args.pivot) if args.pivot else None
    server = CuratorServer((args.host, args.port), config, pivot, args.alpha)
    host, port = server.address
    print(f"curator listening on {host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


def cmd_client(args):
    address = _address(args.connect)
    if args.status:
        print(json.dumps(fetch_status(address)))
        return
    rng = np.random.default_rng(args.seed)
    if args.x is not None:
        values = [args.x]
    else:
        data_rng = np.random.default_rng([args.seed, 1])
        values = from_name(args.dist, args.params or ()).sample(data_rng, args.count)
    for x in values:
        res = user_client(address, float(x), rng, retries=args.retries, max_rate=args.max_rate)
        if args.x is not None:
            print(json.dumps({"seq": res.seq, "threshold": res.threshold, "bit": res.bit}))
    print(json.dumps(fetch_status(address)))


def build_parser():
    parser = argparse.ArgumentParser(prog="ldpquant", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pivot", help="tabulate self-normalized critical values")
    p.add_argument("--kind", default=PivotKind.SQUARED_INTEGRAL.value,
                   choices=[k.value for k in PivotKind])
    p.add_argument("--paths", type=int, default=DEFAULT_PATHS)
    p.add_argument("--grid-steps", type=int, default=DEFAULT_GRID)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--alphas", type=_floats)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--cache-dir")
    p.add_argument("--no-cache", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pivot)

    p = sub.add_parser("simulate", help="sample trajectory with both intervals")
    _experiment_flags(p)
    p.add_argument("--checkpoints", type=_ints)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("coverage", help="coverage / MAE table")
    _experiment_flags(p)
    p.add_argument("--kind", default=PivotKind.SQUARED_INTEGRAL.value,
                   choices=[k.value for k in PivotKind])
    p.set_defaults(func=cmd_coverage)

    p = sub.add_parser("curve", help="empirical vs nominal coverage")
    _experiment_flags(p)
    p.add_argument("--levels", type=_floats, help="nominal levels, comma separated")
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("boxes", help="box-plot summaries of the estimate")
    _experiment_flags(p)
    p.set_defaults(func=cmd_boxes)

    p = sub.add_parser("optimality", help="median variance against the lower bound")
    _experiment_flags(p)
    p.add_argument("--shift", type=float, default=0.0)
    p.set_defaults(func=cmd_optimality)

    p = sub.add_parser("serve", help="run a TCP curator")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=7650)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--r", type=float, default=0.5)
    p.add_argument("--q0", type=float, default=0.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pivot")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("client", help="act as one or more users against a curator")
    p.add_argument("--connect", required=True, help="host:port")
    p.add_argument("--x", type=float, help="a single private value")
    p.add_argument("--dist", default="normal")
    p.add_argument("--params", type=_floats)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--retries", type=int, default=3)
    p.add_argument("--max-rate", type=float)
    p.add_argument("--status", action="store_true", help="only print the curator status")
    p.set_defaults(func=cmd_client)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        args.func(args)
    except LDPQuantError as exc:
        print(f"ldpquant: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
