"""Command-line interface: ``simulate``, ``partition``, ``fit``, ``bench``, ``distsim``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .bench import EXIT_INPUT, MODEL_FAMILY, fit_command, load_config, model_family, run_experiment
from .distsim import distributed_smr, make_nodes, traffic_report
from .errors import ReprError
from .partition import parse_partition_arg, write_partition
from .representatives import DEFAULT_T
from .simgen import (
    AIRLINE_BETA,
    AIRLINE_BETA_PRIME,
    DISTRIBUTIONS,
    MODELS,
    SimConfig,
    gen_airline_like,
    read_csv,
    simulate,
    write_csv,
)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--out", help="output path (default: stdout where sensible)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="repreg",
        description="Regression on weighted representative points of partitioned data.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset as CSV")
    _add_common(s)
    s.add_argument("--n", type=int, default=100_000)
    s.add_argument("--dist", default="mzNormal", choices=(*DISTRIBUTIONS, "airline"))
    s.add_argument("--family", default="logit", choices=MODELS, help="response model")
    s.add_argument("--sigma", type=float, default=1.0, help="noise sd for the linear model")
    s.add_argument("--months", type=int, default=12, help="airline: number of monthly files")
    s.add_argument("--oracle", default="beta", choices=("beta", "beta-prime"), help="airline coefficients")

    p = sub.add_parser("partition", help="partition a CSV dataset; writes row,block")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--partition", required=True, help="equal-depth:m | kmeans:K | natural:cols | distinct-x")

    f = sub.add_parser("fit", help="fit one dataset; exit 0 converged, 2 not converged, 1 input error")
    _add_common(f)
    f.add_argument("--data", required=True)
    f.add_argument("--family", default="logit", help="model tag or family-link, e.g. bernoulli-probit")
    f.add_argument("--method", default="smr", choices=("full", "mid", "median", "mr", "smr", "dc"))
    f.add_argument("--partition", help="equal-depth:m | kmeans:K | natural:cols | distinct-x")
    f.add_argument("--partition-file", help="row,block file from `partition`")
    f.add_argument("--iterations", type=int, default=DEFAULT_T, help="SMR iterations T (default 3)")
    f.add_argument("--dc-blocks", type=int, default=100)
    f.add_argument("--export-reps", help="write the final representative set as CSV")

    b = sub.add_parser("bench", help="run a replicated experiment from an INI config")
    _add_common(b)
    b.add_argument("--config", required=True)
    b.add_argument("--include-intercept", action="store_true", help="include the intercept in RMSE")
    b.add_argument("--replications", type=int, help="override the configured replication count")
    b.add_argument("--n", type=int, help="override the configured N")

    d = sub.add_parser("distsim", help="simulate a multi-node fit and report wire traffic")
    _add_common(d)
    d.add_argument("--data", help="CSV dataset (default: simulate one)")
    d.add_argument("--n", type=int, default=100_000)
    d.add_argument("--dist", default="mzNormal", choices=DISTRIBUTIONS)
    d.add_argument("--family", default="logit")
    d.add_argument("--partition", default="kmeans:200")
    d.add_argument("--nodes", type=int, default=4)
    d.add_argument("--iterations", type=int, default=DEFAULT_T)
    return ap


def _cmd_simulate(args) -> int:
    if args.dist == "airline":
        beta = AIRLINE_BETA if args.oracle == "beta" else AIRLINE_BETA_PRIME
        rows = max(1, args.n // args.months)
        data = gen_airline_like(args.months, rows, beta, args.seed)
    else:
        data = simulate(SimConfig(dist=args.dist, n=args.n, model=args.family, sigma=args.sigma, seed=args.seed))
    write_csv(data, args.out or sys.stdout)
    return 0


def _cmd_partition(args) -> int:
    data = read_csv(args.data)
    part = parse_partition_arg(args.partition, data, seed=args.seed)
    write_partition(part, args.out or sys.stdout)
    print(f"{part.k} blocks", file=sys.stderr)
    return 0


def _cmd_fit(args) -> int:
    return fit_command(
        args.data, family=args.family, method=args.method, partition=args.partition,
        partition_file=args.partition_file, iterations=args.iterations, seed=args.seed,
        dc_blocks=args.dc_blocks, out=args.out, export_reps=args.export_reps,
        log=lambda m: print(m, file=sys.stderr if m.startswith("error") else sys.stdout),
    )


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    if args.include_intercept:
        cfg.include_intercept = True
    if args.replications is not None:
        cfg.replications = args.replications
    if args.n is not None:
        cfg.n = args.n
    report = run_experiment(cfg, out=args.out)
    if not (args.out or cfg.out):
        report.write_csv(sys.stdout)
    for r in report.summary:
        if r["replication"] == "mean":
            print(f"{r['method']:>6}: rmse_true={r['rmse_true']:.6g} rmse_full={r['rmse_full']:.6g} "
                  f"seconds={r['fit_seconds']:.3g} ({r['status']})", file=sys.stderr)
    return 0


def _cmd_distsim(args) -> int:
    if args.data:
        data = read_csv(args.data)
    else:
        model = args.family if args.family in MODEL_FAMILY else "logit"
        data = simulate(SimConfig(dist=args.dist, n=args.n, model=model, seed=args.seed))
    part = parse_partition_arg(args.partition, data, seed=args.seed)
    nodes = make_nodes(data, part, args.nodes)
    res, log = distributed_smr(nodes, model_family(args.family), T=args.iterations)
    rep = traffic_report(log, data.n, data.p)
    if args.out:
        rep.write_csv(args.out)
    print("beta = " + " ".join(f"{b:.6g}" for b in res.beta))
    print(f"nodes={len(nodes)} rounds={args.iterations + 1} words={rep.total_words} "
          f"raw-shuffle={rep.raw_shuffle_words} ratio={rep.ratio:.4g} converged={res.converged}")
    return 0 if res.converged else 2


COMMANDS = {
    "simulate": _cmd_simulate,
    "partition": _cmd_partition,
    "fit": _cmd_fit,
    "bench": _cmd_bench,
    "distsim": _cmd_distsim,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ReprError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
