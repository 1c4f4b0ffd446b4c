"""Command-line front end: ``cdtbound {solve,bench,gen,check}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import instance_io
from .bounds import BOUND_NAMES, run_pipeline
from .errors import AssumptionError, CdtError, NumericalError, ParseError, ValidationError
from .model import check_interior_assumption, lambda_hat

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERIC = 3

log = logging.getLogger("cdtbound")


def _positive(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdtbound", description="Lower bounds for the CDT problem.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="compute one bound for one instance")
    s.add_argument("instance")
    s.add_argument("--bound", choices=BOUND_NAMES, default="twoopt")
    s.add_argument("--eps", type=_positive, default=None, help="bisection interval length")
    s.add_argument("--tol", type=_positive, default=None, help="improvement tolerance of the opt bounds")
    s.add_argument("--trace", metavar="FILE", help="write per-iteration CSV (iter,lambda,lb,anchors)")

    b = sub.add_parser("bench", help="run bounds over a directory of instances")
    b.add_argument("directory")
    b.add_argument("--bound", choices=BOUND_NAMES, action="append",
                   help="bound to run (repeatable; default all)")
    b.add_argument("--eps", type=_positive, default=None)
    b.add_argument("--tol", type=_positive, default=None)
    b.add_argument("--out", default="report.csv")
    b.add_argument("--jobs", type=int, default=instance_io.default_jobs())

    g = sub.add_parser("gen", help="generate random instances")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=".")

    c = sub.add_parser("check", help="validate an instance and print its ellipsoid data")
    c.add_argument("instance")
    return p


def _write_trace(report, path: str) -> None:
    rows = report.trace
    width = max((len(r["anchors"]) for r in rows), default=0)
    n = len(rows[0]["anchors"][0]) if width else 0
    header = ["iter", "lambda", "lb"]
    for k in range(width):
        header += [f"anchor{k + 1}_{j}" for j in range(n)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            cells = [r["iter"], repr(float(r["lambda"])), repr(float(r["lb"]))]
            for k in range(width):
                cells += [repr(float(x)) for x in r["anchors"][k]] if k < len(r["anchors"]) else [""] * n
            w.writerow(cells)


def cmd_solve(args) -> int:
    inst = instance_io.read_instance(args.instance)
    res = run_pipeline(inst, [args.bound], eps=args.eps, tol=args.tol)
    rep = res.reports[args.bound]
    cert = res.certificates[args.bound]
    if args.trace:
        _write_trace(rep, args.trace)
    out = {
        "bound": args.bound,
        "lb": rep.lb,
        "ub": cert.ub,
        "rel_gap": cert.rel_gap,
        "lambda": rep.final_lambda,
        "iterations": rep.iterations,
        "time_ms": 1000.0 * res.cumulative_time[args.bound],
        "solved": cert.solved,
    }
    print(json.dumps(out))
    return EXIT_OK


def cmd_bench(args) -> int:
    files = instance_io.instance_files(args.directory)
    if not files:
        raise ParseError(f"no instance files in {args.directory}")
    instances = []
    for f in files:
        try:
            instances.append(instance_io.read_instance(f))
        except CdtError as exc:
            log.error("skipping %s: %s", f, exc)
    if not instances:
        return EXIT_INVALID
    selection = args.bound or list(BOUND_NAMES)
    result = instance_io.benchmark_run(instances, selection, args.eps, args.tol, jobs=max(1, args.jobs))
    if not result.records:
        log.error("no instance completed")
        return EXIT_NUMERIC
    summary = instance_io.write_report(result, args.out)
    for b, agg in result.aggregates.items():
        print(f"{b:7s} solved {agg['solved']}/{agg['count']}  avg_gap {agg['avg_gap']:.4%}  "
              f"max_gap {agg['max_gap']:.4%}  avg_time {agg['avg_time_ms']:.1f} ms  "
              f"max_time {agg['max_time_ms']:.1f} ms")
    print(f"records: {args.out}  summary: {summary}")
    return EXIT_OK


def cmd_gen(args) -> int:
    if args.n < 2:
        log.error("n must be at least 2")
        return EXIT_INVALID
    if args.count < 1:
        log.error("count must be at least 1")
        return EXIT_INVALID
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failed = 0
    for i in range(args.count):
        seed = args.seed + i
        path = out / f"cdt_n{args.n}_s{seed}.json"
        try:
            instance_io.write_instance(instance_io.generate_instance(args.n, seed), path)
        except CdtError as exc:
            log.error("%s: %s", path, exc)
            failed += 1
            continue
        print(path)
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


def cmd_check(args) -> int:
    inst = instance_io.read_instance(args.instance, check_assumption=False)
    info = check_interior_assumption(inst)
    eq = np.linalg.eigvalsh(inst.Q)
    ea = np.linalg.eigvalsh(inst.A)
    print(f"n          {inst.n}")
    print(f"ell_a      {float(info.ell_a)!r}")
    print(f"a0         {inst.a0!r}")
    print(f"eig(Q)     [{float(eq[0])!r}, {float(eq[-1])!r}]")
    print(f"eig(A)     [{float(ea[0])!r}, {float(ea[-1])!r}]")
    if not info.satisfied:
        print("lambda_hat n/a")
        print("verdict    fail (ellipsoid has no interior point in the ball)")
        return EXIT_INVALID
    print(f"lambda_hat {float(lambda_hat(inst))!r}")
    print("verdict    pass")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "gen": cmd_gen, "check": cmd_check}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except (ParseError, ValidationError, AssumptionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if args.command == "check":
            print("verdict    fail", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
