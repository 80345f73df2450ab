"""Command-line entry point.

Exit status: 0 when every applicable inequality holds, 2 when at least one is
violated beyond tolerance, 1 for any error (bad input, crash).
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from . import demos
from .audit import random_audit
from .bounds import DEFAULT_TOLERANCE, evaluate, violations
from .reporting import (
    audit_report,
    color_enabled,
    dumps_json,
    fmt,
    ledger_report,
    ledger_to_dict,
    record_rows,
    rows_csv,
    rows_jsonl,
)
from .scenario_io import atomic_write, load_scenario

EXIT_OK, EXIT_ERROR, EXIT_VIOLATION = 0, 1, 2
FORMATS = ("report", "csv", "jsonl", "json")


class _Parser(argparse.ArgumentParser):
    # usage errors are ordinary failures; status 2 is reserved for violations
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _add_common(p: argparse.ArgumentParser, scenario: bool = True) -> None:
    if scenario:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--scenario", metavar="PATH", help="scenario file (JSON)")
        src.add_argument("--demo", metavar="NAME", choices=sorted(demos.DEMOS), help="named demo scenario")
        p.add_argument("--beta", type=float, help="inverse temperature for a demo")
        p.add_argument("--gap", type=float, help="final-Hamiltonian gap for a demo")
        p.add_argument("--angle", type=float, help="weak-readout angle for a demo (0 is projective)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=DEFAULT_TOLERANCE)
    p.add_argument("--output", metavar="PATH", help="write here (atomically) instead of stdout")
    p.add_argument("--format", choices=FORMATS, default="report")
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="demonforge", description="Measurement, feedback and erasure bookkeeping "
                                     "for bipartite quantum systems, with bound audits.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and check every bound")
    _add_common(p)

    p = sub.add_parser("demo", help="run a named demo (no name lists them)")
    p.add_argument("name", nargs="?", choices=sorted(demos.DEMOS))
    _add_common(p, scenario=False)
    p.add_argument("--beta", type=float)
    p.add_argument("--gap", type=float)
    p.add_argument("--angle", type=float)

    p = sub.add_parser("verify", help="randomized audit of every bound (or a single scenario)")
    _add_common(p)
    p.add_argument("--dims", default="2,2", help="subsystem dimensions, e.g. 2,3")
    p.add_argument("--trials", type=int, default=100)

    p = sub.add_parser("optimize", help="search feedback unitaries for a scenario")
    _add_common(p)
    p.add_argument("--objective", help="net_work | extracted_work_A | bound_slack:NAME")
    p.add_argument("--budget", type=int, help="objective evaluations per restart")
    p.add_argument("--restarts", type=int)
    p.add_argument("--method", choices=("nelder-mead", "gradient"))
    p.add_argument("--trials", type=int, help="alias for --restarts")
    p.set_defaults(seed=None)  # so an explicit --seed 0 overrides the file's optimize block

    p = sub.add_parser("sweep", help="one run per grid point along beta, gap or angle")
    _add_common(p)
    p.add_argument("--axis", choices=("beta", "gap", "angle"), default="gap")
    p.add_argument("--grid", required=True, help="comma-separated values, or start:stop:num")
    return parser


def _parse_grid(text: str) -> list[float]:
    if ":" in text:
        a, b, n = text.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    return [float(x) for x in text.split(",") if x.strip()]


def _scenario(args):
    if getattr(args, "scenario", None):
        return load_scenario(args.scenario)
    name = getattr(args, "demo", None) or getattr(args, "name", None)
    if not name:
        raise ValueError("give --scenario PATH or --demo NAME")
    return demos.build(name, args.beta, args.gap, getattr(args, "angle", None))


def _emit(args, text: str) -> None:
    if args.output:
        atomic_write(args.output, text)
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _color(args) -> bool:
    return args.format == "report" and not args.output and color_enabled(sys.stdout)


def _ledger_output(args, ledger, records, extra=None) -> str:
    if args.format == "report":
        return ledger_report(ledger, records, _color(args), extra)
    if args.format == "json":
        return dumps_json(ledger_to_dict(ledger, records))
    rows = record_rows(records, scenario=ledger.name)
    return rows_csv(rows) if args.format == "csv" else rows_jsonl(rows)


def cmd_run(args) -> int:
    from .protocol import run

    ledger = run(_scenario(args))
    records = evaluate(ledger, args.tolerance)
    _emit(args, _ledger_output(args, ledger, records))
    return EXIT_VIOLATION if violations(records) else EXIT_OK


def cmd_demo(args) -> int:
    if args.name is None:
        _emit(args, "".join(f"{n}\n" for n in demos.DEMOS))
        return EXIT_OK
    return cmd_run(args)


def cmd_verify(args) -> int:
    if args.scenario or args.demo:
        return cmd_run(args)
    dims = tuple(int(x) for x in args.dims.split(","))
    if len(dims) != 2 or min(dims) < 1:
        raise ValueError(f"--dims expects two positive integers, got {args.dims!r}")
    t0 = time.perf_counter()
    summary = random_audit(dims, args.seed, args.trials, args.tolerance, args.workers,
                           keep_rows=args.format in ("csv", "jsonl"))
    if args.format == "report":
        text = audit_report(summary, _color(args))
    elif args.format == "json":
        text = dumps_json({
            "dims": list(dims), "seed": args.seed, "trials": args.trials, "tolerance": args.tolerance,
            "violations": summary.total_violations, "errors": [list(e) for e in summary.errors],
            "max_balance_residual": summary.max_balance_residual, "coverage": summary.coverage,
            "records": {k: vars(v) for k, v in summary.records.items()},
        })
    else:
        cols = ("trial", "scenario", "name", "title", "lhs", "rhs", "sense", "slack", "applicable", "satisfied",
                "equality_hint")
        rows = [{c: r.get(c) for c in cols} for r in summary.rows]
        text = rows_csv(rows, cols) if args.format == "csv" else rows_jsonl(rows)
    _emit(args, text)
    print(f"audit finished in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    if summary.errors:
        for t, e in summary.errors:
            print(f"trial {t}: {e}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_VIOLATION if summary.total_violations else EXIT_OK


def cmd_optimize(args) -> int:
    from .optimizer import ParameterizedPlan, optimize

    s = _scenario(args)
    block = dict(s.optimize or {})
    objective = args.objective or block.get("objective", "net_work")
    budget = args.budget or block.get("budget", 5000)
    restarts = args.restarts or args.trials or block.get("restarts", 8)
    seed = args.seed if args.seed is not None else block.get("seed", 0)
    method = args.method or block.get("method", "nelder-mead")
    plan = None
    if block.get("free_slots"):
        plan = ParameterizedPlan(s, tuple(tuple(x) for x in block["free_slots"]))
    res = optimize(s, plan, objective, budget, seed, restarts, method, args.workers)
    records = evaluate(res.ledger, args.tolerance)
    extra = [
        "optimization",
        f"  objective       {objective}",
        f"  best value      {fmt(res.best_value)}",
        f"  converged       {fmt(res.converged)}",
        f"  restarts        {res.restarts_used}",
        f"  evaluations     {res.evaluations}",
        "  restart values  " + ", ".join(fmt(v) for v in res.restart_values),
        "  best parameters " + ", ".join(fmt(v) for v in res.best_params),
    ]
    if args.format == "json":
        d = ledger_to_dict(res.ledger, records)
        d["optimization"] = {"objective": objective, "best_value": res.best_value, "converged": res.converged,
                             "restarts_used": res.restarts_used, "evaluations": res.evaluations,
                             "best_params": [float(x) for x in res.best_params]}
        _emit(args, dumps_json(d))
    else:
        _emit(args, _ledger_output(args, res.ledger, records, extra))
    return EXIT_VIOLATION if violations(records) else EXIT_OK


def cmd_sweep(args) -> int:
    from .optimizer import sweep

    if args.scenario:
        template = load_scenario(args.scenario)
    elif args.demo:
        fixed = {k: v for k, v in (("beta", args.beta), ("gap", args.gap), ("angle", args.angle))
                 if v is not None and k != args.axis}
        name = args.demo

        def template(**kw):
            return demos.build(name, **{**fixed, **kw})
    else:
        raise ValueError("give --scenario PATH or --demo NAME")
    rows = sweep(template, args.axis, _parse_grid(args.grid), args.workers)
    if args.format in ("csv", "report"):
        text = rows_csv(rows)
    elif args.format == "jsonl":
        text = rows_jsonl(rows)
    else:
        text = dumps_json(rows)
    _emit(args, text)
    bad = [r for r in rows if r["error"]]
    for r in bad:
        print(f"{args.axis}={r['value']}: {r['error']}", file=sys.stderr)
    if bad:
        return EXIT_ERROR
    slacks = [v for r in rows for k, v in r.items() if k.startswith("slack_") and v is not None]
    return EXIT_VIOLATION if any(v < -args.tolerance for v in slacks) else EXIT_OK


COMMANDS = {"run": cmd_run, "demo": cmd_demo, "verify": cmd_verify, "optimize": cmd_optimize, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return EXIT_ERROR
    except Exception as exc:
        print(f"demonforge: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
