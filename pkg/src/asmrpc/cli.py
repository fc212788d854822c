"""Command-line entry point: ``asmrpc {parse,run,run-timed,enumerate,check}``.

Exit codes: 0 every check passed; 1 a check failed (counterexample
written); 2 usage or configuration error; 3 a run aborted on a clash.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from .checks import CHECKS, CheckReport, UnknownCheck, run_checks
from .components import (
    FIGURES, BadSpec, build_scenario, checks_for, corpus_text, inspect_source, load_scenario, parse_scenario,
    pool_warnings,
)
from .dsl import DslError, render_rule
from .runtime import BudgetExceeded, ClashAbort, ExplosionGuard, MalformedTrace, enumerate_runs, run
from .timed import simulate_timed
from .traceio import read_trace, write_trace

OK, CHECK_FAILED, USAGE, CLASH = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers

def _trace_dir() -> Path:
    return Path(os.environ.get("ASMRPC_TRACE_DIR", "traces"))


def _check_names(arg: Optional[str], default) -> tuple:
    names = tuple(n.strip() for n in arg.split(",") if n.strip()) if arg else tuple(default)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; known: {', '.join(CHECKS)}")
    return names


def _load_spec(args):
    if not args.scenario:
        raise UsageError("--scenario is required")
    spec = load_scenario(args.scenario)
    overrides = {}
    for flag in ("seed", "budget", "horizon", "delta", "epsilon", "policy"):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[flag] = value
    return replace(spec, **overrides)


def _report(reports: list[CheckReport], out_base: Optional[Path], out=None) -> int:
    out = out or sys.stdout
    status = OK
    for r in reports:
        print(r.line(), file=out)
        if not r.passed:
            status = CHECK_FAILED
            if r.counterexample is not None and out_base is not None:
                path = out_base.with_name(f"{out_base.stem}.{r.name}.cex.trace")
                write_trace(r.counterexample, path)
                print(f"  counterexample: {path}", file=out)
    return status


def _default_out(spec, kind_suffix: str = "") -> Path:
    return _trace_dir() / f"{spec.kind}{kind_suffix}-seed{spec.seed}.trace"


# --------------------------------------------------------------- commands

def cmd_parse(args) -> int:
    status = OK
    for item in args.files:
        if item in FIGURES:
            text, label = corpus_text(FIGURES[item]), f"{item} ({FIGURES[item]})"
        else:
            try:
                text, label = Path(item).read_text(encoding="utf-8"), item
            except OSError as exc:
                raise UsageError(str(exc)) from None
        try:
            report = inspect_source(text)
        except DslError as exc:
            print(f"{label}: {type(exc).__name__}: {exc}")
            status = max(status, USAGE)
            continue
        kind = "timed" if report.timed else "untimed"
        macros = ", ".join(report.own.macros) or "-"
        modules = ", ".join(report.own.modules) or "-"
        print(f"{label}: {kind}; macros: {macros}; modules: {modules}; "
              f"round-trip: {'ok' if report.round_trip else 'FAILED'}")
        for d in report.diagnostics:
            print(f"  {d}")
        if args.expand:
            for name, rule in report.expanded.items():
                print(f"module {name}\n{render_rule(rule, 1)}\nendmodule")
        if not report.ok:
            status = max(status, CHECK_FAILED)
    return status


def _execute(args, timed: bool) -> int:
    spec = _load_spec(args)
    if spec.timed != timed:
        raise UsageError(f"scenario {args.scenario} is {'timed' if spec.timed else 'untimed'}; "
                         f"use {'run-timed' if spec.timed else 'run'}")
    names = _check_names(args.checks, checks_for(spec))
    for warning in pool_warnings(spec):
        print(f"warning: {warning}", file=sys.stderr)
    config = build_scenario(spec)
    out = Path(args.out) if args.out else _default_out(spec)
    try:
        trace = simulate_timed(config) if timed else run(config)
    except ClashAbort as exc:
        write_trace(exc.trace, out)
        print(f"clash: {exc.clash}")
        print(f"trace: {out}")
        return CLASH
    except BudgetExceeded as exc:
        write_trace(exc.trace, out)
        print(f"budget: no quiescence within {config.budget} moves")
        print(f"trace: {out}")
        return CHECK_FAILED
    write_trace(trace, out)
    print(f"trace: {out} ({len(trace.moves)} moves, {trace.status})")
    return _report(run_checks(trace, names), out)


def cmd_run(args) -> int:
    return _execute(args, timed=False)


def cmd_run_timed(args) -> int:
    return _execute(args, timed=True)


def cmd_enumerate(args) -> int:
    spec = _load_spec(args)
    if spec.timed:
        raise UsageError("enumerate works on untimed scenarios")
    if args.depth is None or args.depth < 0:
        raise UsageError("--depth must be a non-negative integer")
    default = [n for n in checks_for(spec) if n != "liveness"]
    names = _check_names(args.checks, default)
    config = build_scenario(spec)
    total = 0
    statuses: dict = {}
    try:
        for trace in enumerate_runs(config, args.depth, cap=args.cap):
            total += 1
            statuses[trace.status] = statuses.get(trace.status, 0) + 1
            for r in run_checks(trace, names):
                if not r.passed:
                    out = Path(args.out) if args.out else _trace_dir() / f"{spec.kind}-enum.trace"
                    print(f"traces: {total} (stopped at the first failure)")
                    return _report([r], out)
    except ExplosionGuard as exc:
        print(f"explosion guard: projected {exc.projected} traces exceeds the cap of {exc.cap}")
        return USAGE
    summary = ", ".join(f"{k}={v}" for k, v in sorted(statuses.items()))
    print(f"traces: {total} ({summary})")
    for name in names:
        print(f"{name}: PASS  traces={total}")
    return OK


def cmd_check(args) -> int:
    trace = read_trace(args.trace)
    names = _check_names(args.checks, checks_for(parse_scenario(trace.config.scenario)))
    out = Path(args.out) if args.out else Path(args.trace)
    return _report(run_checks(trace, names), out)


# ------------------------------------------------------------------ main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asmrpc", description="ASM engine for the RPC-memory case study")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse, validate, expand and round-trip programs")
    p.add_argument("files", nargs="+", help=f"program files or figure names ({', '.join(FIGURES)})")
    p.add_argument("--expand", action="store_true", help="print the macro-expanded modules")
    p.set_defaults(func=cmd_parse)

    def common(p, timed: bool):
        p.add_argument("--scenario", help="scenario file")
        p.add_argument("--seed", type=int)
        p.add_argument("--budget", type=int)
        p.add_argument("--policy", choices=("random", "roundrobin", "prompt"))
        p.add_argument("--out", help="trace file (default: $ASMRPC_TRACE_DIR or ./traces)")
        p.add_argument("--checks", help="comma-separated checks (default: by scenario kind)")
        if timed:
            p.add_argument("--horizon", type=int)
            p.add_argument("--delta", type=int)
            p.add_argument("--epsilon", type=int)

    p = sub.add_parser("run", help="one untimed run plus checks")
    common(p, False)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("run-timed", help="one timed run plus checks")
    common(p, True)
    p.set_defaults(func=cmd_run_timed)

    p = sub.add_parser("enumerate", help="check every run up to a depth")
    common(p, False)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--cap", type=int, default=2_000_000, help="abort above this many traces")
    p.set_defaults(func=cmd_enumerate)

    p = sub.add_parser("check", help="check a stored trace file")
    p.add_argument("trace")
    p.add_argument("--checks")
    p.add_argument("--out", help="base path for counterexample files")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE if exc.code else OK
    try:
        return args.func(args)
    except (UsageError, BadSpec, MalformedTrace, UnknownCheck, DslError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE


if __name__ == "__main__":
    sys.exit(main())
