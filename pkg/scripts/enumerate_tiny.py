"""Enumerate every run of the tiny configuration up to a depth and check each one."""

import argparse
import time
from collections import Counter
from pathlib import Path

from asmrpc.checks import run_checks
from asmrpc.components import build_scenario, load_scenario
from asmrpc.runtime import enumerate_runs

TINY = Path(__file__).resolve().parent.parent / "scenarios" / "enum_tiny.scn"
CHECKS = ("validity", "interface", "memory-exact", "liveness")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--depth", type=int, default=10)
    parser.add_argument("--scenario", default=str(TINY))
    args = parser.parse_args()

    config = build_scenario(load_scenario(args.scenario))
    statuses = Counter()
    failures = Counter()
    started = time.perf_counter()
    for trace in enumerate_runs(config, args.depth):
        statuses[trace.status] += 1
        for report in run_checks(trace, CHECKS):
            failures[report.name] += not report.passed
    total = sum(statuses.values())
    print(f"{total} traces at depth {args.depth} in {time.perf_counter() - started:.1f} s")
    print("  " + ", ".join(f"{k}={v}" for k, v in sorted(statuses.items())))
    for name in CHECKS:
        print(f"  {name}: {total - failures[name]}/{total} passed")
    return 1 if any(failures.values()) else 0


if __name__ == "__main__":
    raise SystemExit(main())
