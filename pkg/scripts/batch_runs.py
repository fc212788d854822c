"""Run a scenario over a range of seeds and summarize the check results.

    python scripts/batch_runs.py scenarios/problem4.scn --seeds 100
"""

import argparse
import time
from collections import Counter

from asmrpc.checks import run_checks
from asmrpc.components import build_scenario, checks_for, load_scenario, reseed
from asmrpc.runtime import run
from asmrpc.timed import simulate_timed


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("scenario")
    parser.add_argument("--seeds", type=int, default=100, help="number of seeds, starting at --first")
    parser.add_argument("--first", type=int, default=0)
    parser.add_argument("--checks", help="comma-separated check names")
    args = parser.parse_args()

    spec = load_scenario(args.scenario)
    names = args.checks.split(",") if args.checks else checks_for(spec)
    base = build_scenario(spec)
    simulate = simulate_timed if spec.timed else run

    failures = Counter()
    moves = 0
    started = time.perf_counter()
    for seed in range(args.first, args.first + args.seeds):
        trace = simulate(reseed(spec, base, seed))
        moves += len(trace.moves)
        for report in run_checks(trace, names):
            if not report.passed:
                failures[report.name] += 1
                print(f"seed {seed}: {report.line()}")
    elapsed = time.perf_counter() - started

    print(f"{args.seeds} runs, {moves / args.seeds:.1f} moves per run, {elapsed:.1f} s")
    for name in names:
        print(f"  {name}: {args.seeds - failures[name]}/{args.seeds} passed")
    return 1 if failures else 0


if __name__ == "__main__":
    raise SystemExit(main())
