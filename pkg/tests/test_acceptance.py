"""Acceptance gate: one test per criterion, each timed against its limit.

Every test records a one-line verdict in ``conftest.ACCEPTANCE``; the lines
are printed in the terminal summary.
"""

import copy
import hashlib
import os
import subprocess
import sys
import time
from collections import Counter
from dataclasses import replace

import pytest

from asmrpc.checks import (
    CHECKS, REPLAY_CHECKS, check_memory_semantics, extract_operations, run_checks, top_level,
)
from asmrpc.components import FIGURES, checks_for, corpus_files, corpus_text, inspect_source
from asmrpc.core import TRUE, Location, Sym, fire
from asmrpc.dsl import parse_program, render_program
from asmrpc.runtime import Trace, enumerate_runs, is_effective, producible, run, set_clock
from asmrpc.timed import simulate_timed
from asmrpc.traceio import read_trace, write_trace

from conftest import ACCEPTANCE, SCENARIOS, config_for, scenario

WRITE = Sym("write")
NORMAL = Sym("normal")


def verdict(number: int, passed: bool, detail: str):
    ACCEPTANCE[number] = (passed, detail)
    print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    assert passed, detail


def failing(reports) -> list:
    return [r.name for r in reports if not r.passed]


# ------------------------------------------------------------ criterion 1

def test_corpus_fidelity():
    start = time.perf_counter()
    problems = []
    names = sorted(set(FIGURES.values()) | set(corpus_files()))
    for name in names:
        text = corpus_text(name)
        report = inspect_source(text)
        if not report.ok:
            problems.append(f"{name}: {report.diagnostics or 'round-trip'}")
        rendered = render_program(report.own)
        if render_program(parse_program(rendered)) != rendered:
            problems.append(f"{name}: rendering is not a fixed point")
        if report.own.modules and not all(report.expanded.get(m) for m in report.own.modules):
            problems.append(f"{name}: expansion lost a module")
    elapsed = time.perf_counter() - start
    verdict(1, not problems and elapsed < 1.0,
            f"{len(names)} programs parsed, validated, expanded, round-tripped in {elapsed:.2f}s (limit 1s)"
            + (f"; problems: {problems}" if problems else ""))


# ------------------------------------------------------------ criterion 2

def test_exhaustive_small_memory():
    spec, config = scenario("enum_tiny")
    assert spec.pools() == {"Caller": 1, "Memory": 2}
    assert spec.memlocs == ("l1",) and spec.memvals == ("v1", "v2")
    names = ("validity", "interface", "memory-exact", "liveness")
    start = time.perf_counter()
    total, bad, statuses = 0, [], Counter()
    fingerprint = hashlib.sha256()
    for trace in enumerate_runs(config, 10):
        total += 1
        statuses[trace.status] += 1
        fingerprint.update(repr([m.identity() for m in trace.moves]).encode())
        failed = failing(run_checks(trace, names))
        if failed:
            bad.append((total, failed))
    again = hashlib.sha256()
    recount = 0
    for trace in enumerate_runs(config, 10):
        recount += 1
        again.update(repr([m.identity() for m in trace.moves]).encode())
    elapsed = time.perf_counter() - start
    stable = recount == total and again.digest() == fingerprint.digest()
    verdict(2, not bad and stable and elapsed < 60,
            f"{total} traces to depth 10 ({dict(statuses)}), {total - len(bad)}/{total} pass "
            f"{', '.join(names)}; count stable: {stable}; {elapsed:.1f}s (limit 60s)")


# ------------------------------------------------------------ criterion 3

def test_randomized_memory_and_reliable_memory():
    start = time.perf_counter()
    summary, bad = [], []
    mem_failures = 0
    for name in ("problem1", "problem2"):
        spec, _ = scenario(name)
        assert spec.budget == 5000
        succeed = spec.oracle_table()[("Succeed", None)]
        assert (succeed.fair, succeed.window) == (TRUE, 5)
        names = checks_for(spec)
        assert "liveness" in names
        stats = Counter()
        for seed in range(1000):
            trace = run(config_for(name, seed))
            failed = failing(run_checks(trace, names))
            if failed or trace.status != "quiescent":
                bad.append((name, seed, failed, trace.status))
            ops = extract_operations(trace)
            stats["operations"] += len(ops)
            if name == "problem2":
                mem_failures += sum(op.return_value in (Sym("MemFailure"), Sym("MemFail")) for op in ops)
        summary.append(f"{name}: 1000 runs, {stats['operations']} operations")
    elapsed = time.perf_counter() - start
    verdict(3, not bad and mem_failures == 0 and elapsed < 60,
            f"{'; '.join(summary)}; failures {len(bad)}; reliable MemFailure {mem_failures}; "
            f"{elapsed:.1f}s (limit 60s)" + (f"; first: {bad[0]}" if bad else ""))


# ------------------------------------------------------------ criterion 4

def test_randomized_memory_implementation():
    spec, _ = scenario("problem3")
    names = checks_for(spec)
    assert "memory-multi" in names
    start = time.perf_counter()
    bad, stats = [], Counter()
    for seed in range(1000):
        trace = run(config_for("problem3", seed))
        reports = run_checks(trace, names)
        failed = failing(reports)
        if failed or trace.status != "quiescent":
            bad.append((seed, failed, trace.status))
        for r in reports:
            if r.name == "memory-multi":
                stats.update(r.stats)
    elapsed = time.perf_counter() - start
    verdict(4, not bad and stats["multi-read"] >= 1 and elapsed < 120,
            f"1000 runs pass {', '.join(names)}; successful reads {stats['read-ok']}, "
            f"with >=2 atomic reads {stats['multi-read']}; {elapsed:.1f}s (limit 120s)"
            + (f"; first failure: {bad[0]}" if bad else ""))


# ------------------------------------------------------------ criterion 5

def test_timed_lossy_rpc_and_implementation():
    runs_each = 250
    start = time.perf_counter()
    bad, lossy_forms, impl_forms = [], Counter(), Counter()
    worst = 0
    for name in ("problem4", "problem5"):
        spec, _ = scenario(name)
        assert (spec.delta, spec.epsilon, spec.horizon) == (10, 25, 10_000)
        names = checks_for(spec)
        for seed in range(runs_each):
            trace = simulate_timed(config_for(name, seed))
            reports = run_checks(trace, names)
            failed = failing(reports)
            if failed:
                bad.append((name, seed, failed))
            for r in reports:
                if r.name == "lossy":
                    lossy_forms.update(r.stats)
                elif r.name == "rpc-impl":
                    impl_forms.update(r.stats)
            for op in extract_operations(trace):
                if op.component == "RPCImpl" and op.returned:
                    worst = max(worst, op.return_time - op.call_time)
    elapsed = time.perf_counter() - start
    bound = 2 * 10 + 25
    four = {f"form-{i}" for i in range(1, 5)}
    ok = not bad and worst <= bound and four <= set(lossy_forms) and four <= set(impl_forms) and elapsed < 120
    verdict(5, ok,
            f"{runs_each} runs each of problem4/problem5; failures {len(bad)}; "
            f"lossy forms {dict(sorted(lossy_forms.items()))}; "
            f"implementation forms {dict(sorted((k, v) for k, v in impl_forms.items() if k.startswith('form')))}; "
            f"slowest return {worst} <= {bound}; {elapsed:.1f}s (limit 120s)"
            + (f"; first failure: {bad[0]}" if bad else ""))


# ------------------------------------------------------------ criterion 6

def _replace_moves(trace: Trace, moves) -> Trace:
    moves = tuple(moves)
    s = trace.config.initial
    for m in moves:
        s = fire(set_clock(s, m.time), m.updates)
    if trace.timed:
        s = set_clock(s, trace.horizon)
    return replace(trace, moves=moves, final=s, final_digest=None)


def _subtree(op):
    yield op
    for inner in op.nested:
        yield from _subtree(inner)


def drop_writes(trace: Trace, k: int) -> Trace:
    """Remove every memory update made on behalf of the k-th successful write."""
    writes = [op for op in top_level(extract_operations(trace))
              if op.effective_call()[0] == WRITE and op.return_type == NORMAL]
    op = writes[k % len(writes)]
    servers = {(o.callee, o.call_index, o.return_index) for o in _subtree(op)}
    moves = []
    for m in trace.moves:
        if any(a == m.agent and c < m.index <= r for a, c, r in servers):
            m = replace(m, updates=frozenset(u for u in m.updates if u[0].symbol != "Memory"))
        moves.append(m)
    return _replace_moves(trace, moves)


def _retime(trace: Trace, index: int, t: int) -> Trace:
    moves = list(trace.moves)
    moves[index] = replace(moves[index], time=t)
    return replace(trace, moves=tuple(moves))


def delay_impl_return(trace: Trace, k: int) -> Trace:
    """Move the k-th implementation return past call + 2*delta + epsilon."""
    bound = 2 * trace.config.delta + trace.config.epsilon
    ops = [op for op in extract_operations(trace) if op.component == "RPCImpl" and op.returned]
    op = ops[k % len(ops)]
    return _retime(trace, op.return_index, op.call_time + bound + 1 + k)


def delay_lossy_relay(trace: Trace, k: int) -> Trace:
    """Relay the k-th memory reply more than delta ticks after it arrived."""
    ops = [op for op in extract_operations(trace)
           if op.component == "LossyRPC" and op.returned and op.nested and op.nested[0].returned]
    op = ops[k % len(ops)]
    inner = op.nested[0]
    return _retime(trace, op.return_index, inner.return_time + trace.config.delta + 1 + k)


STATIC_NOOPS = [
    (Location("MemVals", (Sym("v0"),)), TRUE),
    (Location("MemLocs", (Sym("l1"),)), TRUE),
    (Location("ArgNum", (Sym("read"),)), 1),
]


def tamper(trace: Trace, k: int) -> Trace:
    """Add a spurious update (one that happens not to change the state)."""
    pos = (len(trace.moves) * (k + 1)) // 4
    moves = list(trace.moves)
    moves[pos] = replace(moves[pos], updates=moves[pos].updates | {STATIC_NOOPS[k % len(STATIC_NOOPS)]})
    return replace(trace, moves=tuple(moves))


def reorder(trace: Trace, k: int) -> Trace:
    """Swap the k-th adjacent pair of commuting moves; recorded digests travel with their moves."""
    config = trace.config
    states = list(trace.states())
    found = 0
    for i in range(len(trace.moves) - 1):
        a, b = trace.moves[i], trace.moves[i + 1]
        s = states[i]
        if a.agent == b.agent or not producible(config, s, b.agent, b.updates, b.reads) \
                or not is_effective(s, b.updates, b.reads):
            continue
        mid = fire(s, b.updates)
        if not producible(config, mid, a.agent, a.updates, a.reads) or fire(mid, a.updates) != states[i + 2]:
            continue
        if found == k:
            moves = list(trace.moves)
            moves[i], moves[i + 1] = replace(b, index=i), replace(a, index=i + 1)
            return replace(trace, moves=tuple(moves))
        found += 1
    raise LookupError("no commuting pair")


# (label, scenario, seed, mutation, k, intended check)
MUTATIONS = [
    ("dropped write", "problem1", 0, drop_writes, 0, "memory-exact"),
    ("dropped write", "problem1", 5, drop_writes, 1, "memory-exact"),
    ("dropped write", "problem2", 3, drop_writes, 0, "memory-exact"),
    ("dropped write", "problem3", 1, drop_writes, 0, "memory-multi"),
    ("dropped write", "problem4", 2, drop_writes, 0, "memory-multi"),
    ("delayed return", "problem5", 0, delay_impl_return, 0, "rpc-impl"),
    ("delayed return", "problem5", 1, delay_impl_return, 2, "rpc-impl"),
    ("delayed return", "problem5", 2, delay_impl_return, 5, "rpc-impl"),
    ("delayed return", "problem4", 0, delay_lossy_relay, 0, "lossy"),
    ("delayed return", "problem4", 1, delay_lossy_relay, 1, "lossy"),
    ("tampered update set", "problem1", 1, tamper, 0, "validity"),
    ("tampered update set", "problem1", 2, tamper, 1, "validity"),
    ("tampered update set", "problem2", 0, tamper, 2, "validity"),
    ("tampered update set", "problem3", 0, tamper, 0, "validity"),
    ("tampered update set", "problem3", 2, tamper, 1, "validity"),
    ("reordered moves", "problem1", 0, reorder, 0, "validity"),
    ("reordered moves", "problem1", 3, reorder, 2, "validity"),
    ("reordered moves", "problem2", 1, reorder, 0, "validity"),
    ("reordered moves", "problem3", 0, reorder, 1, "validity"),
    ("reordered moves", "problem3", 3, reorder, 3, "validity"),
]


def _judged(names, intended) -> list:
    """Checks that must keep passing: property checks, plus replay checks for replay mutations."""
    if intended in REPLAY_CHECKS:
        return [n for n in names if n != intended]
    return [n for n in names if n not in REPLAY_CHECKS and n != intended]


def test_mutation_soundness(tmp_path):
    start = time.perf_counter()
    outcomes, bad = Counter(), []
    for i, (label, name, seed, mutate, k, intended) in enumerate(MUTATIONS):
        spec, _ = scenario(name)
        names = checks_for(spec)
        config = config_for(name, seed)
        original = simulate_timed(config) if config.timed else run(config)
        before = failing(run_checks(original, names))
        mutant = mutate(original, k)
        reports = {r.name: r for r in run_checks(mutant, names)}
        others = [n for n in _judged(names, intended) if not reports[n].passed]
        target = reports[intended]
        replayed = False
        if not target.passed and target.counterexample is not None:
            path = write_trace(target.counterexample, tmp_path / f"m{i}.{intended}.cex.trace")
            replayed = not CHECKS[intended](read_trace(path)).passed
        ok = not before and not target.passed and not others and replayed
        outcomes[label] += ok
        if not ok:
            bad.append(f"{label} {name}/{seed}: baseline failures {before}, {intended} "
                       f"{'failed' if not target.passed else 'passed'}, also failing {others}, "
                       f"counterexample replays: {replayed}")
    elapsed = time.perf_counter() - start
    verdict(6, not bad and len(MUTATIONS) == 20,
            f"{sum(outcomes.values())}/{len(MUTATIONS)} mutations flip exactly their check with a replayable "
            f"counterexample ({dict(outcomes)}); {elapsed:.1f}s" + (f"; {bad}" if bad else ""))


# ------------------------------------------------------------ criterion 7

@pytest.mark.parametrize("hash_seeds", [("1", "2")])
def test_determinism(tmp_path, hash_seeds):
    cases = [("run", "problem1", 17), ("run", "problem3", 4), ("run-timed", "problem4", 8),
             ("run-timed", "problem5", 23)]
    start = time.perf_counter()
    mismatched = []
    for cmd, name, seed in cases:
        blobs = []
        for hs in hash_seeds:
            out = tmp_path / f"{name}-{hs}.trace"
            env = dict(os.environ, PYTHONHASHSEED=hs)
            proc = subprocess.run(
                [sys.executable, "-m", "asmrpc.cli", cmd, "--scenario", str(SCENARIOS / f"{name}.scn"),
                 "--seed", str(seed), "--out", str(out)],
                env=env, capture_output=True, text=True)
            assert proc.returncode == 0, proc.stdout + proc.stderr
            blobs.append(out.read_bytes())
        if blobs[0] != blobs[1]:
            mismatched.append(name)
    elapsed = time.perf_counter() - start
    verdict(7, not mismatched,
            f"{len(cases)} scenarios run twice in separate processes (different hash seeds): "
            f"{len(cases) - len(mismatched)} byte-identical; {elapsed:.1f}s")
