from dataclasses import replace

import pytest

from asmrpc.components import build_scenario
from asmrpc.checks import check_rpc_impl, extract_operations
from asmrpc.core import Const, changes_state
from asmrpc.dsl import parse_rule
from asmrpc.runtime import check_run_validity, run
from asmrpc.timed import OutOfRange, check_prerun, check_timed_run, clock_bounds, externals_at, simulate_timed, state_at

from conftest import config_for, scenario


@pytest.fixture(scope="module")
def p5():
    return simulate_timed(config_for("problem5", 2))


def test_clock_bounds_finds_both_orientations():
    r = parse_rule("if CT >= 5 then A := 1 endif\nif 7 < CT then B := 1 endif\nif CT > 2 then C := 1 endif")
    assert sorted((b.value, off) for b, off in clock_bounds(r) if isinstance(b, Const)) == [(2, 1), (5, 0), (7, 1)]


def test_timed_run_reaches_the_horizon(p5):
    assert p5.status == "horizon" and p5.horizon == 10_000
    times = [m.time for m in p5.moves]
    assert times == sorted(times)
    assert p5.final.get("CT") == 10_000


def test_timed_run_is_valid_prerun_and_timed_run(p5):
    assert check_run_validity(p5) == []
    assert check_prerun(p5) == []
    assert check_timed_run(p5) == []


def test_repeated_moves_in_a_tick_are_internal_reactions(p5):
    seen = set()
    states = list(p5.states())
    for s, m in zip(states, p5.moves):
        if (m.time, m.agent) in seen:
            assert changes_state(s, m.updates) and not m.reads
        seen.add((m.time, m.agent))


def test_a_freed_implementation_agent_forwards_in_the_same_tick():
    # returning and being called again at one tick must not cost the new
    # operation a tick of its 2*delta + epsilon budget
    trace = simulate_timed(config_for("problem5", 56))
    ops = [op for op in extract_operations(trace) if op.component == "RPCImpl"]
    for op in ops:
        if op.nested:
            assert op.nested[0].call_time == op.call_time
    assert check_rpc_impl(trace).passed


def test_state_at_sides(p5):
    m = p5.moves[len(p5.moves) // 2]
    t = m.time
    left, at, right = (state_at(p5, t, side) for side in ("left", "at", "right"))
    assert left.get("CT") == at.get("CT") == right.get("CT") == t
    assert right != at
    with pytest.raises(OutOfRange):
        state_at(p5, 0, "left")
    with pytest.raises(OutOfRange):
        state_at(p5, p5.horizon + 1)


def test_oracle_events_are_frozen_per_tick(p5):
    assert p5.events
    keys = [(e.time, e.symbol, e.component) for e in p5.events]
    assert len(keys) == len(set(keys))
    e = p5.events[0]
    assert externals_at(p5, e.time)[(e.symbol, e.component)] == e.value


def test_same_seed_same_timed_trace():
    from asmrpc.traceio import format_trace
    config = config_for("problem4", 9)
    assert format_trace(simulate_timed(config)) == format_trace(simulate_timed(config))


def test_prompt_policy_has_zero_delays():
    spec, _ = scenario("problem4")
    trace = simulate_timed(build_scenario(replace(spec, policy="prompt", seed=1)))
    assert check_timed_run(trace) == []
    # with zero delays a lossy agent reacts to a call in the tick it was made
    pending, lags = {}, []
    for m in trace.moves:
        if m.agent in pending:
            lags.append(m.time - pending.pop(m.agent))
        for loc, v in m.updates:
            if loc.symbol == "CallSender" and v == m.agent and trace.config.agents[loc.args[0]] == "LossyRPC":
                pending[loc.args[0]] = m.time
    assert lags and set(lags) == {0}


def test_shorter_horizon_override():
    trace = simulate_timed(config_for("problem4", 0), horizon=500)
    assert trace.horizon == 500 and all(m.time <= 500 for m in trace.moves)


def test_untimed_run_has_no_clock():
    trace = run(config_for("problem1", 0))
    assert all(m.time is None for m in trace.moves) and trace.horizon is None
