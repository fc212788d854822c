from dataclasses import replace

import pytest

from asmrpc.checks import check_rpc_impl, extract_operations
from asmrpc.components import (
    BadParams, BadSpec, WiringError, build_component, build_scenario, corpus_files, corpus_text, inspect_source,
    parse_scenario, pool_warnings, preset, render_scenario, reseed, scenario_digest,
)
from asmrpc.core import FALSE, TRUE, AgentId, Sym
from asmrpc.oracles import Constant
from asmrpc.runtime import run
from asmrpc.timed import simulate_timed
from asmrpc.traceio import format_trace

from conftest import SCENARIOS, scenario

KINDS = ["problem1", "problem2", "problem3", "problem4", "problem5"]


@pytest.mark.parametrize("kind", KINDS)
def test_scenario_files_render_and_reparse(kind):
    spec, _ = scenario(kind)
    text = render_scenario(spec)
    again = parse_scenario(text)
    assert render_scenario(again) == text
    assert scenario_digest(again) == scenario_digest(spec)


@pytest.mark.parametrize("kind", KINDS)
def test_shipped_files_match_the_presets(kind):
    spec, _ = scenario(kind)
    assert render_scenario(spec) == render_scenario(preset(kind))


@pytest.mark.parametrize("name", corpus_files())
def test_every_corpus_file_is_clean(name):
    report = inspect_source(corpus_text(name))
    assert report.ok, report.diagnostics


def test_custom_program_is_embedded_in_the_rendering():
    spec, _ = scenario("clash")
    assert "Confused" in spec.program
    again = parse_scenario(render_scenario(spec))
    assert again.program == spec.program


@pytest.mark.parametrize("text, error", [
    ("kind = problem1\nwire.MemComponent = RPC\n", WiringError),
    ("kind = problem1\nwire.Nope = Memory\n", WiringError),
    ("kind = problem3\nwire.Destination = Memory\ncomponents = Caller:1, MemoryImpl:1, RPC:1, Memory:1\n",
     WiringError),
    ("kind = problem1\ncomponents = Caller:1, LossyRPC:1, Memory:1\n", BadSpec),
    ("kind = problem1\ninitval = v7\n", BadSpec),
    ("kind = problem1\npolicy = lazy\n", BadSpec),
])
def test_configuration_errors(text, error):
    with pytest.raises(error):
        build_scenario(parse_scenario(text))


@pytest.mark.parametrize("text", ["kind = problem1\nbogus = 1\n", "kind = problem1\nseed = x\n",
                                  "just words\n", "kind = problem1\noracle.Fail = random()\n"])
def test_scenario_syntax_errors(text):
    with pytest.raises(BadSpec):
        parse_scenario(text)


def test_component_parameters():
    with pytest.raises(BadParams):
        build_component("LossyRPC")
    with pytest.raises(BadParams):
        build_component("Memory", {"delta": 3})
    assert build_component("ReliableMemory").oracles["Fail"] == Constant(FALSE)


def test_reliable_memory_never_fails_even_if_asked_to():
    spec, _ = scenario("problem2")
    spec = spec.with_oracle("Fail", Constant(TRUE))
    for seed in range(3):
        trace = run(build_scenario(replace(spec, seed=seed)))
        assert not any(op.return_value == Sym("MemFailure") for op in extract_operations(trace))


@pytest.mark.parametrize("kind, seed", [("problem1", 3), ("problem5", 2)])
def test_reseed_matches_a_fresh_build(kind, seed):
    spec, config = scenario(kind)
    fresh = build_scenario(replace(spec, seed=seed))
    quick = reseed(spec, config, seed)
    go = simulate_timed if spec.timed else run
    assert format_trace(go(quick)) == format_trace(go(fresh))


def test_agents_are_named_per_component():
    _, config = scenario("problem3")
    assert AgentId("caller1") in config.agents and config.agents[AgentId("caller1")] == "Caller"
    assert sorted(set(config.agents.values())) == ["Caller", "MemoryImpl", "RPC", "ReliableMemory"]


def test_timed_lossy_scenarios_get_a_recycler():
    _, config = scenario("problem4")
    assert "Recycler" in config.agents.values()


def test_pool_warnings():
    spec = preset("problem4")
    assert pool_warnings(spec) == []
    small = replace(spec, components=(("Caller", 3), ("LossyRPC", 1), ("Memory", 1)))
    assert any("PoolTooSmall" in w for w in pool_warnings(small))


def test_verbatim_timed_library_strands_relayed_operations():
    # Taken literally, the timed RETURN clears the caller's CallOutTime, so the
    # implementation can neither relay the reply nor time out.
    spec = replace(preset("problem5"), library="timed-verbatim")
    trace = simulate_timed(build_scenario(spec))
    report = check_rpc_impl(trace)
    assert not report.passed and "no return by call + 45" in report.message
    ops = [op for op in extract_operations(trace) if op.component == "RPCImpl"]
    assert any(not op.returned for op in ops)
    assert check_rpc_impl(simulate_timed(build_scenario(preset("problem5")))).passed


def test_verbatim_memory_impl_blocks_the_caller():
    spec = replace(preset("problem3"), verbatim=("MemoryImpl",), budget=300)
    trace = run(build_scenario(spec))
    # the RPC agents never see a remotecall, so nothing reaches the memory
    assert not any(op.component == "ReliableMemory" for op in extract_operations(trace))


def test_scenarios_directory_contents():
    assert {p.stem for p in SCENARIOS.glob("*.scn")} >= set(KINDS) | {"enum_tiny", "clash"}
