import json

import pytest

from asmrpc.cli import main

from conftest import SCENARIOS


def scn(name):
    return str(SCENARIOS / f"{name}.scn")


@pytest.fixture(autouse=True)
def trace_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ASMRPC_TRACE_DIR", str(tmp_path / "traces"))
    return tmp_path / "traces"


def test_parse_figures(capsys):
    assert main(["parse", "imp2ea", "CALL1", "--expand"]) == 0
    out = capsys.readouterr().out
    assert "round-trip: ok" in out and "module RPCImpl" in out


def test_parse_bad_file(tmp_path, capsys):
    bad = tmp_path / "bad.asm"
    bad.write_text("module M\n  if then\nendmodule\n")
    assert main(["parse", str(bad)]) == 2
    assert main(["parse", str(tmp_path / "missing.asm")]) == 2


def test_run_writes_to_the_trace_dir(trace_dir, capsys):
    assert main(["run", "--scenario", scn("problem1"), "--seed", "4"]) == 0
    assert (trace_dir / "problem1-seed4.trace").exists()
    out = capsys.readouterr().out
    assert "memory-exact: PASS" in out


def test_run_timed(tmp_path, capsys):
    out = tmp_path / "p4.trace"
    assert main(["run-timed", "--scenario", scn("problem4"), "--seed", "1", "--horizon", "3000",
                 "--delta", "10", "--epsilon", "25", "--out", str(out)]) == 0
    header = json.loads(out.read_text().splitlines()[0])
    assert header["horizon"] == 3000 and header["timed"]


def test_mode_mismatch_is_a_usage_error():
    assert main(["run", "--scenario", scn("problem4")]) == 2
    assert main(["run-timed", "--scenario", scn("problem1")]) == 2


def test_usage_errors(capsys):
    assert main([]) == 2
    assert main(["run"]) == 2
    assert main(["run", "--scenario", scn("problem1"), "--checks", "validity,bogus"]) == 2
    assert main(["run", "--scenario", str(SCENARIOS / "nope.scn")]) == 2
    assert main(["run", "--scenario", scn("problem1"), "--policy", "lazy"]) == 2


def test_clash_exit_code(trace_dir, capsys):
    assert main(["run", "--scenario", scn("clash")]) == 3
    assert "clash at CallReply" in capsys.readouterr().out
    assert any(trace_dir.iterdir())


def test_failed_check_exit_code_and_counterexample(tmp_path, capsys):
    # the retrying implementation reads twice in this run, which the exact-read check rejects
    out = tmp_path / "p3.trace"
    assert main(["run", "--scenario", scn("problem3"), "--seed", "7", "--out", str(out),
                 "--checks", "memory-multi,memory-exact"]) == 1
    cex = tmp_path / "p3.memory-exact.cex.trace"
    assert cex.exists()
    assert main(["check", str(cex), "--checks", "memory-exact"]) == 1
    assert main(["check", str(cex), "--checks", "validity,memory-multi"]) == 0


def test_check_detects_a_tampered_trace(tmp_path):
    out = tmp_path / "p1.trace"
    assert main(["run", "--scenario", scn("problem1"), "--out", str(out)]) == 0
    assert main(["check", str(out)]) == 0
    lines = out.read_text().splitlines()
    i = next(i for i, l in enumerate(lines) if '"CallReplyValue"' in l)
    rec = json.loads(lines[i])
    rec["updates"].append(["MemVals", ["v0"], True])
    rec["updates"].sort(key=lambda u: (u[0], json.dumps(u[1]), json.dumps(u[2])))
    lines[i] = json.dumps(rec, separators=(", ", ": "))
    out.write_text("\n".join(lines) + "\n")
    assert main(["check", str(out), "--checks", "validity"]) == 1


def test_check_rejects_garbage(tmp_path):
    junk = tmp_path / "junk.trace"
    junk.write_text("hello\n")
    assert main(["check", str(junk)]) == 2


def test_enumerate(capsys):
    assert main(["enumerate", "--scenario", scn("enum_tiny"), "--depth", "4"]) == 0
    assert "traces:" in capsys.readouterr().out
    assert main(["enumerate", "--scenario", scn("enum_tiny"), "--depth", "10", "--cap", "100"]) == 2
    assert main(["enumerate", "--scenario", scn("problem4"), "--depth", "2"]) == 2


def test_same_seed_same_bytes(tmp_path):
    a, b = tmp_path / "a.trace", tmp_path / "b.trace"
    for path in (a, b):
        assert main(["run-timed", "--scenario", scn("problem5"), "--seed", "11", "--horizon", "2000",
                     "--out", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
