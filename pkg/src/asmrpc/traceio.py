"""Line-oriented trace files.

Layout, one record per line::

    {"format": "asmrpc-trace", "version": 1, "digest": ..., "seed": ..., "timed": ..., "horizon": ..., "scenario": ...}
    @<tick> <symbol>[<component>]=<value>          (timed traces: oracle events)
    {"index": 0, "t": 3, "agent": "caller1", "updates": [...], "reads": [...], "pre": "..."}
    {"end": "<status>", "moves": <n>, "final": "<digest>", "clash": <location or null>}

Oracle events of a tick precede the moves of that tick.  Values are JSON:
true/false, null for undef, integers, ``"name"`` for symbols, ``"@name"``
for agents, arrays for lists.  The scenario text in the header is enough to
rebuild the run configuration, so a trace file is self-contained.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .components import BadSpec, build_scenario, parse_scenario, scenario_digest
from .core import (
    FALSE, TRUE, UNDEF, AgentId, AsmError, Location, Sym, check_value, fire, format_location, parse_value,
    render_value, update_key,
)
from .runtime import MalformedTrace, Move, OracleEvent, Trace, set_clock

FORMAT = "asmrpc-trace"
VERSION = 1

_EVENT_RE = re.compile(r"^@(\d+) (\w+)\[(\w+)\]=(.*)$")


def encode_value(v):
    if v is TRUE:
        return True
    if v is FALSE:
        return False
    if v is UNDEF:
        return None
    if isinstance(v, AgentId):
        return "@" + v.name
    if isinstance(v, Sym):
        return v.name
    if isinstance(v, tuple):
        return [encode_value(x) for x in v]
    return v


def decode_value(x):
    if x is True:
        return TRUE
    if x is False:
        return FALSE
    if x is None:
        return UNDEF
    if isinstance(x, str):
        return AgentId(x[1:]) if x.startswith("@") else Sym(x)
    if isinstance(x, list):
        return tuple(decode_value(y) for y in x)
    if isinstance(x, int):
        return x
    raise MalformedTrace(f"cannot decode value {x!r}")


def _dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": "))


def _move_record(m: Move) -> dict:
    rec = {"index": m.index}
    if m.time is not None:
        rec["t"] = m.time
    rec["agent"] = m.agent.name
    rec["updates"] = [[loc.symbol, encode_value(loc.args), encode_value(v)] for loc, v in m.sorted_updates()]
    rec["reads"] = [[sym, encode_value(args), encode_value(v)] for sym, args, v in m.reads]
    rec["pre"] = m.pre
    return rec


def format_trace(trace: Trace) -> str:
    config = trace.config
    spec = parse_scenario(config.scenario)
    header = {
        "format": FORMAT, "version": VERSION, "digest": scenario_digest(spec), "seed": config.seed,
        "timed": trace.timed, "horizon": trace.horizon, "scenario": config.scenario,
    }
    lines = [_dumps(header)]
    events = list(trace.events)
    e = 0
    for m in trace.moves:
        while e < len(events) and m.time is not None and events[e].time <= m.time:
            lines.append(_event_line(events[e]))
            e += 1
        lines.append(_dumps(_move_record(m)))
    lines += [_event_line(ev) for ev in events[e:]]
    final = trace.final_digest or (trace.final.digest() if trace.final is not None else None)
    clash = format_location(trace.clash.location) if trace.clash is not None else None
    lines.append(_dumps({"end": trace.status, "moves": len(trace.moves), "final": final, "clash": clash}))
    return "\n".join(lines) + "\n"


def _event_line(ev: OracleEvent) -> str:
    return f"@{ev.time} {ev.symbol}[{ev.component}]={render_value(ev.value)}"


def write_trace(trace: Trace, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trace(trace))
    return path


def parse_trace(text: str) -> Trace:
    """Inverse of ``format_trace``.  Raises MalformedTrace on any defect."""
    lines = text.splitlines()
    if not lines:
        raise MalformedTrace("empty trace file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise MalformedTrace(f"line 1: {exc}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise MalformedTrace("line 1: not a trace header")
    if header.get("version") != VERSION:
        raise MalformedTrace(f"unsupported trace version {header.get('version')!r}")
    try:
        spec = parse_scenario(header["scenario"])
        if scenario_digest(spec) != header["digest"]:
            raise MalformedTrace("scenario digest does not match the embedded scenario")
        if spec.seed != header["seed"]:
            raise MalformedTrace("header seed differs from the scenario seed")
        config = build_scenario(spec)
    except (BadSpec, KeyError, TypeError) as exc:
        raise MalformedTrace(f"header: {exc}") from None
    timed = bool(header.get("timed"))
    moves: list[Move] = []
    events: list[OracleEvent] = []
    end = None
    for lineno, line in enumerate(lines[1:], 2):
        if end is not None:
            raise MalformedTrace(f"line {lineno}: content after the end record")
        if line.startswith("@"):
            events.append(_parse_event(line, lineno, timed))
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedTrace(f"line {lineno}: {exc}") from None
        if not isinstance(rec, dict):
            raise MalformedTrace(f"line {lineno}: expected an object")
        if "end" in rec:
            end = rec
            continue
        moves.append(_parse_move(rec, lineno, timed, config))
    if end is None:
        raise MalformedTrace("missing end record")
    if end.get("moves") != len(moves):
        raise MalformedTrace(f"end record counts {end.get('moves')} moves, file has {len(moves)}")
    s = config.initial
    clash = None
    for m in moves:
        try:
            s = fire(set_clock(s, m.time), m.updates)
        except AsmError as exc:
            if end.get("end") == "clash" and m is moves[-1]:
                clash = exc
                break
            raise MalformedTrace(f"move {m.index} cannot be applied: {exc}") from None
    horizon = header.get("horizon") if timed else None
    if horizon is not None:
        s = set_clock(s, horizon)
    return Trace(config, tuple(moves), s, end.get("end", ""), clash if clash is not None else None,
                 tuple(events), horizon, end.get("final"))


def _parse_event(line: str, lineno: int, timed: bool) -> OracleEvent:
    if not timed:
        raise MalformedTrace(f"line {lineno}: oracle event in an untimed trace")
    m = _EVENT_RE.match(line)
    if not m:
        raise MalformedTrace(f"line {lineno}: bad oracle event {line!r}")
    try:
        value = parse_value(m.group(4))
    except ValueError as exc:
        raise MalformedTrace(f"line {lineno}: {exc}") from None
    return OracleEvent(int(m.group(1)), m.group(2), m.group(3), value)


def _parse_move(rec: dict, lineno: int, timed: bool, config) -> Move:
    try:
        agent = AgentId(rec["agent"])
        updates = []
        for symbol, args, value in rec["updates"]:
            updates.append((Location(symbol, decode_value(args)), check_value(decode_value(value))))
        reads = tuple((symbol, decode_value(args), decode_value(value)) for symbol, args, value in rec["reads"])
        time = rec.get("t")
        if timed and not isinstance(time, int):
            raise MalformedTrace("timed move without a tick")
        move = Move(rec["index"], agent, frozenset(updates), reads, rec["pre"], time if timed else None)
    except MalformedTrace as exc:
        raise MalformedTrace(f"line {lineno}: {exc}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedTrace(f"line {lineno}: bad move record ({exc})") from None
    if len(move.updates) != len(updates):
        raise MalformedTrace(f"line {lineno}: duplicate update")
    if [update_key(u) for u in updates] != sorted(update_key(u) for u in updates):
        raise MalformedTrace(f"line {lineno}: updates not in canonical order")
    return move


def read_trace(path) -> Trace:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise MalformedTrace(str(exc)) from None
    return parse_trace(text)


__all__ = ["FORMAT", "encode_value", "decode_value", "format_trace", "write_trace", "parse_trace", "read_trace"]
