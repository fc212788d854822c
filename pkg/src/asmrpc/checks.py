"""Operation extraction and the requirement checks over traces.

Every check takes a Trace and returns a CheckReport.  Checks only look at
the logged moves (and, for read events, re-evaluate the moves that touch
memory), so they work on tampered traces too; whether a trace is a
genuine run is the business of the ``validity`` family.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .components import MEMORY_FAILURES
from .core import FALSE, UNDEF, AgentId, AsmError, Sym, fire, render_value, value_key
from .runtime import (
    MalformedTrace, Trace, Violation, check_run_validity, fire_agent, replay_move, set_clock,
)
from .timed import check_prerun, check_timed_run

NORMAL = Sym("normal")
EXCEPTION = Sym("exception")
BAD_ARG = Sym("BadArg")
BAD_CALL = Sym("BadCall")
RPC_FAILURE = Sym("RPCFailure")
REMOTECALL = Sym("remotecall")
READ = Sym("read")
WRITE = Sym("write")


# ------------------------------------------------------------- operations

@dataclass(eq=False)
class OperationRecord:
    caller: AgentId
    callee: AgentId
    component: str
    procname: object
    args: object
    call_index: int
    call_time: Optional[int] = None
    return_index: Optional[int] = None
    return_time: Optional[int] = None
    return_type: object = None
    return_value: object = UNDEF
    dropped_index: Optional[int] = None     # callee abandoned the call (lossy FAIL)
    nested: list = field(default_factory=list)
    parent: Optional["OperationRecord"] = field(default=None, repr=False)

    @property
    def returned(self) -> bool:
        return self.return_index is not None

    @property
    def outcome(self) -> str:
        if not self.returned:
            return "none"
        return "normal" if self.return_type == NORMAL else "exception"

    def effective_call(self) -> tuple:
        """(procedure, arguments), looking through a remotecall wrapper."""
        if self.procname == REMOTECALL and isinstance(self.args, tuple) and len(self.args) == 2:
            return self.args[0], self.args[1]
        return self.procname, self.args

    def describe(self) -> str:
        at = f"@t={self.call_time}" if self.call_time is not None else ""
        ret = (f"returned {render_value(self.return_type)} {render_value(self.return_value)} at #{self.return_index}"
               if self.returned else "no return")
        return (f"{self.caller!r} -> {self.callee!r} {render_value(self.procname)}{render_value(self.args)} "
                f"at #{self.call_index}{at}, {ret}")


def _update_map(move) -> dict:
    return {(loc.symbol, loc.args): value for loc, value in move.updates}


def extract_operations(trace: Trace) -> list[OperationRecord]:
    """Pair CALL and RETURN update patterns into operations, in call order.

    A call is a move by ``a`` setting ``CallSender(p) := a``; a return is a
    move by ``p`` that clears ``CallSender(p)`` and writes a non-undef
    ``CallReply``.  Calls made by a callee while it serves an operation are
    nested in that operation.
    """
    config = trace.config
    ops: list[OperationRecord] = []
    current: dict = {}          # callee -> its latest operation
    for m in trace.moves:
        ups = _update_map(m)
        a = m.agent
        for (symbol, args), value in ups.items():
            if symbol != "CallSender" or value != a:
                continue
            p = args[0]
            parent = current.get(p)
            if parent is not None and not parent.returned and parent.dropped_index is None:
                raise MalformedTrace(f"move {m.index}: {p!r} is called while still serving {parent.describe()}")
            host = current.get(a)
            host = host if host is not None and not host.returned and host.dropped_index is None else None
            op = OperationRecord(a, p, config.agents.get(p, "?"), ups.get(("CallName", (p,)), UNDEF),
                                 ups.get(("CallArgs", (p,)), UNDEF), m.index, m.time, parent=host)
            if host is not None:
                host.nested.append(op)
            ops.append(op)
            current[p] = op
        if ups.get(("CallSender", (a,)), None) is UNDEF:
            replies = [(args[0], v) for (symbol, args), v in ups.items()
                       if symbol == "CallReply" and v is not UNDEF]
            if replies:
                recipient, kind = replies[0]
                op = current.get(a)
                if op is None or op.returned or op.dropped_index is not None:
                    raise MalformedTrace(f"move {m.index}: RETURN by {a!r} with no open operation")
                if op.caller != recipient:
                    raise MalformedTrace(f"move {m.index}: {a!r} returns to {recipient!r}, "
                                         f"but was called by {op.caller!r}")
                op.return_index = m.index
                op.return_time = m.time
                op.return_type = kind
                op.return_value = ups.get(("CallReplyValue", (recipient,)), UNDEF)
        if ups.get(("CallName", (a,)), None) is FALSE:
            op = current.get(a)
            if op is not None and not op.returned and op.dropped_index is None:
                op.dropped_index = m.index
    return ops


def top_level(ops: list[OperationRecord]) -> list[OperationRecord]:
    return [op for op in ops if op.parent is None]


# ---------------------------------------------------------- memory events

@dataclass(frozen=True)
class MemoryEvent:
    kind: str               # read | write
    location: object
    value: object
    index: int
    time: Optional[int]
    agent: AgentId


_MEMO: dict = {}


def _memo(key, compute):
    hit = _MEMO.get(key)
    if hit is None:
        if len(_MEMO) > 200_000:
            _MEMO.clear()
        hit = _MEMO[key] = compute()
    return hit


def _memory_reads(config, s, m) -> tuple:
    reads: list = []

    def seen(name, args, value):
        if name == "Memory":
            reads.append((args[0], value))
    if not replay_move(config, s, m, seen):
        # not reproducible: follow the first branch under the logged readings
        logged = {(sym, args): v for sym, args, v in m.reads}
        try:
            fire_agent(config, s, m.agent, lambda sym, args: logged.get((sym, args), UNDEF), on_apply=seen)
        except AsmError:
            pass
    return tuple(reads)


def _step(s, m):
    try:
        return fire(s, m.updates)
    except AsmError as exc:
        raise MalformedTrace(f"move {m.index} cannot be applied: {exc}") from None


def extract_memory_events(trace: Trace) -> list[MemoryEvent]:
    """Writes from update sets; reads by re-evaluating each move on its taken branch."""
    config = trace.config
    events: list[MemoryEvent] = []
    s = config.initial
    for m in trace.moves:
        s = set_clock(s, m.time)
        # the memo keeps ``config`` alive, so its id cannot be reused
        key = (id(config), s.digest(), m.agent, m.updates, m.reads)
        component = config.agents.get(m.agent)
        if component is not None and "Memory" in config.symbols[component]:
            reads = _memo(("reads",) + key, lambda: (config, _memory_reads(config, s, m)))[1]
            events += [MemoryEvent("read", loc, v, m.index, m.time, m.agent) for loc, v in reads]
        writes = sorted(((loc.args[0], value) for loc, value in m.updates if loc.symbol == "Memory"),
                        key=value_key)
        events += [MemoryEvent("write", loc, v, m.index, m.time, m.agent) for loc, v in writes]
        s = _memo(("step",) + key, lambda: (config, _step(s, m)))[1]
    return events


# ---------------------------------------------------------------- reports

@dataclass
class CheckReport:
    name: str
    passed: bool
    counterexample: Optional[Trace] = None
    stats: dict = field(default_factory=dict)
    message: str = ""

    def line(self) -> str:
        counts = " ".join(f"{k}={v}" for k, v in sorted(self.stats.items()))
        text = f"{self.name}: {'PASS' if self.passed else 'FAIL'}"
        if counts:
            text += f"  {counts}"
        if self.message:
            text += f"  -- {self.message}"
        return text


def slice_trace(trace: Trace, upto: Optional[int]) -> Trace:
    """The trace cut after move ``upto`` (whole trace for None)."""
    if upto is None or upto >= len(trace.moves) - 1:
        return trace
    moves = trace.moves[:upto + 1]
    s = trace.config.initial
    for m in moves:
        s = fire(set_clock(s, m.time), m.updates)
    if not trace.timed:
        return Trace(trace.config, moves, s, "partial")
    end = moves[-1].time if moves else 0
    events = tuple(e for e in trace.events if e.time <= end)
    return Trace(trace.config, moves, set_clock(s, end), "partial", None, events, end)


def _fail(name, trace, upto, message, stats=None) -> CheckReport:
    return CheckReport(name, False, slice_trace(trace, upto), stats or {}, message)


# ------------------------------------------------------ replay validity

def _from_violations(name: str, trace: Trace, violations: list[Violation]) -> CheckReport:
    if not violations:
        return CheckReport(name, True, stats={"moves": len(trace.moves)})
    first = violations[0]
    upto = first.index if 0 <= first.index < len(trace.moves) else None
    return _fail(name, trace, upto, f"{len(violations)} violation(s); first: {first}",
                 {"violations": len(violations)})


def check_validity(trace: Trace) -> CheckReport:
    return _from_violations("validity", trace, check_run_validity(trace))


def check_prerun_report(trace: Trace) -> CheckReport:
    return _from_violations("prerun", trace, check_prerun(trace))


def check_timed_run_report(trace: Trace) -> CheckReport:
    return _from_violations("timed-run", trace, check_timed_run(trace))


# ------------------------------------------------------------- interface

_CALL_PARTS = ("CallName", "CallArgs")
_CALLER_PARTS = (("CallMade", True), ("CallReply", UNDEF), ("CallReplyValue", UNDEF))


def check_interface(trace: Trace) -> CheckReport:
    """CALL and RETURN happen as whole update groups, and replies reach the sender."""
    s = trace.config.initial
    calls = returns = 0
    for m in trace.moves:
        s = set_clock(s, m.time)
        ups = _update_map(m)
        a = m.agent
        for (symbol, args), value in ups.items():
            if symbol == "CallSender" and value == a:
                p = args[0]
                calls += 1
                if s.get("CallSender", (p,)) is not UNDEF:
                    return _fail("interface", trace, m.index, f"move {m.index}: call to busy agent {p!r}")
                missing = [n for n in _CALL_PARTS if (n, (p,)) not in ups]
                missing += [n for n, _ in _CALLER_PARTS if (n, (a,)) not in ups]
                if missing:
                    return _fail("interface", trace, m.index,
                                 f"move {m.index}: partial CALL, missing {', '.join(missing)}")
            if symbol == "CallReply" and value is not UNDEF:
                returns += 1
                sender = s.get("CallSender", (a,))
                if args[0] != sender:
                    return _fail("interface", trace, m.index,
                                 f"move {m.index}: reply written at {render_value(args[0])}, "
                                 f"sender is {render_value(sender)}")
                need = [("CallReplyValue", (sender,)), ("CallSender", (a,)), ("CallName", (a,)),
                        ("CallArgs", (a,)), ("CallMade", (a,))]
                if trace.timed:
                    need += [("ReturnTime", (sender,)), ("CallInTime", (sender,))]
                missing = [n for n, _ in need if (n, _) not in ups]
                if missing:
                    return _fail("interface", trace, m.index,
                                 f"move {m.index}: partial RETURN, missing {', '.join(missing)}")
        try:
            s = fire(s, m.updates)
        except AsmError as exc:
            raise MalformedTrace(f"move {m.index} cannot be applied: {exc}") from None
    return CheckReport("interface", True, stats={"calls": calls, "returns": returns})


# ---------------------------------------------------------------- memory

def _owner(ops_by_callee: dict, ev: MemoryEvent) -> Optional[OperationRecord]:
    owner = None
    for op in ops_by_callee.get(ev.agent, ()):
        if op.call_index < ev.index and (op.return_index is None or ev.index <= op.return_index):
            owner = op
    return owner


def _root(op: OperationRecord) -> OperationRecord:
    while op.parent is not None:
        op = op.parent
    return op


def check_memory_semantics(trace: Trace, mode: str = "exact") -> CheckReport:
    """Read and write operations touch memory as the requirements allow.

    ``exact``: a successful read performs exactly one atomic read.
    ``multi``: one or more reads (an implementation may retry).
    """
    if mode not in ("exact", "multi"):
        raise ValueError(f"unknown mode {mode!r}")
    name = f"memory-{mode}"
    ops = extract_operations(trace)
    events = extract_memory_events(trace)
    by_callee: dict = {}
    for op in ops:
        by_callee.setdefault(op.callee, []).append(op)
    owned: dict = {}
    for ev in events:
        op = _owner(by_callee, ev)
        if op is None:
            return _fail(name, trace, ev.index, f"memory {ev.kind} at move {ev.index} outside any operation")
        root = _root(op)
        if ev.index <= root.call_index or (root.returned and ev.index > root.return_index):
            return _fail(name, trace, ev.index,
                         f"memory {ev.kind} at move {ev.index} outside the window of {root.describe()}")
        owned.setdefault(id(root), []).append(ev)
    stats = Counter()
    for op in top_level(ops):
        proc, args = op.effective_call()
        evs = owned.get(id(op), [])
        reads = [e for e in evs if e.kind == "read"]
        writes = [e for e in evs if e.kind == "write"]
        end = op.return_index
        if op.return_type == EXCEPTION and op.return_value in (BAD_ARG, BAD_CALL):
            stats["rejected"] += 1
            if evs:
                return _fail(name, trace, end, f"{op.describe()}: rejected call touched memory")
            continue
        if proc not in (READ, WRITE):
            stats["other"] += 1
            if evs:
                return _fail(name, trace, end, f"{op.describe()}: non-memory call touched memory")
            continue
        if not isinstance(args, tuple) or not args:
            return _fail(name, trace, end, f"{op.describe()}: malformed arguments accepted")
        loc = args[0]
        if proc == READ:
            if writes:
                return _fail(name, trace, end, f"{op.describe()}: read operation wrote memory")
            if any(e.location != loc for e in reads):
                return _fail(name, trace, end, f"{op.describe()}: read of another location")
            if not op.returned:
                stats["open"] += 1
                continue
            if op.outcome != "normal":
                stats["read-failed"] += 1
                continue
            stats["read-ok"] += 1
            if mode == "exact" and len(reads) != 1:
                return _fail(name, trace, end, f"{op.describe()}: {len(reads)} atomic reads, expected exactly one")
            if mode == "multi" and not reads:
                return _fail(name, trace, end, f"{op.describe()}: successful read without an atomic read")
            if op.return_value not in {e.value for e in reads}:
                return _fail(name, trace, end, f"{op.describe()}: returned value was never read")
            if len(reads) >= 2:
                stats["multi-read"] += 1
        else:
            value = args[1] if len(args) > 1 else UNDEF
            if reads:
                return _fail(name, trace, end, f"{op.describe()}: write operation read memory")
            if any((e.location, e.value) != (loc, value) for e in writes):
                return _fail(name, trace, end, f"{op.describe()}: wrote something other than its argument")
            if not op.returned:
                stats["open"] += 1
                continue
            if op.outcome != "normal":
                stats["write-failed"] += 1
                continue
            stats["write-ok"] += 1
            if not writes:
                return _fail(name, trace, end, f"{op.describe()}: successful write without an atomic write")
    stats["operations"] = len(top_level(ops))
    stats["events"] = len(events)
    return CheckReport(name, True, stats=dict(stats))


# -------------------------------------------------------------- liveness

def check_liveness(trace: Trace) -> CheckReport:
    """Every operation returns.  Lossy scenarios only count (dropping is legal)."""
    ops = extract_operations(trace)
    open_ops = [op for op in ops if not op.returned]
    stats = {"operations": len(ops), "returned": len(ops) - len(open_ops), "open": len(open_ops)}
    lossy = "LossyRPC" in trace.config.modules
    if lossy or trace.status in ("partial", "depth"):
        return CheckReport("liveness", True, stats=stats, message="statistics only" if lossy else "")
    if open_ops:
        return _fail("liveness", trace, None, f"{open_ops[0].describe()} never returns", stats)
    return CheckReport("liveness", True, stats=stats)


def check_reliable(trace: Trace) -> CheckReport:
    """No reliable-memory operation ends in a memory failure."""
    ops = [op for op in extract_operations(trace) if op.component == "ReliableMemory"]
    for op in ops:
        if op.return_value in MEMORY_FAILURES and op.return_type == EXCEPTION:
            return _fail("reliable", trace, op.return_index, f"{op.describe()}: memory failure")
    return CheckReport("reliable", True, stats={"operations": len(ops)})


# -------------------------------------------------------------------- RPC

def _bad_arity(trace: Trace, args) -> bool:
    if not isinstance(args, tuple) or len(args) != 2:
        return True
    proc, inner = args
    expected = trace.config.initial.get("ArgNum", (proc,))
    return not isinstance(inner, tuple) or len(inner) != expected


def check_rpc_semantics(trace: Trace) -> CheckReport:
    """RPC operations: BadCall, relayed return, or RPCFailure after zero or one inner call."""
    stats = Counter()
    for op in extract_operations(trace):
        if op.component != "RPC" or not op.returned:
            continue
        inner = op.nested
        bad = _bad_arity(trace, op.args)
        if op.return_type == EXCEPTION and op.return_value == BAD_CALL:
            form = "a" if not inner and bad else None
        elif bad:
            form = None
        elif op.return_type == EXCEPTION and op.return_value == RPC_FAILURE and len(inner) <= 1:
            form = "c" if inner else "d"
        elif len(inner) == 1 and inner[0].returned and inner[0].return_index < op.return_index \
                and (op.return_type, op.return_value) == (inner[0].return_type, inner[0].return_value):
            form = "b"
        else:
            form = None
        if form is None:
            return _fail("rpc", trace, op.return_index, f"{op.describe()} matches none of the allowed forms")
        stats[f"form-{form}"] += 1
    return CheckReport("rpc", True, stats=dict(stats))


def classify_lossy(trace: Trace, op: OperationRecord) -> Optional[int]:
    """Form (1-4) of a lossy-RPC operation, or None."""
    delta = trace.config.delta
    inner = op.nested
    if len(inner) > 1:
        return None
    if not inner:
        if not op.returned:
            return 1
        if op.return_type == EXCEPTION and op.return_value == BAD_CALL \
                and op.return_time <= op.call_time + delta and _bad_arity(trace, op.args):
            return 2
        return None
    call = inner[0]
    if call.call_time > op.call_time + delta:
        return None
    if not op.returned:
        return 3
    if call.returned and call.return_index < op.return_index and op.return_time <= call.return_time + delta \
            and (op.return_type, op.return_value) == (call.return_type, call.return_value):
        return 4
    return None


def check_lossy_timing(trace: Trace) -> CheckReport:
    if not trace.timed:
        return CheckReport("lossy", False, message="needs a timed trace")
    stats = Counter()
    for op in extract_operations(trace):
        if op.component != "LossyRPC":
            continue
        form = classify_lossy(trace, op)
        if form is None:
            return _fail("lossy", trace, op.return_index, f"{op.describe()} matches none of the four forms")
        stats[f"form-{form}"] += 1
    return CheckReport("lossy", True, stats=dict(stats))


def classify_rpc_impl(trace: Trace, op: OperationRecord) -> Optional[int]:
    """Form (1-4) of a returned implementation operation, or None."""
    if len(op.nested) != 1:
        return None
    lossy = op.nested[0]
    if lossy.component != "LossyRPC":
        return None
    result = (op.return_type, op.return_value)
    failure = (EXCEPTION, RPC_FAILURE)
    if lossy.returned and (lossy.return_type, lossy.return_value) == (EXCEPTION, BAD_CALL):
        return 1 if result == (EXCEPTION, BAD_CALL) and lossy.return_index < op.return_index else None
    if len(lossy.nested) > 1:
        return None
    if not lossy.nested:
        return 2 if result == failure and not lossy.returned else None
    memory = lossy.nested[0]
    if not memory.returned or memory.return_index > op.return_index:
        return None
    if not lossy.returned:
        return 3 if result == failure else None
    relayed = (memory.return_type, memory.return_value)
    if lossy.return_index < op.return_index and result == relayed:
        return 4
    return None


def check_rpc_impl(trace: Trace) -> CheckReport:
    """Four outcome forms, and every return within 2*delta + epsilon of the call."""
    if not trace.timed:
        return CheckReport("rpc-impl", False, message="needs a timed trace")
    config = trace.config
    bound = 2 * config.delta + config.epsilon
    stats = Counter()
    ops = extract_operations(trace)
    for op in ops:
        if op.component == "LossyRPC" and op.nested:
            memory = op.nested[0]
            if memory.returned and memory.return_time > memory.call_time + config.epsilon:
                return _fail("rpc-impl", trace, memory.return_index,
                             f"{memory.describe()}: memory took longer than epsilon")
    for op in ops:
        if op.component != "RPCImpl":
            continue
        if not op.returned:
            if op.call_time + bound <= trace.horizon:
                return _fail("rpc-impl", trace, None, f"{op.describe()}: no return by call + {bound}")
            stats["incomplete"] += 1
            continue
        if op.return_time > op.call_time + bound:
            return _fail("rpc-impl", trace, op.return_index,
                         f"{op.describe()}: returned {op.return_time - op.call_time} ticks after the call, "
                         f"bound {bound}")
        for lossy in op.nested:
            if lossy.returned and lossy.return_time > lossy.call_time + bound \
                    and lossy.return_index < op.return_index:
                return _fail("rpc-impl", trace, op.return_index,
                             f"{op.describe()}: relayed a reply that arrived after the timeout")
        form = classify_rpc_impl(trace, op)
        if form is None:
            return _fail("rpc-impl", trace, op.return_index, f"{op.describe()} matches none of the four forms")
        stats[f"form-{form}"] += 1
    return CheckReport("rpc-impl", True, stats=dict(stats))


# -------------------------------------------------------------- registry

CHECKS: dict[str, Callable[[Trace], CheckReport]] = {
    "validity": check_validity,
    "prerun": check_prerun_report,
    "timed-run": check_timed_run_report,
    "interface": check_interface,
    "memory-exact": lambda t: check_memory_semantics(t, "exact"),
    "memory-multi": lambda t: check_memory_semantics(t, "multi"),
    "liveness": check_liveness,
    "reliable": check_reliable,
    "rpc": check_rpc_semantics,
    "lossy": check_lossy_timing,
    "rpc-impl": check_rpc_impl,
}

REPLAY_CHECKS = ("validity", "prerun", "timed-run")


class UnknownCheck(KeyError):
    pass


def run_checks(trace: Trace, names) -> list[CheckReport]:
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise UnknownCheck(f"unknown check(s): {', '.join(unknown)}")
    return [CHECKS[n](trace) for n in names]


__all__ = [
    "OperationRecord", "MemoryEvent", "CheckReport", "extract_operations", "extract_memory_events",
    "top_level", "slice_trace", "check_validity", "check_prerun_report", "check_timed_run_report",
    "check_interface", "check_memory_semantics", "check_liveness", "check_reliable", "check_rpc_semantics",
    "check_lossy_timing", "check_rpc_impl", "classify_lossy", "classify_rpc_impl", "CHECKS", "REPLAY_CHECKS",
    "UnknownCheck", "run_checks", "MalformedTrace",
]
