"""Discrete-time simulation with a global clock CT, and timed-run condition checks.

Time is an integer tick.  At each tick the external functions take their
values first (one value per symbol and component, fixed for the whole tick);
then agents move one at a time, each at most once per tick, until no agent
is ready.  The state just after those moves is the right limit at the tick.
"""

from __future__ import annotations

import random
from typing import Optional

from .core import (
    Apply, AsmError, Block, Choose, Cond, State, Term, changes_state, eval_term, find_clash, fire, is_int,
)
from .oracles import RandomOracle, Schedule, draw, oracle_next
from .runtime import (
    BudgetExceeded, ClashAbort, Move, OracleEvent, RunConfig, Trace, Violation,
    ProbeCache, fire_agent, producible, set_clock,
)


class OutOfRange(AsmError):
    pass


# ------------------------------------------------------------ clock guards

def clock_bounds(program_rule) -> list[tuple[Term, int]]:
    """Terms ``e`` of guards ``CT >= e`` / ``CT > e`` (and mirrored forms).

    Each comes with an offset: the guard first holds at tick ``e + offset``.
    """
    found: list[tuple[Term, int]] = []

    def is_ct(t):
        return isinstance(t, Apply) and t.symbol == "CT" and not t.args

    def term(t):
        if not isinstance(t, Apply):
            return
        if len(t.args) == 2:
            a, b = t.args
            if t.symbol in (">=", ">") and is_ct(a):
                found.append((b, 0 if t.symbol == ">=" else 1))
            elif t.symbol in ("<=", "<") and is_ct(b):
                found.append((a, 0 if t.symbol == "<=" else 1))
        for x in t.args:
            term(x)

    def rule(r):
        if isinstance(r, Cond):
            term(r.guard)
            rule(r.then)
            rule(r.else_)
        elif isinstance(r, Block):
            for x in r.rules:
                rule(x)
        elif isinstance(r, Choose):
            term(r.cond)
            rule(r.body)

    rule(program_rule)
    return found


def _wake_times(config: RunConfig, s: State, bounds: dict, now: int) -> list[int]:
    out = []
    for agent, component in config.agents.items():
        for expr, offset in bounds.get(component, ()):
            try:
                v = eval_term(expr, config.view(s, agent))
            except AsmError:
                continue
            if is_int(v) and v + offset > now:
                out.append(v + offset)
    return out


# -------------------------------------------------------------- simulation

def simulate_timed(config: RunConfig, seed: Optional[int] = None, horizon: Optional[int] = None) -> Trace:
    """Event-driven timed run up to ``horizon`` (inclusive).

    Raises ClashAbort or BudgetExceeded with the partial trace.  Reaching the
    horizon is the normal outcome (status ``horizon``).
    """
    seed = config.seed if seed is None else seed
    horizon = config.horizon if horizon is None else horizon
    rng = random.Random(f"timed|{seed}")
    agents = list(config.agents)
    bounds = {name: clock_bounds(rule) for name, rule in config.modules.items()}
    schedule_ticks = sorted({t for spec in config.oracles.values() if isinstance(spec, Schedule)
                             for t in spec.ticks})
    history: dict = {}
    moves: list[Move] = []
    events: list[OracleEvent] = []
    ready_at: dict = {}
    delay_draws = 0
    s = set_clock(config.initial, 0)
    t = 0
    probes = ProbeCache(config)
    time_dependent = set(config.initial.vocabulary.externals) | {"CT"}

    def delay(agent) -> int:
        nonlocal delay_draws
        lo, hi = config.delays.get(config.agents[agent], (0, 0))
        delay_draws += 1
        return lo + draw(f"{seed}|delay|{agent.name}|{delay_draws}", hi - lo + 1)

    def partial(status, clash=None):
        return Trace(config, tuple(moves), s, status, clash, tuple(events), horizon)

    while t <= horizon:
        s = set_clock(s, t)
        probes.drop_symbols(time_dependent)
        frozen: dict = {}
        poll_again = False

        def reader(agent):
            component = config.agents[agent]

            def read(symbol, args):
                key = (symbol, component)
                if key not in frozen:
                    spec = config.oracle_spec(symbol, component)
                    hist = history.setdefault(key, [])
                    value = oracle_next(spec, symbol, hist, seed=seed, stream=component, tick=t)
                    hist.append(value)
                    frozen[key] = value
                    events.append(OracleEvent(t, symbol, component, value))
                return frozen[key]
            return read

        order = agents[:]
        if config.policy == "random":
            rng.shuffle(order)
        fired: set = set()
        progress = True
        while progress:
            progress = False
            for agent in order:
                effective, ups, reads, _, branching = probes.get(s, agent, reader(agent))
                # a repeat within the tick must be a purely internal reaction:
                # the tick's external readings are already used up
                if agent in fired and effective and (reads or not changes_state(s, ups)):
                    continue
                if not effective:
                    ready_at.pop(agent, None)
                    if any(isinstance(config.oracle_spec(sym, config.agents[agent]), RandomOracle)
                           for sym, _, _ in reads):
                        poll_again = True
                    continue
                if agent not in ready_at:
                    ready_at[agent] = t + (0 if config.policy == "prompt" else delay(agent))
                if ready_at[agent] > t:
                    continue
                if config.policy == "random" and branching:
                    ups, reads = fire_agent(config, s, agent, reader(agent), lambda c: rng.randrange(len(c)))
                move = Move(len(moves), agent, ups, reads, s.digest(), t)
                moves.append(move)
                clash = find_clash(ups)
                if clash is not None:
                    raise ClashAbort(partial("clash", clash), clash)
                if len(moves) > config.budget:
                    raise BudgetExceeded(partial("budget"))
                before = s
                s = fire(s, ups)
                probes.after_move(before, s, agent, ups)
                fired.add(agent)
                del ready_at[agent]
                progress = True
        upcoming = [r for r in ready_at.values() if r > t]
        if fired or poll_again:
            upcoming.append(t + 1)
        upcoming += _wake_times(config, s, bounds, t)
        upcoming += [x for x in schedule_ticks if x > t][:1]
        t = min(upcoming) if upcoming else horizon + 1
    s = set_clock(s, horizon)
    return partial("horizon")


def state_at(trace: Trace, time: int, side: str = "right") -> State:
    """State just before (``left``), at, or just after (``right``) a tick.

    ``left`` is the plateau of tick ``time - 1``; ``at`` is the state once
    the tick's external values are in place, before any move; ``right``
    includes the tick's moves.  CT reads ``time`` in all three.
    """
    if trace.horizon is None:
        raise OutOfRange("not a timed trace")
    if side not in ("left", "at", "right"):
        raise ValueError(f"unknown side {side!r}")
    if not 0 <= time <= trace.horizon or (side == "left" and time == 0):
        raise OutOfRange(f"tick {time} outside [0, {trace.horizon}] for side {side}")
    s = trace.config.initial
    for m in trace.moves:
        if m.time > time or (m.time == time and side != "right"):
            break
        s = fire(s, m.updates)
    return set_clock(s, time)


def externals_at(trace: Trace, time: int) -> dict:
    """External values in force at a tick: (symbol, component) -> value."""
    return {(e.symbol, e.component): e.value for e in trace.events if e.time == time}


# ------------------------------------------------------------------ checks

def check_prerun(trace: Trace) -> list[Violation]:
    """Constant vocabulary, correct clock, finitely many change points.

    Every state change must coincide with a logged move: a move's recorded
    pre-state must equal the replayed state at its tick.
    """
    out: list[Violation] = []
    config = trace.config
    horizon = trace.horizon
    if horizon is None:
        return [Violation("clock", 0, "trace carries no horizon")]
    vocab = config.initial.vocabulary
    s = config.initial
    if s.get("CT") != 0:
        out.append(Violation("clock", 0, "CT is not 0 initially"))
    last = 0
    for m in trace.moves:
        if m.time is None or not 0 <= m.time <= horizon:
            out.append(Violation("clock", m.index, f"move time {m.time} outside [0, {horizon}]"))
            continue
        if m.time < last:
            out.append(Violation("clock", m.index, f"time goes backwards ({m.time} < {last})"))
        last = m.time
        s = set_clock(s, m.time)
        if m.pre != s.digest():
            out.append(Violation("unexplained-change", m.index, f"state changed at tick {m.time} without a move"))
        bad = sorted({loc.symbol for loc, _ in m.updates if loc.symbol not in vocab})
        if bad:
            out.append(Violation("vocabulary", m.index, f"updates undeclared symbols {', '.join(bad)}"))
            continue
        if any(loc.symbol == "CT" for loc, _ in m.updates):
            out.append(Violation("clock", m.index, "a move assigns CT"))
            continue
        try:
            s = fire(s, m.updates)
        except AsmError as exc:
            out.append(Violation("vocabulary", m.index, str(exc)))
    last_event = 0
    for e in trace.events:
        if not 0 <= e.time <= horizon or e.time < last_event:
            out.append(Violation("clock", -1, f"oracle event at tick {e.time} out of order or range"))
        last_event = max(last_event, e.time)
    changes = len({m.time for m in trace.moves} | {e.time for e in trace.events})
    if changes > len(trace.moves) + len(trace.events):
        out.append(Violation("discreteness", -1, "more change points than moves and events"))
    recorded = trace.final_digest or (trace.final.digest() if trace.final is not None else None)
    if recorded is not None and set_clock(s, horizon).digest() != recorded:
        out.append(Violation("final", len(trace.moves), "replay does not reach the recorded final state"))
    return out


def check_timed_run(trace: Trace) -> list[Violation]:
    """Moves change internal functions only; oracle events change externals only.

    Each move is re-executed at its tick under the oracle values logged for
    that tick.  An agent may move several times in one tick, but a repeat
    must change the state without reading externals.
    """
    out: list[Violation] = []
    config = trace.config
    vocab = config.initial.vocabulary
    events: dict = {}
    for e in trace.events:
        sym = vocab.get(e.symbol)
        if sym is None or not sym.is_external:
            out.append(Violation("internal-event", -1, f"oracle event at tick {e.time} sets internal {e.symbol}"))
            continue
        key = (e.time, e.symbol, e.component)
        if key in events and events[key] != e.value:
            out.append(Violation("oracle", -1, f"{e.symbol}[{e.component}] has two values at tick {e.time}"))
        events.setdefault(key, e.value)
    s = config.initial
    seen: set = set()
    for m in trace.moves:
        s = set_clock(s, m.time)
        if (m.agent, m.time) in seen and (m.reads or not changes_state(s, m.updates)):
            out.append(Violation("repeat", m.index, f"{m.agent!r} moves again at tick {m.time} "
                                                    "on used-up readings or without effect"))
        seen.add((m.agent, m.time))
        if m.agent not in config.agents:
            out.append(Violation("agent", m.index, f"{m.agent!r} is not an agent"))
            continue
        ext = sorted({loc.symbol for loc, _ in m.updates if vocab.get(loc.symbol) is not None
                      and vocab[loc.symbol].is_external})
        if ext:
            out.append(Violation("external-update", m.index, f"move assigns external {', '.join(ext)}"))
        component = config.agents[m.agent]
        for sym, _args, value in m.reads:
            logged = events.get((m.time, sym, component))
            if logged is None or logged != value:
                out.append(Violation("oracle", m.index, f"read of {sym} disagrees with the events at tick {m.time}"))
        try:
            ok = producible(config, s, m.agent, m.updates, m.reads)
        except AsmError as exc:
            out.append(Violation("coherence", m.index, f"re-execution failed: {exc}"))
            ok = None
        if ok is False:
            out.append(Violation("coherence", m.index, f"update set not producible by {m.agent!r}"))
        if find_clash(m.updates) is not None:
            out.append(Violation("clash", m.index, "inconsistent update set"))
            return out
        try:
            s = fire(s, m.updates)
        except AsmError as exc:
            out.append(Violation("coherence", m.index, str(exc)))
            return out
    return out


__all__ = [
    "OutOfRange", "simulate_timed", "state_at", "externals_at", "check_prerun", "check_timed_run",
    "clock_bounds",
]
