"""Sequential runs of distributed programs, replay validation, and exhaustive enumeration."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterator, Optional

from .core import (
    AgentId, AsmError, Clash, ELEMENTS, Location, State, View, Vocabulary, changes_state, compute_update_set, find_clash,
    first_candidate, fire, format_location, render_value, rule_symbols, static_index, update_key,
    updated_symbols, value_key,
)
from .dsl import ProgramDef
from .oracles import OracleBank, Scripted, alphabet


@dataclass
class RunConfig:
    program: ProgramDef
    modules: dict                 # component -> macro-expanded Rule
    agents: dict                  # AgentId -> component
    initial: State
    oracles: dict                 # (symbol, component or None) -> OracleSpec
    policy: str = "random"
    budget: int = 5000
    seed: int = 0
    scenario: str = ""            # canonical scenario text, for trace headers
    timed: bool = False
    horizon: int = 0
    delays: dict = field(default_factory=dict)   # component -> (lo, hi) ticks
    delta: int = 0
    epsilon: int = 0

    def __post_init__(self):
        missing = {c for c in self.agents.values() if c not in self.modules}
        if missing:
            raise ValueError(f"agents refer to missing modules: {', '.join(sorted(missing))}")
        self.symbols = {name: rule_symbols(r) | {"Me"} for name, r in self.modules.items()}
        # derived functions hide which locations they read: modules using
        # them depend on whole symbols, or on everything if undeclared
        vocab = self.initial.vocabulary
        plain = {n for n, sym in Vocabulary().items()}
        self.opaque = set()
        self.derived_reads = {}
        for name, syms in self.symbols.items():
            derived = [vocab[n] for n in syms if n in vocab and vocab[n].is_builtin and n not in plain]
            if any(d.reads is None for d in derived):
                self.opaque.add(name)
            self.derived_reads[name] = frozenset().union(*(d.reads or () for d in derived))
        assigned = frozenset().union(*(updated_symbols(r) for r in self.modules.values()))
        used = frozenset().union(*self.symbols.values())
        self.index = static_index(self.initial, used - assigned)

    def view(self, s: State, agent: AgentId) -> View:
        return View(s, agent, self.symbols[self.agents[agent]])

    def oracle_spec(self, symbol: str, component: Optional[str]):
        spec = self.oracles.get((symbol, component)) or self.oracles.get((symbol, None))
        if spec is None:
            raise KeyError(f"no oracle configured for {symbol}")
        return spec


@dataclass(frozen=True)
class Move:
    index: int
    agent: AgentId
    updates: frozenset
    reads: tuple                  # ((symbol, args, value), ...) in consumption order
    pre: str                      # digest of the state the move fired in
    time: Optional[int] = None

    def sorted_updates(self) -> list:
        return sorted(self.updates, key=update_key)

    def identity(self) -> tuple:
        return (self.agent, self.reads, tuple(self.sorted_updates()))

    def describe(self) -> str:
        ups = ", ".join(f"{format_location(l)} := {render_value(v)}" for l, v in self.sorted_updates())
        at = f" @t={self.time}" if self.time is not None else ""
        return f"#{self.index}{at} {self.agent!r}: {{{ups}}}"


@dataclass(frozen=True)
class OracleEvent:
    """Value an external function took at one tick, for one component."""
    time: int
    symbol: str
    component: str
    value: object


@dataclass
class Trace:
    config: RunConfig
    moves: tuple
    final: State
    status: str = "quiescent"     # quiescent | budget | clash | depth | partial | horizon
    clash: Optional[Clash] = None
    events: tuple = ()            # timed traces only
    horizon: Optional[int] = None
    final_digest: Optional[str] = None   # as recorded in a trace file, if read from one

    @property
    def timed(self) -> bool:
        return self.horizon is not None

    def states(self) -> Iterator[State]:
        """Pre-state of every move, then the final state."""
        s = self.config.initial
        for m in self.moves:
            s = set_clock(s, m.time)
            yield s
            s = fire(s, m.updates)
        yield s if self.horizon is None else set_clock(s, self.horizon)


def set_clock(s: State, time: Optional[int]) -> State:
    """``s`` with CT = time (no-op for untimed moves)."""
    if time is None or s.get("CT") == time:
        return s
    return fire(s, [(Location("CT"), time)])


class ClashAbort(AsmError):
    def __init__(self, trace: Trace, clash: Clash):
        super().__init__(f"clash at {format_location(clash.location)}")
        self.trace = trace
        self.location = clash.location
        self.clash = clash


class BudgetExceeded(AsmError):
    def __init__(self, trace: Trace):
        super().__init__(f"no quiescence within {len(trace.moves)} moves")
        self.trace = trace


class MalformedTrace(AsmError):
    """A trace (or trace file) that cannot be interpreted."""


class ExplosionGuard(AsmError):
    def __init__(self, projected: int, cap: int):
        super().__init__(f"projected {projected} traces exceeds the cap of {cap}")
        self.projected = projected
        self.cap = cap


# ------------------------------------------------------------- single moves

Reader = Callable[[str, tuple], object]


def fire_agent(config: RunConfig, s: State, agent: AgentId, read: Reader,
               resolver=first_candidate, on_apply=None) -> tuple[frozenset, tuple]:
    """Update set of ``agent`` at its view of ``s`` plus the external reads.

    Each external location is read at most once per move; later reads in
    the same move see the same value.
    """
    cache: dict = {}
    log: list = []

    def externals(symbol, args):
        key = (symbol, args)
        if key not in cache:
            cache[key] = read(symbol, args)
            log.append((symbol, args, cache[key]))
        return cache[key]

    rule = config.modules[config.agents[agent]]
    updates = compute_update_set(rule, config.view(s, agent), resolver=resolver, externals=externals,
                                 on_apply=on_apply, index=config.index)
    return updates, tuple(log)


def is_effective(s: State, updates: frozenset, reads: tuple) -> bool:
    """Enabled: something to do, and it either changes the state or consults the environment."""
    return bool(updates) and (bool(reads) or changes_state(s, updates))


def all_decisions(body: Callable[[Callable[[int], int]], object]) -> list:
    """Run ``body(decide)`` once per complete sequence of decisions.

    ``decide(n)`` returns a choice in ``range(n)``; every combination of
    answers is explored depth first.  Returns the list of results.
    """
    results = []
    stack: list[tuple] = [()]
    while stack:
        prefix = stack.pop()
        path: list[tuple[int, int]] = []

        def decide(n: int) -> int:
            k = len(path)
            c = prefix[k] if k < len(prefix) else 0
            path.append((c, n))
            return c

        results.append(body(decide))
        for j in range(len(path) - 1, len(prefix) - 1, -1):
            _, n = path[j]
            base = tuple(c for c, _ in path[:j])
            for c in range(n - 1, 0, -1):
                stack.append(base + (c,))
    return results


def possible_moves(config: RunConfig, s: State, agent: AgentId, reads: Optional[tuple] = None,
                   scripted: Optional[dict] = None) -> list[tuple[frozenset, tuple]]:
    """Every (update set, reads) the agent can produce at ``s``.

    With ``reads`` given, externals are answered from that log (a read not
    in the log makes the branch impossible); otherwise every value in each
    oracle's alphabet is tried.  If ``scripted`` is given (read counts per
    (symbol, stream)), scripted oracles instead yield their next value.
    """
    component = config.agents[agent]
    logged = {(sym, args): v for sym, args, v in reads} if reads is not None else None

    def body(decide):
        def read(symbol, args):
            if logged is not None:
                if (symbol, args) not in logged:
                    raise _Impossible
                return logged[(symbol, args)]
            spec = config.oracle_spec(symbol, component)
            if scripted is not None and isinstance(spec, Scripted):
                n = scripted.get((symbol, _stream(agent, args)), 0)
                return spec.values[min(n, len(spec.values) - 1)]
            values = alphabet(spec)
            return values[decide(len(values))]
        try:
            return fire_agent(config, s, agent, read, lambda cands: decide(len(cands)))
        except _Impossible:
            return None

    out, seen = [], set()
    for res in all_decisions(body):
        if res is None:
            continue
        key = (res[0], res[1])
        if key not in seen:
            seen.add(key)
            out.append(res)
    return out


class _Impossible(Exception):
    pass


_PRODUCIBLE: dict = {}


def producible(config: RunConfig, s: State, agent: AgentId, updates: frozenset, reads: tuple) -> bool:
    """Can ``agent`` produce exactly (updates, reads) at ``s``?

    Answers are memoized per (config, state digest, move), since several
    checks re-derive the same moves.
    """
    key = (id(config), s.digest(), agent, updates, reads)
    hit = _PRODUCIBLE.get(key)
    if hit is None:
        if len(_PRODUCIBLE) > 50_000:
            _PRODUCIBLE.clear()
        hit = _PRODUCIBLE[key] = (config, _producible(config, s, agent, updates, reads))
    return hit[1]


def _producible(config, s, agent, updates, reads) -> bool:
    logged = {(sym, args): v for sym, args, v in reads}

    def read(symbol, args):
        if (symbol, args) not in logged:
            raise _Impossible
        return logged[(symbol, args)]
    try:
        if fire_agent(config, s, agent, read) == (updates, reads):
            return True
    except _Impossible:
        pass
    return (updates, reads) in possible_moves(config, s, agent, reads)


def replay_move(config: RunConfig, s: State, move: Move, on_apply) -> bool:
    """Re-execute ``move`` at ``s`` along the branch that produced it.

    Every application evaluated on that branch is passed to ``on_apply``.
    Returns False (reporting nothing) when no branch reproduces the move.
    """
    logged = {(sym, args): v for sym, args, v in move.reads}

    def body(decide):
        seen: list = []

        def read(symbol, args):
            if (symbol, args) not in logged:
                raise _Impossible
            return logged[(symbol, args)]
        try:
            ups, reads = fire_agent(config, s, move.agent, read, lambda cands: decide(len(cands)),
                                    on_apply=lambda *app: seen.append(app))
        except (_Impossible, AsmError):
            return None
        return ups, reads, seen

    if move.agent not in config.agents:
        return False
    for res in all_decisions(body):
        if res is not None and res[0] == move.updates and res[1] == move.reads:
            for app in res[2]:
                on_apply(*app)
            return True
    return False


class ProbeCache:
    """Memoized (enabled, update set, reads) per agent.

    A probe stays valid until a location it looked at changes, the set of
    candidate elements changes, or the agent's own oracle streams advance
    (which happens only when it moves).  Modules that read derived
    functions hide their dependencies and are never cached.
    """

    def __init__(self, config: RunConfig):
        self.config = config
        self.entries: dict = {}

    def get(self, s: State, agent: AgentId, read: Reader) -> tuple:
        """(effective, updates, reads, deps, branching) for ``agent`` at ``s``.

        ``branching`` says some choose had more than one candidate, so a
        different resolver could give a different update set.
        """
        hit = self.entries.get(agent)
        if hit is not None:
            return hit
        deps: set = set()
        branching = []

        def resolver(candidates):
            if len(candidates) > 1:
                branching.append(True)
            return 0

        ups, reads = fire_agent(self.config, s, agent, read, resolver,
                                on_apply=lambda name, args, _v: deps.add((name, args)))
        result = (is_effective(s, ups, reads), ups, reads, deps, bool(branching))
        if self.config.agents[agent] not in self.config.opaque:
            self.entries[agent] = result
        return result

    def after_move(self, before: State, after: State, mover: AgentId, updates):
        self.entries.pop(mover, None)
        changed = {(loc.symbol, loc.args) for loc, _ in updates}
        symbols = {loc.symbol for loc, _ in updates}
        scans = any((ELEMENTS, ()) in entry[3] for entry in self.entries.values())
        if scans and after.elements() != before.elements():
            changed.add((ELEMENTS, ()))
        reads = self.config.derived_reads
        agents = self.config.agents
        for a in [a for a, entry in self.entries.items()
                  if not entry[3].isdisjoint(changed) or not reads[agents[a]].isdisjoint(symbols)]:
            del self.entries[a]

    def drop_symbols(self, names: set):
        self.drop(lambda deps: any(name in names for name, _ in deps))

    def drop(self, stale):
        for a in [a for a, entry in self.entries.items() if stale(entry[3])]:
            del self.entries[a]


# --------------------------------------------------------------------- runs

def _draw_rng(seed: int) -> random.Random:
    return random.Random(f"scheduler|{seed}")


def run(config: RunConfig, seed: Optional[int] = None) -> Trace:
    """One sequential run until quiescence.

    Raises BudgetExceeded or ClashAbort; both carry the partial trace.
    """
    seed = config.seed if seed is None else seed
    rng = _draw_rng(seed)
    bank = OracleBank(config.oracles, seed)
    agents = list(config.agents)
    s = config.initial
    moves: list[Move] = []
    rr = 0

    def reader(agent):
        component = config.agents[agent]
        return lambda symbol, args: bank.peek(symbol, component, _stream(agent, args))

    probes = ProbeCache(config)

    def probe(agent):
        return probes.get(s, agent, reader(agent))[0]

    while True:
        enabled = [a for a in agents if probe(a)]
        if not enabled:
            return Trace(config, tuple(moves), s, "quiescent")
        if len(moves) >= config.budget:
            raise BudgetExceeded(Trace(config, tuple(moves), s, "budget"))
        if config.policy == "random":
            agent = enabled[rng.randrange(len(enabled))]
            resolver = lambda cands: rng.randrange(len(cands))  # noqa: E731
        else:
            order = agents[rr:] + agents[:rr]
            agent = next(a for a in order if a in enabled)
            rr = (agents.index(agent) + 1) % len(agents)
            resolver = first_candidate
        _, ups, reads, _, branching = probes.get(s, agent, reader(agent))
        if branching and resolver is not first_candidate:
            ups, reads = fire_agent(config, s, agent, reader(agent), resolver)
        move = Move(len(moves), agent, ups, reads, s.digest())
        clash = find_clash(ups)
        if clash is not None:
            moves.append(move)
            raise ClashAbort(Trace(config, tuple(moves), s, "clash", clash), clash)
        for symbol, args, value in reads:
            bank.commit(symbol, _stream(agent, args), value)
        moves.append(move)
        before = s
        s = fire(s, ups)
        probes.after_move(before, s, agent, ups)


def _stream(agent: AgentId, args: tuple) -> str:
    return agent.name if not args else f"{agent.name}{render_value(args)}"


# ---------------------------------------------------------------- validity

@dataclass(frozen=True)
class Violation:
    kind: str          # hash | coherence | ordering | agent | clash | final | disabled
    index: int
    message: str

    def __str__(self):
        return f"[{self.kind}] move {self.index}: {self.message}"


def check_run_validity(trace: Trace) -> list[Violation]:
    """Replay the trace and re-derive every move from its pre-state.

    Confirms the pre-state digests, that each logged update set is one the
    agent's program can produce under the logged oracle readings, that move
    indices increase (each agent's moves are linearly ordered), and that the
    replay ends in the recorded final state.
    """
    config = trace.config
    out: list[Violation] = []
    s = config.initial
    last = -1
    for pos, m in enumerate(trace.moves):
        if m.index <= last or m.index != pos:
            out.append(Violation("ordering", m.index, f"index {m.index} at position {pos}"))
        last = max(last, m.index)
        try:
            s = set_clock(s, m.time)
        except AsmError as exc:
            out.append(Violation("clock", m.index, str(exc)))
            return out
        if m.pre != s.digest():
            out.append(Violation("hash", m.index, "pre-state digest does not match the replay"))
        if m.agent not in config.agents:
            out.append(Violation("agent", m.index, f"{m.agent!r} is not an agent"))
            continue
        try:
            ok = producible(config, s, m.agent, m.updates, m.reads)
        except AsmError as exc:
            out.append(Violation("coherence", m.index, f"re-execution failed: {exc}"))
            ok = None
        if ok is False:
            out.append(Violation("coherence", m.index, f"update set not producible by {m.agent!r}"))
        elif ok and not is_effective(s, m.updates, m.reads):
            out.append(Violation("disabled", m.index, f"{m.agent!r} was not enabled"))
        clash = find_clash(m.updates)
        if clash is not None:
            out.append(Violation("clash", m.index, str(clash)))
            return out
        try:
            s = fire(s, m.updates)
        except AsmError as exc:
            out.append(Violation("coherence", m.index, f"cannot fire: {exc}"))
            return out
    if trace.horizon is not None:
        s = set_clock(s, trace.horizon)
    recorded = trace.final_digest or (trace.final.digest() if trace.final is not None else None)
    if recorded is not None and s.digest() != recorded:
        out.append(Violation("final", len(trace.moves), "replay does not reach the recorded final state"))
    return out


# ------------------------------------------------------------- enumeration

def _branches(config: RunConfig, s: State, depth_index: int, scripted: dict) -> list[Move]:
    out, seen = [], set()
    for a in config.agents:
        for ups, reads in possible_moves(config, s, a, scripted=scripted):
            if not is_effective(s, ups, reads):
                continue
            m = Move(depth_index, a, ups, reads, s.digest())
            if m.identity() not in seen:
                seen.add(m.identity())
                out.append(m)
    out.sort(key=lambda m: (m.agent.name, value_key(tuple(v for _, _, v in m.reads)),
                            tuple(update_key(u) for u in m.sorted_updates())))
    return out


def _advance(config: RunConfig, scripted: dict, move: Move) -> dict:
    component = config.agents[move.agent]
    out = dict(scripted)
    for symbol, args, _ in move.reads:
        if isinstance(config.oracle_spec(symbol, component), Scripted):
            key = (symbol, _stream(move.agent, args))
            out[key] = out.get(key, 0) + 1
    return out


def estimate_traces(config: RunConfig, depth: int, samples: int = 200, seed: int = 0) -> int:
    """Knuth's random-probe estimate of the number of enumerated traces."""
    rng = random.Random(f"estimate|{seed}")
    total = 0
    for _ in range(samples):
        s, weight, count, scripted = config.initial, 1, 1, {}
        for d in range(depth):
            moves = _branches(config, s, d, scripted)
            if not moves:
                break
            weight *= len(moves)
            count += weight
            m = moves[rng.randrange(len(moves))]
            if find_clash(m.updates) is not None:
                break
            s = fire(s, m.updates)
            scripted = _advance(config, scripted, m)
        total += count
    return total // samples


def enumerate_runs(config: RunConfig, depth: int, cap: Optional[int] = 2_000_000,
                   estimate: bool = True) -> Iterator[Trace]:
    """Every sequential run of length at most ``depth``, prefixes included.

    Branches over the scheduled agent, every choose resolution, and every
    value in each random oracle's alphabet; scripted oracles follow their
    script, per stream, exactly as in ``run``.  Runs whose last move clashes
    are yielded with status ``clash`` and not extended.
    """
    if cap is not None and estimate and depth > 0:
        projected = estimate_traces(config, depth)
        if projected > cap:
            raise ExplosionGuard(projected, cap)
    produced = 0
    stack: list[tuple[State, tuple, dict]] = [(config.initial, (), {})]
    while stack:
        s, moves, scripted = stack.pop()
        produced += 1
        if cap is not None and produced > cap:
            raise ExplosionGuard(produced, cap)
        if len(moves) >= depth:
            yield Trace(config, moves, s, "depth")
            continue
        children = _branches(config, s, len(moves), scripted)
        if not children:
            yield Trace(config, moves, s, "quiescent")
            continue
        yield Trace(config, moves, s, "partial")
        for m in reversed(children):
            clash = find_clash(m.updates)
            if clash is not None:
                produced += 1
                yield Trace(config, moves + (m,), s, "clash", clash)
                continue
            stack.append((fire(s, m.updates), moves + (m,), _advance(config, scripted, m)))
