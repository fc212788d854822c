"""Component programs, the interface vocabulary, and scenario builders."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

from .core import (
    FALSE, TRUE, UNDEF, AgentId, FunctionSymbol, Location, State, Sym, Value, Vocabulary, boolean,
    parse_value, render_value,
)
from .dsl import Diagnostic, DslError, ProgramDef, parse_program, render_program, validate_program
from .oracles import (
    Constant, OracleSyntaxError, Pulses, RandomOracle, parse_oracle, render_oracle, resolve_pulses,
)
from .runtime import RunConfig


class BadSpec(ValueError):
    """Scenario is malformed or violates a component invariant."""


class WiringError(BadSpec):
    pass


class BadParams(BadSpec):
    pass


# ------------------------------------------------------------- vocabulary

INTERFACE = ("CallMade", "CallSender", "CallName", "CallArgs", "CallReply", "CallReplyValue")
TIMED_INTERFACE = ("CallInTime", "CallOutTime", "ReturnTime")
CONSTANTS = ("read", "write", "remotecall", "normal", "exception",
             "BadArg", "MemFailure", "MemFail", "RPCFailure", "BadCall", "Ok")
WIRING = ("MemComponent", "Destination", "RPCComponent", "LossyRPC")
EXTERNALS = ("Fail", "Succeed", "MakeCall", "GetName", "GetArgs", "Retry")
MEMORY_FAILURES = (Sym("MemFailure"), Sym("MemFail"))


def _pending(state, args):
    (agent,) = args
    return boolean(any(v == agent for _, v in state.locations_of("CallSender")))


def vocabulary(timed: bool = False) -> Vocabulary:
    syms = [FunctionSymbol(n, 1) for n in INTERFACE]
    syms += [FunctionSymbol(n, 0) for n in CONSTANTS + WIRING]
    syms += [FunctionSymbol(n, 0, is_external=True) for n in EXTERNALS]
    syms += [
        FunctionSymbol("Component", 1),
        FunctionSymbol("Memory", 1),
        FunctionSymbol("MemLocs", 1, is_relation=True),
        FunctionSymbol("MemVals", 1, is_relation=True),
        FunctionSymbol("InitVal", 0),
        FunctionSymbol("ArgNum", 1),
        # some agent is currently waiting on this one
        FunctionSymbol("Pending", 1, is_relation=True, compute=_pending, reads=frozenset({"CallSender"})),
    ]
    if timed:
        syms += [FunctionSymbol(n, 1) for n in TIMED_INTERFACE]
        syms += [FunctionSymbol(n, 0) for n in ("CT", "delta", "epsilon")]
    return Vocabulary(syms)


def arg_list(*values: Value) -> tuple:
    return tuple(values)


def First(xs: Value) -> Value:  # noqa: N802 - named after the ASM function
    return xs[0] if isinstance(xs, tuple) and len(xs) > 0 else UNDEF


def Second(xs: Value) -> Value:  # noqa: N802
    return xs[1] if isinstance(xs, tuple) and len(xs) > 1 else UNDEF


def Length(xs: Value) -> Value:  # noqa: N802
    return len(xs) if isinstance(xs, tuple) else UNDEF


# ----------------------------------------------------------------- corpus

KINDS = ("Memory", "ReliableMemory", "Caller", "RPC", "MemoryImpl", "LossyRPC", "RPCImpl", "Recycler")
TIMED_ONLY = ("LossyRPC", "RPCImpl", "Recycler")

# kind -> (corpus file, module name inside it)
SOURCES = {
    "Memory": ("memory.asm", "Memory"),
    "ReliableMemory": ("memory.asm", "Memory"),
    "Caller": ("caller.asm", "Caller"),
    "RPC": ("rpc.asm", "RPC"),
    "MemoryImpl": ("memory_impl_exec.asm", "MemoryImpl"),
    "LossyRPC": ("lossy_rpc.asm", "LossyRPC"),
    "RPCImpl": ("rpc_impl.asm", "RPCImpl"),
    "Recycler": ("recycler.asm", "Recycler"),
}
VERBATIM_SOURCES = {"MemoryImpl": ("memory_impl.asm", "MemoryImpl")}

LIBRARIES = {
    "untimed": "call_untimed.asm",
    "timed": "call_timed_exec.asm",
    "timed-verbatim": "call_timed.asm",
}

# The programs as printed, one per figure.
FIGURES = {
    "CALL1": "call_untimed.asm",
    "newcall": "call_timed.asm",
    "memea": "memory.asm",
    "callerea": "caller.asm",
    "rpcea": "rpc.asm",
    "imp1ea": "memory_impl.asm",
    "lossyrpcea": "lossy_rpc.asm",
    "imp2ea": "rpc_impl.asm",
}


def corpus_text(name: str) -> str:
    return resources.files("asmrpc").joinpath("corpus", name).read_text(encoding="utf-8")


def corpus_files() -> list[str]:
    return sorted(p.name for p in resources.files("asmrpc").joinpath("corpus").iterdir() if p.name.endswith(".asm"))


def library(name: str) -> ProgramDef:
    try:
        return parse_program(corpus_text(LIBRARIES[name]))
    except KeyError:
        raise BadSpec(f"unknown macro library {name!r}") from None


_TIMED_WORDS = re.compile(r"\b(CT|delta|epsilon|CallInTime|CallOutTime|ReturnTime)\b")


@dataclass
class SourceReport:
    program: ProgramDef           # the source merged with the macro library it needs
    own: ProgramDef               # the source alone
    timed: bool
    library: str                  # "" when the source brings its own CALL/RETURN
    diagnostics: list
    round_trip: bool
    expanded: dict                # module -> macro-free rule

    @property
    def ok(self) -> bool:
        return not self.diagnostics and self.round_trip


def inspect_source(text: str) -> SourceReport:
    """Parse, expand, validate and round-trip one program text.

    Raises DslError when the text does not parse or a macro cannot be
    expanded; vocabulary problems come back as diagnostics.
    """
    own = parse_program(text)
    timed = bool(_TIMED_WORDS.search(text))
    lib_name = "" if "CALL" in own.macros else ("timed" if timed else "untimed")
    program = library(lib_name).merge(own) if lib_name else own
    expanded = program.expanded()
    diagnostics: list[Diagnostic] = validate_program(program, vocabulary(timed))
    rendered = render_program(own)
    round_trip = parse_program(rendered) == own and render_program(parse_program(rendered)) == rendered
    return SourceReport(program, own, timed, lib_name, diagnostics, round_trip, expanded)


@dataclass(frozen=True)
class ComponentSource:
    kind: str
    source: str           # corpus text, unmodified
    module: str           # module name inside ``source``
    constants: dict = field(default_factory=dict)   # nullary constants the program expects
    oracles: dict = field(default_factory=dict)     # forced oracle specs for this component


def build_component(kind: str, params: Optional[dict] = None) -> ComponentSource:
    params = dict(params or {})
    if kind not in SOURCES:
        raise BadParams(f"unknown component kind {kind!r}")
    verbatim = params.pop("verbatim", False)
    file, module = (VERBATIM_SOURCES.get(kind) if verbatim else None) or SOURCES[kind]
    constants: dict = {}
    oracles: dict = {}
    if kind in ("LossyRPC", "RPCImpl"):
        for name in ("delta", "epsilon") if kind == "RPCImpl" else ("delta",):
            value = params.pop(name, None)
            if not isinstance(value, int) or value <= 0:
                raise BadParams(f"{kind} needs a positive integer {name}")
            constants[name] = value
    if kind == "ReliableMemory":
        oracles["Fail"] = Constant(FALSE)
    if params:
        raise BadParams(f"unexpected parameters for {kind}: {', '.join(sorted(params))}")
    return ComponentSource(kind, corpus_text(file), module, constants, oracles)


# --------------------------------------------------------------- scenario

@dataclass
class ScenarioSpec:
    kind: str = "custom"
    components: tuple = ()          # ((component kind, pool size), ...)
    memlocs: tuple = ("l1",)
    memvals: tuple = ("v0", "v1")
    initval: str = "v0"
    argnum: tuple = (("read", 1), ("write", 2))
    wiring: tuple = ()              # ((constant, component kind), ...)
    oracles: tuple = ()             # ((symbol, component or None, spec), ...)
    timed: bool = False
    delta: int = 10
    epsilon: int = 25
    horizon: int = 10_000
    delays: tuple = ()              # ((component kind, lo, hi), ...)
    seed: int = 0
    budget: int = 5000
    policy: str = "random"
    checks: tuple = ()
    library: str = ""
    verbatim: tuple = ()            # component kinds that use the figure text as printed
    program: str = ""               # extra DSL source (custom modules), embedded verbatim

    def pools(self) -> dict:
        return dict(self.components)

    def oracle_table(self) -> dict:
        return {(sym, comp): spec for sym, comp, spec in self.oracles}

    def with_oracle(self, symbol: str, spec, component: Optional[str] = None) -> "ScenarioSpec":
        table = self.oracle_table()
        table[(symbol, component)] = spec
        return replace(self, oracles=tuple((s, c, v) for (s, c), v in table.items()))


_FAIR_SUCCEED = RandomOracle(((TRUE, 1), (FALSE, 1)), fair=TRUE, window=5)
_FAIR_RETRY = RandomOracle(((TRUE, 2), (FALSE, 1)), fair=FALSE, window=4)


def _o(text: str):
    return parse_oracle(text)


def preset(kind: str) -> ScenarioSpec:
    """Default scenario for each problem of the case study."""
    direct_mem = dict(
        memlocs=("l1", "l2"), memvals=("v0", "v1", "v2"), initval="v0",
    )
    direct_work = (
        ("MakeCall", None, _o("scripted(true*3, false)")),
        ("GetName", None, _o("random(read:1, write:1)")),
        ("GetArgs", None, _o("random([l1]:3, [l2, v1]:3, [l1, v2]:3, [l9]:1, [l1, v9]:1)")),
        ("Succeed", None, _FAIR_SUCCEED),
    )
    remote_work = (
        ("MakeCall", None, _o("pulses(12, 0, 9000)")),
        ("GetName", None, Constant(Sym("remotecall"))),
        ("GetArgs", None, _o("random([read, [l1]]:3, [write, [l1, v1]]:3, [write, [l2, v2]]:2, "
                             "[read, [l1, v1]]:1, [write, [l9, v1]]:1)")),
        ("Succeed", None, _FAIR_SUCCEED),
    )
    if kind == "problem1":
        return ScenarioSpec(
            kind=kind, components=(("Caller", 2), ("Memory", 2)), wiring=(("MemComponent", "Memory"),),
            oracles=direct_work + (("Fail", None, _o("random(true:1, false:9)")),), **direct_mem)
    if kind == "problem2":
        return ScenarioSpec(
            kind=kind, components=(("Caller", 2), ("ReliableMemory", 2)),
            wiring=(("MemComponent", "ReliableMemory"),),
            oracles=direct_work + (("Fail", None, _o("random(true:1, false:9)")),), **direct_mem)
    if kind == "problem3":
        return ScenarioSpec(
            kind=kind,
            components=(("Caller", 2), ("MemoryImpl", 2), ("RPC", 2), ("ReliableMemory", 2)),
            wiring=(("MemComponent", "MemoryImpl"), ("RPCComponent", "RPC"), ("Destination", "ReliableMemory")),
            oracles=direct_work + (("Fail", "RPC", _o("random(true:1, false:2)")),
                                   ("Retry", None, _FAIR_RETRY)),
            **direct_mem)
    if kind == "problem4":
        return ScenarioSpec(
            kind=kind, timed=True,
            components=(("Caller", 2), ("LossyRPC", 3), ("Memory", 3)),
            wiring=(("MemComponent", "LossyRPC"), ("Destination", "Memory")),
            oracles=remote_work + (("Fail", None, _o("random(true:1, false:9)")),),
            delays=(("LossyRPC", 0, 20),), **direct_mem)
    if kind == "problem5":
        return ScenarioSpec(
            kind=kind, timed=True,
            components=(("Caller", 2), ("RPCImpl", 2), ("LossyRPC", 4), ("ReliableMemory", 4)),
            wiring=(("MemComponent", "RPCImpl"), ("Destination", "ReliableMemory")),
            oracles=remote_work,
            delays=(("LossyRPC", 0, 20),), **direct_mem)
    if kind == "custom":
        return ScenarioSpec()
    raise BadSpec(f"unknown scenario kind {kind!r}")


DEFAULT_CHECKS = {
    "problem1": ("validity", "interface", "memory-exact", "liveness"),
    "problem2": ("validity", "interface", "memory-exact", "liveness", "reliable"),
    "problem3": ("validity", "interface", "memory-multi", "liveness", "rpc", "reliable"),
    "problem4": ("validity", "prerun", "timed-run", "interface", "lossy", "memory-multi", "liveness"),
    "problem5": ("validity", "prerun", "timed-run", "interface", "lossy", "rpc-impl", "memory-multi",
                 "liveness"),
    "custom": ("validity",),
}


def checks_for(spec: ScenarioSpec) -> tuple:
    return spec.checks or DEFAULT_CHECKS.get(spec.kind, ("validity",))


# -------------------------------------------------------- scenario files

def _names(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise BadSpec(f"{key}: expected an integer, found {text!r}") from None


def _pairs(key: str, text: str) -> tuple:
    out = []
    for item in _names(text):
        name, colon, num = item.partition(":")
        if not colon:
            raise BadSpec(f"{key}: expected name:number, found {item!r}")
        out.append((name.strip(), _int(key, num.strip())))
    return tuple(out)


def parse_scenario(text: str, base_dir: Optional[Path] = None) -> ScenarioSpec:
    """Parse the flat ``key = value`` scenario format (``#`` comments)."""
    entries: list[tuple[str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise BadSpec(f"line {lineno}: expected key = value")
        entries.append((key.strip(), value.strip(), lineno))
    kind = next((v for k, v, _ in entries if k == "kind"), "custom")
    spec = preset(kind)
    oracles = spec.oracle_table()
    wiring = dict(spec.wiring)
    delays = {c: (lo, hi) for c, lo, hi in spec.delays}
    program_parts: list[str] = []
    for key, value, lineno in entries:
        try:
            if key == "kind":
                continue
            if key == "components":
                spec.components = _pairs(key, value)
            elif key in ("memlocs", "memvals", "checks", "verbatim"):
                setattr(spec, key, _names(value))
            elif key in ("initval", "policy", "library"):
                setattr(spec, key, value)
            elif key == "argnum":
                spec.argnum = _pairs(key, value)
            elif key in ("delta", "epsilon", "horizon", "seed", "budget"):
                setattr(spec, key, _int(key, value))
            elif key == "timed":
                if value not in ("true", "false"):
                    raise BadSpec("timed must be true or false")
                spec.timed = value == "true"
            elif key.startswith("wire."):
                wiring[key[5:]] = value
            elif key.startswith("oracle."):
                sym, _, comp = key[7:].partition("@")
                oracles[(sym, comp or None)] = parse_oracle(value)
            elif key.startswith("delay."):
                lo, sep, hi = value.partition("..")
                delays[key[6:]] = (_int(key, lo.strip()), _int(key, (hi if sep else lo).strip()))
            elif key == "program":
                if base_dir is None:
                    raise BadSpec("program files need a scenario directory")
                program_parts.append((base_dir / value).read_text(encoding="utf-8"))
            elif key == "source":
                # already-embedded program text (written by render_scenario)
                program_parts.append(bytes.fromhex(value).decode("utf-8"))
            else:
                raise BadSpec(f"unknown key {key!r}")
        except (OracleSyntaxError, OSError, ValueError) as exc:
            raise BadSpec(f"line {lineno}: {exc}") from None
    spec.wiring = tuple(sorted(wiring.items()))
    spec.oracles = tuple((s, c, v) for (s, c), v in oracles.items())
    spec.delays = tuple((c, lo, hi) for c, (lo, hi) in sorted(delays.items()))
    if program_parts:
        spec.program = "\n".join(program_parts)
    return spec


def load_scenario(path) -> ScenarioSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise BadSpec(str(exc)) from None
    return parse_scenario(text, path.parent)


def render_scenario(spec: ScenarioSpec) -> str:
    """Canonical text form; equal specs render identically."""
    lines = [
        f"kind = {spec.kind}",
        "components = " + ", ".join(f"{k}:{n}" for k, n in spec.components),
        "memlocs = " + ", ".join(spec.memlocs),
        "memvals = " + ", ".join(spec.memvals),
        f"initval = {spec.initval}",
        "argnum = " + ", ".join(f"{k}:{n}" for k, n in spec.argnum),
    ]
    lines += [f"wire.{k} = {v}" for k, v in sorted(spec.wiring)]
    for sym, comp, s in sorted(spec.oracles, key=lambda o: (o[0], o[1] or "")):
        lines.append(f"oracle.{sym}{'@' + comp if comp else ''} = {render_oracle(s)}")
    lines += [
        f"timed = {'true' if spec.timed else 'false'}",
        f"delta = {spec.delta}",
        f"epsilon = {spec.epsilon}",
        f"horizon = {spec.horizon}",
    ]
    lines += [f"delay.{c} = {lo}..{hi}" for c, lo, hi in sorted(spec.delays)]
    lines += [
        f"seed = {spec.seed}",
        f"budget = {spec.budget}",
        f"policy = {spec.policy}",
    ]
    if spec.checks:
        lines.append("checks = " + ", ".join(spec.checks))
    if spec.library:
        lines.append(f"library = {spec.library}")
    if spec.verbatim:
        lines.append("verbatim = " + ", ".join(spec.verbatim))
    if spec.program:
        lines.append("source = " + spec.program.encode("utf-8").hex())
    return "\n".join(lines) + "\n"


def scenario_digest(spec: ScenarioSpec) -> str:
    return hashlib.sha256(render_scenario(spec).encode("utf-8")).hexdigest()[:16]


# --------------------------------------------------------------- builders

def agent_name(kind: str, i: int) -> AgentId:
    return AgentId(f"{kind.lower()}{i}")


def agents_of(spec: ScenarioSpec) -> dict:
    out: dict = {}
    for kind, pool in _components(spec):
        for i in range(1, pool + 1):
            out[agent_name(kind, i)] = kind
    return out


def _components(spec: ScenarioSpec) -> tuple:
    comps = list(spec.components)
    kinds = [k for k, _ in comps]
    # dropped lossy agents are made reusable by a recycler agent
    if spec.timed and "LossyRPC" in kinds and "Recycler" not in kinds:
        comps.append(("Recycler", 1))
    return tuple(comps)


def _check_spec(spec: ScenarioSpec, custom_modules: set):
    if spec.policy not in ("random", "roundrobin", "prompt"):
        raise BadSpec(f"unknown policy {spec.policy!r}")
    if not spec.memlocs or not spec.memvals:
        raise BadSpec("MemLocs and MemVals must be non-empty")
    if spec.initval not in spec.memvals:
        raise BadSpec(f"InitVal {spec.initval} is not in MemVals")
    names = [k for k, _ in spec.components]
    if len(set(names)) != len(names):
        raise BadSpec("each component kind may appear once")
    for kind, pool in spec.components:
        if kind not in KINDS and kind not in custom_modules:
            raise BadSpec(f"unknown component {kind!r}")
        if pool < 0:
            raise BadSpec(f"negative pool size for {kind}")
        if kind in TIMED_ONLY and not spec.timed:
            raise BadSpec(f"{kind} requires a timed scenario")
    present = set(names) | ({"Recycler"} if spec.timed and "LossyRPC" in names else set())
    for const, target in spec.wiring:
        if const not in WIRING:
            raise WiringError(f"unknown wiring constant {const!r}")
        if target not in present:
            raise WiringError(f"{const} refers to missing component {target!r}")
    wired = dict(spec.wiring)
    needs = {"Caller": "MemComponent", "RPC": "Destination", "MemoryImpl": "RPCComponent",
             "LossyRPC": "Destination"}
    for kind, const in needs.items():
        if kind in names and const not in wired:
            raise WiringError(f"{kind} needs wiring constant {const}")
    if "RPCImpl" in names and "LossyRPC" not in names:
        raise WiringError("RPCImpl requires a LossyRPC component")
    if "MemoryImpl" in names:
        if wired.get("RPCComponent") != "RPC" or "RPC" not in names:
            raise WiringError("MemoryImpl requires an RPC component downstream")
        if "ReliableMemory" not in names or wired.get("Destination") != "ReliableMemory":
            raise WiringError("MemoryImpl requires a ReliableMemory behind its RPC")


def initial_state(spec: ScenarioSpec, agents: Optional[dict] = None) -> State:
    agents = agents if agents is not None else agents_of(spec)
    if not spec.memlocs or not spec.memvals:
        raise BadSpec("MemLocs and MemVals must be non-empty")
    if spec.initval not in spec.memvals:
        raise BadSpec(f"InitVal {spec.initval} is not in MemVals")
    vocab = vocabulary(spec.timed)
    interp: dict = {}
    for name in CONSTANTS:
        interp[Location(name)] = Sym(name)
    for l in spec.memlocs:
        interp[Location("MemLocs", (Sym(l),))] = TRUE
        interp[Location("Memory", (Sym(l),))] = Sym(spec.initval)
    for v in spec.memvals:
        interp[Location("MemVals", (Sym(v),))] = TRUE
    interp[Location("InitVal")] = Sym(spec.initval)
    for proc, n in spec.argnum:
        interp[Location("ArgNum", (Sym(proc),))] = n
    wired = dict(spec.wiring)
    if spec.timed and any(k == "LossyRPC" for k, _ in spec.components):
        wired.setdefault("LossyRPC", "LossyRPC")
    for const, target in wired.items():
        interp[Location(const)] = Sym(target)
    for agent, kind in agents.items():
        interp[Location("Component", (agent,))] = Sym(kind)
        interp[Location("CallMade", (agent,))] = FALSE
    if spec.timed:
        interp[Location("CT")] = 0
        interp[Location("delta")] = spec.delta
        interp[Location("epsilon")] = spec.epsilon
    reserve = set(agents) | {Sym(k) for k, _ in _components(spec)}
    reserve |= {Sym(x) for x in spec.memlocs + spec.memvals}
    return State(vocab, interp, reserve=reserve)


def build_program(spec: ScenarioSpec) -> tuple[ProgramDef, dict]:
    """Assemble the macro library and every component module.

    Returns the merged program and the macro-expanded rule per component.
    """
    lib_name = spec.library or ("timed" if spec.timed else "untimed")
    prog = library(lib_name)
    custom = parse_program(spec.program) if spec.program else ProgramDef()
    rules: dict = {}
    modules: dict = {}
    for kind, _ in _components(spec):
        if kind in custom.modules:
            modules[kind] = custom.modules[kind]
            continue
        params: dict = {"verbatim": kind in spec.verbatim}
        if kind == "LossyRPC":
            params["delta"] = spec.delta
        if kind == "RPCImpl":
            params.update(delta=spec.delta, epsilon=spec.epsilon)
        comp = build_component(kind, params)
        modules[kind] = parse_program(comp.source).modules[comp.module]
        for name, m in parse_program(comp.source).macros.items():
            prog.macros.setdefault(name, m)
    prog = ProgramDef(modules, {**prog.macros, **custom.macros}, prog.constants, prog.universes)
    vocab = vocabulary(spec.timed)
    diags = validate_program(prog, vocab)
    if diags:
        raise BadSpec("; ".join(f"{d.where}: {d.message}" for d in diags))
    for kind in modules:
        rules[kind] = prog.module(kind)
    return prog, rules


def build_scenario(spec: ScenarioSpec) -> RunConfig:
    custom_modules = set(parse_program(spec.program).modules) if spec.program else set()
    _check_spec(spec, custom_modules)
    try:
        program, rules = build_program(spec)
    except DslError as exc:
        raise BadSpec(str(exc)) from None
    agents = agents_of(spec)
    oracles = dict(spec.oracle_table())
    for kind, _ in _components(spec):
        if kind == "ReliableMemory":
            oracles[("Fail", kind)] = Constant(FALSE)
    for key, s in list(oracles.items()):
        if isinstance(s, Pulses):
            oracles[key] = resolve_pulses(s, key[0], spec.seed, spec.horizon)
    delays = {c: (lo, hi) for c, lo, hi in spec.delays}
    if spec.policy == "prompt":
        delays = {}
    return RunConfig(
        program=program,
        modules=rules,
        agents=agents,
        initial=initial_state(spec, agents),
        oracles=oracles,
        policy=spec.policy,
        budget=spec.budget,
        seed=spec.seed,
        scenario=render_scenario(spec),
        timed=spec.timed,
        horizon=spec.horizon,
        delays=delays,
        delta=spec.delta,
        epsilon=spec.epsilon,
    )


def reseed(spec: ScenarioSpec, config: RunConfig, seed: int) -> RunConfig:
    """``build_scenario(replace(spec, seed=seed))`` without rebuilding the program."""
    spec = replace(spec, seed=seed)
    oracles = dict(config.oracles)
    for symbol, component, s in spec.oracles:
        if isinstance(s, Pulses) and oracles.get((symbol, component)) is not None:
            oracles[(symbol, component)] = resolve_pulses(s, symbol, seed, spec.horizon)
    return replace(config, oracles=oracles, seed=seed, scenario=render_scenario(spec))


def pool_warnings(spec: ScenarioSpec) -> list[str]:
    """Pool sizes under which a caller may wait forever for a free callee."""
    pools = spec.pools()
    wired = dict(spec.wiring)
    warnings = []
    chain = [("Caller", "MemComponent")]
    if "MemoryImpl" in pools:
        chain += [("MemoryImpl", "RPCComponent"), ("RPC", "Destination")]
    if "RPCImpl" in pools:
        chain += [("RPCImpl", None), ("LossyRPC", "Destination")]
    elif "LossyRPC" in pools:
        chain += [("LossyRPC", "Destination")]
    for kind, const in chain:
        target = "LossyRPC" if kind == "RPCImpl" else wired.get(const)
        if kind in pools and target in pools and pools[target] < min(1, pools[kind]):
            warnings.append(f"PoolTooSmall: {kind} calls into {target}, which has no agents")
    if spec.timed and "LossyRPC" in pools:
        upstream = pools.get("RPCImpl", pools.get("Caller", 0))
        if pools["LossyRPC"] < upstream:
            warnings.append("PoolTooSmall: fewer lossy agents than callers; timeouts may exceed 2*delta+epsilon")
    return warnings


__all__ = [
    "BadSpec", "WiringError", "BadParams", "SourceReport", "inspect_source", "ScenarioSpec", "ComponentSource", "INTERFACE", "TIMED_INTERFACE",
    "CONSTANTS", "WIRING", "EXTERNALS", "MEMORY_FAILURES", "KINDS", "FIGURES", "LIBRARIES", "vocabulary",
    "arg_list", "First", "Second", "Length", "corpus_text", "corpus_files", "library", "build_component",
    "preset", "checks_for", "parse_scenario", "load_scenario", "render_scenario", "scenario_digest",
    "agents_of", "initial_state", "build_program", "build_scenario", "reseed", "pool_warnings",
]
