"""States, terms, rules and update sets of abstract state machines.

A state is a vocabulary plus a finite table of locations; every location
missing from the table reads as ``undef`` (or ``false`` for relations).
Rules are evaluated against a state to produce update sets, and firing an
update set yields a new state.  States never change after construction.
"""

from __future__ import annotations

import enum
import functools
import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, NamedTuple, Optional, Union


class AsmError(Exception):
    """Base class for evaluation and firing errors."""


class UnknownSymbol(AsmError):
    pass


class UnboundVariable(AsmError):
    pass


class ArityMismatch(AsmError):
    pass


class ResolverOutOfRange(AsmError):
    pass


class NotAnAgent(AsmError):
    pass


class RelationTypeError(AsmError):
    pass


class ReadOnlySymbol(AsmError):
    pass


class Clash(AsmError):
    """Two updates in one set assign different values to the same location."""

    def __init__(self, location: "Location", first: "Value", second: "Value"):
        super().__init__(f"clash at {format_location(location)}: {render_value(first)} vs {render_value(second)}")
        self.location = location
        self.values = (first, second)


# ---------------------------------------------------------------- values


class Logic(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNDEF = "undef"

    def __repr__(self) -> str:
        return self.value


TRUE = Logic.TRUE
FALSE = Logic.FALSE
UNDEF = Logic.UNDEF


class _Interned:
    """One instance per name, so equality and hashing are by identity."""

    __slots__ = ("name", "__weakref__")
    _pool: dict

    def __new__(cls, name: str):
        obj = cls._pool.get(name)
        if obj is None:
            if not isinstance(name, str):
                raise TypeError(f"{cls.__name__} name must be a string, not {name!r}")
            obj = object.__new__(cls)
            object.__setattr__(obj, "name", name)
            cls._pool[name] = obj
        return obj

    def __setattr__(self, key, value):
        raise AttributeError(f"{type(self).__name__} is immutable")

    def __reduce__(self):
        return (type(self), (self.name,))

    def __copy__(self):
        return self

    def __deepcopy__(self, memo):
        return self


class Sym(_Interned):
    """Symbolic constant (``read``, ``BadArg``, module names...)."""

    __slots__ = ()
    _pool: dict = {}

    def __repr__(self) -> str:
        return self.name


class AgentId(_Interned):
    __slots__ = ()
    _pool: dict = {}

    def __repr__(self) -> str:
        return "@" + self.name


# Argument lists are plain tuples of values; integers double as time ticks.
Value = Union[Logic, int, Sym, AgentId, tuple]


def boolean(flag: bool) -> Logic:
    return TRUE if flag else FALSE


def is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


_ATOMS = (Logic, Sym, AgentId, int)


def check_value(v: Any) -> Value:
    """Reject Python objects that are not engine values (notably ``bool``)."""
    if type(v) in _ATOMS:
        return v
    if isinstance(v, (Logic, Sym, AgentId)) or is_int(v):
        return v
    if isinstance(v, tuple):
        for item in v:
            check_value(item)
        return v
    raise TypeError(f"not an ASM value: {v!r}")


_LOGIC_ORDER = {TRUE: 0, FALSE: 1, UNDEF: 2}


def value_key(v: Value) -> tuple:
    """Total, platform-independent ordering key over values."""
    if isinstance(v, Logic):
        return (0, _LOGIC_ORDER[v])
    if isinstance(v, Sym):
        return (2, v.name)
    if isinstance(v, AgentId):
        return (3, v.name)
    if isinstance(v, tuple):
        return (4, tuple(value_key(x) for x in v))
    return (1, v)


def render_value(v: Value) -> str:
    if isinstance(v, Logic):
        return v.value
    if isinstance(v, tuple):
        return "[" + ", ".join(render_value(x) for x in v) + "]"
    return repr(v)


def parse_value(text: str) -> Value:
    """Inverse of :func:`render_value`."""
    value, rest = _parse_value(text.strip())
    if rest.strip():
        raise ValueError(f"trailing text in value: {text!r}")
    return value


def _parse_value(text: str) -> tuple[Value, str]:
    text = text.lstrip()
    if not text:
        raise ValueError("empty value")
    if text[0] == "[":
        items = []
        rest = text[1:].lstrip()
        if rest.startswith("]"):
            return (), rest[1:]
        while True:
            item, rest = _parse_value(rest)
            items.append(item)
            rest = rest.lstrip()
            if rest.startswith(","):
                rest = rest[1:]
            elif rest.startswith("]"):
                return tuple(items), rest[1:]
            else:
                raise ValueError(f"malformed list near {rest[:20]!r}")
    end = 0
    while end < len(text) and text[end] not in ",] \t\n":
        end += 1
    token, rest = text[:end], text[end:]
    if token in ("true", "false", "undef"):
        return Logic(token), rest
    if token.startswith("@") and len(token) > 1:
        return AgentId(token[1:]), rest
    if token.lstrip("-").isdigit():
        return int(token), rest
    if token and (token[0].isalpha() or token[0] == "_"):
        return Sym(token), rest
    raise ValueError(f"bad value token {token!r}")


# ------------------------------------------------------------ vocabulary


@dataclass(frozen=True)
class FunctionSymbol:
    name: str
    arity: int
    is_relation: bool = False
    is_external: bool = False
    # Built-in and derived functions are computed from (state, args) and
    # cannot be updated.
    compute: Optional[Callable[["State", tuple], Value]] = field(default=None, compare=False, repr=False)
    # for derived functions: the symbols ``compute`` looks at, if known
    reads: Optional[frozenset] = field(default=None, compare=False, repr=False)

    @property
    def is_builtin(self) -> bool:
        return self.compute is not None


LOGIC_SYMBOLS = ("true", "false", "undef", "Bool")
# evaluated lazily by eval_term, never through ``compute``
LAZY_OPERATORS = ("and", "or", "not")


def _arith(op):
    def compute(_state, args):
        a, b = args
        if is_int(a) and is_int(b):
            return op(a, b)
        return UNDEF
    return compute


def _compare(op):
    def compute(_state, args):
        a, b = args
        if is_int(a) and is_int(b):
            return boolean(op(a, b))
        return FALSE
    return compute


def _nth(index):
    def compute(_state, args):
        (xs,) = args
        if isinstance(xs, tuple) and len(xs) > index:
            return xs[index]
        return UNDEF
    return compute


def _length(_state, args):
    (xs,) = args
    return len(xs) if isinstance(xs, tuple) else UNDEF


MAX_LIST_LITERAL = 6


def list_symbol(n: int) -> str:
    return f"List{n}"


def _builtin_symbols() -> list[FunctionSymbol]:
    syms = [
        FunctionSymbol("true", 0, compute=lambda s, a: TRUE),
        FunctionSymbol("false", 0, compute=lambda s, a: FALSE),
        FunctionSymbol("undef", 0, compute=lambda s, a: UNDEF),
        FunctionSymbol("Bool", 1, is_relation=True, compute=lambda s, a: boolean(a[0] in (TRUE, FALSE))),
        FunctionSymbol("=", 2, is_relation=True, compute=lambda s, a: boolean(a[0] == a[1])),
        FunctionSymbol("!=", 2, is_relation=True, compute=lambda s, a: boolean(a[0] != a[1])),
        FunctionSymbol("<", 2, is_relation=True, compute=_compare(lambda x, y: x < y)),
        FunctionSymbol("<=", 2, is_relation=True, compute=_compare(lambda x, y: x <= y)),
        FunctionSymbol(">", 2, is_relation=True, compute=_compare(lambda x, y: x > y)),
        FunctionSymbol(">=", 2, is_relation=True, compute=_compare(lambda x, y: x >= y)),
        FunctionSymbol("+", 2, compute=_arith(lambda x, y: x + y)),
        FunctionSymbol("-", 2, compute=_arith(lambda x, y: x - y)),
        FunctionSymbol("*", 2, compute=_arith(lambda x, y: x * y)),
        FunctionSymbol("and", 2, is_relation=True, compute=lambda s, a: boolean(a[0] is TRUE and a[1] is TRUE)),
        FunctionSymbol("or", 2, is_relation=True, compute=lambda s, a: boolean(a[0] is TRUE or a[1] is TRUE)),
        FunctionSymbol("not", 1, is_relation=True, compute=lambda s, a: boolean(a[0] is not TRUE)),
        FunctionSymbol("First", 1, compute=_nth(0)),
        FunctionSymbol("Second", 1, compute=_nth(1)),
        FunctionSymbol("Length", 1, compute=_length),
    ]
    for n in range(MAX_LIST_LITERAL + 1):
        syms.append(FunctionSymbol(list_symbol(n), n, compute=lambda s, a: tuple(a)))
    return syms


class Vocabulary(Mapping[str, FunctionSymbol]):
    """Immutable name -> symbol table.  Always contains the built-ins."""

    def __init__(self, symbols: Iterable[FunctionSymbol] = ()):
        table: dict[str, FunctionSymbol] = {}
        for sym in list(_builtin_symbols()) + list(symbols):
            old = table.get(sym.name)
            if old is not None and old != sym:
                if old.is_builtin:
                    raise ValueError(f"cannot redefine built-in {sym.name}")
                raise ValueError(f"conflicting declarations of {sym.name}")
            table[sym.name] = sym
        self._table = table

    def __getitem__(self, name: str) -> FunctionSymbol:
        return self._table[name]

    def get(self, name: str, default=None):
        return self._table.get(name, default)

    def __contains__(self, name) -> bool:
        return name in self._table

    def __iter__(self) -> Iterator[str]:
        return iter(self._table)

    def __len__(self) -> int:
        return len(self._table)

    def extend(self, symbols: Iterable[FunctionSymbol]) -> "Vocabulary":
        return Vocabulary([s for s in self._table.values() if not s.is_builtin] + list(symbols))

    def restrict(self, names: Iterable[str]) -> "Vocabulary":
        keep = set(names)
        return Vocabulary([s for s in self._table.values() if not s.is_builtin and s.name in keep])

    @property
    def externals(self) -> frozenset[str]:
        return frozenset(n for n, s in self._table.items() if s.is_external)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self._table == other._table

    def __hash__(self):
        return hash(frozenset(self._table))

    def __repr__(self):
        user = sorted(n for n, s in self._table.items() if not s.is_builtin)
        return f"Vocabulary({', '.join(user)})"


# ------------------------------------------------------------------ state


class Location(NamedTuple):
    symbol: str
    args: tuple = ()


def format_location(loc: Location) -> str:
    if not loc.args:
        return loc.symbol
    return f"{loc.symbol}({', '.join(render_value(a) for a in loc.args)})"


@functools.lru_cache(maxsize=1 << 16)
def _entry_hash(loc: Location, value: Value) -> int:
    text = f"{format_location(loc)}={render_value(value)}"
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:16], "big")


_MASK = (1 << 128) - 1


class State:
    """A first-order structure: vocabulary plus interpretation table.

    ``reserve`` lists elements of the finite universes that must be
    enumerable by ``choose`` even when no location mentions them yet.
    """

    __slots__ = ("vocabulary", "_interp", "_acc", "_reserve", "_elements")

    def __init__(self, vocabulary: Vocabulary, interp: Mapping[Location, Value] | None = None,
                 reserve: Iterable[Value] = ()):
        self.vocabulary = vocabulary
        self._interp: dict[Location, Value] = {}
        self._reserve = frozenset(reserve)
        self._elements = None
        acc = 0
        for loc, value in (interp or {}).items():
            loc = Location(*loc)
            self._check_location(loc)
            check_value(value)
            self._check_relation(loc, value)
            if value != self._default(loc.symbol):
                self._interp[loc] = value
                acc = (acc + _entry_hash(loc, value)) & _MASK
        self._acc = acc

    @classmethod
    def _raw(cls, vocabulary, interp, acc, reserve):
        s = cls.__new__(cls)
        s.vocabulary = vocabulary
        s._interp = interp
        s._acc = acc
        s._reserve = reserve
        s._elements = None
        return s

    def _check_location(self, loc: Location):
        sym = self.vocabulary.get(loc.symbol)
        if sym is None:
            raise UnknownSymbol(loc.symbol)
        if len(loc.args) != sym.arity:
            raise ArityMismatch(f"{loc.symbol} expects {sym.arity} arguments, got {len(loc.args)}")
        if sym.is_builtin:
            raise ReadOnlySymbol(loc.symbol)

    def _check_relation(self, loc: Location, value: Value):
        if self.vocabulary[loc.symbol].is_relation and value not in (TRUE, FALSE):
            raise RelationTypeError(f"relation {format_location(loc)} assigned {render_value(value)}")

    def _default(self, name: str) -> Value:
        sym = self.vocabulary.get(name)
        return FALSE if sym is not None and sym.is_relation else UNDEF

    def get(self, name: str, args: tuple = ()) -> Value:
        sym = self.vocabulary.get(name)
        if sym is None:
            raise UnknownSymbol(name)
        if sym.compute is not None:
            return sym.compute(self, args)
        value = self._interp.get((name, args))
        if value is None:
            return FALSE if sym.is_relation else UNDEF
        return value

    def __getitem__(self, loc) -> Value:
        loc = Location(*loc)
        return self.get(loc.symbol, loc.args)

    def items(self) -> Iterator[tuple[Location, Value]]:
        """Non-default locations in canonical order."""
        return iter(sorted(self._interp.items(), key=lambda kv: (kv[0].symbol, value_key(kv[0].args))))

    def locations_of(self, name: str) -> Iterator[tuple[Location, Value]]:
        for loc, value in self._interp.items():
            if loc.symbol == name:
                yield loc, value

    @property
    def reserve(self) -> frozenset:
        return self._reserve

    def elements(self) -> tuple:
        """The materialized superuniverse, in canonical order."""
        if self._elements is None:
            found = set(self._reserve)
            found.update((TRUE, FALSE, UNDEF))
            for loc, value in self._interp.items():
                found.update(loc.args)
                found.add(value)
            self._elements = tuple(sorted(found, key=value_key))
        return self._elements

    def digest(self) -> str:
        """Order-independent content hash; updated incrementally by fire."""
        return f"{self._acc:032x}"

    def fire(self, updates: Iterable["Update"]) -> "State":
        return fire(self, updates)

    def with_values(self, mapping: Mapping) -> "State":
        return fire(self, [(Location(*k), v) for k, v in mapping.items()])

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return self.vocabulary == other.vocabulary and self._interp == other._interp

    def __hash__(self):
        return hash(self._acc)

    def __repr__(self):
        body = ", ".join(f"{format_location(l)}={render_value(v)}" for l, v in self.items())
        return f"State({body})"


class View:
    """An agent's local state: a reduct of the global state with Me bound."""

    __slots__ = ("base", "agent", "symbols", "vocabulary")

    def __init__(self, base: State, agent: AgentId, symbols: frozenset[str]):
        self.base = base
        self.agent = agent
        self.symbols = symbols
        self.vocabulary = base.vocabulary

    def get(self, name: str, args: tuple = ()) -> Value:
        if name == "Me":
            return self.agent
        if name not in self.symbols and not self.base.vocabulary.get(name, _NOSYM).is_builtin:
            raise UnknownSymbol(f"{name} is not in the view of {self.agent!r}")
        return self.base.get(name, args)

    def elements(self) -> tuple:
        return self.base.elements()

    def to_state(self) -> State:
        """Materialize the reduct as an independent state (slow; for tests)."""
        names = {n for n in self.symbols if n in self.base.vocabulary and not self.base.vocabulary[n].is_builtin}
        vocab = self.base.vocabulary.restrict(names).extend([FunctionSymbol("Me", 0)])
        interp = {loc: v for loc, v in self.base._interp.items() if loc.symbol in names}
        interp[Location("Me", ())] = self.agent
        return State(vocab, interp, reserve=self.base.reserve)


_NOSYM = FunctionSymbol("", 0)


# ---------------------------------------------------------------- updates


Update = tuple  # (Location, Value)
UpdateSet = frozenset


def is_consistent(updates: Iterable[Update]) -> bool:
    return find_clash(updates) is None


def find_clash(updates: Iterable[Update]) -> Optional[Clash]:
    updates = list(updates)
    seen: dict[Location, Value] = {}
    for loc, value in updates:
        if seen.setdefault(loc, value) != value:
            break
    else:
        return None
    seen = {}
    # canonical order so the reported pair does not depend on set iteration
    for loc, value in sorted(updates, key=update_key):
        old = seen.setdefault(loc, value)
        if old != value:
            return Clash(loc, old, value)
    return None


def update_key(update: Update) -> tuple:
    loc, value = update
    return (loc.symbol, value_key(loc.args), value_key(value))


def fire(s: State, updates: Iterable[Update]) -> State:
    """Apply a consistent update set, returning a new state."""
    updates = list(updates)
    if len(updates) > 1:
        clash = find_clash(updates)
        if clash is not None:
            raise clash
    table = s.vocabulary._table
    interp = dict(s._interp)
    acc = s._acc
    for loc, value in updates:
        if type(loc) is not Location:
            loc = Location(*loc)
        sym = table.get(loc.symbol)
        if sym is None or len(loc.args) != sym.arity or sym.is_builtin:
            s._check_location(loc)
        check_value(value)
        if sym.is_relation:
            s._check_relation(loc, value)
        old = interp.get(loc)
        if old is not None:
            acc = (acc - _entry_hash(loc, old)) & _MASK
            del interp[loc]
        if value is not (FALSE if sym.is_relation else UNDEF):
            interp[loc] = value
            acc = (acc + _entry_hash(loc, value)) & _MASK
    return State._raw(s.vocabulary, interp, acc, s._reserve)


def changes_state(s: State, updates: Iterable[Update]) -> bool:
    return any(s.get(loc.symbol, loc.args) != value for loc, value in updates)


# ------------------------------------------------------------ terms/rules


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    start: int
    end: int


def _span():
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Const:
    value: Value
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Var:
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Apply:
    symbol: str
    args: tuple = ()
    span: Optional[Span] = _span()


Term = Union[Const, Var, Apply]


@dataclass(frozen=True)
class UpdateInstr:
    symbol: str
    args: tuple
    rhs: Term
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Block:
    rules: tuple = ()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Cond:
    guard: Term
    then: "Rule"
    else_: "Rule" = Block()
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Choose:
    var: str
    cond: Term
    body: "Rule"
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class MacroCall:
    """Unexpanded abbreviation use; never reaches the evaluator."""

    name: str
    args: tuple = ()
    span: Optional[Span] = _span()


Rule = Union[UpdateInstr, Block, Cond, Choose, MacroCall]

EMPTY = Block()

Env = Mapping[str, Value]
Externals = Callable[[str, tuple], Value]
Resolver = Callable[[list], int]
ApplyHook = Callable[[str, tuple, Value], None]


def first_candidate(candidates: list) -> int:
    return 0


class _Evaluator:
    __slots__ = ("state", "base", "table", "view", "externals", "on_apply", "resolver", "index")

    def __init__(self, state, externals, on_apply, resolver, index=None):
        self.index = index
        self.state = state
        self.view = state if isinstance(state, View) else None
        self.base = state.base if self.view is not None else state
        self.table = self.base.vocabulary._table
        self.externals = externals
        self.on_apply = on_apply
        self.resolver = resolver

    def term(self, t: Term, env: Env) -> Value:
        cls = type(t)
        if cls is Const:
            return t.value
        if cls is Var:
            try:
                return env[t.name]
            except KeyError:
                raise UnboundVariable(t.name) from None
        if cls is not Apply:
            raise TypeError(f"not a term: {t!r}")
        name = t.symbol
        sym = self.table.get(name)
        if sym is None:
            if name == "Me" and self.view is not None:
                return self.view.agent
            raise UnknownSymbol(name)
        targs = t.args
        if len(targs) != sym.arity:
            raise ArityMismatch(f"{name} expects {sym.arity} arguments, got {len(targs)}")
        if sym.compute is not None:
            if name in LAZY_OPERATORS:
                return self._logic(name, targs, env)
            return sym.compute(self.base, tuple([self.term(a, env) for a in targs]))
        args = tuple([self.term(a, env) for a in targs]) if targs else ()
        if self.view is not None and name not in self.view.symbols:
            raise UnknownSymbol(f"{name} is not in the view of {self.view.agent!r}")
        if sym.is_external and self.externals is not None:
            value = self.externals(name, args)
        else:
            value = self.base._interp.get((name, args))
            if value is None:
                value = FALSE if sym.is_relation else UNDEF
        if self.on_apply is not None:
            self.on_apply(name, args, value)
        return value

    def _logic(self, name, args, env) -> Logic:
        # left-to-right short circuit; anything but true counts as not-true
        if name == "not":
            return boolean(self.term(args[0], env) is not TRUE)
        left = self.term(args[0], env) is TRUE
        if name == "and":
            return boolean(left and self.term(args[1], env) is TRUE)
        return boolean(left or self.term(args[1], env) is TRUE)

    def rule(self, r: Rule, env: Env, out: set):
        if isinstance(r, UpdateInstr):
            args = tuple(self.term(a, env) for a in r.args)
            out.add((Location(r.symbol, args), self.term(r.rhs, env)))
        elif isinstance(r, Block):
            for sub in r.rules:
                self.rule(sub, env, out)
        elif isinstance(r, Cond):
            if self.term(r.guard, env) is TRUE:
                self.rule(r.then, env, out)
            else:
                self.rule(r.else_, env, out)
        elif isinstance(r, Choose):
            candidates = []
            for a in self._domain(r, env):
                if self.term(r.cond, {**env, r.var: a}) is TRUE:
                    candidates.append(a)
            if not candidates:
                return
            pick = self.resolver(candidates)
            if not (0 <= pick < len(candidates)):
                raise ResolverOutOfRange(f"resolver picked {pick} of {len(candidates)} candidates")
            self.rule(r.body, {**env, r.var: candidates[pick]}, out)
        elif isinstance(r, MacroCall):
            raise TypeError(f"unexpanded macro {r.name}")
        else:
            raise TypeError(f"not a rule: {r!r}")

    def _domain(self, r: Choose, env: Env):
        # ``F(x) = e and ...`` with F never updated: only elements in F's
        # preimage of e can qualify, and the index keeps them in canonical order
        if self.index:
            first = r.cond
            while type(first) is Apply and first.symbol == "and":
                first = first.args[0]
            if type(first) is Apply and first.symbol == "=":
                probe, other = first.args
                if not _is_probe(probe, r.var):
                    other, probe = probe, other
                if _is_probe(probe, r.var) and probe.symbol in self.index and not _mentions(other, r.var):
                    value = self.term(other, env)
                    if value is not (FALSE if self.table[probe.symbol].is_relation else UNDEF):
                        return self.index[probe.symbol].get(value, ())
        if self.on_apply is not None:
            self.on_apply(ELEMENTS, (), None)
        return self.state.elements()


# reported to on_apply hooks when a choose scans the whole superuniverse
ELEMENTS = "<elements>"


def _is_probe(t, var: str) -> bool:
    return type(t) is Apply and len(t.args) == 1 and type(t.args[0]) is Var and t.args[0].name == var


def _mentions(t, var: str) -> bool:
    if type(t) is Var:
        return t.name == var
    return type(t) is Apply and any(_mentions(a, var) for a in t.args)


def static_index(s: State, names: Iterable[str]) -> dict:
    """Preimages of unary functions that no rule updates: name -> {value: elements}."""
    index = {}
    for name in names:
        sym = s.vocabulary.get(name)
        if sym is None or sym.arity != 1 or sym.is_builtin or sym.is_external:
            continue
        groups: dict = {}
        for loc, value in s.locations_of(name):
            groups.setdefault(value, []).append(loc.args[0])
        index[name] = {v: tuple(sorted(es, key=value_key)) for v, es in groups.items()}
    return index


def updated_symbols(r: Rule) -> frozenset[str]:
    """Names assigned anywhere in a rule."""
    if isinstance(r, UpdateInstr):
        return frozenset([r.symbol])
    if isinstance(r, Block):
        return frozenset().union(*(updated_symbols(x) for x in r.rules))
    if isinstance(r, Cond):
        return updated_symbols(r.then) | updated_symbols(r.else_)
    if isinstance(r, Choose):
        return updated_symbols(r.body)
    return frozenset()


def eval_term(t: Term, s, env: Env | None = None, *, externals: Externals | None = None,
              on_apply: ApplyHook | None = None) -> Value:
    """Value of ``t`` at state (or view) ``s`` under variable binding ``env``.

    ``externals`` supplies values of external symbols; without it they are
    read from the state like any other function.  ``on_apply`` observes
    every non-built-in application actually evaluated.
    """
    return _Evaluator(s, externals, on_apply, first_candidate).term(t, env or {})


def compute_update_set(r: Rule, s, env: Env | None = None, resolver: Resolver | None = None, *,
                       externals: Externals | None = None, on_apply: ApplyHook | None = None,
                       index: dict | None = None) -> UpdateSet:
    """``index`` (from ``static_index``) narrows choose scans; results are unchanged."""
    out: set = set()
    _Evaluator(s, externals, on_apply, resolver or first_candidate, index).rule(r, env or {}, out)
    return frozenset(out)


# ---------------------------------------------------------------- helpers


def rule_symbols(r: Rule) -> frozenset[str]:
    """Every function name mentioned by a rule."""
    found: set[str] = set()

    def term(t):
        if isinstance(t, Apply):
            found.add(t.symbol)
            for a in t.args:
                term(a)

    def rule(x):
        if isinstance(x, UpdateInstr):
            found.add(x.symbol)
            for a in x.args:
                term(a)
            term(x.rhs)
        elif isinstance(x, Block):
            for sub in x.rules:
                rule(sub)
        elif isinstance(x, Cond):
            term(x.guard)
            rule(x.then)
            rule(x.else_)
        elif isinstance(x, Choose):
            term(x.cond)
            rule(x.body)
        elif isinstance(x, MacroCall):
            for a in x.args:
                term(a)

    rule(r)
    return frozenset(found)


def agent_view(s: State, agent: AgentId, modules: Mapping[str, Rule], component: str = "Component") -> View:
    """Local state of ``agent``: the reduct to its module's symbols, Me bound.

    The agent's module is ``modules[Component(agent)]``.
    """
    mod = s.get(component, (agent,)) if component in s.vocabulary else UNDEF
    if not isinstance(mod, Sym) or mod.name not in modules:
        raise NotAnAgent(f"{agent!r} has no module")
    return View(s, agent, rule_symbols(modules[mod.name]) | {"Me"})


def module_of(s: State, agent: AgentId, component: str = "Component") -> Optional[str]:
    mod = s.get(component, (agent,))
    return mod.name if isinstance(mod, Sym) else None
