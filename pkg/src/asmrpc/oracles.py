"""External-function oracles: specs, their text syntax, and value streams."""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import FALSE, TRUE, Value, parse_value, render_value, value_key


class OracleSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class Scripted:
    """Values consumed one per read; the last one repeats forever."""
    values: tuple

    def __post_init__(self):
        if not self.values:
            raise OracleSyntaxError("scripted oracle needs at least one value")


@dataclass(frozen=True)
class RandomOracle:
    """Weighted draws.  With ``fair`` set, every ``window`` consecutive reads
    contain at least one ``fair`` value."""
    weights: tuple          # ((value, weight), ...)
    fair: Optional[Value] = None
    window: int = 0

    def __post_init__(self):
        if not self.weights or any(w < 0 for _, w in self.weights) or sum(w for _, w in self.weights) <= 0:
            raise OracleSyntaxError("random oracle needs non-negative weights with a positive total")
        if self.fair is not None and self.window < 1:
            raise OracleSyntaxError("fairness window must be at least 1")


@dataclass(frozen=True)
class Constant:
    value: Value


@dataclass(frozen=True)
class Schedule:
    """Time-driven oracle: ``value`` at the listed ticks, ``default`` elsewhere."""
    ticks: tuple
    value: Value = TRUE
    default: Value = FALSE


@dataclass(frozen=True)
class Pulses:
    """``count`` random ticks in ``[start, stop)``; resolved to a Schedule per seed."""
    count: int
    start: int = 0
    stop: Optional[int] = None


OracleSpec = Scripted | RandomOracle | Constant | Schedule | Pulses


def draw(key: str, total: int) -> int:
    digest = hashlib.blake2b(key.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") % total


def oracle_next(spec: OracleSpec, symbol: str, history: Sequence[Value], *, seed: int = 0, stream: str = "",
                tick: Optional[int] = None) -> Value:
    """Next value of a stream given everything it produced so far.

    Pure: the random draw for read number ``len(history)`` is a hash of
    (seed, symbol, stream key, read number), so replays never drift.
    """
    n = len(history)
    if isinstance(spec, Scripted):
        return spec.values[min(n, len(spec.values) - 1)]
    if isinstance(spec, Constant):
        return spec.value
    if isinstance(spec, RandomOracle):
        if spec.fair is not None and spec.window > 0:
            recent = history[max(0, n - spec.window + 1):]
            if len(recent) == spec.window - 1 and spec.fair not in recent:
                return spec.fair
        total = sum(w for _, w in spec.weights)
        pick = draw(f"{seed}|{symbol}|{stream}|{n}", total)
        for value, weight in spec.weights:
            if pick < weight:
                return value
            pick -= weight
        raise AssertionError("unreachable")
    if isinstance(spec, Schedule):
        if tick is None:
            raise ValueError("schedule oracles need a tick")
        return spec.value if tick in spec.ticks else spec.default
    raise TypeError(f"unresolved oracle spec {spec!r}")


def resolve_pulses(spec: Pulses, symbol: str, seed: int, horizon: int) -> Schedule:
    stop = horizon if spec.stop is None else min(spec.stop, horizon)
    span = max(0, stop - spec.start)
    if spec.count > span:
        raise OracleSyntaxError(f"cannot place {spec.count} pulses in {span} ticks")
    chosen: list[int] = []
    i = 0
    while len(chosen) < spec.count:
        t = spec.start + draw(f"{seed}|{symbol}|pulse|{i}", span)
        if t not in chosen:
            chosen.append(t)
        i += 1
    return Schedule(tuple(sorted(chosen)))


def alphabet(spec: OracleSpec) -> tuple:
    """Every value the oracle can produce, in canonical order."""
    if isinstance(spec, Scripted):
        values = set(spec.values)
    elif isinstance(spec, RandomOracle):
        values = {v for v, w in spec.weights if w > 0}
    elif isinstance(spec, Constant):
        values = {spec.value}
    elif isinstance(spec, Schedule):
        values = {spec.value, spec.default}
    elif isinstance(spec, Pulses):
        values = {TRUE, FALSE}
    else:
        raise TypeError(spec)
    return tuple(sorted(values, key=value_key))


# ------------------------------------------------------------ text syntax
#   scripted(true*3, false)
#   random(true:1, false:4; fair=true, window=5)
#   constant(false)
#   schedule(10, 250, 900)
#   pulses(5, 0, 9000)

_SPEC_RE = re.compile(r"^\s*(\w+)\s*\((.*)\)\s*$", re.S)


def _split_top(text: str, sep: str) -> list[str]:
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _value(text: str) -> Value:
    try:
        return parse_value(text)
    except ValueError as exc:
        raise OracleSyntaxError(str(exc)) from None


def _int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise OracleSyntaxError(f"expected an integer, found {text!r}") from None


def parse_oracle(text: str) -> OracleSpec:
    m = _SPEC_RE.match(text)
    if not m:
        raise OracleSyntaxError(f"bad oracle spec {text!r}")
    kind, body = m.group(1), m.group(2)
    main, _, opts = body.partition(";")
    items = _split_top(main, ",")
    if kind == "scripted":
        values = []
        for item in items:
            head, star, count = item.rpartition("*")
            if star and head and "]" not in count:
                values.extend([_value(head)] * _int(count))
            else:
                values.append(_value(item))
        return Scripted(tuple(values))
    if kind == "constant":
        if len(items) != 1:
            raise OracleSyntaxError("constant takes one value")
        return Constant(_value(items[0]))
    if kind == "random":
        weights = []
        for item in items:
            value, colon, weight = item.rpartition(":")
            if not colon:
                value, weight = item, "1"
            weights.append((_value(value), _int(weight)))
        fair, window = None, 0
        for opt in _split_top(opts, ","):
            key, eq, val = opt.partition("=")
            key = key.strip()
            if key == "fair":
                fair = _value(val.strip())
            elif key == "window":
                window = _int(val.strip())
            else:
                raise OracleSyntaxError(f"unknown random option {key!r}")
        return RandomOracle(tuple(weights), fair, window)
    if kind == "schedule":
        return Schedule(tuple(sorted({_int(i) for i in items})))
    if kind == "pulses":
        nums = [_int(i) for i in items]
        if not 1 <= len(nums) <= 3:
            raise OracleSyntaxError("pulses(count[, start[, stop]])")
        return Pulses(*nums)
    raise OracleSyntaxError(f"unknown oracle kind {kind!r}")


def render_oracle(spec: OracleSpec) -> str:
    if isinstance(spec, Scripted):
        return f"scripted({', '.join(render_value(v) for v in spec.values)})"
    if isinstance(spec, Constant):
        return f"constant({render_value(spec.value)})"
    if isinstance(spec, RandomOracle):
        body = ", ".join(f"{render_value(v)}:{w}" for v, w in spec.weights)
        if spec.fair is not None:
            body += f"; fair={render_value(spec.fair)}, window={spec.window}"
        return f"random({body})"
    if isinstance(spec, Schedule):
        return f"schedule({', '.join(map(str, spec.ticks))})"
    if isinstance(spec, Pulses):
        args = [spec.count, spec.start] + ([] if spec.stop is None else [spec.stop])
        return f"pulses({', '.join(map(str, args))})"
    raise TypeError(spec)


class OracleBank:
    """Per-(symbol, stream) histories with peek/commit.

    A value is only consumed when the move that read it is actually fired;
    reads made while probing an agent that turns out not to be enabled
    leave the stream untouched.
    """

    def __init__(self, specs: dict, seed: int):
        self.specs = specs          # (symbol, component or None) -> spec
        self.seed = seed
        self.history: dict[tuple, list] = {}

    def spec_for(self, symbol: str, component: Optional[str]) -> OracleSpec:
        spec = self.specs.get((symbol, component)) or self.specs.get((symbol, None))
        if spec is None:
            raise KeyError(f"no oracle configured for {symbol}")
        return spec

    def peek(self, symbol: str, component: Optional[str], stream: str) -> Value:
        spec = self.spec_for(symbol, component)
        hist = self.history.get((symbol, stream), ())
        return oracle_next(spec, symbol, hist, seed=self.seed, stream=stream)

    def commit(self, symbol: str, stream: str, value: Value):
        self.history.setdefault((symbol, stream), []).append(value)
