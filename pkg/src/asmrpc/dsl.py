"""Plain-text rule language: parser, macro expander, renderer, validator.

Syntax overview::

    # comment
    macro RETURN(type, value)
      CallReply(CallSender(Me)) := type
      ...
    endmacro

    module Memory
      if CallName(Me) = read then
        ...
      elseif CallName(Me) = write then
        ...
      endif
    endmodule

Block items are separated by newlines or commas.  Bare identifiers are
nullary function applications unless bound by ``choose`` or a macro
parameter; ``'x`` is a literal symbolic constant, ``[a, b]`` a list.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .core import (
    FALSE, MAX_LIST_LITERAL, TRUE, UNDEF, Apply, Block, Choose, Cond, Const, Logic, MacroCall, Rule, Span,
    Term, UpdateInstr, Var, Vocabulary, list_symbol, parse_value, render_value,
)


class DslError(Exception):
    def __init__(self, message: str, span: Optional[Span] = None):
        where = f" at line {span.line}, column {span.column}" if span else ""
        super().__init__(message + where)
        self.span = span


class ParseError(DslError):
    pass


class UnknownMacro(DslError):
    pass


class MacroArityMismatch(DslError):
    pass


class RecursiveMacro(DslError):
    pass


@dataclass(frozen=True)
class MacroDef:
    name: str
    params: tuple
    body: Rule
    span: Optional[Span] = field(default=None, compare=False)


@dataclass
class ProgramDef:
    modules: dict = field(default_factory=dict)      # name -> Rule (may contain macro calls)
    macros: dict = field(default_factory=dict)       # name -> MacroDef
    constants: tuple = ()
    universes: dict = field(default_factory=dict)    # name -> tuple of values (possibly empty)

    def merge(self, other: "ProgramDef") -> "ProgramDef":
        for kind, mine, theirs in (("module", self.modules, other.modules), ("macro", self.macros, other.macros)):
            dup = set(mine) & set(theirs)
            if dup:
                raise ParseError(f"duplicate {kind} definition: {', '.join(sorted(dup))}")
        return ProgramDef(
            modules={**self.modules, **other.modules},
            macros={**self.macros, **other.macros},
            constants=tuple(dict.fromkeys(self.constants + other.constants)),
            universes={**self.universes, **other.universes},
        )

    def module(self, name: str) -> Rule:
        """Macro-expanded rule of a module."""
        return expand_macros(self.modules[name], self.macros)

    def expanded(self) -> dict:
        return {name: self.module(name) for name in self.modules}


# ------------------------------------------------------------------ lexer

KEYWORDS = {
    "if", "then", "elseif", "else", "endif", "choose", "satisfying", "endchoose",
    "and", "or", "not", "macro", "endmacro", "module", "endmodule", "skip",
    "constant", "universe", "true", "false", "undef",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<int>\d+)
  | (?P<name>[^\W\d]\w*)
  | (?P<op>:=|!=|<>|<=|>=|≠|≤|≥|[=<>+\-*(),\[\]{}])
""", re.VERBOSE)

_OP_ALIASES = {"<>": "!=", "≠": "!=", "≤": "<=", "≥": ">="}


@dataclass(frozen=True)
class Token:
    kind: str    # name | kw | int | op | nl | quote | eof
    text: str
    span: Span


def _quote_end(text: str, pos: int) -> Optional[int]:
    if pos < len(text) and text[pos] == "[":
        depth = 0
        for i in range(pos, len(text)):
            if text[i] == "[":
                depth += 1
            elif text[i] == "]":
                depth -= 1
                if depth == 0:
                    return i + 1
            elif text[i] == "\n":
                return None
        return None
    m = re.compile(r"[@\w-]+").match(text, pos)
    return m.end() if m else None


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos, line, line_start = 0, 1, 0
    depth = 0
    while pos < len(text):
        span = Span(line, pos - line_start + 1, pos, pos)
        if text[pos] == "'":
            end = _quote_end(text, pos + 1)
            if end is None:
                raise ParseError("malformed quoted constant", span)
            tokens.append(Token("quote", text[pos:end], Span(span.line, span.column, pos, end)))
            pos = end
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", span)
        kind = m.lastgroup
        value = m.group()
        span = Span(line, pos - line_start + 1, pos, m.end())
        pos = m.end()
        if kind == "nl":
            if depth == 0:
                tokens.append(Token("nl", "\n", span))
            line += 1
            line_start = pos
            continue
        if kind in ("ws", "comment"):
            continue
        if kind == "name" and value in KEYWORDS:
            kind = "kw"
        if kind == "op":
            value = _OP_ALIASES.get(value, value)
            if value in "([{":
                depth += 1
            elif value in ")]}":
                depth = max(0, depth - 1)
        tokens.append(Token(kind, value, span))
    tokens.append(Token("eof", "", Span(line, pos - line_start + 1, pos, pos)))
    return tokens


# ----------------------------------------------------------------- parser

_BLOCK_END = {"elseif", "else", "endif", "endchoose", "endmacro", "endmodule"}
_CMP_OPS = ("=", "!=", "<", "<=", ">", ">=")


def _join(a: Span, b: Span) -> Span:
    return Span(a.line, a.column, a.start, b.end)


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0
        self.bound: list[str] = []

    # token helpers
    def peek(self) -> Token:
        return self.tokens[self.i]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            got = tok.text or tok.kind
            raise ParseError(f"expected {want!r}, found {got!r}", tok.span)
        return self.next()

    def skip_nl(self):
        while self.at("nl"):
            self.next()

    def last_span(self) -> Span:
        return self.tokens[self.i - 1].span

    # program level
    def program(self) -> ProgramDef:
        prog = ProgramDef()
        constants: list[str] = []
        while True:
            self.skip_nl()
            tok = self.peek()
            if tok.kind == "eof":
                break
            if tok.kind == "kw" and tok.text == "macro":
                m = self.macro()
                if m.name in prog.macros:
                    raise ParseError(f"duplicate macro {m.name}", m.span)
                prog.macros[m.name] = m
            elif tok.kind == "kw" and tok.text == "module":
                name, rule = self.module()
                if name in prog.modules:
                    raise ParseError(f"duplicate module {name}", tok.span)
                prog.modules[name] = rule
            elif tok.kind == "kw" and tok.text == "constant":
                self.next()
                constants.append(self.expect("name").text)
                while self.at("op", ","):
                    self.next()
                    constants.append(self.expect("name").text)
            elif tok.kind == "kw" and tok.text == "universe":
                self.next()
                name = self.expect("name").text
                elems: tuple = ()
                if self.at("op", "="):
                    self.next()
                    elems = self.universe_elems()
                prog.universes[name] = elems
            else:
                raise ParseError(f"expected a declaration, found {tok.text or tok.kind!r}", tok.span)
        prog.constants = tuple(constants)
        return prog

    def universe_elems(self) -> tuple:
        self.expect("op", "{")
        elems = []
        while not self.at("op", "}"):
            tok = self.next()
            if tok.kind not in ("name", "int", "quote", "kw"):
                raise ParseError(f"bad universe element {tok.text!r}", tok.span)
            text = tok.text[1:] if tok.kind == "quote" else tok.text
            elems.append(parse_value(text))
            if self.at("op", ","):
                self.next()
        self.expect("op", "}")
        return tuple(elems)

    def macro(self) -> MacroDef:
        start = self.expect("kw", "macro").span
        name = self.expect("name").text
        params: list[str] = []
        if self.at("op", "("):
            self.next()
            if not self.at("op", ")"):
                params.append(self.expect("name").text)
                while self.at("op", ","):
                    self.next()
                    params.append(self.expect("name").text)
            self.expect("op", ")")
        if len(set(params)) != len(params):
            raise ParseError(f"repeated parameter in macro {name}", start)
        self.bound.extend(params)
        body = self.block()
        del self.bound[len(self.bound) - len(params):]
        self.skip_nl()
        end = self.expect("kw", "endmacro").span
        return MacroDef(name, tuple(params), body, _join(start, end))

    def module(self) -> tuple[str, Rule]:
        self.expect("kw", "module")
        name = self.expect("name").text
        body = self.block()
        self.skip_nl()
        self.expect("kw", "endmodule")
        return name, body

    # rules
    def block(self) -> Rule:
        rules: list[Rule] = []
        start = self.peek().span
        while True:
            while self.at("nl") or self.at("op", ","):
                self.next()
            tok = self.peek()
            if tok.kind == "eof" or (tok.kind == "kw" and tok.text in _BLOCK_END):
                break
            rules.append(self.rule())
            if not (self.at("nl") or self.at("op", ",") or self.at("eof")
                    or (self.peek().kind == "kw" and self.peek().text in _BLOCK_END)):
                tok = self.peek()
                raise ParseError(f"expected end of rule, found {tok.text or tok.kind!r}", tok.span)
        flat: list[Rule] = []
        for r in rules:
            flat.extend(r.rules if isinstance(r, Block) else [r])
        if len(flat) == 1:
            return flat[0]
        span = _join(start, self.last_span()) if rules else None
        return Block(tuple(flat), span)

    def rule(self) -> Rule:
        tok = self.peek()
        if tok.kind == "kw":
            if tok.text == "if":
                return self.cond()
            if tok.text == "choose":
                return self.choose()
            if tok.text == "skip":
                self.next()
                return Block((), tok.span)
        if tok.kind != "name":
            raise ParseError(f"expected a rule, found {tok.text or tok.kind!r}", tok.span)
        name_tok = self.next()
        args: tuple = ()
        if self.at("op", "("):
            args = self.arglist("(", ")")
        if self.at("op", ":="):
            self.next()
            self.skip_nl()
            rhs = self.term()
            return UpdateInstr(name_tok.text, args, rhs, _join(name_tok.span, self.last_span()))
        if name_tok.text in self.bound:
            raise ParseError(f"variable {name_tok.text} used as a rule", name_tok.span)
        return MacroCall(name_tok.text, args, _join(name_tok.span, self.last_span()))

    def cond(self) -> Rule:
        start = self.expect("kw", "if").span
        branches = []
        guard = self.guard()
        then = self.block()
        branches.append((guard, then))
        else_: Rule = Block()
        while True:
            self.skip_nl()
            if self.at("kw", "elseif"):
                self.next()
                g = self.guard()
                branches.append((g, self.block()))
                continue
            if self.at("kw", "else"):
                self.next()
                else_ = self.block()
                self.skip_nl()
            end = self.expect("kw", "endif").span
            break
        span = _join(start, end)
        rule = else_
        for g, body in reversed(branches):
            rule = Cond(g, body, rule, span)
        return rule

    def guard(self) -> Term:
        self.skip_nl()
        g = self.term()
        self.skip_nl()
        self.expect("kw", "then")
        return g

    def choose(self) -> Rule:
        start = self.expect("kw", "choose").span
        var = self.expect("name").text
        self.expect("kw", "satisfying")
        self.bound.append(var)
        self.skip_nl()
        cond = self.term()
        body = self.block()
        self.bound.pop()
        self.skip_nl()
        end = self.expect("kw", "endchoose").span
        return Choose(var, cond, body, _join(start, end))

    # terms
    def arglist(self, open_: str, close: str) -> tuple:
        self.expect("op", open_)
        args = []
        if not self.at("op", close):
            args.append(self.term())
            while self.at("op", ","):
                self.next()
                args.append(self.term())
        self.expect("op", close)
        return tuple(args)

    def term(self) -> Term:
        return self.binary(0)

    _LEVELS = (("or",), ("and",))

    def binary(self, level: int) -> Term:
        if level == 2:
            return self.negation()
        ops = self._LEVELS[level]
        left = self.binary(level + 1)
        while self.peek().kind == "kw" and self.peek().text in ops:
            op = self.next().text
            self.skip_nl()
            right = self.binary(level + 1)
            left = Apply(op, (left, right), _join(left.span, right.span))
        return left

    def negation(self) -> Term:
        if self.at("kw", "not"):
            start = self.next().span
            operand = self.negation()
            return Apply("not", (operand,), _join(start, operand.span))
        return self.comparison()

    def comparison(self) -> Term:
        left = self.additive()
        if self.peek().kind == "op" and self.peek().text in _CMP_OPS:
            op = self.next().text
            self.skip_nl()
            right = self.additive()
            left = Apply(op, (left, right), _join(left.span, right.span))
            if self.peek().kind == "op" and self.peek().text in _CMP_OPS:
                raise ParseError("comparisons do not chain; add parentheses", self.peek().span)
        return left

    def additive(self) -> Term:
        left = self.multiplicative()
        while self.peek().kind == "op" and self.peek().text in ("+", "-"):
            op = self.next().text
            self.skip_nl()
            right = self.multiplicative()
            left = Apply(op, (left, right), _join(left.span, right.span))
        return left

    def multiplicative(self) -> Term:
        left = self.atom()
        while self.at("op", "*"):
            self.next()
            self.skip_nl()
            right = self.atom()
            left = Apply("*", (left, right), _join(left.span, right.span))
        return left

    def atom(self) -> Term:
        tok = self.peek()
        if tok.kind == "int":
            self.next()
            return Const(int(tok.text), tok.span)
        if tok.kind == "quote":
            self.next()
            try:
                return Const(parse_value(tok.text[1:]), tok.span)
            except ValueError as exc:
                raise ParseError(str(exc), tok.span) from None
        if tok.kind == "kw" and tok.text in ("true", "false", "undef"):
            self.next()
            return Const(Logic(tok.text), tok.span)
        if tok.kind == "name":
            self.next()
            if self.at("op", "("):
                args = self.arglist("(", ")")
                return Apply(tok.text, args, _join(tok.span, self.last_span()))
            if tok.text in self.bound:
                return Var(tok.text, tok.span)
            return Apply(tok.text, (), tok.span)
        if self.at("op", "("):
            self.next()
            inner = self.term()
            self.expect("op", ")")
            return inner
        if self.at("op", "["):
            items = self.arglist("[", "]")
            if len(items) > MAX_LIST_LITERAL:
                raise ParseError(f"list literal longer than {MAX_LIST_LITERAL}", tok.span)
            return Apply(list_symbol(len(items)), items, _join(tok.span, self.last_span()))
        raise ParseError(f"expected a term, found {tok.text or tok.kind!r}", tok.span)


def parse_program(text: str, library: ProgramDef | None = None) -> ProgramDef:
    """Parse a ``.asm`` source.

    With ``library`` the result includes the library's macros and every
    module is macro-expanded once so that unknown macros, wrong argument
    counts and recursion are reported immediately.
    """
    prog = _Parser(text).program()
    if library is not None:
        prog = library.merge(prog)
        prog.expanded()
    return prog


def parse_rule(text: str, bound: Iterable[str] = ()) -> Rule:
    p = _Parser(text)
    p.bound.extend(bound)
    rule = p.block()
    p.skip_nl()
    if not p.at("eof"):
        tok = p.peek()
        raise ParseError(f"unexpected {tok.text or tok.kind!r}", tok.span)
    return rule


def parse_term(text: str, bound: Iterable[str] = ()) -> Term:
    p = _Parser(text)
    p.bound.extend(bound)
    t = p.term()
    p.skip_nl()
    if not p.at("eof"):
        tok = p.peek()
        raise ParseError(f"unexpected {tok.text or tok.kind!r}", tok.span)
    return t


# ----------------------------------------------------------------- macros


def free_vars_term(t: Term) -> set[str]:
    if isinstance(t, Var):
        return {t.name}
    if isinstance(t, Apply):
        out: set[str] = set()
        for a in t.args:
            out |= free_vars_term(a)
        return out
    return set()


def free_vars(r: Rule) -> set[str]:
    if isinstance(r, UpdateInstr):
        out = free_vars_term(r.rhs)
        for a in r.args:
            out |= free_vars_term(a)
        return out
    if isinstance(r, Block):
        out = set()
        for sub in r.rules:
            out |= free_vars(sub)
        return out
    if isinstance(r, Cond):
        return free_vars_term(r.guard) | free_vars(r.then) | free_vars(r.else_)
    if isinstance(r, Choose):
        return (free_vars_term(r.cond) | free_vars(r.body)) - {r.var}
    if isinstance(r, MacroCall):
        out = set()
        for a in r.args:
            out |= free_vars_term(a)
        return out
    raise TypeError(r)


def _subst_term(t: Term, sub: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        return sub.get(t.name, t)
    if isinstance(t, Apply) and t.args:
        return Apply(t.symbol, tuple(_subst_term(a, sub) for a in t.args), t.span)
    return t


def _fresh(base: str, avoid: set[str]) -> str:
    n = 1
    while f"{base}_{n}" in avoid:
        n += 1
    return f"{base}_{n}"


def substitute(r: Rule, sub: Mapping[str, Term]) -> Rule:
    """Capture-avoiding substitution of variables by terms."""
    if not sub:
        return r
    if isinstance(r, UpdateInstr):
        return UpdateInstr(r.symbol, tuple(_subst_term(a, sub) for a in r.args), _subst_term(r.rhs, sub), r.span)
    if isinstance(r, Block):
        return Block(tuple(substitute(x, sub) for x in r.rules), r.span)
    if isinstance(r, Cond):
        return Cond(_subst_term(r.guard, sub), substitute(r.then, sub), substitute(r.else_, sub), r.span)
    if isinstance(r, MacroCall):
        return MacroCall(r.name, tuple(_subst_term(a, sub) for a in r.args), r.span)
    if isinstance(r, Choose):
        inner = {k: v for k, v in sub.items() if k != r.var}
        incoming: set[str] = set()
        for v in inner.values():
            incoming |= free_vars_term(v)
        var, cond, body = r.var, r.cond, r.body
        if var in incoming:
            new = _fresh(var, incoming | free_vars(r.body) | free_vars_term(r.cond) | set(inner))
            rename = {var: Var(new)}
            cond = _subst_term(cond, rename)
            body = substitute(body, rename)
            var = new
        return Choose(var, _subst_term(cond, inner), substitute(body, inner), r.span)
    raise TypeError(r)


def expand_macros(r: Rule, macros: Mapping[str, MacroDef], _stack: tuple = ()) -> Rule:
    """Replace every macro call by its substituted body, recursively."""
    if isinstance(r, MacroCall):
        m = macros.get(r.name)
        if m is None:
            raise UnknownMacro(f"unknown macro {r.name}", r.span)
        if r.name in _stack:
            raise RecursiveMacro(f"recursive macro {' -> '.join(_stack + (r.name,))}", r.span)
        if len(r.args) != len(m.params):
            raise MacroArityMismatch(
                f"macro {r.name} takes {len(m.params)} arguments, got {len(r.args)}", r.span)
        body = substitute(m.body, dict(zip(m.params, r.args)))
        return expand_macros(body, macros, _stack + (r.name,))
    if isinstance(r, Block):
        out: list[Rule] = []
        for sub in r.rules:
            e = expand_macros(sub, macros, _stack)
            out.extend(e.rules if isinstance(e, Block) else [e])
        if len(out) == 1:
            return out[0]
        return Block(tuple(out), r.span)
    if isinstance(r, Cond):
        return Cond(r.guard, expand_macros(r.then, macros, _stack), expand_macros(r.else_, macros, _stack), r.span)
    if isinstance(r, Choose):
        return Choose(r.var, r.cond, expand_macros(r.body, macros, _stack), r.span)
    return r


def normalize(r: Rule) -> Rule:
    """Canonical tree shape: blocks flattened, one-item blocks unwrapped."""
    if isinstance(r, Block):
        out: list[Rule] = []
        for sub in r.rules:
            n = normalize(sub)
            out.extend(n.rules if isinstance(n, Block) else [n])
        return out[0] if len(out) == 1 else Block(tuple(out), r.span)
    if isinstance(r, Cond):
        return Cond(r.guard, normalize(r.then), normalize(r.else_), r.span)
    if isinstance(r, Choose):
        return Choose(r.var, r.cond, normalize(r.body), r.span)
    return r


# --------------------------------------------------------------- renderer

_PREC = {"or": 1, "and": 2, "not": 3, "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6}
_ATOM = 9


def _list_arity(symbol: str) -> Optional[int]:
    if symbol.startswith("List") and symbol[4:].isdigit():
        n = int(symbol[4:])
        if n <= MAX_LIST_LITERAL:
            return n
    return None


def render_term(t: Term, min_prec: int = 0) -> str:
    text, prec = _render_term(t)
    return f"({text})" if prec < min_prec else text


def _render_term(t: Term) -> tuple[str, int]:
    if isinstance(t, Const):
        v = t.value
        if isinstance(v, Logic) or isinstance(v, int):
            return render_value(v), _ATOM
        return "'" + render_value(v), _ATOM
    if isinstance(t, Var):
        return t.name, _ATOM
    sym, args = t.symbol, t.args
    if sym in _PREC and len(args) == (1 if sym == "not" else 2):
        p = _PREC[sym]
        if sym == "not":
            return f"not {render_term(args[0], p)}", p
        # comparisons are non-associative; the rest associate to the left
        left_min = p + 1 if p == 4 else p
        return f"{render_term(args[0], left_min)} {sym} {render_term(args[1], p + 1)}", p
    n = _list_arity(sym)
    if n is not None and len(args) == n:
        return "[" + ", ".join(render_term(a) for a in args) + "]", _ATOM
    if not args:
        return sym, _ATOM
    return f"{sym}({', '.join(render_term(a) for a in args)})", _ATOM


def render_rule(r: Rule, indent: int = 0) -> str:
    """Pretty-print a rule; ``parse_rule`` of the output gives it back."""
    return "\n".join(_render_lines(normalize(r), indent))


def _render_lines(r: Rule, depth: int) -> list[str]:
    pad = "  " * depth
    if isinstance(r, UpdateInstr):
        lhs = r.symbol if not r.args else f"{r.symbol}({', '.join(render_term(a) for a in r.args)})"
        return [f"{pad}{lhs} := {render_term(r.rhs)}"]
    if isinstance(r, MacroCall):
        if not r.args:
            return [pad + r.name]
        return [f"{pad}{r.name}({', '.join(render_term(a) for a in r.args)})"]
    if isinstance(r, Block):
        if not r.rules:
            return [pad + "skip"]
        lines: list[str] = []
        for sub in r.rules:
            lines.extend(_render_lines(sub, depth))
        return lines
    if isinstance(r, Choose):
        return ([f"{pad}choose {r.var} satisfying {render_term(r.cond)}"]
                + _render_lines(r.body, depth + 1) + [pad + "endchoose"])
    if isinstance(r, Cond):
        lines = [f"{pad}if {render_term(r.guard)} then"] + _render_lines(r.then, depth + 1)
        rest = r.else_
        while isinstance(rest, Cond):
            lines.append(f"{pad}elseif {render_term(rest.guard)} then")
            lines.extend(_render_lines(rest.then, depth + 1))
            rest = rest.else_
        if not (isinstance(rest, Block) and not rest.rules):
            lines.append(pad + "else")
            lines.extend(_render_lines(rest, depth + 1))
        lines.append(pad + "endif")
        return lines
    raise TypeError(r)


def render_program(p: ProgramDef) -> str:
    out: list[str] = []
    if p.constants:
        out.append("constant " + ", ".join(p.constants))
    for name, elems in p.universes.items():
        if elems:
            body = ", ".join(render_value(e) if not isinstance(e, tuple) else "'" + render_value(e) for e in elems)
            out.append(f"universe {name} = {{{body}}}")
        else:
            out.append(f"universe {name}")
    for m in p.macros.values():
        head = f"macro {m.name}" + (f"({', '.join(m.params)})" if m.params else "")
        out.extend([head, render_rule(m.body, 1), "endmacro"])
    for name, rule in p.modules.items():
        out.extend([f"module {name}", render_rule(rule, 1), "endmodule"])
    return "\n".join(out) + "\n"


# -------------------------------------------------------------- validator


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    message: str
    where: str = ""
    span: Optional[Span] = field(default=None, compare=False)

    def __str__(self):
        loc = f" (line {self.span.line})" if self.span else ""
        return f"{self.where}: {self.kind}: {self.message}{loc}"


_NON_BOOLEAN_BUILTINS = {"+", "-", "*", "First", "Second", "Length"} | {list_symbol(n) for n in range(MAX_LIST_LITERAL + 1)}


def validate_program(p: ProgramDef, vocab: Vocabulary) -> list[Diagnostic]:
    """Static checks over every (expanded) module; problems come back as data."""
    diags: list[Diagnostic] = []
    for name in p.modules:
        try:
            rule = p.module(name)
        except DslError as exc:
            diags.append(Diagnostic(type(exc).__name__, str(exc), name, exc.span))
            continue
        _validate_rule(rule, vocab, name, set(), diags)
    return diags


def _validate_term(t: Term, vocab, where, bound, diags):
    if isinstance(t, Var):
        if t.name not in bound:
            diags.append(Diagnostic("unbound-variable", f"variable {t.name} is not bound", where, t.span))
        return
    if isinstance(t, Const):
        return
    sym = vocab.get(t.symbol)
    if sym is None and t.symbol != "Me":
        diags.append(Diagnostic("undeclared-symbol", f"{t.symbol} is not in the vocabulary", where, t.span))
    elif sym is not None and sym.arity != len(t.args):
        diags.append(Diagnostic("arity", f"{t.symbol} takes {sym.arity} arguments, got {len(t.args)}", where, t.span))
    for a in t.args:
        _validate_term(a, vocab, where, bound, diags)


def _statically_non_boolean(t: Term, vocab) -> bool:
    if isinstance(t, Const):
        return t.value not in (TRUE, FALSE)
    if isinstance(t, Apply):
        if t.symbol in _NON_BOOLEAN_BUILTINS or t.symbol == "undef":
            return True
    return False


def _validate_rule(r: Rule, vocab, where, bound: set, diags):
    if isinstance(r, UpdateInstr):
        sym = vocab.get(r.symbol)
        if sym is None:
            diags.append(Diagnostic("undeclared-symbol", f"{r.symbol} is not in the vocabulary", where, r.span))
        else:
            if sym.arity != len(r.args):
                diags.append(Diagnostic("arity", f"{r.symbol} takes {sym.arity} arguments, got {len(r.args)}",
                                        where, r.span))
            if sym.is_builtin:
                diags.append(Diagnostic("read-only", f"{r.symbol} is built in and cannot be updated", where, r.span))
            if sym.is_external:
                diags.append(Diagnostic("external-update", f"{r.symbol} is external", where, r.span))
            if sym.is_relation and _statically_non_boolean(r.rhs, vocab):
                diags.append(Diagnostic("relation-type", f"relation {r.symbol} assigned a non-Boolean value",
                                        where, r.span))
        for a in r.args:
            _validate_term(a, vocab, where, bound, diags)
        _validate_term(r.rhs, vocab, where, bound, diags)
    elif isinstance(r, Block):
        for sub in r.rules:
            _validate_rule(sub, vocab, where, bound, diags)
    elif isinstance(r, Cond):
        _validate_term(r.guard, vocab, where, bound, diags)
        _validate_rule(r.then, vocab, where, bound, diags)
        _validate_rule(r.else_, vocab, where, bound, diags)
    elif isinstance(r, Choose):
        if r.var in vocab or r.var == "Me":
            diags.append(Diagnostic("shadowing", f"choose variable {r.var} shadows a function symbol", where, r.span))
        inner = bound | {r.var}
        _validate_term(r.cond, vocab, where, inner, diags)
        _validate_rule(r.body, vocab, where, inner, diags)
    elif isinstance(r, MacroCall):
        diags.append(Diagnostic("unexpanded-macro", f"macro {r.name} left unexpanded", where, r.span))
