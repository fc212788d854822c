import pytest
from hypothesis import given, settings, strategies as st

from asmrpc.components import FIGURES, corpus_text, inspect_source
from asmrpc.core import Apply, Block, Cond, Const, UpdateInstr
from asmrpc.dsl import (
    MacroArityMismatch, ParseError, RecursiveMacro, UnknownMacro, parse_program, parse_rule,
    parse_term, render_program, render_rule, render_term,
)


def test_operator_aliases_parse_the_same():
    assert parse_term("a ≠ b") == parse_term("a != b") == parse_term("a <> b")
    assert parse_term("CT ≥ 3") == parse_term("CT >= 3")


def test_precedence_round_trips():
    for text in ("a + b * c", "(a + b) * c", "not a and b or c", "not (a and b)", "a = b and c ≤ 2"):
        t = parse_term(text)
        assert parse_term(render_term(t)) == t


def test_list_literals_become_list_symbols():
    t = parse_term("[a, [b, c]]")
    assert isinstance(t, Apply) and len(t.args) == 2
    assert parse_term(render_term(t)) == t


def test_parse_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_rule("if a then\n  b := \nendif")
    assert "2" in str(err.value) or err.value.span is not None


@pytest.mark.parametrize("name", sorted(FIGURES))
def test_every_figure_parses_validates_and_round_trips(name):
    report = inspect_source(corpus_text(FIGURES[name]))
    assert report.diagnostics == []
    assert report.round_trip
    assert report.expanded or report.own.macros


def test_macro_expansion_substitutes_parameters():
    prog = parse_program(
        "macro SET(x, v)\n  F(x) := v\nendmacro\nmodule M\n  SET(1, G)\nendmodule\n")
    rule = prog.module("M")
    assert "SET" not in render_rule(rule)
    assert "F(1) := G" in render_rule(rule)


def test_macro_errors():
    body = "module M\n  {}\nendmodule\n"
    with pytest.raises(UnknownMacro):
        parse_program(body.format("NOPE(1)")).expanded()
    with pytest.raises(MacroArityMismatch):
        parse_program("macro A(x)\n  F := x\nendmacro\n" + body.format("A(1, 2)")).expanded()
    with pytest.raises(RecursiveMacro):
        parse_program("macro A(x)\n  A(x)\nendmacro\n" + body.format("A(1)")).expanded()


def test_render_program_is_a_fixed_point():
    text = corpus_text(FIGURES["imp2ea"])
    prog = parse_program(text)
    once = render_program(prog)
    assert render_program(parse_program(once)) == once


names = st.sampled_from(["F", "G", "H"])
leaves = st.one_of(st.integers(0, 9).map(Const), names.map(lambda n: Apply(n, ())))
terms = st.recursive(
    leaves,
    lambda inner: st.one_of(
        st.tuples(st.sampled_from(["+", "*", "=", "<=", "and", "or"]), inner, inner).map(lambda x: Apply(x[0], x[1:])),
        st.tuples(names, inner).map(lambda x: Apply(x[0], (x[1],))),
    ),
    max_leaves=6,
)
updates = st.tuples(names, terms).map(lambda x: UpdateInstr(x[0], (), x[1]))
rules = st.recursive(
    updates,
    lambda inner: st.one_of(
        st.lists(inner, min_size=2, max_size=3).map(lambda rs: Block(tuple(rs))),
        st.tuples(terms, inner, inner).map(lambda x: Cond(*x)),
    ),
    max_leaves=5,
)


@settings(max_examples=80)
@given(terms)
def test_render_then_parse_is_identity_on_terms(t):
    assert render_term(parse_term(render_term(t))) == render_term(t)


@settings(max_examples=60)
@given(rules)
def test_render_then_parse_is_identity_on_rules(r):
    text = render_rule(r)
    assert render_rule(parse_rule(text)) == text
