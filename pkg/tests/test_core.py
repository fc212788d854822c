import pytest
from hypothesis import given, settings, strategies as st

from asmrpc.core import (
    FALSE, TRUE, UNDEF, AgentId, ArityMismatch, Clash, FunctionSymbol, Location, ReadOnlySymbol,
    RelationTypeError, ResolverOutOfRange, State, Sym, UnknownSymbol, View, Vocabulary, check_value,
    compute_update_set, eval_term, find_clash, fire, parse_value, render_value, static_index, value_key,
)
from asmrpc.dsl import parse_rule, parse_term

VOCAB = Vocabulary([
    FunctionSymbol("F", 1), FunctionSymbol("G", 1, is_relation=True), FunctionSymbol("H", 0),
    FunctionSymbol("K", 2), FunctionSymbol("X", 0, is_external=True),
])

atoms = st.one_of(
    st.sampled_from([TRUE, FALSE, UNDEF]),
    st.integers(-50, 50),
    st.sampled_from([Sym("read"), Sym("write"), Sym("l1")]),
    st.sampled_from([AgentId("caller1"), AgentId("memory2")]),
)
values = st.recursive(atoms, lambda inner: st.lists(inner, max_size=3).map(tuple), max_leaves=8)


@given(values)
def test_render_parse_round_trip(v):
    assert parse_value(render_value(v)) == v


@given(st.lists(values, min_size=2, max_size=6))
def test_value_key_is_a_total_order(vs):
    ordered = sorted(vs, key=value_key)
    assert [value_key(v) for v in ordered] == sorted(value_key(v) for v in vs)


def test_python_bool_is_not_a_value():
    with pytest.raises(TypeError):
        check_value(True)
    with pytest.raises(TypeError):
        check_value((1, "str"))


def test_defaults_undef_and_false():
    s = State(VOCAB)
    assert s.get("F", (1,)) is UNDEF
    assert s.get("G", (1,)) is FALSE
    with pytest.raises(UnknownSymbol):
        s.get("Nope")


def test_state_rejects_bad_locations():
    with pytest.raises(ArityMismatch):
        State(VOCAB, {("F", (1, 2)): 3})
    with pytest.raises(RelationTypeError):
        State(VOCAB, {("G", (1,)): 3})
    with pytest.raises(ReadOnlySymbol):
        fire(State(VOCAB), [(Location("+", (1, 2)), 3)])


def test_fire_is_functional_and_digest_tracks_content():
    s0 = State(VOCAB)
    s1 = fire(s0, [(Location("F", (1,)), 7)])
    assert s0.get("F", (1,)) is UNDEF and s1.get("F", (1,)) == 7
    back = fire(s1, [(Location("F", (1,)), UNDEF)])
    assert back == s0 and back.digest() == s0.digest()
    assert s1.digest() != s0.digest()


@settings(max_examples=60)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 3)), max_size=12))
def test_incremental_digest_matches_fresh_state(writes):
    s = State(VOCAB)
    for arg, v in writes:
        s = fire(s, [(Location("F", (arg,)), v)])
    fresh = State(VOCAB, {loc: v for loc, v in s.items()})
    assert s.digest() == fresh.digest() and s == fresh


def test_clash_is_reported_canonically():
    ups = [(Location("H"), 2), (Location("H"), 1)]
    clash = find_clash(ups)
    assert isinstance(clash, Clash) and clash.values == (1, 2)
    with pytest.raises(Clash):
        fire(State(VOCAB), ups)
    assert find_clash([(Location("H"), 1), (Location("H"), 1)]) is None


def test_evaluation_of_terms():
    s = State(VOCAB, {("F", (1,)): 5, ("K", (1, 2)): Sym("x")})
    assert eval_term(parse_term("F(1) + 2"), s) == 7
    with pytest.raises(UnknownSymbol):
        eval_term(parse_term("K(1, 2) = x"), s)
    assert eval_term(parse_term("K(1, y)", ["y"]), s, {"y": 2}) == Sym("x")
    assert eval_term(parse_term("F(2) = undef"), s) is TRUE


def test_externals_callback():
    s = State(VOCAB)
    seen = []
    assert eval_term(parse_term("X"), s, externals=lambda name, args: seen.append(name) or 4) == 4
    assert seen == ["X"]


def test_conditional_and_block_updates():
    s = State(VOCAB, {("H",): 1})
    r = parse_rule("if H = 1 then\n F(1) := 2\n F(2) := H\nelse F(3) := 0\nendif")
    assert compute_update_set(r, s) == {(Location("F", (1,)), 2), (Location("F", (2,)), 1)}


def test_choose_resolver_and_out_of_range():
    s = State(VOCAB, {("F", (1,)): 0, ("F", (2,)): 0})
    r = parse_rule("choose x satisfying F(x) = 0\n  H := x\nendchoose")
    assert compute_update_set(r, s) == {(Location("H"), 1)}
    assert compute_update_set(r, s, resolver=lambda cands: len(cands) - 1) == {(Location("H"), 2)}
    with pytest.raises(ResolverOutOfRange):
        compute_update_set(r, s, resolver=lambda cands: 9)
    empty = parse_rule("choose x satisfying F(x) = 9\n  H := x\nendchoose")
    assert compute_update_set(empty, s) == frozenset()


@settings(max_examples=60)
@given(st.dictionaries(st.integers(0, 6), st.integers(0, 2), max_size=7),
       st.sets(st.integers(0, 6), max_size=7), st.integers(0, 2))
def test_static_index_does_not_change_choose(fs, gs, target):
    interp = {("F", (k,)): v for k, v in fs.items()}
    interp.update({("G", (k,)): TRUE for k in gs})
    s = State(VOCAB, interp)
    rule = parse_rule(f"choose x satisfying F(x) = {target} and G(x)\n  H := x\nendchoose")
    index = static_index(s, ["F", "G"])
    for pick in (lambda c: 0, lambda c: len(c) - 1):
        assert compute_update_set(rule, s, resolver=pick) == compute_update_set(rule, s, resolver=pick, index=index)


def test_view_hides_symbols_outside_the_module():
    s = State(VOCAB, {("F", (1,)): 5, ("H",): 3})
    v = View(s, AgentId("a"), frozenset({"F", "Me"}))
    assert v.get("F", (1,)) == 5 and v.get("Me") == AgentId("a")
    assert v.get("+", (1, 2)) == 3
    with pytest.raises(UnknownSymbol):
        v.get("H")
