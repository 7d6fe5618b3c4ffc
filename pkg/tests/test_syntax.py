from __future__ import annotations

import pytest

from lmsql import (ApiCall, LexError, ParseError, RoleAmbiguity,
                   api_calls_bottom_up, assign_roles, parse, print_program,
                   tokenize)
from lmsql.syntax import Aggregate, Binary, ColumnRef, Literal, ScalarSubquery

from corpus import EXEMPLAR_PROGRAMS


def roundtrip(text: str):
    p1 = parse(text)
    printed = print_program(p1)
    p2 = parse(printed)
    assert p2.root == p1.root, f"round-trip changed AST for {text!r}"
    assert print_program(p2) == printed  # printing is idempotent
    return p1


# ---- lexer ----

def test_tokenize_api_call():
    kinds = [(t.kind, t.value) for t in tokenize('f("Points?";win_team)')]
    assert kinds == [
        ("ident", "f"), ("symbol", "("), ("string", "Points?"),
        ("symbol", ";"), ("ident", "win_team"), ("symbol", ")"), ("eof", ""),
    ]


def test_tokenize_minimal_query():
    kinds = [(t.kind, t.value) for t in tokenize("SELECT 1")]
    assert kinds == [("keyword", "SELECT"), ("number", "1"), ("eof", "")]


def test_tokenize_unterminated_string():
    with pytest.raises(LexError) as exc:
        tokenize("SELECT 'unterminated")
    assert exc.value.position == 7


def test_tokenize_illegal_char():
    with pytest.raises(LexError):
        tokenize("SELECT @")


def test_tokenize_covers_quotes_and_backticks():
    toks = tokenize("`signed from` 'it''s' \"q\"")
    assert toks[0].value == "signed from"
    assert toks[1].value == "it's"
    assert toks[2].value == "q"


# ---- parser ----

@pytest.mark.parametrize("text", EXEMPLAR_PROGRAMS)
def test_corpus_round_trip(text):
    roundtrip(text)


def test_parse_api_call_in_order_by():
    p = parse('SELECT member FROM w ORDER BY f("How long does it last?"; term) DESC LIMIT 1')
    (item,) = p.root.order_by
    assert isinstance(item.expr, ApiCall) and item.desc
    assert p.root.limit == Literal(1.0)


def test_parse_boolean_subquery():
    p = parse("SELECT (SELECT COUNT(place) FROM w WHERE is_uk = 'yes') = 8")
    (item,) = p.root.select_items
    assert isinstance(item, Binary) and item.op == "="
    assert isinstance(item.left, ScalarSubquery)
    assert p.root.from_table is None


def test_parse_plain_sql_has_no_calls():
    p = parse("SELECT year FROM w WHERE win_team='kansas state'")
    assert api_calls_bottom_up(p) == []


def test_parse_errors_are_positioned():
    with pytest.raises(ParseError) as exc:
        parse("SELECT FROM w")
    assert exc.value.position == 7
    with pytest.raises(ParseError):
        parse("SELECT a FROM w JOIN v")
    with pytest.raises(ParseError):
        parse("SELECT a FROM w, v")


def test_parse_rejects_bad_api_calls():
    with pytest.raises(ParseError):
        parse('SELECT f(""; col) FROM w')  # empty question
    with pytest.raises(ParseError):
        parse('SELECT f("q"; 5) FROM w')  # literal argument
    with pytest.raises(ParseError):
        parse('SELECT f("q"; a + b) FROM w')  # arithmetic argument


def test_parse_rejects_aggregates_in_where():
    with pytest.raises(ParseError):
        parse("SELECT a FROM w WHERE COUNT(*) > 1")


def test_parse_like_needs_string_literal():
    with pytest.raises(ParseError):
        parse("SELECT a FROM w WHERE a LIKE b")


def test_plain_grammar_rejects_calls_only():
    text = 'SELECT f("q"; col) FROM w'
    parse(text)
    with pytest.raises(ParseError):
        parse(text, allow_api_calls=False)
    # f without parens is an ordinary column in both modes
    both = "SELECT f FROM w"
    assert parse(both, allow_api_calls=False).root == parse(both).root


def test_parser_is_total_on_junk():
    for junk in ("", "SELECT", "WHERE", "SELECT a FROM", "SELECT (a", "f(", "42"):
        with pytest.raises(ParseError):
            parse(junk)


def test_print_canonicalizes():
    assert print_program(parse("select   year from w")) == "SELECT year FROM w"
    assert print_program(parse('SELECT f (  "Q" ;  col ) FROM w')) == 'SELECT f("Q"; col) FROM w'


def test_print_preserves_grouping():
    for text in ("SELECT a - (b - c) FROM w",
                 "SELECT (a + b) * c FROM w",
                 "SELECT NOT (a AND b) FROM w",
                 "SELECT a AND (b OR c) FROM w",
                 "SELECT (a > b) = 1 FROM w"):
        roundtrip(text)


def test_print_forced_and_nested_calls():
    roundtrip('SELECT f_val("V?"; a) FROM w')
    roundtrip('SELECT f("outer?"; f("inner?"; a), b) FROM w')
    roundtrip("SELECT a FROM w WHERE `weird name` = 'x'")


# ---- bottom-up enumeration ----

def test_bottom_up_nested_order():
    p = parse('SELECT f("Q1"; f("Q2"; c)) FROM w')
    calls = api_calls_bottom_up(p)
    assert [c.question for c in calls] == ["Q2", "Q1"]


def test_bottom_up_document_order():
    p = parse('SELECT year FROM t WHERE f("Points?";win_team) - f("Points?";los_team) > 10')
    calls = api_calls_bottom_up(p)
    assert len(calls) == 2
    assert calls[0].args[0] == ColumnRef("win_team")
    assert calls[1].args[0] == ColumnRef("los_team")


def test_bottom_up_count_matches_f_tokens():
    for text in EXEMPLAR_PROGRAMS:
        n_tokens = sum(1 for t in tokenize(text)
                       if t.kind == "ident" and t.value in ("f", "f_col", "f_val"))
        assert len(api_calls_bottom_up(parse(text))) == n_tokens


# ---- role assignment ----

def role_of(text: str, index: int = 0) -> str:
    p = assign_roles(parse(text))
    return api_calls_bottom_up(p)[index].role


def test_roles_map_positions():
    assert role_of("SELECT a FROM w WHERE f(\"Is it in united kingdom?\"; place) = 'yes'") == "map"
    assert role_of('SELECT a FROM w ORDER BY f("How long does it last?"; term) DESC') == "map"
    assert role_of('SELECT COUNT(f("q"; a)) FROM w') == "map"
    assert role_of('SELECT a FROM w GROUP BY f("q"; a)') == "map"


def test_roles_val_positions():
    assert role_of('SELECT f_val("The most formal?"; shirt)') == "val"
    assert role_of('SELECT a FROM w LIMIT f("how many?"; a)') == "val"
    assert role_of('SELECT a FROM w WHERE f("q"; a) = (SELECT MAX(b) FROM w)') == "val"


def test_roles_forced_and_ambiguous():
    assert role_of('SELECT f_col("q"; a) FROM w') == "map"
    with pytest.raises(RoleAmbiguity):
        assign_roles(parse('SELECT a FROM w LIMIT f_col("q"; a)'))
    with pytest.raises(RoleAmbiguity):
        assign_roles(parse('SELECT f("q"; f_val("v"; a)) FROM w'))


def test_roles_nested_inner_is_map():
    p = assign_roles(parse('SELECT f("Q1"; f("Q2"; c)) FROM w'))
    inner, outer = api_calls_bottom_up(p)
    assert inner.role == "map" and outer.role == "map"


def test_aggregate_distinct_round_trip():
    p = roundtrip("SELECT COUNT(DISTINCT a), SUM(b) FROM w GROUP BY c HAVING COUNT(*) > 1")
    agg = p.root.select_items[0]
    assert isinstance(agg, Aggregate) and agg.distinct
