import pytest
from hypothesis import given, settings, strategies as st

from corpus import MALFORMED, VALID
from querygen import query
from kgplan import demo
from kgplan.cypher import CypherSyntaxError, parse, render
from kgplan.cypher.ast import CypherQuery, Match, Return
from kgplan.cypher.parser import CypherStructureError, tokenize
from kgplan.cypher.validate import edit_distance, nearest, validate
from kgplan.executor import ExecutionError, execute
from kgplan.graph_store import schema_of

_SCIENCE = demo.fixture_graph("science")
_SCIENCE_SCHEMA = schema_of(_SCIENCE)


@pytest.mark.parametrize("text", VALID)
def test_corpus_round_trip(text):
    ast = parse(text)
    assert isinstance(ast, CypherQuery)
    assert parse(render(ast)) == ast
    # canonical text is a fixed point
    assert render(parse(render(ast))) == render(ast)


@pytest.mark.parametrize("text", MALFORMED)
def test_malformed_inputs_are_located(text):
    with pytest.raises(CypherSyntaxError) as info:
        parse(text)
    err = info.value
    assert err.line >= 1 and err.column >= 1
    assert f"line {err.line}, column {err.column}" in str(err)


def test_canonical_rendering():
    assert render(parse("match (s)-[p]->(o) return p,o")) == "MATCH (s)-[p]->(o) RETURN p, o"
    assert render(parse("MATCH P = SHORTEST 10 (s)-[*]->(o) RETURN P")) == "MATCH P = SHORTEST 10 (s)-[*]->(o) RETURN P"
    assert "-[:`born in`]->" in render(parse("MATCH (a)-[:`born in`]->(b) RETURN b"))


def test_shape_of_neighbourhood_form():
    q = parse("MATCH (s)-[p]->(o) RETURN p, o")
    match, ret = q.clauses
    assert isinstance(match, Match) and isinstance(ret, Return)
    assert len(match.patterns[0].edges) == 1
    assert [p.column for p in ret.projections] == ["p", "o"]


def test_shortest_form_carries_k():
    q = parse("MATCH P = SHORTEST 10 (s)-[*]->(o) RETURN P")
    assert q.matches[0].shortest == 10
    assert q.matches[0].path_var == "P"


def test_double_equals_is_an_alias():
    assert parse("MATCH (s) WHERE s.a == 1 RETURN s") == parse("MATCH (s) WHERE s.a = 1 RETURN s")


def test_keywords_case_insensitive_names_case_sensitive():
    assert parse("match (s:paper) return s") == parse("MATCH (s:paper) RETURN s")
    assert parse("MATCH (s:paper) RETURN s") != parse("MATCH (s:Paper) RETURN s")


def test_error_at_open_bracket():
    with pytest.raises(CypherSyntaxError) as info:
        parse("MATCH (a)-[->")
    assert (info.value.line, info.value.column) == (1, 11)
    assert "relation pattern" in str(info.value)


def test_error_on_second_line():
    with pytest.raises(CypherSyntaxError) as info:
        parse("MATCH (s)\nRETURN s LIMIT x")
    assert info.value.line == 2


def test_structure_errors():
    with pytest.raises(CypherStructureError):
        parse("MATCH (s) RETURN s MATCH (o) RETURN o")
    with pytest.raises(CypherStructureError):
        parse("MATCH (s) WITH s MATCH (s)-[]->(o) WITH o RETURN o")
    with pytest.raises(CypherStructureError):
        parse("MATCH (s)-[*3..2]->(o) RETURN o")


def test_tokenize_positions():
    toks = tokenize("MATCH (s)")
    assert [(t.line, t.column) for t in toks[:2]] == [(1, 1), (1, 7)]


@settings(max_examples=200, deadline=None)
@given(query())
def test_random_queries_round_trip(text):
    ast = parse(text)
    assert parse(render(ast)) == ast


def _parse_or_locate(text):
    try:
        parse(text)
    except CypherSyntaxError as err:
        assert err.line >= 1 and err.column >= 1


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=60))
def test_parser_is_total(text):
    _parse_or_locate(text)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from(["MATCH", "(", ")", "s", "-[", "]->", ":", "RETURN", ",", "WHERE", "=", "'x'",
                                 "1", "{", "}", "*", "..", "WITH", "DISTINCT", "COUNT", "LIMIT", "ORDER BY"]),
                max_size=14))
def test_parser_is_total_on_token_soup(parts):
    _parse_or_locate(" ".join(parts))


# -- validation ---------------------------------------------------------------


def test_unknown_relation_gets_suggestion(academia_fixture):
    schema = schema_of(academia_fixture)
    out = validate(parse("MATCH (s:author)-[:writes]->(o:paper) RETURN o.name"), schema)
    assert [(v.kind, v.identifier) for v in out] == [("unknown_rel_type", "writes")]
    assert "paper" in out[0].suggestions


def test_label_case_difference(academia_fixture):
    out = validate(parse("MATCH (s:Paper) RETURN s"), schema_of(academia_fixture))
    assert out[0].kind == "unknown_label"
    assert out[0].suggestions[0] == "paper"


def test_schema_terms_only_is_clean(academia_fixture):
    q = parse("MATCH (s:author {name: 'L. Foldy'})-[:paper]->(o:paper) RETURN DISTINCT o.name")
    assert validate(q, schema_of(academia_fixture)) == []


def test_unknown_property_and_type_mismatch(science_graph):
    schema = schema_of(science_graph)
    out = validate(parse("MATCH (s:theory) WHERE s.colour = 'red' RETURN s"), schema)
    assert [v.kind for v in out] == ["unknown_property"]
    out = validate(parse("MATCH (s:theory) WHERE s.year = 'old' RETURN s"), schema)
    assert [v.kind for v in out] == ["type_mismatch"]


def test_violation_location_points_into_rendering(academia_fixture):
    q = parse("MATCH (s:author)-[:writes]->(o:paper) RETURN o.name")
    v = validate(q, schema_of(academia_fixture))[0]
    start, end = v.location
    assert render(q)[start:end].lstrip(":") == "writes"


def test_edit_distance_and_nearest():
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance("", "abc") == 3
    assert nearest("writes", ["paper", "author", "venue", "wrote"])[0] == "wrote"
    assert nearest("zzzzzzzzz", ["paper"]) == ()


@settings(max_examples=200, deadline=None)
@given(query())
def test_validated_queries_never_hit_unknown_identifiers(text):
    graph = _SCIENCE
    ast = parse(text)
    if validate(ast, _SCIENCE_SCHEMA):
        return
    try:
        execute(graph, ast)
    except ExecutionError as exc:
        assert "unknown" not in str(exc)
