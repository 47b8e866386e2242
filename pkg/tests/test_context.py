from hypothesis import given, settings, strategies as st

from kgplan import demo, synth
from kgplan.context import EMPTY_MARKER, NO_ANSWER, build_bundle, render_summary_prompt
from kgplan.cypher import parse
from kgplan.executor import ResultTable, execute, expand_neighborhood
from kgplan.taxonomy import SPX, SXO, SXX

_ACADEMIA = synth.academia_graph(300, seed=1)


def _closed(bundle):
    ids = {row[0] for row in bundle.entity_rows}
    return all(s in ids and d in ids for s, d in bundle.relation_ids)


def test_neighbourhood_bundle(science_graph):
    bundle = build_bundle(science_graph, expand_neighborhood(science_graph, "IN"), SXX)
    text = bundle.render()
    assert "Isaac Newton" in text and "Universal Gravitation" in text
    assert bundle.paths is None
    assert not bundle.truncated
    assert _closed(bundle)


def test_path_bundle_lists_paths(science_graph):
    res = execute(science_graph, parse("MATCH P = SHORTEST 3 (s {id: 'IN'})-[*]->(o {id: 'AE'}) RETURN P"))
    bundle = build_bundle(science_graph, res, SXO)
    assert len(bundle.paths) == 3
    assert "Paths:" in bundle.render()
    assert _closed(bundle)


def test_scalar_values(science_graph):
    res = execute(science_graph, parse("MATCH (s {id: 'UG'})-[:developer]->(o) RETURN DISTINCT o.name"))
    bundle = build_bundle(science_graph, res, SPX)
    assert bundle.values == ["o.name: Isaac Newton"]


def test_empty_result_marker(science_graph):
    bundle = build_bundle(science_graph, ResultTable(("o",), ()), SPX)
    assert bundle.empty
    assert bundle.render() == EMPTY_MARKER


def test_truncation_drops_whole_rows():
    res = expand_neighborhood(_ACADEMIA, "v0")
    full = build_bundle(_ACADEMIA, res, SXX)
    small = build_bundle(_ACADEMIA, res, SXX, budget=400)
    assert small.truncated and small.dropped > 0
    assert len(small.render()) <= 400
    assert "[truncated:" in small.render()
    assert len(small.relation_rows) < len(full.relation_rows)
    # surviving rows are a prefix of the untruncated bundle
    assert small.relation_rows == full.relation_rows[:len(small.relation_rows)]
    assert _closed(small)


@settings(max_examples=40, deadline=None)
@given(st.integers(20, 3000), st.sampled_from(["v0", "v1", "a0", "p5"]))
def test_render_never_exceeds_budget(budget, eid):
    res = expand_neighborhood(_ACADEMIA, eid)
    bundle = build_bundle(_ACADEMIA, res, SXX, budget=budget)
    assert len(bundle.render()) <= budget
    assert _closed(bundle)


def test_summary_prompt_marks_missing_answers():
    req = render_summary_prompt("Q?", [("step one", "Isaac Newton"), ("step two", None)])
    assert req.messages[0].content.startswith("Task: summarize")
    assert "Isaac Newton" in req.user_text and NO_ANSWER in req.user_text


def test_fixture_bundle_sizes():
    g = demo.fixture_graph("academia")
    bundle = build_bundle(g, expand_neighborhood(g, "a1"), SXX)
    assert len(bundle.relation_rows) == len(g.out_edges("a1"))
