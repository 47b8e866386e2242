import copy

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from helpers import replay_gateway
from kgplan import demo, evalkit, synth
from kgplan.benchgen import (DOMAINS, MAX_HOPS, BenchmarkQuestion, TemplateError, allocation, annotate,
                             bundled_template_path, bundled_templates, generate, load_template_set, needs_answers,
                             paraphrase, read_questions, template_slots, write_questions)
from kgplan.cypher.validate import validate
from kgplan.graph_store import schema_of
from kgplan.llm import LLMGateway, ScriptedBackend
from kgplan.taxonomy import SPX, SXO, SXX, Nested

ACADEMIA = synth.academia_graph(400, seed=11)


def _doc():
    with open(bundled_template_path("academia"), encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def test_template_counts():
    counts = {d: len(bundled_templates(d)) for d in DOMAINS}
    assert counts == {"academia": 24, "literature": 28, "ecommerce": 21}
    assert sum(counts.values()) == 73


@pytest.mark.parametrize("domain", DOMAINS)
def test_templates_cover_every_shape_and_fit_the_synthetic_graph(domain):
    templates = bundled_templates(domain)
    names = {t.pattern.value for t in templates}
    assert names == {"s**", "sp*", "s*o", "spo", "nested"}
    nested_outers = {t.pattern.outer for t in templates if isinstance(t.pattern, Nested)}
    assert SPX in nested_outers
    graph_schema = schema_of(synth.GENERATORS[domain](300, seed=0))
    for t in templates:
        assert validate(t.selection_query, graph_schema) == [], t.id
        if t.answer_query is not None:
            assert validate(t.answer_query, graph_schema) == [], t.id
        assert (t.answer_query is not None) == needs_answers(t.pattern)


def test_unknown_relation_in_selection_query_is_a_load_error():
    doc = _doc()
    doc["templates"][0]["selection_query"] = "MATCH (a:author)-[:writes]->(p:paper) RETURN a AS author"
    with pytest.raises(TemplateError) as info:
        load_template_set(doc)
    assert info.value.template_id == "academia-sxx-1"
    assert info.value.violations[0].identifier == "writes"
    assert "paper" in info.value.violations[0].suggestions


@pytest.mark.parametrize("field, value, fragment", [
    ("selection_query", "MATCH (a:author) RETURN a AS someone", "not columns"),
    ("selection_query", "MATCH (a:author RETURN a", "does not parse"),
    ("pattern", "s?x", "bad pattern"),
    ("text", "no slots here", "no slots"),
    ("answer_query", "MATCH (a {id: $author})-[:paper]->(p) RETURN p.name", "answer query given"),
])
def test_template_errors(field, value, fragment):
    doc = _doc()
    doc["templates"][0][field] = value
    with pytest.raises(TemplateError, match=fragment):
        load_template_set(doc)


def test_spx_needs_answer_query_and_known_params():
    doc = _doc()
    spx = next(t for t in doc["templates"] if t["pattern"] == "sp*")
    broken = copy.deepcopy(doc)
    next(t for t in broken["templates"] if t["id"] == spx["id"]).pop("answer_query")
    with pytest.raises(TemplateError, match="answer query"):
        load_template_set(broken)
    spx["answer_query"] = "MATCH (a {id: $nobody})-[:paper]->(p:paper) RETURN p.name"
    with pytest.raises(TemplateError, match="unknown parameters"):
        load_template_set(doc)


def test_hop_limit():
    doc = _doc()
    chain = "-[:reference]->(:paper)" * (MAX_HOPS + 1)
    doc["templates"][1]["selection_query"] = f"MATCH (p:paper){chain} RETURN p AS paper"
    with pytest.raises(TemplateError, match="hops"):
        load_template_set(doc)


def test_duplicate_ids_and_bad_yaml():
    doc = _doc()
    doc["templates"].append(copy.deepcopy(doc["templates"][0]))
    with pytest.raises(TemplateError, match="duplicate"):
        load_template_set(doc)
    with pytest.raises(TemplateError, match="YAML"):
        load_template_set("templates: [unclosed")
    with pytest.raises(TemplateError):
        load_template_set("just: text")


def test_template_slots():
    assert template_slots('Papers of "{author}" in {venue}?') == ("author", "venue")
    with pytest.raises(ValueError):
        template_slots("empty {} slot")


def test_generation_is_deterministic_and_seeded():
    templates = bundled_templates("academia")
    a = generate(ACADEMIA, templates, total=30, seed=5)
    b = generate(ACADEMIA, templates, total=30, seed=5)
    c = generate(ACADEMIA, templates, total=30, seed=6)
    assert a.to_jsonl() == b.to_jsonl()
    assert a.to_jsonl() != c.to_jsonl()
    assert len({q.id for q in a.questions}) == len(a.questions) == 30


def test_generated_text_names_the_bound_entities():
    result = generate(ACADEMIA, bundled_templates("academia"), per_template=2, seed=0)
    for q in result.questions:
        for slot, eid in q.slots.items():
            assert ACADEMIA.entities[eid].name in q.question


def test_skip_report_for_unmatched_selection():
    doc = _doc()
    doc["templates"][0]["selection_query"] = "MATCH (a:author {name: 'Nobody At All'}) RETURN a AS author"
    templates = list(load_template_set(doc).templates)
    result = generate(ACADEMIA, templates, per_template=1, seed=0)
    assert not result.complete
    assert [s.template_id for s in result.skipped] == ["academia-sxx-1"]
    assert result.skipped[0].produced == 0
    assert "matched nothing" in result.report()
    assert len(result.questions) == len(templates) - 1


def test_skip_when_too_few_bindings():
    templates = [t for t in bundled_templates("academia") if t.id == "academia-sxx-3"]
    n_venues = len(ACADEMIA.ids_of_type("venue"))
    result = generate(ACADEMIA, templates, per_template=n_venues + 5, seed=0)
    assert len(result.questions) == n_venues
    assert result.skipped[0].requested == n_venues + 5


def test_annotation_matches_edge_scan():
    tpl = next(t for t in bundled_templates("academia") if t.id == "academia-spx-1")
    result = generate(ACADEMIA, [tpl], per_template=15, seed=2)
    for q in result.questions:
        author = q.slots["author"]
        scanned = {evalkit.normalize(ACADEMIA.entities[r.dst].name) for r in ACADEMIA.relations
                   if r.src == author and r.rel_type == "paper" and ACADEMIA.entities[r.dst].type == "paper"}
        assert q.gold_answers == sorted(scanned)


def test_collaborators_exclude_the_author():
    tpl = next(t for t in bundled_templates("academia") if t.id == "academia-spx-2")
    for q in generate(ACADEMIA, [tpl], per_template=10, seed=3).questions:
        own = evalkit.normalize(ACADEMIA.entities[q.slots["author"]].name)
        assert own not in q.gold_answers


def test_annotate_noop_without_answer_query():
    tpl = next(t for t in bundled_templates("academia") if t.pattern is SXX)
    q = BenchmarkQuestion("x", tpl.id, tpl.pattern, "q", slots={"author": "a0"})
    assert annotate(ACADEMIA, q, tpl).gold_answers is None


@settings(max_examples=60)
@given(st.integers(0, 200), st.integers(1, 30))
def test_allocation_spreads_total(total, n):
    templates = bundled_templates("academia")[: min(n, 24)]
    plan = allocation(templates, total=total)
    assert sum(plan.values()) == total
    assert max(plan.values()) - min(plan.values()) <= 1
    assert list(plan.values()) == sorted(plan.values(), reverse=True)


def test_allocation_needs_exactly_one_argument():
    with pytest.raises(ValueError):
        allocation(bundled_templates("academia"))
    with pytest.raises(ValueError):
        allocation(bundled_templates("academia"), total=3, per_template=1)


def test_question_file_round_trip(tmp_path):
    result = generate(ACADEMIA, bundled_templates("academia"), per_template=1, seed=0, graph_id="g")
    path = str(tmp_path / "q.jsonl")
    write_questions(path, result.questions)
    again = read_questions(path)
    assert [q.to_line() for q in again] == [q.to_line() for q in result.questions]
    assert all(q.id.startswith("g/") for q in again)
    nested = [q for q in again if isinstance(q.pattern, Nested)]
    assert nested and all(q.pattern_name == "nested" for q in nested)


def test_paraphrase_from_cassette():
    questions = read_questions(demo.science_benchmark_path())
    llm = replay_gateway("paraphrase")
    first = [paraphrase(copy.deepcopy(q), llm, seed=0) for q in questions]
    second = [paraphrase(copy.deepcopy(q), llm, seed=0) for q in questions]
    for a, b, orig in zip(first, second, questions):
        assert len(a.paraphrases) == 4 and len(set(a.paraphrases)) == 4
        assert not a.paraphrase_failed
        assert a.chosen == b.chosen and 0 <= a.chosen < 4
        assert a.text == a.paraphrases[a.chosen]
        assert orig.question in a.paraphrases[0]


def test_paraphrase_failure_keeps_the_original():
    q = read_questions(demo.science_benchmark_path())[0]
    junk = LLMGateway(ScriptedBackend(lambda r: '["only one"]'))
    out = paraphrase(copy.deepcopy(q), junk)
    assert out.paraphrase_failed and out.paraphrases == [] and out.text == q.question
    missing = paraphrase(copy.deepcopy(q), replay_gateway("judge"))
    assert missing.paraphrase_failed


def test_science_examples_file():
    questions = read_questions(demo.science_benchmark_path())
    assert [q.question for q in questions] == demo.SCIENCE_QUESTIONS
    assert questions[6].pattern == Nested(SXO, (SPX, SPX))
    scored = [q for q in questions if q.gold_answers is not None]
    assert all(needs_answers(q.pattern) for q in scored)
