import json

import pytest

from helpers import replay_gateway
from kgplan import demo
from kgplan.cypher import parse
from kgplan.graph_store import schema_of
from kgplan.llm import ChatRequest, LLMGateway, ScriptedBackend
from kgplan.planner import (CLASSIFICATION, DECOMPOSITION, ENTITY_RESOLUTION, EXECUTION, FAILED, GATEWAY,
                            GENERATION, SUCCEEDED, CorrectionPolicy, PlannerConfig, answer, conforms, find_mentions,
                            query_strategy, sxo_query, sxx_query)
from kgplan.prompts import task_of
from kgplan.taxonomy import SPO, SPX, SXO, SXX, TraversalStrategy


def scripted(script):
    backend = ScriptedBackend(demo.ScriptedResponder(script))
    return LLMGateway(backend), backend


def by_stage(**replies):
    """Gateway answering each stage with a fixed reply (a string or a list consumed in order)."""
    queues = {k: list(v) if isinstance(v, list) else v for k, v in replies.items()}

    def respond(request: ChatRequest) -> str:
        stage = task_of(request.messages[0].content)
        val = queues.get(stage, "")
        if isinstance(val, list):
            return val.pop(0) if len(val) > 1 else val[0]
        return val
    return LLMGateway(ScriptedBackend(respond))


def stages(plan):
    return [e["stage"] for e in plan.trace.events if e["event"] == "llm"]


def test_scripted_science_plans(science_graph):
    llm, _ = scripted(demo.science_script())
    for question, expected in zip(demo.SCIENCE_QUESTIONS, demo.SCIENCE_PLANS):
        text, plan = answer(question, science_graph, llm)
        assert [p.value for p in plan.patterns] == expected
        assert all(s.status == SUCCEEDED for s in plan.steps)
        assert plan.final_answer == text


def test_nested_relation_answer_mentions_both(science_graph):
    text, plan = answer(demo.SCIENCE_QUESTIONS[6], science_graph, replay_gateway("science"))
    assert "Isaac Newton" in text and "Albert Einstein" in text
    assert plan.steps[2].anchors == ["IN", "AE"]


def test_template_steps_make_no_generate_call(science_graph):
    _, plan = answer(demo.SCIENCE_QUESTIONS[0], science_graph, replay_gateway("science"))
    assert stages(plan) == ["categorize", "summarize"]
    assert plan.steps[0].attempts[0].source == "template"


def test_find_mentions(science_graph, academia_fixture):
    assert find_mentions(science_graph, "influenced by Galileo's discoveries?") == [("Galileo", ["GG"])]
    got = find_mentions(academia_fixture, demo.FOLDY_QUESTION)
    assert got and got[0][1] == ["a1"]
    assert find_mentions(science_graph, "Is the theory of relativity about gravitation?")[0][1] == ["TR"]


def test_absent_entity_is_entity_resolution(science_graph):
    llm = by_stage(categorize='{"type": "basic", "pattern": "s**"}')
    text, plan = answer("Who is Marie Curie?", science_graph, llm)
    assert plan.failure_kind == ENTITY_RESOLUTION
    assert text.startswith("Unable to answer")


def test_unreadable_classification_retried_once(science_graph):
    llm = by_stage(categorize="no idea")
    _, plan = answer("Who is Isaac Newton?", science_graph, llm)
    assert plan.failure_kind == CLASSIFICATION
    assert stages(plan) == ["categorize", "categorize"]


def test_classification_recovers_on_retry(science_graph):
    llm = by_stage(categorize=["???", '{"type": "basic", "pattern": "s**"}'], summarize="ok")
    _, plan = answer("Who is Isaac Newton?", science_graph, llm)
    assert plan.failure is None and plan.patterns == [SXX]


def test_unreadable_plan_is_decomposition_failure(science_graph):
    llm = by_stage(categorize='{"type": "nested"}', decompose='{"steps": []}')
    _, plan = answer("Who is Isaac Newton?", science_graph, llm)
    assert plan.failure_kind == DECOMPOSITION


def test_replay_miss_is_gateway_failure(science_graph):
    _, plan = answer("A question nobody recorded?", science_graph, replay_gateway("science"))
    assert plan.failure_kind == GATEWAY


@pytest.mark.parametrize("retries", [0, 1, 3, 5])
def test_attempt_budget_follows_policy(academia_fixture, retries):
    llm, _ = scripted(demo.foldy_script(corrects=False))
    config = PlannerConfig(policy=CorrectionPolicy(max_retries=retries))
    _, plan = answer(demo.FOLDY_QUESTION, academia_fixture, llm, config)
    step = plan.steps[0]
    assert len(step.attempts) == 1 + retries
    assert step.status == FAILED
    assert stages(plan).count("correct") == retries


def test_never_correcting_failure_kinds(academia_fixture):
    _, plan = answer(demo.FOLDY_QUESTION, academia_fixture, replay_gateway("foldy_never"))
    outcomes = [a.outcome for a in plan.steps[0].attempts]
    assert outcomes[0].startswith("schema violation") and "writes" in outcomes[0]
    assert outcomes[2] == "empty result"
    assert outcomes[3].startswith("syntax error")
    assert plan.failure_kind == GENERATION


def test_correction_prompt_carries_error(academia_fixture):
    seen = []

    def respond(request):
        stage = task_of(request.messages[0].content)
        if stage == "correct":
            seen.append(request.user_text)
        return demo.ScriptedResponder(demo.foldy_script(True))(request)

    _, plan = answer(demo.FOLDY_QUESTION, academia_fixture, LLMGateway(ScriptedBackend(respond)))
    assert plan.steps[0].status == SUCCEEDED
    assert len(seen) == 1 and "writes" in seen[0] and "paper" in seen[0]


def test_wrong_shape_is_rejected(science_graph):
    shortest = "```cypher\nMATCH P = SHORTEST 3 (s {id: 'UG'})-[*]->(o {id: 'IN'}) RETURN P\n```"
    right = "```cypher\nMATCH (s {id: 'UG'})-[:developer]->(o) RETURN o.name\n```"
    llm = by_stage(categorize='{"type": "basic", "pattern": "sp*"}', generate=shortest, correct=right,
                   summarize="done")
    _, plan = answer("Who developed Universal Gravitation?", science_graph, llm)
    step = plan.steps[0]
    assert "query shape" in step.attempts[0].outcome
    assert step.status == SUCCEEDED and len(step.attempts) == 2


def test_empty_accepted_when_policy_allows(science_graph):
    empty = "```cypher\nMATCH (s {id: 'UG'})-[:field]->(o) RETURN o.name\n```"
    llm = by_stage(categorize='{"type": "basic", "pattern": "sp*"}', generate=empty, summarize="x")
    config = PlannerConfig(policy=CorrectionPolicy(retry_on_empty=False))
    _, plan = answer("Who developed Universal Gravitation?", science_graph, llm, config)
    assert plan.steps[0].status == SUCCEEDED and len(plan.steps[0].attempts) == 1


def test_later_steps_skip_after_a_failure(science_graph):
    plan_json = json.dumps({"steps": [{"pattern": "sp*", "description": "Find the developer of Universal Gravitation."},
                                      {"pattern": "s**", "description": "Describe the scientist from step 1."}]})
    llm = by_stage(categorize='{"type": "nested"}', decompose=plan_json, generate="no query", correct="no query",
                   summarize="partial")
    text, plan = answer("Tell me about the developer of universal gravitation.", science_graph, llm)
    assert [s.status for s in plan.steps] == [FAILED, FAILED]
    assert plan.steps[1].attempts == []
    assert plan.steps[1].failure == EXECUTION
    assert text == "partial"


def test_query_strategy_shapes():
    assert query_strategy(sxx_query(["a"])) is TraversalStrategy.BFS_NEIGHBOR_EXPANSION
    assert query_strategy(sxx_query(["a", "b"])) is TraversalStrategy.BFS_NEIGHBOR_EXPANSION
    assert query_strategy(sxo_query("a", "b", 10)) is TraversalStrategy.TOP_K_SHORTEST_PATHS
    assert sxo_query("a", "b", 7).matches[0].shortest == 7
    assert conforms(parse("MATCH (s)-[:x]->()-[:y]->(o) RETURN o"), SPX)
    assert not conforms(parse("MATCH (s)-[:x*1..2]->(o) RETURN o"), SPX)
    assert conforms(parse("MATCH P = SHORTEST 2 (s)-[*]->(o) WHERE s.id = 'a' RETURN P"), SPO)
    assert not conforms(parse("MATCH P = SHORTEST 2 (s)-[*]->(o) RETURN P"), SPO)
    assert not conforms(parse("MATCH (s)-[p]->(o) RETURN p, o"), SXO)


def test_plan_serializes(science_graph):
    _, plan = answer(demo.SCIENCE_QUESTIONS[3], science_graph, replay_gateway("science"))
    data = plan.to_json()
    assert data["steps"][0]["pattern"] == SPO.value
    assert json.loads(json.dumps(data)) == data
    assert all(json.loads(line) for line in plan.trace.to_jsonl().splitlines())


def test_k_from_config(science_graph):
    _, plan = answer(demo.SCIENCE_QUESTIONS[2], science_graph, replay_gateway("science"), PlannerConfig(k=2))
    step = plan.steps[0]
    assert step.pattern is SXO
    assert step.query.matches[0].shortest == 2
    assert len(step.result.rows) <= 2


def test_schema_passed_explicitly(science_graph):
    _, plan = answer(demo.SCIENCE_QUESTIONS[1], science_graph, replay_gateway("science"),
                     schema=schema_of(science_graph))
    assert plan.steps[0].status == SUCCEEDED
