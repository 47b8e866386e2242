"""Question answering pipeline: categorize, decompose, instantiate, generate, execute, summarize.

s** and s*o steps populate fixed query templates and never ask the model for
a query. sp* and spo steps ask the model, then parse, validate, shape-check,
and execute the reply, feeding failures back for up to ``max_retries``
correction rounds.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import prompts
from .context import NO_ANSWER, ContextBundle, build_bundle, render_summary_prompt
from .cypher import CypherSyntaxError, parse, render, validate
from .cypher.ast import CypherQuery, Where
from .cypher.render import render_string
from .executor import (
    DEFAULT_K, EntityRef, ExecLimits, ExecutionError, ResultTable, display_value, execute,
)
from .graph_store import GraphSchema, PropertyGraph, normalize_name, schema_of
from .llm import LLMError, LLMGateway, fingerprint
from .taxonomy import (
    SPO, SPX, SXO, SXX, BasicPattern, TraversalStrategy, parse_pattern, strategy_for,
)

PENDING, SUCCEEDED, FAILED = "pending", "succeeded", "failed_exhausted"

# Failure kinds, also used by the CLI to pick exit codes.
CLASSIFICATION = "classification"
DECOMPOSITION = "decomposition"
ENTITY_RESOLUTION = "entity_resolution"
GENERATION = "generation"
EXECUTION = "execution"
GATEWAY = "gateway"


@dataclass(frozen=True)
class CorrectionPolicy:
    max_retries: int = 3
    retry_on_empty: bool = True

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


@dataclass(frozen=True)
class PlannerConfig:
    k: int = DEFAULT_K
    hop_cap: int = 5
    policy: CorrectionPolicy = CorrectionPolicy()
    budget: int = 16_000
    max_paths: int = 500_000
    max_rows: int = 200_000
    timeout: float = 30.0

    @property
    def limits(self) -> ExecLimits:
        return ExecLimits(self.hop_cap, self.max_paths, self.max_rows, self.timeout)


@dataclass(frozen=True)
class Classification:
    nested: bool
    pattern: Optional[BasicPattern] = None

    def to_json(self) -> dict:
        return {"type": "nested"} if self.nested else {"type": "basic", "pattern": self.pattern.value}


@dataclass
class Attempt:
    query: str
    outcome: str  # "ok" or a description of what went wrong
    source: str  # template | generate | correct

    @property
    def ok(self) -> bool:
        return self.outcome == "ok"


@dataclass
class PlanStep:
    description: str
    pattern: BasicPattern
    instantiated_question: Optional[str] = None
    anchors: list[str] = field(default_factory=list)
    query: Optional[CypherQuery] = None
    attempts: list[Attempt] = field(default_factory=list)
    result: Optional[ResultTable] = None
    status: str = PENDING
    answer: Optional[str] = None
    answer_ids: list[str] = field(default_factory=list)
    failure: Optional[str] = None
    bundle: Optional[ContextBundle] = None

    def to_json(self) -> dict:
        return {
            "description": self.description,
            "pattern": self.pattern.value,
            "instantiated_question": self.instantiated_question,
            "anchors": self.anchors,
            "query": render(self.query) if self.query is not None else None,
            "attempts": [{"query": a.query, "outcome": a.outcome, "source": a.source} for a in self.attempts],
            "result_digest": self.result.digest() if self.result is not None else None,
            "status": self.status,
            "answer": self.answer,
            "failure": self.failure,
        }


@dataclass
class PlanFailure:
    kind: str
    message: str


class Trace:
    """Ordered event log for one question; serializes to line-delimited JSON."""

    def __init__(self):
        self.events: list[dict] = []

    def add(self, event: str, **fields) -> None:
        self.events.append({"event": event, **fields})

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, ensure_ascii=False) + "\n" for e in self.events)


@dataclass
class QueryPlan:
    question: str
    steps: list[PlanStep] = field(default_factory=list)
    classification: Optional[Classification] = None
    final_answer: Optional[str] = None
    failure: Optional[PlanFailure] = None
    trace: Trace = field(default_factory=Trace)

    @property
    def patterns(self) -> list[BasicPattern]:
        return [s.pattern for s in self.steps]

    @property
    def failure_kind(self) -> Optional[str]:
        """Fatal failure kind, else the kind of the first failed step."""
        if self.failure is not None:
            return self.failure.kind
        for s in self.steps:
            if s.status == FAILED:
                return s.failure or EXECUTION
        return None

    def to_json(self) -> dict:
        return {
            "question": self.question,
            "classification": self.classification.to_json() if self.classification else None,
            "steps": [s.to_json() for s in self.steps],
            "final_answer": self.final_answer,
            "failure": {"kind": self.failure.kind, "message": self.failure.message} if self.failure else None,
        }


class StageFailure(Exception):
    def __init__(self, kind: str, message: str):
        self.kind = kind
        super().__init__(message)


# -- model calls ---------------------------------------------------------------------


def _call(llm: LLMGateway, stage: str, system: str, user: str, trace: Optional[Trace],
          step: Optional[int] = None) -> str:
    request = llm.request(user, system)
    resp = llm.complete(request, stage)
    if trace is not None:
        trace.add("llm", stage=stage, step=step, fingerprint=fingerprint(request), response=resp.content,
                  usage=resp.usage.to_json(), latency=resp.latency)
    return resp.content


def _parse_classification(text: str) -> Optional[Classification]:
    data = prompts.extract_json(text)
    if not isinstance(data, dict):
        return None
    kind = str(data.get("type", "")).lower()
    if kind == "nested":
        return Classification(True)
    if kind == "basic":
        try:
            return Classification(False, parse_pattern(data.get("pattern", "")))
        except ValueError:
            return None
    return None


def categorize(question: str, llm: LLMGateway, trace: Optional[Trace] = None) -> Classification:
    if not question.strip():
        raise ValueError("empty question")
    reply = _call(llm, "categorize", *prompts.categorize_prompt(question), trace)
    result = _parse_classification(reply)
    if result is None:
        reply = _call(llm, "categorize", *prompts.categorize_retry_prompt(question, reply), trace)
        result = _parse_classification(reply)
    if result is None:
        raise StageFailure(CLASSIFICATION, f"could not read a classification from: {reply[:200]!r}")
    return result


def _parse_plan(text: str) -> Optional[list[PlanStep]]:
    data = prompts.extract_json(text)
    if isinstance(data, dict):
        data = data.get("steps")
    if not isinstance(data, list) or not data:
        return None
    steps = []
    for item in data:
        if not isinstance(item, dict) or not str(item.get("description", "")).strip():
            return None
        try:
            pattern = parse_pattern(item.get("pattern", ""))
        except ValueError:
            return None
        if not isinstance(pattern, BasicPattern):
            return None
        steps.append(PlanStep(str(item["description"]).strip(), pattern))
    return steps


def decompose(question: str, schema: GraphSchema, llm: LLMGateway, trace: Optional[Trace] = None) -> QueryPlan:
    plan = QueryPlan(question, trace=trace or Trace())
    reply = _call(llm, "decompose", *prompts.decompose_prompt(question, schema), plan.trace)
    steps = _parse_plan(reply)
    if steps is None:
        reply = _call(llm, "decompose", *prompts.decompose_retry_prompt(question, schema, reply), plan.trace)
        steps = _parse_plan(reply)
    if steps is None:
        raise StageFailure(DECOMPOSITION, f"could not read a query plan from: {reply[:200]!r}")
    plan.steps = steps
    return plan


def single_step_plan(question: str, pattern: BasicPattern, trace: Optional[Trace] = None) -> QueryPlan:
    return QueryPlan(question, [PlanStep(question, pattern)], trace=trace or Trace())


# -- anchors ---------------------------------------------------------------------------

_STOP = {"a", "an", "the", "of", "and", "or", "in", "on", "to", "is", "are", "who", "what", "how", "by"}
_LEFT = "\"'“”‘’(["
_RIGHT = "\"'“”‘’)]?,.!;:"


def _variants(span: str) -> list[str]:
    out = [span]
    inner = span.lstrip(_LEFT).rstrip(_RIGHT.replace(".", ""))
    out.append(inner)
    bare = span.lstrip(_LEFT).rstrip(_RIGHT)
    out.append(bare)
    for suffix in ("'s", "’s"):
        if bare.endswith(suffix):
            out.append(bare[: -len(suffix)])
    return list(dict.fromkeys(v for v in out if v))


def find_mentions(graph: PropertyGraph, text: str) -> list[tuple[str, list[str]]]:
    """Entity mentions in ``text``, leftmost-longest, each with its candidate ids."""
    tokens = [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]
    longest = max((len(k.split()) for k in graph.name_index), default=0)
    out: list[tuple[str, list[str]]] = []
    i = 0
    while i < len(tokens):
        hit = None
        for length in range(min(longest, len(tokens) - i), 0, -1):
            span = text[tokens[i][0]:tokens[i + length - 1][1]]
            for v in _variants(span):
                key = normalize_name(v)
                if length == 1 and key in _STOP:
                    continue
                ids = graph.name_index.get(key)
                if ids:
                    hit = (v, list(ids), length)
                    break
            if hit:
                break
        if hit:
            if all(hit[1] != ids for _, ids in out):
                out.append((hit[0], hit[1]))
            i += hit[2]
        else:
            i += 1
    return out


# -- instantiation ----------------------------------------------------------------------


def _step_question(step: PlanStep) -> str:
    return step.instantiated_question or step.description


def instantiate_step(plan: QueryPlan, index: int, llm: LLMGateway, graph: Optional[PropertyGraph] = None) -> str:
    """Concrete question for step ``index``; prior answers substituted by the model.

    The first step passes its description through unchanged unless its
    entity mentions are ambiguous.
    """
    step = plan.steps[index]
    earlier = plan.steps[:index]
    if any(s.status != SUCCEEDED for s in earlier):
        step.status = FAILED
        step.failure = EXECUTION
        step.answer = None
        raise StageFailure(EXECUTION, f"step {index + 1} skipped: an earlier step did not succeed")
    mentions = find_mentions(graph, step.description) if graph is not None else []
    ambiguous = [(m, [(i, graph.entities[i].type) for i in ids]) for m, ids in mentions if len(ids) > 1]
    if not earlier and not ambiguous:
        step.instantiated_question = step.description
        return step.description
    priors = [(_step_question(s), s.answer or NO_ANSWER) for s in earlier]
    system, user = prompts.instantiate_prompt(plan.question, [(s.pattern.value, s.description) for s in plan.steps],
                                              index, priors, ambiguous)
    reply = _call(llm, "instantiate", system, user, plan.trace, index)
    data = prompts.extract_json(reply)
    question = None
    chosen: list[str] = []
    if isinstance(data, dict):
        question = data.get("question")
        chosen = [a for a in data.get("anchors") or [] if isinstance(a, str)]
    if not isinstance(question, str) or not question.strip():
        question = reply.strip() or step.description
    step.instantiated_question = question.strip()
    if graph is not None:
        step.anchors = [a for a in chosen if a in graph.entities]
    return step.instantiated_question


def resolve_anchors(graph: PropertyGraph, step: PlanStep) -> list[str]:
    """Anchor ids in order of mention; model-chosen ids win over ambiguous candidates."""
    chosen = list(step.anchors)
    out: list[str] = []
    for _, ids in find_mentions(graph, _step_question(step)):
        pick = next((c for c in chosen if c in ids), ids[0])
        if pick not in out:
            out.append(pick)
    for c in chosen:
        if c not in out:
            out.append(c)
    return out


# -- queries ------------------------------------------------------------------------------


def sxx_query(anchors: Sequence[str]) -> CypherQuery:
    if len(anchors) == 1:
        return parse(f"MATCH (s {{id: {render_string(anchors[0])}}})-[p]->(o) RETURN p, o")
    ids = ", ".join(render_string(a) for a in anchors)
    return parse(f"MATCH (s)-[p]->(o) WHERE s.id IN [{ids}] RETURN s, p, o")


def sxo_query(src: str, dst: str, k: int) -> CypherQuery:
    return parse(f"MATCH P = SHORTEST {k} (s {{id: {render_string(src)}}})-[*]->(o {{id: {render_string(dst)}}}) "
                 "RETURN P")


def query_strategy(query: CypherQuery) -> Optional[TraversalStrategy]:
    """Which traversal strategy a query's shape realizes, if any."""
    matches = query.matches
    if len(matches) != 1 or len(matches[0].patterns) != 1:
        return None
    m = matches[0]
    edges = m.patterns[0].edges
    if m.shortest is not None:
        i = query.clauses.index(m)
        followed = i + 1 < len(query.clauses) and isinstance(query.clauses[i + 1], Where)
        return (TraversalStrategy.TOP_K_CONSTRAINED_SHORTEST_PATHS if followed
                else TraversalStrategy.TOP_K_SHORTEST_PATHS)
    if not edges or any(e.var_length for e in edges):
        return None
    if len(edges) == 1 and edges[0].rel_type is None:
        return TraversalStrategy.BFS_NEIGHBOR_EXPANSION
    if all(e.rel_type is not None for e in edges):
        return TraversalStrategy.META_PATH_WALK
    return None


def conforms(query: CypherQuery, pattern: BasicPattern) -> bool:
    return query_strategy(query) == strategy_for(pattern)


def _anchor_rows(graph: PropertyGraph, anchors: Sequence[str]) -> list[tuple[str, str, str]]:
    return [(a, graph.entities[a].type, graph.entities[a].name) for a in anchors]


def generate_query(step: PlanStep, schema: GraphSchema, anchors: Sequence[str], llm: LLMGateway,
                   graph: PropertyGraph, config: PlannerConfig = PlannerConfig(),
                   trace: Optional[Trace] = None, index: Optional[int] = None) -> str:
    """Query text for a step: a populated template for s**/s*o, model output for sp*/spo."""
    if step.pattern is SXX:
        return render(sxx_query(anchors))
    if step.pattern is SXO:
        return render(sxo_query(anchors[0], anchors[1], config.k))
    system, user = prompts.generate_prompt(step.pattern, _step_question(step), schema,
                                           _anchor_rows(graph, anchors), config.k)
    reply = _call(llm, "generate", system, user, trace, index)
    return prompts.extract_query(reply) or ""


def _evaluate(text: str, step: PlanStep, graph: PropertyGraph, schema: GraphSchema, config: PlannerConfig
              ) -> tuple[str, Optional[str], Optional[CypherQuery], Optional[ResultTable]]:
    """(outcome, failure kind, query, result) for one attempt."""
    if not text.strip():
        return "no query found in the reply", GENERATION, None, None
    try:
        query = parse(text)
    except CypherSyntaxError as exc:
        return f"syntax error: {exc}", GENERATION, None, None
    violations = validate(query, schema)
    if violations:
        return "schema violation: " + "; ".join(v.message for v in violations), GENERATION, query, None
    if not conforms(query, step.pattern):
        want = strategy_for(step.pattern).value.replace("_", " ")
        return f"query shape does not match the {want} strategy for {step.pattern.value}", GENERATION, query, None
    try:
        result = execute(graph, query, config.limits)
    except ExecutionError as exc:
        return f"execution error: {exc}", EXECUTION, query, None
    if result.empty and config.policy.retry_on_empty:
        return "empty result", EXECUTION, query, result
    return "ok", None, query, result


def execute_with_correction(step: PlanStep, graph: PropertyGraph, schema: GraphSchema, llm: LLMGateway,
                            first_query: str, anchors: Sequence[str], config: PlannerConfig = PlannerConfig(),
                            trace: Optional[Trace] = None, index: Optional[int] = None) -> PlanStep:
    templated = step.pattern in (SXX, SXO)
    text, source = first_query, "template" if templated else "generate"
    budget = 1 if templated else 1 + config.policy.max_retries
    while True:
        outcome, kind, query, result = _evaluate(text, step, graph, schema, config)
        step.attempts.append(Attempt(text, outcome, source))
        if trace is not None:
            trace.add("query", step=index, attempt=len(step.attempts), source=source, query=text,
                      outcome=outcome, result_digest=result.digest() if result is not None else None)
        if kind is None:
            step.query, step.result, step.status = query, result, SUCCEEDED
            return step
        step.query, step.result, step.failure = query, result, kind
        if len(step.attempts) >= budget:
            step.status = FAILED
            return step
        system, user = prompts.correction_prompt(step.pattern, _step_question(step), schema,
                                                 _anchor_rows(graph, anchors), config.k,
                                                 [(a.query, a.outcome) for a in step.attempts])
        reply = _call(llm, "correct", system, user, trace, index)
        text, source = prompts.extract_query(reply) or "", "correct"


def _step_answer(graph: PropertyGraph, step: PlanStep) -> tuple[str, list[str]]:
    result = step.result
    if result is None or result.empty:
        return NO_ANSWER, []
    parts: list[str] = []
    ids: list[str] = []
    for row in result.rows:
        if step.pattern is SPX:
            value = row[-1]
            text = display_value(graph, value)
            if isinstance(value, EntityRef):
                ids.append(value.id)
            elif isinstance(value, str):
                ids.extend(graph.name_index.get(normalize_name(value), ())[:1])
        else:
            text = " ".join(display_value(graph, v) for v in row)
        if text not in parts:
            parts.append(text)
    return "; ".join(parts), list(dict.fromkeys(ids))


def run_step(plan: QueryPlan, index: int, graph: PropertyGraph, schema: GraphSchema, llm: LLMGateway,
             config: PlannerConfig = PlannerConfig()) -> PlanStep:
    step = plan.steps[index]
    instantiate_step(plan, index, llm, graph)
    anchors = resolve_anchors(graph, step)
    need = 2 if step.pattern in (SXO, SPO) else 1
    if len(anchors) < need:
        step.status, step.failure = FAILED, ENTITY_RESOLUTION
        raise StageFailure(ENTITY_RESOLUTION,
                           f"step {index + 1} needs {need} graph entities; found {len(anchors)} in "
                           f"{_step_question(step)!r}")
    step.anchors = anchors
    text = generate_query(step, schema, anchors, llm, graph, config, plan.trace, index)
    execute_with_correction(step, graph, schema, llm, text, anchors, config, plan.trace, index)
    step.answer, step.answer_ids = _step_answer(graph, step) if step.status == SUCCEEDED else (None, [])
    if step.result is not None and step.status == SUCCEEDED:
        step.bundle = build_bundle(graph, step.result, step.pattern, config.budget)
    plan.trace.add("step", step=index, pattern=step.pattern.value, question=_step_question(step),
                   status=step.status, answer=step.answer)
    return step


def failure_answer(failure: PlanFailure) -> str:
    return f"Unable to answer ({failure.kind.replace('_', ' ')} failed): {failure.message}"


def answer(question: str, graph: PropertyGraph, llm: LLMGateway, config: PlannerConfig = PlannerConfig(),
           schema: Optional[GraphSchema] = None) -> tuple[str, QueryPlan]:
    """Answer ``question`` from ``graph``. Never raises for stage failures; see ``plan.failure``."""
    schema = schema or schema_of(graph)
    trace = Trace()
    plan = QueryPlan(question, trace=trace)
    try:
        cls = categorize(question, llm, trace)
        if cls.nested:
            plan = decompose(question, schema, llm, trace)
        else:
            plan = single_step_plan(question, cls.pattern, trace)
        plan.classification = cls
        trace.add("plan", classification=cls.to_json(),
                  steps=[{"pattern": s.pattern.value, "description": s.description} for s in plan.steps])
        for i in range(len(plan.steps)):
            try:
                run_step(plan, i, graph, schema, llm, config)
            except StageFailure as exc:
                if exc.kind == ENTITY_RESOLUTION:
                    raise
                trace.add("step", step=i, pattern=plan.steps[i].pattern.value,
                          question=_step_question(plan.steps[i]), status=plan.steps[i].status, answer=None)
        records = [(_step_question(s), s.answer) for s in plan.steps]
        bundles = [s.bundle for s in plan.steps]
        req = render_summary_prompt(question, records, bundles, model=llm.model)
        plan.final_answer = _call(llm, "summarize", req.messages[0].content, req.messages[1].content, trace)
    except StageFailure as exc:
        plan.failure = PlanFailure(exc.kind, str(exc))
    except LLMError as exc:
        plan.failure = PlanFailure(GATEWAY, str(exc))
    if plan.failure is not None:
        plan.final_answer = failure_answer(plan.failure)
        trace.add("failure", kind=plan.failure.kind, message=plan.failure.message)
    trace.add("answer", text=plan.final_answer)
    return plan.final_answer, plan
