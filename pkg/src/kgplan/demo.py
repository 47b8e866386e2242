"""Bundled fixture graphs and a scripted stand-in model for offline runs.

The scripted responder answers the prompts in :mod:`kgplan.prompts` from a
fixed script keyed by question text. Cassettes under ``tests/fixtures`` are
recorded from it (``scripts/record_cassettes.py``), so the whole pipeline can
be replayed deterministically without network access.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

from . import prompts
from .graph_store import PropertyGraph, load_graph, load_inverse_hint, materialize_inverses
from .llm import ChatRequest

GRAPH_DIR = str(resources.files("kgplan") / "data" / "graphs")
BENCH_DIR = str(resources.files("kgplan") / "data" / "benchmarks")


def graph_files(name: str) -> tuple[str, str, Optional[str]]:
    nodes = os.path.join(GRAPH_DIR, f"{name}_nodes.jsonl")
    edges = os.path.join(GRAPH_DIR, f"{name}_edges.jsonl")
    hint = os.path.join(GRAPH_DIR, f"{name}_hint.jsonl")
    return nodes, edges, hint if os.path.exists(hint) else None


def fixture_graph(name: str, inverses: bool = True) -> PropertyGraph:
    nodes, edges, hint = graph_files(name)
    g = load_graph(nodes, edges, load_inverse_hint(hint) if hint else None)
    return materialize_inverses(g) if inverses else g


# -- the eight example questions over the science fixture ----------------------------

SCIENCE_QUESTIONS = [
    "Who is Isaac Newton?",
    "What theories and principles has Isaac Newton developed?",
    "How is Isaac Newton and Albert Einstein related?",
    "Have Isaac Newton and Albert Einstein both contributed to the same field of science?",
    "Tell me about the scientist who developed universal gravitation.",
    "Who is the developer of universal gravitation and influenced by Galileo's discoveries?",
    "How are the developers of universal gravitation and theory of relativity related to each other?",
    "Do the developers of universal gravitation and theory of relativity share similar perspectives about gravitation?",
]

# expected step patterns per question, by serialized name
SCIENCE_PLANS = [
    ["s**"], ["sp*"], ["s*o"], ["spo"],
    ["sp*", "s**"], ["sp*", "sp*"], ["sp*", "sp*", "s*o"], ["sp*", "sp*", "spo"],
]

_DEV_UG = "Find the developer of Universal Gravitation."
_DEV_TR = "Find the developer of the Theory of Relativity."


@dataclass
class Script:
    """Canned replies keyed by question text."""
    categories: dict[str, dict] = field(default_factory=dict)
    plans: dict[str, list[dict]] = field(default_factory=dict)
    # (original question, 0-based step index) -> instantiated question
    instantiations: dict[tuple[str, int], str] = field(default_factory=dict)
    # sub-question -> successive query attempts (generate gets [0], the n-th correction gets [n])
    queries: dict[str, list[str]] = field(default_factory=dict)
    default_category: dict = field(default_factory=lambda: {"type": "basic", "pattern": "s**"})

    def merge(self, other: "Script") -> "Script":
        return Script({**self.categories, **other.categories}, {**self.plans, **other.plans},
                      {**self.instantiations, **other.instantiations}, {**self.queries, **other.queries},
                      self.default_category)


def science_script() -> Script:
    q = SCIENCE_QUESTIONS
    s = Script()
    for i, pat in ((0, "s**"), (1, "sp*"), (2, "s*o"), (3, "spo")):
        s.categories[q[i]] = {"type": "basic", "pattern": pat}
    for i in range(4, 8):
        s.categories[q[i]] = {"type": "nested"}
    s.plans[q[4]] = [{"pattern": "sp*", "description": "Find the scientist who developed Universal Gravitation."},
                     {"pattern": "s**", "description": "Describe the scientist identified in step 1."}]
    s.plans[q[5]] = [{"pattern": "sp*", "description": _DEV_UG},
                     {"pattern": "sp*", "description": "Find the scientists influenced by Galileo."}]
    s.plans[q[6]] = [{"pattern": "sp*", "description": _DEV_UG},
                     {"pattern": "sp*", "description": _DEV_TR},
                     {"pattern": "s*o", "description": "Find the relations between the two scientists identified "
                                                       "in the previous two steps."}]
    s.plans[q[7]] = [{"pattern": "sp*", "description": _DEV_UG},
                     {"pattern": "sp*", "description": _DEV_TR},
                     {"pattern": "spo", "description": "Check whether the two scientists identified in the previous "
                                                       "two steps share views about gravitation."}]
    s.instantiations[(q[4], 1)] = "Who is Isaac Newton?"
    s.instantiations[(q[5], 1)] = "Which scientists were influenced by Galileo?"
    s.instantiations[(q[6], 1)] = "Who developed the Theory of Relativity?"
    s.instantiations[(q[6], 2)] = "How are Isaac Newton and Albert Einstein related?"
    s.instantiations[(q[7], 1)] = "Who developed the Theory of Relativity?"
    s.instantiations[(q[7], 2)] = "Do Isaac Newton and Albert Einstein share similar perspectives about Gravitation?"
    s.queries.update({
        q[1]: ["MATCH (s {id: 'IN'})-[:inv_developer]->(o:theory) RETURN DISTINCT o.name"],
        q[3]: ["MATCH P = SHORTEST 10 (s {id: 'IN'})-[*]->(o {id: 'AE'}) "
               "WHERE ALL(r IN relationships(P) WHERE type(r) IN ['field', 'inv_field']) RETURN P"],
        "Find the scientist who developed Universal Gravitation.": [
            "MATCH (s {id: 'UG'})-[:developer]->(o:scientist) RETURN DISTINCT o.name"],
        _DEV_UG: ["MATCH (s {id: 'UG'})-[:developer]->(o) RETURN DISTINCT o.name"],
        "Which scientists were influenced by Galileo?": [
            "MATCH (s {id: 'GG'})-[:inv_influenced_by]->(o:scientist) RETURN DISTINCT o.name"],
        "Who developed the Theory of Relativity?": [
            "MATCH (s {id: 'TR'})-[:developer]->(o) RETURN DISTINCT o.name"],
        "Do Isaac Newton and Albert Einstein share similar perspectives about Gravitation?": [
            "MATCH P = SHORTEST 10 (s {id: 'IN'})-[*]->(o {id: 'AE'}) WHERE ALL(r IN relationships(P) "
            "WHERE type(r) IN ['developer', 'inv_developer', 'about', 'inv_about']) RETURN P"],
    })
    return s


FOLDY_QUESTION = 'What paper have the author "L. Foldy" published?'
_FOLDY_WRONG = "MATCH (s {id: 'a1'})-[:writes]->(o:paper) RETURN DISTINCT o.name"
_FOLDY_RIGHT = "MATCH (s {id: 'a1'})-[:paper]->(o:paper) RETURN DISTINCT o.name"


def foldy_script(corrects: bool) -> Script:
    """Self-correction scenario on the academia fixture.

    The first attempt uses a relation the schema lacks. With ``corrects`` the
    first correction fixes it; otherwise every correction repeats a broken query.
    """
    s = Script()
    s.categories[FOLDY_QUESTION] = {"type": "basic", "pattern": "sp*"}
    if corrects:
        s.queries[FOLDY_QUESTION] = [_FOLDY_WRONG, _FOLDY_RIGHT]
    else:
        s.queries[FOLDY_QUESTION] = [
            _FOLDY_WRONG,
            "MATCH (s {id: 'a1'})-[:wrote]->(o:paper) RETURN DISTINCT o.name",
            "MATCH (s {id: 'a1'})-[:paper]->(o:venue) RETURN DISTINCT o.name",
            "MATCH (s {id: 'a1'})-[:paper->(o) RETURN o.name",
        ]
    return s


# -- responder ---------------------------------------------------------------------

PARAPHRASE_FRAMES = ("Could you tell me this: {q}", "I would like to know the following. {q}",
                     "Here is my question: {q}", "Please help with this one. {q}")


class ScriptedResponder:
    """Callable for :class:`kgplan.llm.ScriptedBackend` that follows a :class:`Script`."""

    def __init__(self, script: Script):
        self.script = script

    def __call__(self, request: ChatRequest) -> str:
        system = next((m.content for m in request.messages if m.role == "system"), "")
        user = request.user_text
        stage = prompts.task_of(system)
        handler = getattr(self, f"_{stage}", None)
        if handler is None:
            return "I cannot help with that."
        return handler(user, system)

    def _categorize(self, user: str, system: str) -> str:
        q = prompts.question_line(user) or ""
        return json.dumps(self.script.categories.get(q, self.script.default_category))

    def _decompose(self, user: str, system: str) -> str:
        q = prompts.question_line(user) or ""
        steps = self.script.plans.get(q, [{"pattern": "s**", "description": q}])
        return json.dumps({"steps": steps})

    def _instantiate(self, user: str, system: str) -> str:
        q = prompts.question_line(user) or ""
        idx = int(prompts.question_line(user, "Step to instantiate") or "1") - 1
        text = self.script.instantiations.get((q, idx))
        if text is None:
            plan = [l for l in user.splitlines() if l[:1].isdigit() and "[" in l]
            text = plan[idx].split("] ", 1)[1] if idx < len(plan) else q
        return json.dumps({"question": text})

    def _query(self, user: str, attempt: int) -> str:
        q = prompts.question_line(user) or ""
        options = self.script.queries.get(q)
        if not options:
            return "I could not write a query for this question."
        return "```cypher\n" + options[min(attempt, len(options) - 1)] + "\n```"

    def _generate(self, user: str, system: str) -> str:
        return self._query(user, 0)

    def _correct(self, user: str, system: str) -> str:
        return self._query(user, user.count("\n   Problem: "))

    def _summarize(self, user: str, system: str) -> str:
        answers = [l.strip()[len("Answer: "):] for l in user.splitlines() if l.startswith("   Answer: ")]
        q = prompts.question_line(user) or ""
        return f"Regarding {q!r}: " + " ".join(f"({i + 1}) {a}." for i, a in enumerate(answers))

    def _paraphrase(self, user: str, system: str) -> str:
        q = prompts.question_line(user) or ""
        n = next((int(w) for w in system.split() if w.isdigit()), 4)
        return json.dumps([PARAPHRASE_FRAMES[i % len(PARAPHRASE_FRAMES)].format(q=q) for i in range(n)])

    def _judge(self, user: str, system: str) -> str:
        from .evalkit import CRITERIA
        labels = [l.split(":", 1)[0].strip("[] ") for l in user.splitlines() if l.startswith("[Answer ")]
        return json.dumps({c: labels[:1] for c in CRITERIA})



# -- cassette recording ------------------------------------------------------------

CASSETTE_NAMES = ("science", "foldy_correct", "foldy_never", "paraphrase", "judge")


def science_benchmark_path() -> str:
    return os.path.join(BENCH_DIR, "science_examples.jsonl")


def judge_example():
    from .evalkit import build_judge_request
    return build_judge_request(SCIENCE_QUESTIONS[6], [
        ("planner", "Isaac Newton influenced Albert Einstein, and both worked in Physics."),
        ("baseline", "They are both famous scientists."),
    ], seed=0)


def record_fixture_cassettes(clock=lambda: "1970-01-01T00:00:00+00:00") -> dict:
    """Record every committed fixture cassette from the scripted responders, in memory."""
    from .benchgen import paraphrase, read_questions
    from .llm import Cassette, LLMGateway, ScriptedBackend
    from .planner import answer

    def gateway(script: Script) -> LLMGateway:
        return LLMGateway(ScriptedBackend(ScriptedResponder(script)), mode="record",
                          cassette=Cassette(), clock=clock)

    out = {}
    gw = gateway(science_script())
    science = fixture_graph("science")
    for q in SCIENCE_QUESTIONS:
        answer(q, science, gw)
    out["science"] = gw.cassette
    academia = fixture_graph("academia")
    for name, corrects in (("foldy_correct", True), ("foldy_never", False)):
        gw = gateway(foldy_script(corrects))
        answer(FOLDY_QUESTION, academia, gw)
        out[name] = gw.cassette
    gw = gateway(Script())
    for q in read_questions(science_benchmark_path()):
        paraphrase(q, gw, seed=0)
    out["paraphrase"] = gw.cassette
    gw = gateway(Script())
    gw.complete(judge_example().request, "judge")
    out["judge"] = gw.cassette
    return out
