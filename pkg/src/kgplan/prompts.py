"""Prompt text for every model-backed stage, plus lenient output parsers.

Prompt wording is pinned: cassette fingerprints hash it, so any edit here
invalidates recorded cassettes (re-record with ``scripts/record_cassettes.py``).
Every system prompt starts with a ``Task: <stage>`` line.
"""

from __future__ import annotations

import json
import re
from typing import Optional, Sequence

from .graph_store import GraphSchema
from .taxonomy import SPO, SPX, BasicPattern

PROMPT_VERSION = "1"

PATTERN_GUIDE = """\
Question patterns. A graph fact is a triple <s, p, o>: a subject entity s, a chain of relations p, and an object entity o. A question leaves some parts unknown (*).
- s** : a named entity and nothing else; the user wants general information about it. Examples: "Who is Marie Curie?", "Give me an overview of the journal 'Physical Review'."
- sp* : a named entity plus a definite relation chain; the user wants the entities at the end of the chain. Examples: "Which books did Ursula K. Le Guin write?", "Who publishes the series that contains 'A Wizard of Earthsea'?"
- s*o : two named entities; the user wants to know how they are connected, through any relations. Examples: "How are Ada Lovelace and Charles Babbage related?"
- spo : two named entities plus a specific kind of connection to confirm or describe. Examples: "Did Ada Lovelace and Charles Babbage work in the same field?"
A question is nested when it can only be answered by first solving one or more sp* sub-questions and feeding their answers into another question. Example: "Tell me about the teacher of Aristotle." needs "Who taught Aristotle?" (sp*) and then "Tell me about Plato." (s**)."""


def task_header(stage: str) -> str:
    return f"Task: {stage}"


# -- categorize ---------------------------------------------------------------------


def categorize_prompt(question: str) -> tuple[str, str]:
    system = "\n".join([
        task_header("categorize"),
        "You label user questions about a knowledge graph.",
        PATTERN_GUIDE,
        'Reply with one JSON object and nothing else: {"type": "basic", "pattern": "<s**|sp*|s*o|spo>"} '
        'or {"type": "nested"}.',
    ])
    return system, f"Question: {question}"


def categorize_retry_prompt(question: str, previous: str) -> tuple[str, str]:
    system, user = categorize_prompt(question)
    user += (f"\n\nYour previous reply could not be read:\n{previous}\n"
             "Answer again with only the JSON object.")
    return system, user


# -- decompose ----------------------------------------------------------------------


def decompose_prompt(question: str, schema: GraphSchema) -> tuple[str, str]:
    system = "\n".join([
        task_header("decompose"),
        "You turn a nested knowledge-graph question into a query plan of basic questions.",
        PATTERN_GUIDE,
        "Rules:",
        "- Every step is one basic question with pattern s**, sp*, s*o or spo.",
        "- Steps that depend on earlier answers describe them instead of naming them, "
        "for example \"the city found in step 1\".",
        "- Put inner sp* steps first and the step that answers the user last.",
        'Reply with JSON only: {"steps": [{"pattern": "sp*", "description": "..."}, ...]}',
        "Graph schema:",
        schema.describe(),
    ])
    return system, f"Question: {question}"


def decompose_retry_prompt(question: str, schema: GraphSchema, previous: str) -> tuple[str, str]:
    system, user = decompose_prompt(question, schema)
    user += (f"\n\nYour previous reply could not be read as a plan:\n{previous}\n"
             "Answer again with only the JSON object.")
    return system, user


# -- instantiate --------------------------------------------------------------------


def instantiate_prompt(question: str, plan: Sequence[tuple[str, str]], index: int,
                       priors: Sequence[tuple[str, str]],
                       candidates: Sequence[tuple[str, Sequence[tuple[str, str]]]] = ()) -> tuple[str, str]:
    """``plan`` holds (pattern, description); ``priors`` holds (sub-question, answer) for earlier steps."""
    system = "\n".join([
        task_header("instantiate"),
        "You rewrite one step of a query plan as a concrete, self-contained question.",
        "Replace references to earlier steps with the actual entity names from their answers.",
        'Reply with JSON only: {"question": "...", "anchors": ["<entity id>", ...]}. '
        "List anchors only when you pick among candidate entities.",
    ])
    lines = [f"Question: {question}", "Plan:"]
    lines += [f"{i + 1}. [{p}] {d}" for i, (p, d) in enumerate(plan)]
    if priors:
        lines.append("Answered so far:")
        for i, (q, a) in enumerate(priors):
            lines.append(f"{i + 1}. {q}\n   Answer: {a}")
    if candidates:
        lines.append("Ambiguous entity mentions (pick ids):")
        for mention, opts in candidates:
            lines.append(f"- {mention!r}: " + "; ".join(f"{eid} ({etype})" for eid, etype in opts))
    lines.append(f"Step to instantiate: {index + 1}")
    return system, "\n".join(lines)


# -- generate / correct -------------------------------------------------------------

_QUERY_RULES = """\
Query language: a Cypher subset.
- MATCH patterns, optional WHERE, at most one WITH, then RETURN [DISTINCT] ... [ORDER BY ...] [LIMIT n].
- Relations are matched in the written direction only; every relation has a stored inverse, so pick the direction that exists in the schema.
- Wrap labels or relation types containing spaces in backticks.
- Bind start entities by id, for example (s {id: 'e42'}).
- functions: type(r), length(P), nodes(P), relationships(P); list tests: ALL/ANY/NONE(x IN list WHERE ...)."""

_SPX_RULES = """\
Write a meta-path query: one linear chain of single-hop relations from the start entity to the answer, e.g.
MATCH (s {id: 'e1'})-[:r1]->(m)-[:r2]->(o) RETURN DISTINCT o.name
Use only relation types listed in the schema. Return the answer entities' names in the last column."""

_SPO_RULES = """\
Write a constrained shortest-path query between the two entities, e.g.
MATCH P = SHORTEST {k} (s {{id: 'e1'}})-[*]->(o {{id: 'e2'}}) WHERE ALL(r IN relationships(P) WHERE type(r) IN ['r1', 'r2']) RETURN P
The WHERE clause must keep only paths made of the relations the question asks about. When the wording maps to the schema ambiguously, prefer the relations giving shorter paths."""


def generate_prompt(pattern: BasicPattern, question: str, schema: GraphSchema,
                    anchors: Sequence[tuple[str, str, str]], k: int) -> tuple[str, str]:
    """``anchors`` holds (id, type, name) of resolved question entities."""
    if pattern not in (SPX, SPO):
        raise ValueError("only sp* and spo steps use generated queries")
    rules = _SPX_RULES if pattern is SPX else _SPO_RULES.format(k=k)
    system = "\n".join([
        task_header("generate"),
        f"You write one graph query answering a {pattern.value} question.",
        _QUERY_RULES,
        rules,
        "Graph schema:",
        schema.describe(),
        "Reply with the query inside a ```cypher block and nothing else.",
    ])
    lines = [f"Question: {question}", "Entities:"]
    lines += [f"- {eid} ({etype}): {name}" for eid, etype, name in anchors]
    return system, "\n".join(lines)


def correction_prompt(pattern: BasicPattern, question: str, schema: GraphSchema,
                      anchors: Sequence[tuple[str, str, str]], k: int,
                      attempts: Sequence[tuple[str, str]]) -> tuple[str, str]:
    system, user = generate_prompt(pattern, question, schema, anchors, k)
    system = system.replace(task_header("generate"), task_header("correct"), 1)
    lines = [user, "Earlier attempts failed:"]
    for i, (query, outcome) in enumerate(attempts):
        lines.append(f"{i + 1}. {query}\n   Problem: {outcome}")
    lines.append("Write a corrected query.")
    return system, "\n".join(lines)


# -- paraphrase ---------------------------------------------------------------------


def paraphrase_prompt(question: str, n: int) -> tuple[str, str]:
    system = "\n".join([
        task_header("paraphrase"),
        f"Rewrite the question in {n} different ways. Keep every entity name exactly as written "
        "and keep the meaning unchanged.",
        f"Reply with a JSON list of {n} strings.",
    ])
    return system, f"Question: {question}"


# -- output parsing -----------------------------------------------------------------

_FENCE = re.compile(r"```(?:[a-zA-Z]+)?\s*\n?(.*?)```", re.S)


def extract_json(text: str):
    """First JSON object or list embedded in ``text``; None if there is none."""
    dec = json.JSONDecoder()
    for m in re.finditer(r"[\[{]", text):
        try:
            value, _ = dec.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        return value
    return None


def extract_query(text: str) -> Optional[str]:
    """Query text from a fenced block, else from the first line starting with MATCH."""
    m = _FENCE.search(text)
    if m:
        body = m.group(1).strip()
        return body or None
    lines = text.strip().splitlines()
    for i, line in enumerate(lines):
        if line.strip().upper().startswith("MATCH"):
            return " ".join(l.strip() for l in lines[i:]).strip()
    return None


def question_line(user: str, label: str = "Question") -> Optional[str]:
    for line in user.splitlines():
        if line.startswith(label + ": "):
            return line[len(label) + 2:]
    return None


def task_of(system: str) -> Optional[str]:
    first = system.splitlines()[0] if system else ""
    return first[len("Task: "):] if first.startswith("Task: ") else None
