"""Entity/relation tables and reasoning paths built from query results.

Rendered layout (byte-exact, it feeds prompt fingerprints)::

    Entities:
    id | type | name | attrs
    <rows, fixed-width columns>

    Relations:
    source | relation | target | attrs

    Paths:
    1. A -(r)-> B -(q)-> C

    Values:
    <column>: <value>

    [truncated: N rows omitted]

Empty sections are left out. An empty bundle renders as ``No facts retrieved.``
Relation rows aggregate every relation type between one ordered entity pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .executor import EntityRef, Path, RelRef, ResultTable, display_value, format_path
from .graph_store import PropertyGraph
from .llm import ChatRequest
from .prompts import task_header
from .taxonomy import SPO, SXO, QuestionPattern

DEFAULT_BUDGET = 16_000
EMPTY_MARKER = "No facts retrieved."
NO_ANSWER = "no answer found"


def _fmt_attrs(attrs) -> str:
    if not attrs:
        return ""
    return ", ".join(f"{k}={json.dumps(v, ensure_ascii=False) if isinstance(v, str) else v}"
                     for k, v in sorted(attrs.items()))


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    widths = [len(h) for h in header]
    for row in rows:
        widths = [max(w, len(c)) for w, c in zip(widths, row)]
    out = []
    for row in [header, *rows]:
        out.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return out


@dataclass
class ContextBundle:
    entity_rows: list[tuple[str, str, str, str]] = field(default_factory=list)
    relation_rows: list[tuple[str, str, str, str]] = field(default_factory=list)
    # relation rows keep endpoint ids beside the display strings for the closure check
    relation_ids: list[tuple[str, str]] = field(default_factory=list)
    paths: Optional[list[str]] = None
    values: list[str] = field(default_factory=list)
    budget: int = DEFAULT_BUDGET
    dropped: int = 0

    @property
    def truncated(self) -> bool:
        return self.dropped > 0

    @property
    def empty(self) -> bool:
        return not (self.entity_rows or self.relation_rows or self.paths or self.values)

    def _render(self) -> str:
        blocks = []
        if self.entity_rows:
            blocks.append("\n".join(["Entities:"] + _table(("id", "type", "name", "attrs"), self.entity_rows)))
        if self.relation_rows:
            blocks.append("\n".join(["Relations:"] + _table(("source", "relation", "target", "attrs"),
                                                           self.relation_rows)))
        if self.paths:
            blocks.append("\n".join(["Paths:"] + [f"{i + 1}. {p}" for i, p in enumerate(self.paths)]))
        if self.values:
            blocks.append("\n".join(["Values:"] + self.values))
        if not blocks and not self.dropped:
            blocks.append(EMPTY_MARKER)
        if self.dropped:
            blocks.append(f"[truncated: {self.dropped} rows omitted]")
        return "\n\n".join(blocks)

    def render(self) -> str:
        text = self._render()
        return text if len(text) <= self.budget else text[: self.budget]

    def fit(self) -> "ContextBundle":
        """Drop whole rows from the tail (paths, values, relations, then entities) until within budget."""
        while len(self._render()) > self.budget:
            if self.paths:
                self.paths.pop()
            elif self.values:
                self.values.pop()
            elif self.relation_rows:
                self.relation_rows.pop()
                self.relation_ids.pop()
            elif self.entity_rows:
                self.entity_rows.pop()
            else:
                break
            self.dropped += 1
        return self


def build_bundle(graph: PropertyGraph, result: ResultTable, pattern: QuestionPattern,
                 budget: int = DEFAULT_BUDGET) -> ContextBundle:
    entity_ids: set[str] = set()
    pairs: dict[tuple[str, str], dict] = {}
    paths: list[str] = []
    values: list[str] = []

    def add_rel(src: str, rel: str, dst: str, attrs) -> None:
        entity_ids.update((src, dst))
        slot = pairs.setdefault((src, dst), {"rels": set(), "attrs": {}})
        slot["rels"].add(rel)
        slot["attrs"].update(attrs)

    def visit(value, column: str) -> None:
        if isinstance(value, EntityRef):
            entity_ids.add(value.id)
        elif isinstance(value, RelRef):
            add_rel(value.src, value.rel_type, value.dst, graph.relations[value.idx].attrs)
        elif isinstance(value, Path):
            for a, r, b in zip(value.nodes, value.rels, value.nodes[1:]):
                add_rel(a, r, b, graph.relations[graph.edge_index(a, r, b)].attrs)
            entity_ids.update(value.nodes)
            text = format_path(graph, value)
            if text not in paths:
                paths.append(text)
        elif isinstance(value, list):
            for v in value:
                visit(v, column)
        elif value is not None:
            line = f"{column}: {display_value(graph, value)}"
            if line not in values:
                values.append(line)

    for row in result.rows:
        for column, value in zip(result.columns, row):
            visit(value, column)

    entity_rows = []
    for eid in sorted(entity_ids):
        ent = graph.entities[eid]
        entity_rows.append((ent.id, ent.type, ent.name, _fmt_attrs(ent.attrs)))
    rel_items = sorted(pairs.items(), key=lambda kv: (kv[0][0], ", ".join(sorted(kv[1]["rels"])), kv[0][1]))
    relation_rows = [(graph.entities[s].name, ", ".join(sorted(v["rels"])), graph.entities[d].name,
                      _fmt_attrs(v["attrs"])) for (s, d), v in rel_items]
    bundle = ContextBundle(
        entity_rows=entity_rows,
        relation_rows=relation_rows,
        relation_ids=[k for k, _ in rel_items],
        paths=paths if pattern in (SXO, SPO) else None,
        values=values,
        budget=budget,
    )
    return bundle.fit()


def render_summary_prompt(question: str, step_records: Sequence[tuple[str, Optional[str]]],
                          bundles: Optional[Sequence[Optional[ContextBundle]]] = None,
                          model: str = "") -> ChatRequest:
    system = "\n".join([
        task_header("summarize"),
        "You answer a question about a knowledge graph using only the facts supplied below.",
        "If the facts do not settle the question, say what is missing instead of guessing.",
    ])
    lines = [f"Question: {question}", "", "Sub-questions and findings:"]
    for i, (sub_q, ans) in enumerate(step_records):
        lines.append(f"{i + 1}. {sub_q}")
        lines.append(f"   Answer: {ans if ans else NO_ANSWER}")
        bundle = bundles[i] if bundles is not None and i < len(bundles) else None
        if bundle is not None:
            lines.append("   Facts:")
            lines += ["   " + l if l else "" for l in bundle.render().splitlines()]
    lines.append("")
    lines.append("Answer the question from these findings only.")
    kw = {"model": model} if model else {}
    return ChatRequest.of("\n".join(lines), system, **kw)
