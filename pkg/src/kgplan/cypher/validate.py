"""Check a parsed query against a graph schema."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

from ..graph_store import GraphSchema
from .ast import (
    BoolOp, Compare, Count, CypherQuery, Func, ListLiteral, ListPredicate, Literal, Match, NodePattern, Not, Prop,
    Return, Var, Where, With,
)
from .render import render, render_name

MAX_SUGGESTION_DISTANCE = 3


@dataclass(frozen=True)
class SchemaViolation:
    kind: str  # unknown_label | unknown_rel_type | unknown_property | type_mismatch
    identifier: str
    location: tuple[int, int]  # character span in the canonical rendering
    message: str
    suggestions: tuple[str, ...] = ()

    def __str__(self) -> str:
        return self.message


def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest(name: str, candidates: Iterable[str], extra: Iterable[str] = ()) -> tuple[str, ...]:
    """Case-insensitive matches, then edit distance <= 3, then ``extra`` candidates."""
    cands = sorted(set(candidates))
    out: list[str] = [c for c in cands if c.lower() == name.lower() and c != name]
    scored = sorted((edit_distance(name.lower(), c.lower()), c) for c in cands)
    out += [c for d, c in scored if d <= MAX_SUGGESTION_DISTANCE and c not in out and c != name]
    out += [c for c in extra if c not in out and c != name]
    return tuple(out)


def _children(expr) -> tuple:
    if isinstance(expr, ListLiteral):
        return expr.items
    if isinstance(expr, Func):
        return expr.args
    if isinstance(expr, Compare):
        return (expr.left, expr.right)
    if isinstance(expr, BoolOp):
        return expr.operands
    if isinstance(expr, Not):
        return (expr.operand,)
    if isinstance(expr, Count):
        return () if expr.arg is None else (expr.arg,)
    return ()


def _lit_type(value) -> Optional[str]:
    if isinstance(value, bool) or value is None:
        return None
    if isinstance(value, str):
        return "str"
    if isinstance(value, (int, float)):
        return "num"
    return None


def _compatible(lit: str, schema_types: set[str]) -> bool:
    if not schema_types:
        return True
    if lit == "str":
        return "str" in schema_types
    return bool(schema_types & {"int", "float"})


class _Validator:
    def __init__(self, schema: GraphSchema, text: str):
        self.schema = schema
        self.text = text
        self.out: list[SchemaViolation] = []
        self.labels = set(schema.entity_types)
        self.rels = set(schema.rel_type_names)
        self.node_label: dict[str, Optional[str]] = {}
        self.edge_type: dict[str, Optional[str]] = {}
        self._cursor = 0

    def span(self, needle: str) -> tuple[int, int]:
        i = self.text.find(needle, self._cursor)
        if i < 0:
            i = self.text.find(needle)
        if i < 0:
            return (0, 0)
        return (i, i + len(needle))

    def add(self, kind, ident, needle, message, suggestions=()):
        if suggestions:
            message += "; did you mean: " + ", ".join(suggestions)
        self.out.append(SchemaViolation(kind, ident, self.span(needle), message, tuple(suggestions)))

    def label(self, node: NodePattern) -> None:
        if node.label is None or node.label in self.labels:
            return
        sugg = nearest(node.label, self.labels)
        self.add("unknown_label", node.label, ":" + render_name(node.label),
                 f"unknown node label {node.label!r}" + ("" if sugg else
                 f"; valid labels: {', '.join(sorted(self.labels))}"), sugg)

    def prop_check(self, label: Optional[str], key: str, needle: str, value=None) -> None:
        known = self.schema.entity_properties(label if label in self.labels else None)
        if key not in known:
            where = f" on {label!r}" if label else ""
            sugg = nearest(key, known)
            self.add("unknown_property", key, needle, f"unknown property {key!r}{where}" + (
                "" if sugg else f"; valid properties: {', '.join(sorted(known))}"), sugg)
            return
        if isinstance(value, Literal):
            lt = _lit_type(value.value)
            types = self.schema.property_types(key, label if label in self.labels else None)
            if lt and not _compatible(lt, types):
                self.add("type_mismatch", key, needle,
                         f"property {key!r} holds {'/'.join(sorted(types))} values, compared with {value.value!r}")

    def rel_check(self, rel: str, src: Optional[str], dst: Optional[str], direction: str) -> None:
        if rel in self.rels:
            return
        if direction == "in":
            src, dst = dst, src
        typed = self.schema.relations_between(src, dst) if (src or dst) else []
        sugg = nearest(rel, self.rels, typed)
        self.add("unknown_rel_type", rel, ":" + render_name(rel), f"unknown relation type {rel!r}" + (
            "" if sugg else f"; valid relation types: {', '.join(sorted(self.rels))}"), sugg)

    def match(self, clause: Match) -> None:
        for path in clause.patterns:
            for node in path.nodes:
                self.label(node)
                if node.var:
                    self.node_label.setdefault(node.var, node.label)
                lab = node.label or (self.node_label.get(node.var) if node.var else None)
                for key, value in node.props:
                    self.prop_check(lab, key, render_name(key) + ":", value)
            for i, edge in enumerate(path.edges):
                if edge.var:
                    self.edge_type.setdefault(edge.var, edge.rel_type)
                if edge.rel_type is not None:
                    a, b = path.nodes[i], path.nodes[i + 1]
                    la = a.label or self.node_label.get(a.var or "")
                    lb = b.label or self.node_label.get(b.var or "")
                    self.rel_check(edge.rel_type, la, lb, edge.direction)
        self._cursor = self.span(render_name(clause.patterns[-1].nodes[-1].var or "MATCH"))[0]

    def expr(self, expr, locals_: frozenset = frozenset()) -> None:
        if isinstance(expr, ListPredicate):
            self.expr(expr.source, locals_)
            self.expr(expr.predicate, locals_ | {expr.var})
            return
        if isinstance(expr, Compare):
            self.compare(expr, locals_)
        if isinstance(expr, Prop):
            if expr.var not in locals_:
                self.prop_ref(expr, None)
            return
        for child in _children(expr):
            self.expr(child, locals_)

    def prop_ref(self, prop: Prop, value) -> None:
        needle = f"{render_name(prop.var)}.{render_name(prop.key)}"
        if prop.var in self.node_label:
            self.prop_check(self.node_label[prop.var], prop.key, needle, value)
        elif prop.var in self.edge_type:
            rt = self.edge_type[prop.var]
            known = set(self.schema.relation_attrs.get(rt, {})) if rt else {
                k for attrs in self.schema.relation_attrs.values() for k in attrs}
            if prop.key not in known:
                sugg = nearest(prop.key, known)
                self.add("unknown_property", prop.key, needle,
                         f"unknown relation property {prop.key!r}", sugg)

    def compare(self, cmp: Compare, locals_: frozenset = frozenset()) -> None:
        for a, b in ((cmp.left, cmp.right), (cmp.right, cmp.left)):
            if (isinstance(a, Prop) and isinstance(b, Literal) and a.var in self.node_label
                    and a.var not in locals_):
                lab = self.node_label[a.var]
                types = self.schema.property_types(a.key, lab if lab in self.labels else None)
                lt = _lit_type(b.value)
                if lt and types and not _compatible(lt, types):
                    self.add("type_mismatch", a.key, f"{render_name(a.var)}.{render_name(a.key)}",
                             f"property {a.key!r} holds {'/'.join(sorted(types))} values, "
                             f"compared with {b.value!r}")
            if isinstance(a, Func) and a.name == "type":
                lits = []
                if isinstance(b, Literal):
                    lits = [b.value]
                elif isinstance(b, ListLiteral):
                    lits = [i.value for i in b.items if isinstance(i, Literal)]
                for v in lits:
                    if isinstance(v, str) and v not in self.rels:
                        sugg = nearest(v, self.rels)
                        self.add("unknown_rel_type", v, repr(v)[1:-1],
                                 f"unknown relation type {v!r}" + (
                                     "" if sugg else f"; valid relation types: {', '.join(sorted(self.rels))}"),
                                 sugg)
                    elif not isinstance(v, str):
                        self.add("type_mismatch", "type", "type(", f"type() yields strings, compared with {v!r}")

    def run(self, query: CypherQuery) -> list[SchemaViolation]:
        for clause in query.clauses:
            if isinstance(clause, Match):
                self.match(clause)
            elif isinstance(clause, Where):
                self.expr(clause.expr)
            elif isinstance(clause, (With, Return)):
                for p in clause.projections:
                    self.expr(p.expr)
                for item in clause.order_by:
                    self.expr(item.expr)
                if isinstance(clause, With):
                    keep_nodes, keep_edges = {}, {}
                    for p in clause.projections:
                        if isinstance(p.expr, Var):
                            name = p.alias or p.expr.name
                            if p.expr.name in self.node_label:
                                keep_nodes[name] = self.node_label[p.expr.name]
                            if p.expr.name in self.edge_type:
                                keep_edges[name] = self.edge_type[p.expr.name]
                    self.node_label, self.edge_type = keep_nodes, keep_edges
        return self.out


def validate(query: CypherQuery, schema: GraphSchema) -> list[SchemaViolation]:
    """Return schema violations; an empty list means every identifier is known."""
    return _Validator(schema, render(query)).run(query)
