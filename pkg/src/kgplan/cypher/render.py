"""Canonical text for query ASTs.

Canonical form: uppercase keywords, single spaces, ``, `` separators, single
quoted strings, backticks around names that are not plain identifiers or that
collide with keywords. ``parse(render(q)) == q`` for every valid AST.
"""

from __future__ import annotations

import re

from .ast import (
    BoolOp, Compare, Count, CypherQuery, EdgePattern, Expr, Func, ListLiteral, ListPredicate,
    Literal, Match, NodePattern, Not, OrderItem, Param, PathPattern, Projection, Prop, Return,
    Var, Where, With,
)
from .parser import KEYWORDS

_PLAIN = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def render_name(name: str) -> str:
    if _PLAIN.match(name) and name.upper() not in KEYWORDS:
        return name
    if "`" in name:
        raise ValueError(f"names may not contain backticks: {name!r}")
    return f"`{name}`"


def render_string(value: str) -> str:
    out = value.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n").replace("\t", "\\t")
    return f"'{out}'"


def _literal(value) -> str:
    if isinstance(value, bool) or value is None:
        raise ValueError(f"unsupported literal {value!r}")
    if isinstance(value, str):
        return render_string(value)
    if isinstance(value, float):
        text = repr(value)
        return text if ("." in text or "e" in text) else text + ".0"
    return str(value)


# Binding strength, loosest first.
_PREC = {"OR": 1, "AND": 2, "NOT": 3, "CMP": 4}


def _prec(expr: Expr) -> int:
    if isinstance(expr, BoolOp):
        return _PREC[expr.op]
    if isinstance(expr, Not):
        return _PREC["NOT"]
    if isinstance(expr, Compare):
        return _PREC["CMP"]
    return 10


def render_expr(expr: Expr, parent: int = 0) -> str:
    text = _render_expr(expr)
    if _prec(expr) <= parent:
        return f"({text})"
    return text


def _render_expr(expr: Expr) -> str:
    if isinstance(expr, Literal):
        if isinstance(expr.value, (int, float)) and not isinstance(expr.value, bool) and expr.value < 0:
            return "-" + _literal(-expr.value)
        return _literal(expr.value)
    if isinstance(expr, ListLiteral):
        return "[" + ", ".join(render_expr(i) for i in expr.items) + "]"
    if isinstance(expr, Param):
        return "$" + expr.name
    if isinstance(expr, Var):
        return render_name(expr.name)
    if isinstance(expr, Prop):
        return f"{render_name(expr.var)}.{render_name(expr.key)}"
    if isinstance(expr, Func):
        return f"{expr.name}(" + ", ".join(render_expr(a) for a in expr.args) + ")"
    if isinstance(expr, Count):
        if expr.arg is None:
            return "COUNT(*)"
        return "COUNT(" + ("DISTINCT " if expr.distinct else "") + render_expr(expr.arg) + ")"
    if isinstance(expr, Compare):
        # Operands of a comparison are primaries; nested boolean logic needs parentheses.
        return f"{render_expr(expr.left, _PREC['CMP'])} {expr.op} {render_expr(expr.right, _PREC['CMP'])}"
    if isinstance(expr, BoolOp):
        p = _PREC[expr.op]
        return f" {expr.op} ".join(render_expr(o, p) for o in expr.operands)
    if isinstance(expr, Not):
        return "NOT " + render_expr(expr.operand, _PREC["NOT"] - 1 if isinstance(expr.operand, Not) else _PREC["NOT"])
    if isinstance(expr, ListPredicate):
        return (f"{expr.kind}({render_name(expr.var)} IN {render_expr(expr.source, _PREC['CMP'])} "
                f"WHERE {render_expr(expr.predicate)})")
    raise TypeError(f"not an expression: {expr!r}")


def render_node(node: NodePattern) -> str:
    inner = render_name(node.var) if node.var else ""
    if node.label:
        inner += ":" + render_name(node.label)
    if node.props:
        items = ", ".join(f"{render_name(k)}: {render_expr(v, _PREC['CMP'])}" for k, v in node.props)
        inner += (" " if inner else "") + "{" + items + "}"
    return f"({inner})"


def render_edge(edge: EdgePattern) -> str:
    inner = render_name(edge.var) if edge.var else ""
    if edge.rel_type:
        inner += ":" + render_name(edge.rel_type)
    if edge.hops is not None:
        lo, hi = edge.hops
        if hi is None:
            inner += "*" if lo == 1 else f"*{lo}.."
        elif lo == hi:
            inner += f"*{lo}"
        else:
            inner += f"*{lo}..{hi}"
    if edge.direction == "out":
        return f"-[{inner}]->"
    return f"<-[{inner}]-"


def render_path(path: PathPattern) -> str:
    parts = [render_node(path.nodes[0])]
    for edge, node in zip(path.edges, path.nodes[1:]):
        parts.append(render_edge(edge))
        parts.append(render_node(node))
    return "".join(parts)


def _projections(items: tuple[Projection, ...]) -> str:
    out = []
    for p in items:
        text = render_expr(p.expr)
        if p.alias is not None:
            text += " AS " + render_name(p.alias)
        out.append(text)
    return ", ".join(out)


def _order(items: tuple[OrderItem, ...]) -> str:
    return " ORDER BY " + ", ".join(render_expr(i.expr) + (" DESC" if i.descending else "") for i in items)


def render_clause(clause) -> str:
    if isinstance(clause, Match):
        head = "MATCH "
        if clause.path_var:
            head += render_name(clause.path_var) + " = "
        if clause.shortest is not None:
            head += f"SHORTEST {clause.shortest} "
        return head + ", ".join(render_path(p) for p in clause.patterns)
    if isinstance(clause, Where):
        return "WHERE " + render_expr(clause.expr)
    if isinstance(clause, (With, Return)):
        kw = "WITH " if isinstance(clause, With) else "RETURN "
        text = kw + ("DISTINCT " if clause.distinct else "") + _projections(clause.projections)
        if clause.order_by:
            text += _order(clause.order_by)
        if isinstance(clause, Return) and clause.limit is not None:
            text += f" LIMIT {clause.limit}"
        return text
    raise TypeError(f"not a clause: {clause!r}")


def render(query: CypherQuery) -> str:
    return " ".join(render_clause(c) for c in query.clauses)
