"""AST for the supported Cypher subset.

All nodes are frozen dataclasses over tuples, so ``==`` is structural equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class Literal:
    value: Union[str, int, float, bool, None]


@dataclass(frozen=True)
class ListLiteral:
    items: tuple["Expr", ...]


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Prop:
    var: str
    key: str


@dataclass(frozen=True)
class Func:
    """Scalar function call: ``type``, ``length``, ``nodes``, ``relationships``."""
    name: str
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Count:
    arg: Optional["Expr"]  # None means COUNT(*)
    distinct: bool = False


@dataclass(frozen=True)
class Compare:
    op: str  # one of = <> < <= > >= IN
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # AND / OR
    operands: tuple["Expr", ...]


@dataclass(frozen=True)
class Not:
    operand: "Expr"


@dataclass(frozen=True)
class ListPredicate:
    """``ALL(x IN source WHERE predicate)`` and friends (ANY, NONE)."""
    kind: str
    var: str
    source: "Expr"
    predicate: "Expr"


Expr = Union[Literal, ListLiteral, Param, Var, Prop, Func, Count, Compare, BoolOp, Not, ListPredicate]

SCALAR_FUNCTIONS = {"type": 1, "length": 1, "nodes": 1, "relationships": 1}
COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=", "IN")

# -- patterns ----------------------------------------------------------------


@dataclass(frozen=True)
class NodePattern:
    var: Optional[str] = None
    label: Optional[str] = None
    props: tuple[tuple[str, Expr], ...] = ()


@dataclass(frozen=True)
class EdgePattern:
    var: Optional[str] = None
    rel_type: Optional[str] = None
    direction: str = "out"  # "out" for -[]->, "in" for <-[]-
    # None: exactly one hop. Otherwise (min, max); max None means the hop cap.
    hops: Optional[tuple[int, Optional[int]]] = None

    @property
    def var_length(self) -> bool:
        return self.hops is not None


@dataclass(frozen=True)
class PathPattern:
    nodes: tuple[NodePattern, ...]
    edges: tuple[EdgePattern, ...] = ()

    def __post_init__(self):
        if len(self.nodes) != len(self.edges) + 1:
            raise ValueError("a path pattern needs exactly one more node than edges")

    def reversed(self) -> "PathPattern":
        flip = {"out": "in", "in": "out"}
        edges = tuple(EdgePattern(e.var, e.rel_type, flip[e.direction], e.hops) for e in reversed(self.edges))
        return PathPattern(tuple(reversed(self.nodes)), edges)


# -- clauses -----------------------------------------------------------------


@dataclass(frozen=True)
class Projection:
    expr: Expr
    alias: Optional[str] = None

    @property
    def column(self) -> str:
        from .render import render_expr
        return self.alias if self.alias is not None else render_expr(self.expr)


@dataclass(frozen=True)
class OrderItem:
    expr: Expr
    descending: bool = False


@dataclass(frozen=True)
class Match:
    patterns: tuple[PathPattern, ...]
    path_var: Optional[str] = None
    shortest: Optional[int] = None


@dataclass(frozen=True)
class Where:
    expr: Expr


@dataclass(frozen=True)
class With:
    projections: tuple[Projection, ...]
    distinct: bool = False
    order_by: tuple[OrderItem, ...] = ()


@dataclass(frozen=True)
class Return:
    projections: tuple[Projection, ...]
    distinct: bool = False
    order_by: tuple[OrderItem, ...] = ()
    limit: Optional[int] = None


Clause = Union[Match, Where, With, Return]


@dataclass(frozen=True)
class CypherQuery:
    clauses: tuple[Clause, ...] = field(default_factory=tuple)

    @property
    def matches(self) -> list[Match]:
        return [c for c in self.clauses if isinstance(c, Match)]

    @property
    def ret(self) -> Return:
        last = self.clauses[-1]
        assert isinstance(last, Return)
        return last

    def __str__(self) -> str:
        from .render import render
        return render(self)


def walk_expr(expr: Expr):
    """Yield ``expr`` and all sub-expressions, depth first."""
    yield expr
    if isinstance(expr, ListLiteral):
        for item in expr.items:
            yield from walk_expr(item)
    elif isinstance(expr, Func):
        for a in expr.args:
            yield from walk_expr(a)
    elif isinstance(expr, Count):
        if expr.arg is not None:
            yield from walk_expr(expr.arg)
    elif isinstance(expr, Compare):
        yield from walk_expr(expr.left)
        yield from walk_expr(expr.right)
    elif isinstance(expr, BoolOp):
        for o in expr.operands:
            yield from walk_expr(o)
    elif isinstance(expr, Not):
        yield from walk_expr(expr.operand)
    elif isinstance(expr, ListPredicate):
        yield from walk_expr(expr.source)
        yield from walk_expr(expr.predicate)


def has_aggregate(expr: Expr) -> bool:
    return any(isinstance(e, Count) for e in walk_expr(expr))
