"""Question patterns, nested shapes, and the pattern-to-traversal mapping.

A fact triple <s, p, o> with some components missing gives the four basic
patterns: SXX <s,*,*>, SPX <s,p,*>, SXO <s,*,o>, SPO <s,p,o>. Triples with a
missing subject are not representable here: they either ask nothing concrete
or reduce to a basic pattern through inverse relations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Union


class BasicPattern(str, enum.Enum):
    SXX = "s**"
    SPX = "sp*"
    SXO = "s*o"
    SPO = "spo"

    def __str__(self) -> str:
        return self.value


SXX, SPX, SXO, SPO = BasicPattern.SXX, BasicPattern.SPX, BasicPattern.SXO, BasicPattern.SPO
NESTED_NAME = "nested"


@dataclass(frozen=True)
class Nested:
    outer: BasicPattern
    inners: tuple[BasicPattern, ...]

    def __post_init__(self):
        if not self.inners:
            raise ValueError("a nested pattern needs at least one inner sub-question")
        if any(p is not SPX for p in self.inners):
            raise ValueError("inner sub-questions of a nested pattern must be sp*")

    @property
    def value(self) -> str:
        return NESTED_NAME

    def __str__(self) -> str:
        return NESTED_NAME

    def to_json(self) -> dict:
        return {"outer": self.outer.value, "inners": [p.value for p in self.inners]}


QuestionPattern = Union[BasicPattern, Nested]


class TraversalStrategy(str, enum.Enum):
    BFS_NEIGHBOR_EXPANSION = "bfs_neighbor_expansion"
    META_PATH_WALK = "meta_path_walk"
    TOP_K_SHORTEST_PATHS = "top_k_shortest_paths"
    TOP_K_CONSTRAINED_SHORTEST_PATHS = "top_k_constrained_shortest_paths"


_STRATEGY = {
    SXX: TraversalStrategy.BFS_NEIGHBOR_EXPANSION,
    SPX: TraversalStrategy.META_PATH_WALK,
    SXO: TraversalStrategy.TOP_K_SHORTEST_PATHS,
    SPO: TraversalStrategy.TOP_K_CONSTRAINED_SHORTEST_PATHS,
}

# Nested questions whose inner sub-questions feed one basic outer question.
_NESTED_SHAPES = (
    Nested(SXX, (SPX,)),
    Nested(SPX, (SPX,)),
    Nested(SXO, (SPX, SPX)),
    Nested(SPO, (SPX, SPX)),
)


def strategy_for(pattern: QuestionPattern) -> TraversalStrategy:
    if isinstance(pattern, Nested):
        raise ValueError("nested patterns have no single traversal strategy; decompose them first")
    return _STRATEGY[BasicPattern(pattern)]


def nested_shapes() -> list[tuple[BasicPattern, list[BasicPattern]]]:
    return [(n.outer, list(n.inners)) for n in _NESTED_SHAPES]


def is_basic(pattern: QuestionPattern) -> bool:
    return isinstance(pattern, BasicPattern)


def pattern_name(pattern: QuestionPattern) -> str:
    return pattern.value


def parse_pattern(data) -> QuestionPattern:
    """Accept ``"s**"``-style names, enum names (``"SXX"``), or a nested mapping."""
    if isinstance(data, (BasicPattern, Nested)):
        return data
    if isinstance(data, Mapping):
        return Nested(parse_pattern(data["outer"]), tuple(parse_pattern(p) for p in data["inners"]))
    text = str(data).strip()
    for p in BasicPattern:
        if text == p.value or text.upper() == p.name:
            return p
    raise ValueError(f"unknown question pattern {data!r}")


def execution_order(pattern: QuestionPattern) -> list[BasicPattern]:
    """Step patterns for a plan answering ``pattern``: inner sub-questions first."""
    if isinstance(pattern, Nested):
        return list(pattern.inners) + [pattern.outer]
    return [pattern]


class UnknownTemplateError(KeyError):
    def __str__(self) -> str:
        return f"unknown template id {self.args[0]!r}"


def classify_templated(record, templates: Mapping[str, object]) -> QuestionPattern:
    """Pattern declared by the record's template. Never consults a model."""
    tid = record["template_id"] if isinstance(record, Mapping) else record.template_id
    if tid not in templates:
        raise UnknownTemplateError(tid)
    tpl = templates[tid]
    return tpl.pattern if hasattr(tpl, "pattern") else parse_pattern(tpl)
