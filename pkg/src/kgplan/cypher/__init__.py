"""Cypher subset: AST, parser, canonical renderer, schema validation."""

from .ast import *  # noqa: F401,F403
from .parser import CypherStructureError, CypherSyntaxError, parse, tokenize
from .render import render, render_expr
from .validate import SchemaViolation, edit_distance, validate

__all__ = [
    "CypherStructureError", "CypherSyntaxError", "SchemaViolation", "edit_distance", "parse",
    "render", "render_expr", "tokenize", "validate",
]
