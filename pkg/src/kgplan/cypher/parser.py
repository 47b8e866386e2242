"""Tokenizer and recursive-descent parser for the Cypher subset.

Grammar::

    query    := match+ [with] return
    match    := MATCH [var '='] [SHORTEST int] path (',' path)* [WHERE expr]
    with     := WITH [DISTINCT] proj (',' proj)* [ORDER BY order] [WHERE expr]
    return   := RETURN [DISTINCT] proj (',' proj)* [ORDER BY order] [LIMIT int]
    path     := node (edge node)*
    node     := '(' [var] [':' name] [props] ')'
    edge     := '-' '[' [var] [':' name] ['*' [int] ['..' [int]]] ']' '->'
              | '<-' '[' ... ']' '-' | '-->' | '<--'

Keywords are case-insensitive; labels, relation types and properties are not.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from .ast import (
    SCALAR_FUNCTIONS, BoolOp, Clause, Compare, Count, CypherQuery, EdgePattern,
    Expr, Func, ListLiteral, ListPredicate, Literal, Match, NodePattern, Not, OrderItem, Param,
    PathPattern, Projection, Prop, Return, Var, Where, With,
)

KEYWORDS = frozenset({
    "MATCH", "SHORTEST", "WHERE", "WITH", "RETURN", "DISTINCT", "ORDER", "BY", "ASC", "DESC",
    "LIMIT", "AND", "OR", "NOT", "AS", "IN",
})
LIST_PREDICATES = ("ALL", "ANY", "NONE")


class CypherSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int, expected: tuple[str, ...] = ()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(expected)
        text = f"line {line}, column {column}: {message}"
        if expected:
            text += f" (expected {', '.join(expected)})"
        super().__init__(text)


class CypherStructureError(CypherSyntaxError):
    """Well-formed tokens in an unsupported or inconsistent arrangement."""


@dataclass(frozen=True)
class Token:
    kind: str  # KW, IDENT, QIDENT, STRING, INT, FLOAT, PARAM, PUNCT, EOF
    value: object
    offset: int
    line: int
    column: int
    text: str = ""


_PUNCT = ("..", "<>", "<=", ">=", "==", "(", ")", "[", "]", "{", "}", ",", ":", ".", "=",
          "<", ">", "-", "*", "|", "$")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_NUM_RE = re.compile(r"\d+(\.\d+)?([eE][+-]?\d+)?", re.ASCII)


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, line_start = 0, 1, 0
    n = len(text)

    def here(pos: int) -> tuple[int, int]:
        return line, pos - line_start + 1

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line, line_start = line + 1, i
            continue
        if ch.isspace():
            i += 1
            continue
        ln, col = here(i)
        if ch == "'" or ch == '"':
            quote, j, buf = ch, i + 1, []
            while True:
                if j >= n or text[j] == "\n":
                    raise CypherSyntaxError("unterminated string literal", ln, col)
                c = text[j]
                if c == "\\":
                    if j + 1 >= n:
                        raise CypherSyntaxError("unterminated string literal", ln, col)
                    esc = text[j + 1]
                    buf.append({"n": "\n", "t": "\t"}.get(esc, esc))
                    j += 2
                    continue
                if c == quote:
                    break
                buf.append(c)
                j += 1
            tokens.append(Token("STRING", "".join(buf), i, ln, col, text[i:j + 1]))
            i = j + 1
            continue
        if ch == "`":
            j = text.find("`", i + 1)
            if j < 0:
                raise CypherSyntaxError("unterminated backtick identifier", ln, col)
            name = text[i + 1:j]
            if not name:
                raise CypherSyntaxError("empty backtick identifier", ln, col)
            tokens.append(Token("QIDENT", name, i, ln, col, text[i:j + 1]))
            i = j + 1
            continue
        if "0" <= ch <= "9":
            m = _NUM_RE.match(text, i)
            raw = m.group(0)
            if m.group(1) or m.group(2):
                value, kind = float(raw), "FLOAT"
            else:
                value, kind = int(raw), "INT"
            tokens.append(Token(kind, value, i, ln, col, raw))
            i += len(raw)
            continue
        if ch == "$":
            m = _IDENT_RE.match(text, i + 1)
            if not m:
                raise CypherSyntaxError("expected parameter name after '$'", ln, col)
            tokens.append(Token("PARAM", m.group(0), i, ln, col, "$" + m.group(0)))
            i = m.end()
            continue
        m = _IDENT_RE.match(text, i)
        if m:
            word = m.group(0)
            if word.upper() in KEYWORDS:
                tokens.append(Token("KW", word.upper(), i, ln, col, word))
            else:
                tokens.append(Token("IDENT", word, i, ln, col, word))
            i = m.end()
            continue
        for p in _PUNCT:
            if text.startswith(p, i):
                tokens.append(Token("PUNCT", p, i, ln, col, p))
                i += len(p)
                break
        else:
            raise CypherSyntaxError(f"unexpected character {ch!r}", ln, col)
    ln, col = here(i)
    tokens.append(Token("EOF", None, i, ln, col, "<end of input>"))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # -- token helpers --
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, ahead: int = 1) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, kind: str, value=None, tok: Optional[Token] = None) -> bool:
        t = tok or self.tok
        return t.kind == kind and (value is None or t.value == value)

    def at_punct(self, value: str) -> bool:
        return self.at("PUNCT", value)

    def at_kw(self, value: str) -> bool:
        return self.at("KW", value)

    def error(self, message: str, expected=(), tok: Optional[Token] = None, cls=CypherSyntaxError):
        t = tok or self.tok
        return cls(f"{message}, found {t.text or t.kind!s}" if cls is CypherSyntaxError else message,
                   t.line, t.column, tuple(expected))

    def expect_punct(self, value: str) -> Token:
        if not self.at_punct(value):
            raise self.error(f"expected '{value}'", (repr(value),))
        return self.advance()

    def expect_kw(self, value: str) -> Token:
        if not self.at_kw(value):
            raise self.error(f"expected {value}", (value,))
        return self.advance()

    def name(self, what: str) -> str:
        if self.tok.kind in ("IDENT", "QIDENT"):
            return self.advance().value
        raise self.error(f"expected {what}", (what,))

    def int_literal(self, what: str) -> int:
        if not self.at("INT"):
            raise self.error(f"expected {what}", ("integer",))
        return self.advance().value

    # -- clauses --
    def query(self) -> CypherQuery:
        clauses: list[Clause] = []
        if not self.at_kw("MATCH"):
            raise self.error("query must start with MATCH", ("MATCH",))
        while self.at_kw("MATCH"):
            clauses.append(self.match())
            if self.at_kw("WHERE"):
                self.advance()
                clauses.append(Where(self.expr()))
        if self.at_kw("WITH"):
            clauses.append(self.with_clause())
            if self.at_kw("WHERE"):
                self.advance()
                clauses.append(Where(self.expr()))
            if self.at_kw("WITH"):
                raise self.error("only one WITH clause is supported", cls=CypherStructureError)
            if self.at_kw("MATCH"):
                raise self.error("MATCH after WITH is not supported", cls=CypherStructureError)
        if not self.at_kw("RETURN"):
            expected = ("MATCH", "WHERE", "WITH", "RETURN")
            raise self.error("expected a clause", expected)
        clauses.append(self.return_clause())
        if not self.at("EOF"):
            if self.at("KW") and self.tok.value in ("MATCH", "WITH", "WHERE", "RETURN"):
                raise self.error("RETURN must be the last clause", cls=CypherStructureError)
            raise self.error("unexpected trailing input", ("<end of input>",))
        return CypherQuery(tuple(clauses))

    def match(self) -> Match:
        start = self.expect_kw("MATCH")
        path_var = shortest = None
        if self.tok.kind in ("IDENT", "QIDENT") and self.at("PUNCT", "=", self.peek()):
            path_var = self.advance().value
            self.advance()
        if self.at_kw("SHORTEST"):
            kw = self.advance()
            shortest = self.int_literal("path count after SHORTEST")
            if shortest < 1:
                raise self.error("SHORTEST k requires k >= 1", tok=kw, cls=CypherStructureError)
        patterns = [self.path()]
        while self.at_punct(","):
            self.advance()
            patterns.append(self.path())
        if (path_var is not None or shortest is not None) and len(patterns) != 1:
            raise self.error("a named or SHORTEST match takes exactly one path pattern",
                             tok=start, cls=CypherStructureError)
        if shortest is not None:
            p = patterns[0]
            if len(p.edges) != 1 or not p.edges[0].var_length:
                raise self.error("SHORTEST k needs a single variable-length source-target pattern",
                                 tok=start, cls=CypherStructureError)
        return Match(tuple(patterns), path_var, shortest)

    def projections(self) -> tuple[Projection, ...]:
        items = [self.projection()]
        while self.at_punct(","):
            self.advance()
            items.append(self.projection())
        return tuple(items)

    def projection(self) -> Projection:
        expr = self.expr()
        alias = None
        if self.at_kw("AS"):
            self.advance()
            alias = self.name("alias")
        return Projection(expr, alias)

    def order_by(self) -> tuple[OrderItem, ...]:
        if not self.at_kw("ORDER"):
            return ()
        self.advance()
        self.expect_kw("BY")
        items = []
        while True:
            expr = self.expr()
            desc = False
            if self.at_kw("ASC") or self.at_kw("DESC"):
                desc = self.advance().value == "DESC"
            items.append(OrderItem(expr, desc))
            if not self.at_punct(","):
                return tuple(items)
            self.advance()

    def with_clause(self) -> With:
        self.expect_kw("WITH")
        distinct = False
        if self.at_kw("DISTINCT"):
            self.advance()
            distinct = True
        projs = self.projections()
        return With(projs, distinct, self.order_by())

    def return_clause(self) -> Return:
        self.expect_kw("RETURN")
        distinct = False
        if self.at_kw("DISTINCT"):
            self.advance()
            distinct = True
        projs = self.projections()
        order = self.order_by()
        limit = None
        if self.at_kw("LIMIT"):
            self.advance()
            limit = self.int_literal("LIMIT count")
        return Return(projs, distinct, order, limit)

    # -- patterns --
    def path(self) -> PathPattern:
        nodes = [self.node()]
        edges = []
        while self.at_punct("-") or self.at_punct("<"):
            edges.append(self.edge())
            nodes.append(self.node())
        return PathPattern(tuple(nodes), tuple(edges))

    def node(self) -> NodePattern:
        self.expect_punct("(")
        var = label = None
        props: tuple = ()
        if self.tok.kind in ("IDENT", "QIDENT"):
            var = self.advance().value
        if self.at_punct(":"):
            self.advance()
            label = self.name("node label")
        if self.at_punct("{"):
            props = self.prop_map()
        if not self.at_punct(")"):
            raise self.error("expected ')' to close node pattern", ("')'", "':'", "'{'"))
        self.advance()
        return NodePattern(var, label, props)

    def prop_map(self) -> tuple[tuple[str, Expr], ...]:
        self.expect_punct("{")
        items = []
        if not self.at_punct("}"):
            while True:
                key = self.name("property name")
                self.expect_punct(":")
                items.append((key, self.primary()))
                if not self.at_punct(","):
                    break
                self.advance()
        self.expect_punct("}")
        return tuple(items)

    def edge(self) -> EdgePattern:
        incoming = False
        if self.at_punct("<"):
            self.advance()
            incoming = True
        self.expect_punct("-")
        if self.at_punct("-"):
            # shorthand --> or <--
            self.advance()
            if incoming:
                return EdgePattern(direction="in")
            self.expect_punct(">")
            return EdgePattern(direction="out")
        if not self.at_punct("["):
            raise self.error("expected relation pattern", ("'['", "'-'"))
        open_tok = self.advance()
        var = rel_type = None
        hops = None
        if self.tok.kind in ("IDENT", "QIDENT"):
            var = self.advance().value
        elif self.tok.kind == "KW":
            raise self.error("expected relation pattern", ("variable", "':'", "'*'", "']'"), tok=open_tok)
        if self.at_punct(":"):
            self.advance()
            rel_type = self.name("relation type")
        if self.at_punct("*"):
            star = self.advance()
            lo: Optional[int] = None
            hi: Optional[int] = None
            if self.at("INT"):
                lo = self.advance().value
            if self.at_punct(".."):
                self.advance()
                if self.at("INT"):
                    hi = self.advance().value
                if lo is None:
                    lo = 1
            elif lo is not None:
                hi = lo
            if lo is None:
                lo = 1
            if lo < 1 or (hi is not None and hi < lo):
                raise self.error("invalid hop range", tok=star, cls=CypherStructureError)
            hops = (lo, hi)
        if not self.at_punct("]"):
            raise self.error("expected relation pattern", ("variable", "':'", "'*'", "']'"), tok=open_tok)
        self.advance()
        self.expect_punct("-")
        if not incoming:
            self.expect_punct(">")
        elif self.at_punct(">"):
            raise self.error("bidirectional relation patterns are not supported", cls=CypherStructureError)
        return EdgePattern(var, rel_type, "in" if incoming else "out", hops)

    # -- expressions --
    def expr(self) -> Expr:
        return self.or_expr()

    def or_expr(self) -> Expr:
        items = [self.and_expr()]
        while self.at_kw("OR"):
            self.advance()
            items.append(self.and_expr())
        return items[0] if len(items) == 1 else BoolOp("OR", tuple(items))

    def and_expr(self) -> Expr:
        items = [self.not_expr()]
        while self.at_kw("AND"):
            self.advance()
            items.append(self.not_expr())
        return items[0] if len(items) == 1 else BoolOp("AND", tuple(items))

    def not_expr(self) -> Expr:
        if self.at_kw("NOT"):
            self.advance()
            return Not(self.not_expr())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.primary()
        t = self.tok
        if t.kind == "PUNCT" and t.value in ("=", "==", "<>", "<", "<=", ">", ">="):
            self.advance()
            op = "=" if t.value == "==" else t.value
            return Compare(op, left, self.primary())
        if self.at_kw("IN"):
            self.advance()
            return Compare("IN", left, self.primary())
        return left

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "STRING":
            self.advance()
            return Literal(t.value)
        if t.kind in ("INT", "FLOAT"):
            self.advance()
            return Literal(t.value)
        if t.kind == "PUNCT" and t.value == "-" and self.peek().kind in ("INT", "FLOAT"):
            self.advance()
            return Literal(-self.advance().value)
        if t.kind == "PARAM":
            self.advance()
            return Param(t.value)
        if t.kind == "PUNCT" and t.value == "(":
            self.advance()
            inner = self.expr()
            self.expect_punct(")")
            return inner
        if t.kind == "PUNCT" and t.value == "[":
            self.advance()
            items = []
            if not self.at_punct("]"):
                items.append(self.primary())
                while self.at_punct(","):
                    self.advance()
                    items.append(self.primary())
            self.expect_punct("]")
            return ListLiteral(tuple(items))
        if t.kind in ("IDENT", "QIDENT"):
            if t.kind == "IDENT" and self.at("PUNCT", "(", self.peek()):
                return self.call()
            self.advance()
            if self.at_punct("."):
                self.advance()
                return Prop(t.value, self.name("property name"))
            return Var(t.value)
        raise self.error("expected an expression", ("literal", "variable", "'('"))

    def call(self) -> Expr:
        name_tok = self.advance()
        fname = name_tok.value.upper()
        self.expect_punct("(")
        if fname == "COUNT":
            distinct = False
            if self.at_punct("*"):
                self.advance()
                self.expect_punct(")")
                return Count(None)
            if self.at_kw("DISTINCT"):
                self.advance()
                distinct = True
            arg = self.expr()
            self.expect_punct(")")
            return Count(arg, distinct)
        if fname in LIST_PREDICATES:
            var = self.name("list variable")
            self.expect_kw("IN")
            source = self.primary()
            self.expect_kw("WHERE")
            pred = self.expr()
            self.expect_punct(")")
            return ListPredicate(fname, var, source, pred)
        lname = name_tok.value.lower()
        if lname not in SCALAR_FUNCTIONS:
            raise self.error(f"unknown function {name_tok.value!r}", tok=name_tok, cls=CypherStructureError)
        args = []
        if not self.at_punct(")"):
            args.append(self.expr())
            while self.at_punct(","):
                self.advance()
                args.append(self.expr())
        self.expect_punct(")")
        if len(args) != SCALAR_FUNCTIONS[lname]:
            raise self.error(f"{lname}() takes {SCALAR_FUNCTIONS[lname]} argument(s)",
                             tok=name_tok, cls=CypherStructureError)
        return Func(lname, tuple(args))


def _free_vars(expr: Expr, bound_locals: frozenset = frozenset()) -> set[str]:
    out: set[str] = set()
    if isinstance(expr, ListPredicate):
        out |= _free_vars(expr.source, bound_locals)
        out |= _free_vars(expr.predicate, bound_locals | {expr.var})
        return out
    if isinstance(expr, Var) and expr.name not in bound_locals:
        out.add(expr.name)
    elif isinstance(expr, Prop) and expr.var not in bound_locals:
        out.add(expr.var)
    else:
        for sub in _children(expr):
            out |= _free_vars(sub, bound_locals)
    return out


def _children(expr: Expr):
    if isinstance(expr, ListLiteral):
        return expr.items
    if isinstance(expr, Func):
        return expr.args
    if isinstance(expr, Count):
        return () if expr.arg is None else (expr.arg,)
    if isinstance(expr, Compare):
        return (expr.left, expr.right)
    if isinstance(expr, BoolOp):
        return expr.operands
    if isinstance(expr, Not):
        return (expr.operand,)
    return ()


def pattern_vars(match: Match) -> list[str]:
    out = []
    if match.path_var:
        out.append(match.path_var)
    for p in match.patterns:
        for n in p.nodes:
            if n.var:
                out.append(n.var)
        for e in p.edges:
            if e.var:
                out.append(e.var)
    return out


def check_scopes(query: CypherQuery, locate=None) -> None:
    """Raise if a clause references a variable no earlier clause binds."""
    locate = locate or (lambda name: (1, 1))

    def unbound(names: set[str], where: str = "") -> CypherStructureError:
        name = sorted(names)[0]
        line, col = locate(name)
        return CypherStructureError(f"unbound variable {name!r}{where}", line, col)

    scope: set[str] = set()
    for clause in query.clauses:
        if isinstance(clause, Match):
            for p in clause.patterns:
                for n in p.nodes:
                    for _, value in n.props:
                        missing = _free_vars(value) - scope
                        if missing:
                            raise unbound(missing)
            scope.update(pattern_vars(clause))
        elif isinstance(clause, Where):
            missing = _free_vars(clause.expr) - scope
            if missing:
                raise unbound(missing, " in WHERE")
        elif isinstance(clause, (With, Return)):
            for proj in clause.projections:
                missing = _free_vars(proj.expr) - scope
                if missing:
                    raise unbound(missing)
            new_scope = set()
            for proj in clause.projections:
                if proj.alias:
                    new_scope.add(proj.alias)
                elif isinstance(proj.expr, Var):
                    new_scope.add(proj.expr.name)
            order_scope = scope | new_scope
            for item in clause.order_by:
                missing = _free_vars(item.expr) - order_scope
                if missing:
                    raise unbound(missing, " in ORDER BY")
            if isinstance(clause, With):
                scope = new_scope


def parse(text: str) -> CypherQuery:
    """Parse query text; raises :class:`CypherSyntaxError` with a location on failure."""
    if not isinstance(text, str):
        raise TypeError("query text must be a string")
    parser = _Parser(text)
    query = parser.query()

    def locate(name: str) -> tuple[int, int]:
        for t in parser.tokens:
            if t.kind in ("IDENT", "QIDENT") and t.value == name:
                return t.line, t.column
        return 1, 1

    check_scopes(query, locate)
    return query
