"""Evaluate query ASTs over a :class:`PropertyGraph`.

Single-hop pattern edges bind individual relations, so parallel edges give
separate rows, and entities may repeat across hops. Variable-length segments
and SHORTEST matches enumerate simple paths only; a path is identified by its
entity sequence plus relation-type sequence, so parallel edges of one type
collapse into a single path.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Sequence

from .cypher.ast import (
    BoolOp, Compare, Count, CypherQuery, EdgePattern, Func, ListLiteral, ListPredicate, Literal,
    Match, NodePattern, Not, Param, PathPattern, Projection, Prop, Return, Var, Where, With,
    has_aggregate,
)
from .graph_store import PropertyGraph, normalize_name

DEFAULT_HOP_CAP = 5
DEFAULT_K = 10


class ExecutionError(RuntimeError):
    pass


class LimitExceeded(ExecutionError):
    def __init__(self, limit: str, value):
        self.limit = limit
        super().__init__(f"limit exceeded: {limit} ({value})")


class ExecTimeout(LimitExceeded):
    def __init__(self, seconds: float):
        super().__init__("timeout", f"{seconds}s")


@dataclass(frozen=True)
class ExecLimits:
    hop_cap: int = DEFAULT_HOP_CAP
    max_paths: int = 500_000
    max_rows: int = 200_000
    timeout: float = 30.0

    def __post_init__(self):
        for name in ("hop_cap", "max_paths", "max_rows", "timeout"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


# -- values ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class EntityRef:
    id: str


@dataclass(frozen=True, order=True)
class RelRef:
    src: str
    rel_type: str
    dst: str
    idx: int


@dataclass(frozen=True)
class Path:
    nodes: tuple[str, ...]
    rels: tuple[str, ...] = ()

    def __post_init__(self):
        if len(self.nodes) != len(self.rels) + 1:
            raise ValueError("a path needs exactly one more entity than relations")

    @property
    def hop_count(self) -> int:
        return len(self.rels)

    def sort_key(self):
        return (len(self.rels), self.nodes, self.rels)

    def concat(self, other: "Path") -> "Path":
        assert self.nodes[-1] == other.nodes[0]
        return Path(self.nodes + other.nodes[1:], self.rels + other.rels)


def value_key(value):
    """Total order over heterogeneous result values."""
    if value is None:
        return (0,)
    if isinstance(value, bool):
        return (1, int(value))
    if isinstance(value, (int, float)):
        return (1, value)
    if isinstance(value, str):
        return (2, value)
    if isinstance(value, EntityRef):
        return (3, value.id)
    if isinstance(value, RelRef):
        return (4, value.src, value.rel_type, value.dst, value.idx)
    if isinstance(value, Path):
        return (5,) + value.sort_key()
    if isinstance(value, (list, tuple)):
        return (6, tuple(value_key(v) for v in value))
    raise TypeError(f"unorderable value {value!r}")


def row_key(row: Sequence) -> tuple:
    return tuple(value_key(v) for v in row)


def _hashable(value):
    if isinstance(value, list):
        return tuple(_hashable(v) for v in value)
    return value


# -- result table --------------------------------------------------------------


def encode_value(value):
    if isinstance(value, EntityRef):
        return {"entity": value.id}
    if isinstance(value, RelRef):
        return {"rel": [value.src, value.rel_type, value.dst, value.idx]}
    if isinstance(value, Path):
        return {"path": {"nodes": list(value.nodes), "rels": list(value.rels)}}
    if isinstance(value, (list, tuple)):
        return [encode_value(v) for v in value]
    return value


def decode_value(data):
    if isinstance(data, dict):
        if "entity" in data:
            return EntityRef(data["entity"])
        if "rel" in data:
            return RelRef(*data["rel"])
        if "path" in data:
            return Path(tuple(data["path"]["nodes"]), tuple(data["path"]["rels"]))
        raise ValueError(f"unknown encoded value {data!r}")
    if isinstance(data, list):
        return [decode_value(v) for v in data]
    return data


@dataclass(frozen=True)
class ResultTable:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    stats: Mapping[str, int] = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError("row width does not match the column count")

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def empty(self) -> bool:
        return not self.rows

    def column(self, name_or_index) -> list:
        i = name_or_index if isinstance(name_or_index, int) else self.columns.index(name_or_index)
        return [row[i] for row in self.rows]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"columns": list(self.columns), "stats": dict(sorted(self.stats.items()))},
                            sort_keys=True, ensure_ascii=False)]
        lines += [json.dumps([encode_value(v) for v in row], ensure_ascii=False) for row in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "ResultTable":
        lines = text.splitlines()
        head = json.loads(lines[0])
        rows = tuple(tuple(decode_value(v) for v in json.loads(line)) for line in lines[1:] if line)
        return cls(tuple(head["columns"]), rows, head.get("stats", {}))

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode("utf-8")).hexdigest()


def display_value(graph: PropertyGraph, value) -> str:
    """Human-readable form used for step answers and context."""
    if isinstance(value, EntityRef):
        ent = graph.entities.get(value.id)
        return ent.name if ent else value.id
    if isinstance(value, RelRef):
        return value.rel_type
    if isinstance(value, Path):
        return format_path(graph, value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(display_value(graph, v) for v in value) + "]"
    if value is None:
        return "null"
    return str(value)


def format_path(graph: PropertyGraph, path: Path) -> str:
    def nm(i):
        ent = graph.entities.get(i)
        return ent.name if ent else i
    parts = [nm(path.nodes[0])]
    for rel, node in zip(path.rels, path.nodes[1:]):
        parts.append(f"-({rel})-> {nm(node)}")
    return " ".join(parts)


# -- traversal primitives ------------------------------------------------------


class _Budget:
    def __init__(self, limits: ExecLimits):
        self.limits = limits
        self.deadline = time.monotonic() + limits.timeout
        self.paths = 0
        self.scanned = 0

    def expand(self, n: int = 1) -> None:
        self.paths += n
        if self.paths > self.limits.max_paths:
            raise LimitExceeded("max_paths", self.limits.max_paths)
        if self.paths % 4096 == 0 and time.monotonic() > self.deadline:
            raise ExecTimeout(self.limits.timeout)

    def rows(self, n: int) -> None:
        if n > self.limits.max_rows:
            raise LimitExceeded("max_rows", self.limits.max_rows)
        if time.monotonic() > self.deadline:
            raise ExecTimeout(self.limits.timeout)


def _steps(graph: PropertyGraph, node: str, direction: str, rel_type: Optional[str],
           allowed: Optional[frozenset] = None) -> list[tuple[str, str]]:
    """Distinct ``(rel_type, neighbor)`` steps, sorted."""
    if rel_type is not None:
        edges = graph.out_typed(node, rel_type) if direction == "out" else graph.in_typed(node, rel_type)
        out = [(rel_type, other) for other, _ in edges]
    else:
        edges = graph.out_edges(node) if direction == "out" else graph.in_edges(node)
        out = [(r, other) for r, other, _ in edges]
    if allowed is not None:
        out = [s for s in out if s[0] in allowed]
    return sorted(set(out))


def expand_neighborhood(graph: PropertyGraph, entity_id: str) -> ResultTable:
    """All outgoing ``(relation, neighbor)`` pairs of one entity, sorted by ``(rel_type, dst)``."""
    graph.entity(entity_id)
    rows = tuple((RelRef(entity_id, r, dst, idx), EntityRef(dst)) for r, dst, idx in graph.out_edges(entity_id))
    return ResultTable(("p", "o"), rows, {"rows_scanned": len(rows), "paths_expanded": len(rows)})


def match_meta_path(graph: PropertyGraph, start_ids: Iterable[str], rel_chain: Sequence[str],
                    filters: Optional[Sequence[Optional[Mapping]]] = None,
                    limits: ExecLimits = ExecLimits()) -> ResultTable:
    """Distinct ``(start, terminal)`` pairs joined by exactly ``rel_chain``.

    ``filters[i]`` holds property equalities the entity reached after hop ``i``
    must satisfy.
    """
    chain = list(rel_chain)
    if not chain:
        raise ValueError("rel_chain must contain at least one relation type")
    if len(chain) > limits.hop_cap:
        raise LimitExceeded("hop_cap", limits.hop_cap)
    known = {r.rel_type for r in graph.relations}
    for rel in chain:
        if rel not in known:
            raise ExecutionError(f"unknown relation type {rel!r}")
    filters = list(filters or [])
    filters += [None] * (len(chain) - len(filters))
    budget = _Budget(limits)
    frontier: set[tuple[str, str]] = set()
    for s in start_ids:
        graph.entity(s)
        frontier.add((s, s))
    for rel, flt in zip(chain, filters):
        nxt = set()
        for s, u in frontier:
            for v, _ in graph.out_typed(u, rel):
                budget.expand()
                if flt and any(graph.entities[v].prop(k) != want for k, want in flt.items()):
                    continue
                nxt.add((s, v))
        frontier = nxt
    rows = tuple(sorted(((EntityRef(s), EntityRef(o)) for s, o in frontier), key=row_key))
    return ResultTable(("s", "o"), rows, {"rows_scanned": len(rows), "paths_expanded": budget.paths})


def _distances_to(graph: PropertyGraph, dst: str, max_hops: int,
                  allowed: Optional[frozenset]) -> dict[str, int]:
    """Hop distance from every entity to ``dst`` along outgoing edges (BFS on reversed edges)."""
    dist = {dst: 0}
    queue = deque([dst])
    while queue:
        v = queue.popleft()
        if dist[v] >= max_hops:
            continue
        for rel, u, _ in graph.in_edges(v):
            if allowed is not None and rel not in allowed:
                continue
            if u not in dist:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def iter_simple_paths(graph: PropertyGraph, src: str, dst: Optional[str], min_hops: int, max_hops: int,
                      allowed: Optional[frozenset] = None, budget: Optional[_Budget] = None,
                      direction: str = "out") -> Iterator[Path]:
    """Simple paths from ``src`` in (hop count, entity ids, rel types) order.

    With ``dst`` None every endpoint is accepted. Enumeration is level by
    level: for each hop count, a depth-first walk visits neighbours in id
    order; relation-type combinations of one entity sequence are expanded in
    lexicographic order.
    """
    if budget is None:
        budget = _Budget(ExecLimits(hop_cap=max(max_hops, 1)))
    dist = _distances_to(graph, dst, max_hops, allowed) if dst is not None and direction == "out" else None
    if dst is not None and dist is not None and src not in dist:
        return
    for hops in range(min_hops, max_hops + 1):
        if hops == 0:
            if dst is None or src == dst:
                yield Path((src,))
            continue
        yield from _level(graph, src, dst, hops, allowed, budget, dist, direction)


def _level(graph, src, dst, hops, allowed, budget, dist, direction) -> Iterator[Path]:
    seq = [src]
    on_path = {src}

    def types_between(u, v):
        return sorted({r for r, o in _steps(graph, u, direction, None, allowed) if o == v})

    def rec(depth: int) -> Iterator[Path]:
        u = seq[-1]
        if depth == hops:
            if dst is None or u == dst:
                combos = [types_between(a, b) for a, b in zip(seq, seq[1:])]
                for rels in itertools.product(*combos):
                    yield Path(tuple(seq), tuple(rels))
            return
        remaining = hops - depth - 1
        for v in sorted({o for _, o in _steps(graph, u, direction, None, allowed)}):
            if v in on_path:
                continue
            if dst is not None:
                if v == dst and remaining > 0:
                    continue
                if dist is not None and dist.get(v, hops + 1) > remaining:
                    continue
            budget.expand()
            seq.append(v)
            on_path.add(v)
            yield from rec(depth + 1)
            seq.pop()
            on_path.discard(v)

    yield from rec(0)


def k_shortest_paths(graph: PropertyGraph, src_id: str, dst_id: str, k: int = DEFAULT_K,
                     rel_constraint: Optional[Callable[[tuple[str, ...]], bool]] = None,
                     limits: ExecLimits = ExecLimits(), min_hops: int = 0, max_hops: Optional[int] = None,
                     path_filter: Optional[Callable[[Path], bool]] = None,
                     allowed_rels: Optional[Iterable[str]] = None) -> list[Path]:
    """Up to ``k`` simple paths from ``src_id`` to ``dst_id``.

    Ordered by hop count, then entity-id sequence, then relation-type
    sequence. ``rel_constraint`` sees the relation-type sequence and
    ``path_filter`` the whole path; only qualifying paths count toward ``k``.
    ``allowed_rels`` prunes the search to edges of those types.
    """
    graph.entity(src_id)
    graph.entity(dst_id)
    if k < 1:
        raise ValueError("k must be at least 1")
    cap = limits.hop_cap if max_hops is None else max_hops
    if cap > limits.hop_cap:
        raise LimitExceeded("hop_cap", limits.hop_cap)
    allowed = frozenset(allowed_rels) if allowed_rels is not None else None
    budget = _Budget(limits)
    out: list[Path] = []
    for path in iter_simple_paths(graph, src_id, dst_id, min_hops, cap, allowed, budget):
        if rel_constraint is not None and not rel_constraint(path.rels):
            continue
        if path_filter is not None and not path_filter(path):
            continue
        out.append(path)
        if len(out) >= k:
            break
    return out


# -- expression evaluation -----------------------------------------------------


class _Evaluator:
    def __init__(self, graph: PropertyGraph, params: Mapping):
        self.graph = graph
        self.params = params

    def __call__(self, expr, env: Mapping, group: Optional[list] = None):
        g = self.graph
        if isinstance(expr, Literal):
            return expr.value
        if isinstance(expr, ListLiteral):
            return [self(i, env, group) for i in expr.items]
        if isinstance(expr, Param):
            if expr.name not in self.params:
                raise ExecutionError(f"missing parameter ${expr.name}")
            return self.params[expr.name]
        if isinstance(expr, Var):
            if expr.name not in env:
                raise ExecutionError(f"unknown variable {expr.name!r}")
            return env[expr.name]
        if isinstance(expr, Prop):
            if expr.var not in env:
                raise ExecutionError(f"unknown variable {expr.var!r}")
            val = env[expr.var]
            if isinstance(val, EntityRef):
                return g.entities[val.id].prop(expr.key)
            if isinstance(val, RelRef):
                return g.relations[val.idx].attrs.get(expr.key)
            return None
        if isinstance(expr, Func):
            arg = self(expr.args[0], env, group)
            return self.func(expr.name, arg)
        if isinstance(expr, Count):
            if group is None:
                raise ExecutionError("COUNT outside WITH/RETURN")
            if expr.arg is None:
                return len(group)
            vals = [self(expr.arg, row) for row in group]
            vals = [_hashable(v) for v in vals if v is not None]
            return len(set(vals)) if expr.distinct else len(vals)
        if isinstance(expr, Compare):
            return _compare(expr.op, self(expr.left, env, group), self(expr.right, env, group))
        if isinstance(expr, BoolOp):
            if expr.op == "AND":
                return all(self(o, env, group) is True for o in expr.operands)
            return any(self(o, env, group) is True for o in expr.operands)
        if isinstance(expr, Not):
            return self(expr.operand, env, group) is not True
        if isinstance(expr, ListPredicate):
            items = self(expr.source, env, group)
            if not isinstance(items, list):
                return False
            results = [self(expr.predicate, {**env, expr.var: item}, group) is True for item in items]
            if expr.kind == "ALL":
                return all(results)
            if expr.kind == "ANY":
                return any(results)
            return not any(results)
        raise ExecutionError(f"cannot evaluate {expr!r}")

    def func(self, name: str, arg):
        if name == "type":
            return arg.rel_type if isinstance(arg, RelRef) else None
        if name == "length":
            if isinstance(arg, Path):
                return arg.hop_count
            if isinstance(arg, (list, str)):
                return len(arg)
            return None
        if name == "nodes":
            return [EntityRef(n) for n in arg.nodes] if isinstance(arg, Path) else None
        if name == "relationships":
            if isinstance(arg, Path):
                return [RelRef(a, r, b, self.graph.edge_index(a, r, b))
                        for a, r, b in zip(arg.nodes, arg.rels, arg.nodes[1:])]
            if isinstance(arg, list):
                return arg
            return None
        raise ExecutionError(f"unknown function {name}()")


def _compare(op: str, a, b) -> bool:
    if op == "IN":
        return isinstance(b, list) and a is not None and _hashable(a) in [_hashable(x) for x in b]
    if a is None or b is None:
        return False
    if op == "=":
        return _hashable(a) == _hashable(b)
    if op == "<>":
        return _hashable(a) != _hashable(b)
    num = (int, float)
    if not ((isinstance(a, num) and isinstance(b, num)) or (isinstance(a, str) and isinstance(b, str))):
        return False
    return {"<": a < b, "<=": a <= b, ">": a > b, ">=": a >= b}[op]


# -- pattern matching ----------------------------------------------------------


def _allowed_from_where(expr, path_var: Optional[str], edge_var: Optional[str]) -> Optional[frozenset]:
    """Relation types a SHORTEST search may use, read from ``ALL(r IN relationships(P) WHERE type(r) IN [..])``."""
    conjuncts = expr.operands if isinstance(expr, BoolOp) and expr.op == "AND" else (expr,)
    for c in conjuncts:
        if not (isinstance(c, ListPredicate) and c.kind == "ALL"):
            continue
        src = c.source
        ok_src = (isinstance(src, Func) and src.name == "relationships" and isinstance(src.args[0], Var)
                  and src.args[0].name == path_var) or (isinstance(src, Var) and src.name == edge_var)
        pred = c.predicate
        if not (ok_src and isinstance(pred, Compare) and isinstance(pred.left, Func)
                and pred.left.name == "type" and isinstance(pred.left.args[0], Var)
                and pred.left.args[0].name == c.var):
            continue
        if pred.op == "=" and isinstance(pred.right, Literal):
            return frozenset([pred.right.value])
        if pred.op == "IN" and isinstance(pred.right, ListLiteral) and all(
                isinstance(i, Literal) for i in pred.right.items):
            return frozenset(i.value for i in pred.right.items)
    return None


class _Matcher:
    def __init__(self, graph: PropertyGraph, ev: _Evaluator, budget: _Budget, limits: ExecLimits):
        self.g = graph
        self.ev = ev
        self.budget = budget
        self.limits = limits

    def node_ok(self, node: NodePattern, eid: str, env: Mapping) -> bool:
        ent = self.g.entities[eid]
        if node.label is not None and ent.type != node.label:
            return False
        for key, vexpr in node.props:
            want = self.ev(vexpr, env)
            if not _compare("=", ent.prop(key), want):
                return False
        if node.var is not None and node.var in env:
            bound = env[node.var]
            if not (isinstance(bound, EntityRef) and bound.id == eid):
                return False
        return True

    def candidates(self, node: NodePattern, env: Mapping) -> list[str]:
        if node.var is not None and node.var in env:
            bound = env[node.var]
            if not isinstance(bound, EntityRef):
                return []
            ids = [bound.id]
        else:
            props = dict(node.props)
            if "id" in props:
                want = self.ev(props["id"], env)
                ids = [want] if isinstance(want, str) and want in self.g.entities else []
            elif "name" in props:
                want = self.ev(props["name"], env)
                ids = list(self.g.name_index.get(normalize_name(want), ())) if isinstance(want, str) else []
            elif node.label is not None:
                ids = list(self.g.ids_of_type(node.label))
            else:
                ids = sorted(self.g.entities)
        return [i for i in ids if self.node_ok(node, i, env)]

    def selectivity(self, node: NodePattern, env: Mapping) -> int:
        if node.var is not None and node.var in env:
            return 0
        keys = {k for k, _ in node.props}
        if "id" in keys:
            return 1
        if "name" in keys:
            return 2
        if node.label is not None:
            return 3
        return 4

    def segment_paths(self, u: str, edge: EdgePattern, allowed=None) -> Iterator[Path]:
        lo, hi = edge.hops
        hi = self.limits.hop_cap if hi is None else hi
        if hi > self.limits.hop_cap:
            raise LimitExceeded("hop_cap", self.limits.hop_cap)
        types = allowed
        if edge.rel_type is not None:
            types = frozenset([edge.rel_type]) if allowed is None else allowed & {edge.rel_type}
        yield from iter_simple_paths(self.g, u, None, lo, hi, types, self.budget, edge.direction)

    def bind_edge(self, env: dict, edge: EdgePattern, value) -> bool:
        if edge.var is None:
            return True
        if edge.var in env:
            return env[edge.var] == value
        env[edge.var] = value
        return True

    def _raw_edges(self, u: str, edge: EdgePattern) -> list[tuple[str, str, int]]:
        """Every relation leaving ``u`` in the edge's direction; parallel edges stay distinct."""
        if edge.rel_type is not None:
            typed = self.g.out_typed(u, edge.rel_type) if edge.direction == "out" else self.g.in_typed(u, edge.rel_type)
            return [(edge.rel_type, v, idx) for v, idx in typed]
        return list(self.g.out_edges(u) if edge.direction == "out" else self.g.in_edges(u))

    def rel_ref(self, a: str, rel: str, b: str, direction: str) -> RelRef:
        if direction == "out":
            return RelRef(a, rel, b, self.g.edge_index(a, rel, b))
        return RelRef(b, rel, a, self.g.edge_index(b, rel, a))

    def match_path(self, pattern: PathPattern, env: Mapping, path_var: Optional[str]) -> Iterator[dict]:
        """Extend ``env`` with every match of one path pattern."""
        ordered_vars = any(e.var_length and e.var for e in pattern.edges)
        if path_var is None and not ordered_vars and self.selectivity(pattern.nodes[-1], env) < self.selectivity(pattern.nodes[0], env):
            pattern = pattern.reversed()
        for start in self.candidates(pattern.nodes[0], env):
            env0 = dict(env)
            if pattern.nodes[0].var is not None:
                env0[pattern.nodes[0].var] = EntityRef(start)
            for out_env, path in self._extend(pattern, 0, start, env0, Path((start,))):
                if path_var is not None:
                    out_env[path_var] = path
                yield out_env

    def _extend(self, pattern: PathPattern, i: int, u: str, env: dict, path: Path) -> Iterator[tuple[dict, Path]]:
        if i == len(pattern.edges):
            yield env, path
            return
        edge, node = pattern.edges[i], pattern.nodes[i + 1]
        if not edge.var_length:
            for rel, v, idx in self._raw_edges(u, edge):
                self.budget.expand()
                if not self.node_ok(node, v, env):
                    continue
                env2 = dict(env)
                ref = RelRef(u, rel, v, idx) if edge.direction == "out" else RelRef(v, rel, u, idx)
                if not self.bind_edge(env2, edge, ref):
                    continue
                if node.var is not None:
                    env2[node.var] = EntityRef(v)
                yield from self._extend(pattern, i + 1, v, env2, path.concat(Path((u, v), (rel,))))
            return
        for seg in self.segment_paths(u, edge):
            v = seg.nodes[-1]
            if not self.node_ok(node, v, env):
                continue
            env2 = dict(env)
            rels = [self.rel_ref(a, r, b, edge.direction) for a, r, b in zip(seg.nodes, seg.rels, seg.nodes[1:])]
            if not self.bind_edge(env2, edge, rels):
                continue
            if node.var is not None:
                env2[node.var] = EntityRef(v)
            yield from self._extend(pattern, i + 1, v, env2, path.concat(seg))

    def match_shortest(self, clause: Match, env: Mapping, where) -> Iterator[dict]:
        pattern = clause.patterns[0]
        var_edges = [i for i, e in enumerate(pattern.edges) if e.var_length]
        if len(pattern.edges) != 1 or len(var_edges) != 1:
            raise ExecutionError("SHORTEST supports exactly one variable-length relationship")
        edge = pattern.edges[0]
        if edge.direction == "in":
            pattern = pattern.reversed()
            edge = pattern.edges[0]
        a, b = pattern.nodes
        lo, hi = edge.hops
        hi = self.limits.hop_cap if hi is None else hi
        if hi > self.limits.hop_cap:
            raise LimitExceeded("hop_cap", self.limits.hop_cap)
        allowed = _allowed_from_where(where.expr, clause.path_var, edge.var) if where is not None else None
        if edge.rel_type is not None:
            allowed = frozenset([edge.rel_type]) if allowed is None else allowed & {edge.rel_type}
        for s in self.candidates(a, env):
            env_s = dict(env)
            if a.var is not None:
                env_s[a.var] = EntityRef(s)
            for o in self.candidates(b, env_s):
                base = dict(env_s)
                if b.var is not None:
                    base[b.var] = EntityRef(o)

                def bind(path: Path) -> Optional[dict]:
                    env2 = dict(base)
                    rels = [RelRef(x, r, y, self.g.edge_index(x, r, y))
                            for x, r, y in zip(path.nodes, path.rels, path.nodes[1:])]
                    if edge.direction == "in":
                        path = Path(tuple(reversed(path.nodes)), tuple(reversed(path.rels)))
                    if not self.bind_edge(env2, edge, rels):
                        return None
                    if clause.path_var is not None:
                        env2[clause.path_var] = path
                    return env2

                found = 0
                for path in iter_simple_paths(self.g, s, o, lo, hi, allowed, self.budget):
                    env2 = bind(path)
                    if env2 is None:
                        continue
                    if where is not None and self.ev(where.expr, env2) is not True:
                        continue
                    yield env2
                    found += 1
                    if found >= clause.shortest:
                        break


# -- query execution -----------------------------------------------------------


def _project(ev: _Evaluator, items: Sequence[Projection], envs: list[dict], distinct: bool
             ) -> tuple[list[str], list[tuple], list[dict]]:
    """Rows plus the scope each row was produced in (for ORDER BY)."""
    columns = [p.column for p in items]
    if any(has_aggregate(p.expr) for p in items):
        keys = [p for p in items if not has_aggregate(p.expr)]
        groups: dict[tuple, list[dict]] = {}
        for env in envs:
            k = tuple(_hashable(ev(p.expr, env)) for p in keys)
            groups.setdefault(k, []).append(env)
        if not keys and not groups:
            groups[()] = []
        rows, scopes = [], []
        for members in groups.values():
            first = members[0] if members else {}
            row = tuple(ev(p.expr, first, members) for p in items)
            rows.append(row)
            scopes.append({**first, **dict(zip(columns, row))})
    else:
        rows = [tuple(ev(p.expr, env) for p in items) for env in envs]
        scopes = [{**env, **dict(zip(columns, row))} for env, row in zip(envs, rows)]
    if distinct:
        seen, r2, s2 = set(), [], []
        for row, scope in zip(rows, scopes):
            h = tuple(_hashable(v) for v in row)
            if h in seen:
                continue
            seen.add(h)
            r2.append(row)
            s2.append(scope)
        rows, scopes = r2, s2
    return columns, rows, scopes


def _sort(ev: _Evaluator, rows: list[tuple], scopes: list[dict], order_by) -> tuple[list, list]:
    pairs = sorted(zip(rows, scopes), key=lambda rs: row_key(rs[0]))
    for item in reversed(order_by or ()):
        pairs.sort(key=lambda rs: value_key(ev(item.expr, rs[1])), reverse=item.descending)
    return [p[0] for p in pairs], [p[1] for p in pairs]


def execute(graph: PropertyGraph, query: CypherQuery, limits: ExecLimits = ExecLimits(),
            params: Optional[Mapping] = None) -> ResultTable:
    ev = _Evaluator(graph, params or {})
    budget = _Budget(limits)
    matcher = _Matcher(graph, ev, budget, limits)
    envs: list[dict] = [{}]
    clauses = list(query.clauses)
    i = 0
    while i < len(clauses):
        clause = clauses[i]
        if isinstance(clause, Match):
            where = None
            if clause.shortest is not None and i + 1 < len(clauses) and isinstance(clauses[i + 1], Where):
                where = clauses[i + 1]
                i += 1
            nxt: list[dict] = []
            for env in envs:
                if clause.shortest is not None:
                    nxt.extend(matcher.match_shortest(clause, env, where))
                else:
                    partial = [env]
                    for pattern in clause.patterns:
                        partial = [e2 for e in partial for e2 in matcher.match_path(pattern, e, clause.path_var)]
                        budget.rows(len(partial))
                    nxt.extend(partial)
                budget.rows(len(nxt))
            envs = nxt
            budget.scanned += len(envs)
        elif isinstance(clause, Where):
            envs = [e for e in envs if ev(clause.expr, e) is True]
        elif isinstance(clause, With):
            columns, rows, scopes = _project(ev, clause.projections, envs, clause.distinct)
            if clause.order_by:
                rows, scopes = _sort(ev, rows, scopes, clause.order_by)
            envs = [dict(zip(columns, row)) for row in rows]
        elif isinstance(clause, Return):
            columns, rows, scopes = _project(ev, clause.projections, envs, clause.distinct)
            rows, scopes = _sort(ev, rows, scopes, clause.order_by)
            if clause.limit is not None:
                rows = rows[:clause.limit]
            stats = {"rows_scanned": budget.scanned, "paths_expanded": budget.paths}
            return ResultTable(tuple(columns), tuple(rows), stats)
        i += 1
    raise ExecutionError("query has no RETURN clause")
