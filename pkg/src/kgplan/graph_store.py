"""In-memory property graph: loading, inverse edges, schema extraction, lookups.

Graphs are immutable once built. ``materialize_inverses`` returns a new graph.
"""

from __future__ import annotations

import io
import json
import os
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping, Optional, Union

Scalar = Union[str, int, float]
Source = Union[str, os.PathLike, Iterable[str], io.TextIOBase, None]

INVERSE_PREFIX = "inv_"


class GraphLoadError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None, source: str = ""):
        self.line = line
        self.source = source
        where = ""
        if source:
            where = f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class UnknownEntityError(KeyError):
    def __init__(self, entity_id: str):
        self.entity_id = entity_id
        super().__init__(entity_id)

    def __str__(self) -> str:
        return f"unknown entity id {self.entity_id!r}"


@dataclass(frozen=True)
class Entity:
    id: str
    type: str
    name: str
    attrs: Mapping[str, Scalar] = field(default_factory=dict)

    def prop(self, key: str):
        if key == "id":
            return self.id
        if key == "name":
            return self.name
        return self.attrs.get(key)


@dataclass(frozen=True)
class Relation:
    src: str
    rel_type: str
    dst: str
    attrs: Mapping[str, Scalar] = field(default_factory=dict)
    # True for edges added by materialize_inverses.
    inferred: bool = False


def normalize_name(name: str) -> str:
    return " ".join(name.lower().split())


def _scalar_type(value: Scalar) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not supported attribute values")
    if isinstance(value, int):
        return "int"
    if isinstance(value, float):
        return "float"
    if isinstance(value, str):
        return "str"
    raise TypeError(f"unsupported attribute value {value!r}")


class InverseHint:
    """Declared inverse relation names.

    Entries are either untyped (``rel -> inverse`` regardless of endpoint
    types) or typed on the forward edge's ``(src_type, rel, dst_type)``. Typed
    entries win; they are needed when one relation name has different inverses
    depending on the endpoints (academia: ``paper`` is the inverse of both
    ``author`` and ``venue``).
    """

    def __init__(self) -> None:
        self._typed: dict[tuple[str, str, str], str] = {}
        self._untyped: dict[str, str] = {}

    def add(self, rel: str, inverse: str, src_type: Optional[str] = None,
            dst_type: Optional[str] = None) -> None:
        if (src_type is None) != (dst_type is None):
            raise ValueError("typed inverse hints need both src_type and dst_type")
        if src_type is None:
            for a, b in ((rel, inverse), (inverse, rel)):
                prev = self._untyped.get(a)
                if prev is not None and prev != b:
                    raise ValueError(f"conflicting inverse hints for {a!r}: {prev!r} vs {b!r}")
                self._untyped[a] = b
        else:
            for key, b in (((src_type, rel, dst_type), inverse), ((dst_type, inverse, src_type), rel)):
                prev = self._typed.get(key)
                if prev is not None and prev != b:
                    raise ValueError(f"conflicting inverse hints for {key!r}: {prev!r} vs {b!r}")
                self._typed[key] = b

    def lookup(self, src_type: str, rel: str, dst_type: str) -> Optional[str]:
        hit = self._typed.get((src_type, rel, dst_type))
        if hit is not None:
            return hit
        return self._untyped.get(rel)

    def __bool__(self) -> bool:
        return bool(self._typed or self._untyped)

    def records(self) -> list[dict]:
        out = [{"rel": r, "inverse": i} for r, i in sorted(self._untyped.items()) if r <= i]
        for (s, r, d), i in sorted(self._typed.items()):
            if (s, r, d) <= (d, i, s):
                out.append({"src_type": s, "rel": r, "dst_type": d, "inverse": i})
        return out

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "InverseHint":
        hint = cls()
        for rec in records:
            hint.add(rec["rel"], rec["inverse"], rec.get("src_type"), rec.get("dst_type"))
        return hint

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "InverseHint":
        hint = cls()
        for rel, inverse in mapping.items():
            hint.add(rel, inverse)
        return hint


def default_inverse_name(rel: str) -> str:
    if rel.startswith(INVERSE_PREFIX) and len(rel) > len(INVERSE_PREFIX):
        return rel[len(INVERSE_PREFIX):]
    return INVERSE_PREFIX + rel


InverseNaming = Callable[[str, str, str], str]


def naming_rule(hint: Optional[InverseHint]) -> InverseNaming:
    def name(src_type: str, rel: str, dst_type: str) -> str:
        if hint:
            hit = hint.lookup(src_type, rel, dst_type)
            if hit is not None:
                return hit
        return default_inverse_name(rel)
    return name


class PropertyGraph:
    """Typed entities plus directed typed relations.

    Adjacency lists are sorted by ``(rel_type, dst id)`` and hold relation
    indices into :attr:`relations`.
    """

    def __init__(self, entities: Iterable[Entity], relations: Iterable[Relation],
                 inverse_hint: Optional[InverseHint] = None):
        self.entities: dict[str, Entity] = {}
        for ent in entities:
            if ent.id in self.entities:
                raise ValueError(f"duplicate entity id {ent.id!r}")
            if not ent.type:
                raise ValueError(f"entity {ent.id!r} has an empty type")
            self.entities[ent.id] = ent
        self.relations: tuple[Relation, ...] = tuple(relations)
        self.inverse_hint = inverse_hint or InverseHint()

        out: dict[str, list[tuple[str, str, int]]] = defaultdict(list)
        inc: dict[str, list[tuple[str, str, int]]] = defaultdict(list)
        for idx, rel in enumerate(self.relations):
            for end in (rel.src, rel.dst):
                if end not in self.entities:
                    raise UnknownEntityError(end)
            if not rel.rel_type:
                raise ValueError(f"relation #{idx} has an empty rel_type")
            out[rel.src].append((rel.rel_type, rel.dst, idx))
            inc[rel.dst].append((rel.rel_type, rel.src, idx))
        self._out = {k: tuple(sorted(v)) for k, v in out.items()}
        self._in = {k: tuple(sorted(v)) for k, v in inc.items()}

        by_type: dict[tuple[str, str], list[tuple[str, int]]] = defaultdict(list)
        by_type_in: dict[tuple[str, str], list[tuple[str, int]]] = defaultdict(list)
        for src, edges in self._out.items():
            for rel_type, dst, idx in edges:
                by_type[(src, rel_type)].append((dst, idx))
        for dst, edges in self._in.items():
            for rel_type, src, idx in edges:
                by_type_in[(dst, rel_type)].append((src, idx))
        self._out_typed = {k: tuple(v) for k, v in by_type.items()}
        self._in_typed = {k: tuple(v) for k, v in by_type_in.items()}

        names: dict[str, list[str]] = defaultdict(list)
        types: dict[str, list[str]] = defaultdict(list)
        for ent in self.entities.values():
            names[normalize_name(ent.name)].append(ent.id)
            types[ent.type].append(ent.id)
        self.name_index = {k: tuple(sorted(v)) for k, v in names.items()}
        self._by_type = {k: tuple(sorted(v)) for k, v in types.items()}
        self._triples = frozenset((r.src, r.rel_type, r.dst) for r in self.relations)

    def __repr__(self) -> str:
        return f"PropertyGraph({len(self.entities)} entities, {len(self.relations)} relations)"

    def entity(self, entity_id: str) -> Entity:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise UnknownEntityError(entity_id) from None

    def __contains__(self, entity_id: str) -> bool:
        return entity_id in self.entities

    def out_edges(self, entity_id: str) -> tuple[tuple[str, str, int], ...]:
        """``(rel_type, dst, relation index)`` triples leaving ``entity_id``."""
        return self._out.get(entity_id, ())

    def in_edges(self, entity_id: str) -> tuple[tuple[str, str, int], ...]:
        """``(rel_type, src, relation index)`` triples entering ``entity_id``."""
        return self._in.get(entity_id, ())

    def out_typed(self, entity_id: str, rel_type: str) -> tuple[tuple[str, int], ...]:
        return self._out_typed.get((entity_id, rel_type), ())

    def in_typed(self, entity_id: str, rel_type: str) -> tuple[tuple[str, int], ...]:
        return self._in_typed.get((entity_id, rel_type), ())

    def ids_of_type(self, label: str) -> tuple[str, ...]:
        return self._by_type.get(label, ())

    def has_edge(self, src: str, rel_type: str, dst: str) -> bool:
        return (src, rel_type, dst) in self._triples

    def edge_index(self, src: str, rel_type: str, dst: str) -> int:
        """Index of the first relation ``(src, rel_type, dst)``."""
        for d, idx in self.out_typed(src, rel_type):
            if d == dst:
                return idx
        raise KeyError((src, rel_type, dst))

    def inverse_name(self, src_type: str, rel: str, dst_type: str) -> str:
        return naming_rule(self.inverse_hint)(src_type, rel, dst_type)


# -- loading -----------------------------------------------------------------

def _iter_lines(source: Source) -> tuple[str, Iterator[str]]:
    if source is None:
        return "", iter(())
    if isinstance(source, (str, os.PathLike)):
        path = os.fspath(source)

        def gen() -> Iterator[str]:
            with open(path, encoding="utf-8") as fh:
                yield from fh
        return path, gen()
    return "", iter(source)


def _records(source: Source, kind: str) -> Iterator[tuple[int, dict, str]]:
    name, lines = _iter_lines(source)
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphLoadError(f"malformed {kind} record: {exc.msg}", lineno, name) from None
        if not isinstance(rec, dict):
            raise GraphLoadError(f"malformed {kind} record: expected an object", lineno, name)
        yield lineno, rec, name


def _attrs(rec: dict, lineno: int, name: str) -> dict[str, Scalar]:
    attrs = rec.get("attrs") or {}
    if not isinstance(attrs, dict):
        raise GraphLoadError("attrs must be a flat map", lineno, name)
    for key, value in attrs.items():
        try:
            _scalar_type(value)
        except TypeError as exc:
            raise GraphLoadError(f"attribute {key!r}: {exc}", lineno, name) from None
    return dict(attrs)


def load_inverse_hint(source: Source) -> InverseHint:
    recs = []
    for lineno, rec, name in _records(source, "schema hint"):
        if "rel" not in rec or "inverse" not in rec:
            raise GraphLoadError("hint record needs 'rel' and 'inverse'", lineno, name)
        recs.append(rec)
    return InverseHint.from_records(recs)


def load_graph(nodes_source: Source, edges_source: Source,
               schema_hint: Union[InverseHint, Mapping[str, str], Source] = None) -> PropertyGraph:
    """Load a graph from line-delimited JSON node and edge records."""
    entities: dict[str, Entity] = {}
    for lineno, rec, name in _records(nodes_source, "node"):
        for req in ("id", "type"):
            if not isinstance(rec.get(req), str) or not rec[req]:
                raise GraphLoadError(f"node record missing string field {req!r}", lineno, name)
        eid = rec["id"]
        if eid in entities:
            raise GraphLoadError(f"duplicate entity id {eid!r}", lineno, name)
        ent_name = rec.get("name", eid)
        if not isinstance(ent_name, str):
            raise GraphLoadError("name must be a string", lineno, name)
        entities[eid] = Entity(eid, rec["type"], ent_name, _attrs(rec, lineno, name))

    relations: list[Relation] = []
    for lineno, rec, name in _records(edges_source, "edge"):
        for req in ("src", "rel", "dst"):
            if not isinstance(rec.get(req), str) or not rec[req]:
                raise GraphLoadError(f"edge record missing string field {req!r}", lineno, name)
        for end in ("src", "dst"):
            if rec[end] not in entities:
                raise GraphLoadError(f"edge references unknown entity {rec[end]!r}", lineno, name)
        relations.append(Relation(rec["src"], rec["rel"], rec["dst"], _attrs(rec, lineno, name)))

    if isinstance(schema_hint, InverseHint) or schema_hint is None:
        hint = schema_hint
    elif isinstance(schema_hint, Mapping):
        hint = InverseHint.from_mapping(schema_hint)
    else:
        hint = load_inverse_hint(schema_hint)
    return PropertyGraph(entities.values(), relations, hint)


def dump_nodes(graph: PropertyGraph) -> list[str]:
    lines = []
    for ent in graph.entities.values():
        rec: dict = {"id": ent.id, "type": ent.type, "name": ent.name}
        if ent.attrs:
            rec["attrs"] = dict(ent.attrs)
        lines.append(json.dumps(rec, ensure_ascii=False))
    return lines


def dump_edges(graph: PropertyGraph, include_inferred: bool = False) -> list[str]:
    lines = []
    for rel in graph.relations:
        if rel.inferred and not include_inferred:
            continue
        rec: dict = {"src": rel.src, "rel": rel.rel_type, "dst": rel.dst}
        if rel.attrs:
            rec["attrs"] = dict(rel.attrs)
        lines.append(json.dumps(rec, ensure_ascii=False))
    return lines


# -- inverse edges -----------------------------------------------------------

def materialize_inverses(graph: PropertyGraph, naming: Optional[InverseNaming] = None) -> PropertyGraph:
    """Add ``(v, inv(r), u)`` for every ``(u, r, v)`` lacking one.

    ``naming`` defaults to the graph's inverse hint, falling back to the
    ``inv_`` prefix rule. Existing edges are never duplicated, so the call is
    idempotent.
    """
    name = naming or naming_rule(graph.inverse_hint)
    present = {(r.src, r.rel_type, r.dst) for r in graph.relations}
    added: list[Relation] = []
    for rel in graph.relations:
        inv = name(graph.entities[rel.src].type, rel.rel_type, graph.entities[rel.dst].type)
        key = (rel.dst, inv, rel.src)
        if key in present:
            continue
        present.add(key)
        added.append(Relation(rel.dst, inv, rel.src, dict(rel.attrs), inferred=True))
    if not added:
        return graph
    return PropertyGraph(graph.entities.values(), graph.relations + tuple(added), graph.inverse_hint)


# -- schema ------------------------------------------------------------------

@dataclass(frozen=True)
class GraphSchema:
    # type label -> attribute name -> scalar type names seen ("str"/"int"/"float")
    entity_types: Mapping[str, Mapping[str, frozenset]]
    relation_types: tuple[tuple[str, str, str], ...]
    # (src_type, rel, dst_type) -> inverse relation name
    inverse_map: Mapping[tuple[str, str, str], str]
    relation_attrs: Mapping[str, Mapping[str, frozenset]] = field(default_factory=dict)

    @property
    def rel_type_names(self) -> tuple[str, ...]:
        return tuple(sorted({r for _, r, _ in self.relation_types}))

    def entity_properties(self, label: Optional[str] = None) -> set[str]:
        base = {"id", "name"}
        if label is None:
            for attrs in self.entity_types.values():
                base.update(attrs)
            return base
        return base | set(self.entity_types.get(label, {}))

    def property_types(self, prop: str, label: Optional[str] = None) -> set[str]:
        if prop in ("id", "name"):
            return {"str"}
        out: set[str] = set()
        labels = [label] if label is not None else list(self.entity_types)
        for lab in labels:
            out.update(self.entity_types.get(lab, {}).get(prop, ()))
        return out

    def relations_between(self, src_label: Optional[str], dst_label: Optional[str]) -> list[str]:
        return sorted({r for s, r, d in self.relation_types
                       if (src_label is None or s == src_label) and (dst_label is None or d == dst_label)})

    def to_json(self) -> dict:
        return {
            "entity_types": {t: {a: sorted(ts) for a, ts in attrs.items()}
                             for t, attrs in self.entity_types.items()},
            "relation_types": [list(t) for t in self.relation_types],
            "inverse_map": [[*k, v] for k, v in self.inverse_map.items()],
            "relation_attrs": {r: {a: sorted(ts) for a, ts in attrs.items()}
                               for r, attrs in self.relation_attrs.items()},
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "GraphSchema":
        ent = {t: {a: frozenset(ts) for a, ts in sorted(attrs.items())}
               for t, attrs in sorted(data.get("entity_types", {}).items())}
        rels = tuple(sorted(tuple(t) for t in data.get("relation_types", [])))
        inv = {tuple(row[:3]): row[3] for row in data.get("inverse_map", [])}
        rattrs = {r: {a: frozenset(ts) for a, ts in attrs.items()}
                  for r, attrs in data.get("relation_attrs", {}).items()}
        return cls(ent, rels, dict(sorted(inv.items())), rattrs)

    def describe(self) -> str:
        """Plain-text schema listing used in prompts."""
        lines = ["Entity types:"]
        for label, attrs in self.entity_types.items():
            props = ", ".join(sorted({"id", "name"} | set(attrs)))
            lines.append(f"- {label} (properties: {props})")
        lines.append("Relation types:")
        for s, r, d in self.relation_types:
            lines.append(f"- ({s})-[:{r}]->({d})")
        return "\n".join(lines)


def schema_of(graph: PropertyGraph) -> GraphSchema:
    ent: dict[str, dict[str, set]] = {}
    for e in graph.entities.values():
        slot = ent.setdefault(e.type, {})
        for key, value in e.attrs.items():
            slot.setdefault(key, set()).add(_scalar_type(value))
    triples: set[tuple[str, str, str]] = set()
    rattrs: dict[str, dict[str, set]] = {}
    for r in graph.relations:
        triples.add((graph.entities[r.src].type, r.rel_type, graph.entities[r.dst].type))
        slot = rattrs.setdefault(r.rel_type, {})
        for key, value in r.attrs.items():
            slot.setdefault(key, set()).add(_scalar_type(value))
    name = naming_rule(graph.inverse_hint)
    inv = {t: name(*t) for t in sorted(triples)}
    return GraphSchema(
        entity_types={t: {a: frozenset(ts) for a, ts in sorted(attrs.items())}
                      for t, attrs in sorted(ent.items())},
        relation_types=tuple(sorted(triples)),
        inverse_map=inv,
        relation_attrs={r: {a: frozenset(ts) for a, ts in sorted(attrs.items())}
                        for r, attrs in sorted(rattrs.items())},
    )


# -- lookups -----------------------------------------------------------------

def neighbors(graph: PropertyGraph, entity_id: str,
              rel_filter: Optional[Iterable[str]] = None) -> list[tuple[str, Mapping[str, Scalar], Entity]]:
    """Outgoing ``(rel_type, relation attrs, neighbor)`` ordered by ``(rel_type, dst id)``."""
    graph.entity(entity_id)
    allowed = None if rel_filter is None else set(rel_filter)
    out = []
    for rel_type, dst, idx in graph.out_edges(entity_id):
        if allowed is not None and rel_type not in allowed:
            continue
        out.append((rel_type, graph.relations[idx].attrs, graph.entities[dst]))
    return out


def resolve_entity(graph: PropertyGraph, name: str, type_hint: Optional[str] = None) -> list[str]:
    ids = graph.name_index.get(normalize_name(name), ())
    if type_hint is not None:
        ids = tuple(i for i in ids if graph.entities[i].type == type_hint)
    return list(ids)
