"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import os
import random

import networkx as nx

from kgplan.graph_store import Entity, PropertyGraph, Relation
from kgplan.llm import Cassette, DenyNetworkBackend, LLMGateway

HERE = os.path.dirname(os.path.abspath(__file__))
CASSETTE_DIR = os.path.join(HERE, "fixtures", "cassettes")


def cassette_path(name: str) -> str:
    return os.path.join(CASSETTE_DIR, f"{name}.jsonl")


def replay_gateway(name: str) -> LLMGateway:
    """Replay-only gateway: any request missing from the cassette fails, nothing reaches a network."""
    return LLMGateway(DenyNetworkBackend(), mode="replay", cassette=Cassette.load(cassette_path(name)))


def random_graph(rng: random.Random, max_nodes: int = 50, max_edges: int = 200,
                 rel_types=("a", "b", "c"), min_nodes: int = 2) -> PropertyGraph:
    n = rng.randint(min_nodes, max_nodes)
    m = rng.randint(0, max_edges)
    ents = [Entity(f"n{i:02d}", rng.choice(("X", "Y")), f"node {i}") for i in range(n)]
    rels = [Relation(f"n{rng.randrange(n):02d}", rng.choice(rel_types), f"n{rng.randrange(n):02d}")
            for _ in range(m)]
    return PropertyGraph(ents, rels)


def oracle_simple_paths(graph: PropertyGraph, src: str, dst: str, cap: int) -> list[tuple]:
    """Every simple src->dst path of at most ``cap`` hops, as (nodes, rels), in (length, lexicographic) order.

    Enumerated by networkx over a multigraph keyed on relation type, fully
    independent of the executor's level-wise search.
    """
    g = nx.MultiDiGraph()
    g.add_nodes_from(graph.entities)
    for r in graph.relations:
        g.add_edge(r.src, r.dst, key=r.rel_type)
    if src == dst:
        return [((src,), ())]
    found = set()
    for edges in nx.all_simple_edge_paths(g, src, dst, cutoff=cap):
        nodes = (src,) + tuple(v for _, v, _ in edges)
        found.add((nodes, tuple(k for _, _, k in edges)))
    return sorted(found, key=lambda p: (len(p[1]), p[0], p[1]))


def brute_meta_path(graph: PropertyGraph, starts, chain) -> set[tuple[str, str]]:
    """(start, end) pairs reachable by exactly ``chain``, by scanning the raw relation list each hop."""
    out = set()
    for s in starts:
        frontier = {s}
        for rel in chain:
            frontier = {r.dst for r in graph.relations if r.rel_type == rel and r.src in frontier}
        out |= {(s, o) for o in frontier}
    return out
