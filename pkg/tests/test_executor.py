import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from helpers import oracle_simple_paths, random_graph
from kgplan import demo
from kgplan.cypher import parse
from kgplan.executor import (EntityRef, ExecLimits, ExecutionError, LimitExceeded, Path, RelRef,
                             expand_neighborhood, execute, k_shortest_paths, match_meta_path)


def run(graph, text, **kw):
    return execute(graph, parse(text), **kw)


def test_summer_olympics_twice(olympics_graph):
    q = ("MATCH (src:Event {name: 'Summer Olympics'})-[:held_in]->(dst:City) "
         "WITH DISTINCT dst, COUNT(dst) AS count WHERE count == 2 RETURN dst.name")
    assert run(olympics_graph, q).rows == (("London",),)


def test_neighbourhood_query_equals_expansion(newton_graph):
    via_query = run(newton_graph, "MATCH (s {id: 'IN'})-[p]->(o) RETURN p, o")
    direct = expand_neighborhood(newton_graph, "IN")
    assert via_query.columns == direct.columns == ("p", "o")
    assert sorted(via_query.rows) == sorted(direct.rows)
    assert {o.id for _, o in direct.rows} == {"1643", "UG"}
    assert all(isinstance(p, RelRef) for p, _ in direct.rows)


def test_meta_path_with_filter(science_graph):
    res = match_meta_path(science_graph, ["UG"], ["developer", "influenced_by"])
    assert res.rows == ((EntityRef("UG"), EntityRef("GG")),)
    res = match_meta_path(science_graph, ["UG", "TR"], ["developer"], filters=[{"nationality": "German"}])
    assert res.rows == ((EntityRef("TR"), EntityRef("AE")),)


def test_meta_path_errors(science_graph):
    with pytest.raises(ExecutionError):
        match_meta_path(science_graph, ["UG"], ["nope"])
    with pytest.raises(ValueError):
        match_meta_path(science_graph, ["UG"], [])
    with pytest.raises(LimitExceeded):
        match_meta_path(science_graph, ["UG"], ["developer"] * 6)


def test_shortest_query_matches_function(science_graph):
    res = run(science_graph, "MATCH P = SHORTEST 3 (s {id: 'IN'})-[*]->(o {id: 'AE'}) RETURN P")
    paths = [row[0] for row in res.rows]
    assert paths == k_shortest_paths(science_graph, "IN", "AE", 3)
    assert paths[0] == Path(("IN", "AE"), ("inv_influenced_by",))
    assert [p.hop_count for p in paths] == sorted(p.hop_count for p in paths)


def test_constrained_shortest_query(science_graph):
    q = ("MATCH P = SHORTEST 10 (s {id: 'IN'})-[*]->(o {id: 'AE'}) "
         "WHERE ALL(r IN relationships(P) WHERE type(r) = 'field' OR type(r) = 'inv_field') RETURN P")
    paths = [row[0] for row in run(science_graph, q).rows]
    assert paths == [Path(("IN", "PH", "AE"), ("field", "inv_field"))]


def test_limit_order_and_count(olympics_graph):
    q = "MATCH (e:Edition)-[:host_city]->(c) RETURN e.year ORDER BY e.year DESC LIMIT 2"
    assert run(olympics_graph, q).rows == ((1964,), (1952,))
    assert run(olympics_graph, "MATCH (e:Edition) RETURN COUNT(e)").rows == ((6,),)


def test_params(science_graph):
    res = run(science_graph, "MATCH (s {id: $x})-[:developer]->(o) RETURN o.name", params={"x": "TR"})
    assert res.rows == (("Albert Einstein",),)
    with pytest.raises(ExecutionError):
        run(science_graph, "MATCH (s {id: $x})-[:developer]->(o) RETURN o.name")


def test_hop_cap_enforced(science_graph):
    with pytest.raises(LimitExceeded):
        run(science_graph, "MATCH (s)-[*1..9]->(o) RETURN o")
    with pytest.raises(LimitExceeded):
        k_shortest_paths(science_graph, "IN", "AE", 3, max_hops=6)


def test_path_budget_enforced(science_graph):
    with pytest.raises(LimitExceeded):
        run(science_graph, "MATCH (s)-[*1..5]->(o) RETURN o", limits=ExecLimits(max_paths=5))


def test_limits_validate():
    with pytest.raises(ValueError):
        ExecLimits(hop_cap=0)


def test_path_invariants():
    with pytest.raises(ValueError):
        Path(("a", "b"), ())
    assert Path(("a",)).hop_count == 0


# -- properties against brute force -------------------------------------------


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from(["a", "b", "c"]))
def test_distinct_and_count_match_brute_force(seed, rel):
    g = random_graph(random.Random(seed), max_nodes=15, max_edges=50)
    edges = [(r.src, r.dst) for r in g.relations if r.rel_type == rel]
    res = run(g, f"MATCH (x)-[:{rel}]->(y) RETURN DISTINCT x.id, y.id")
    assert sorted(res.rows) == sorted(set(edges))
    assert len(set(res.rows)) == len(res.rows)
    # parallel edges each bind once without DISTINCT
    res = run(g, f"MATCH (x)-[:{rel}]->(y) RETURN x.id, y.id")
    assert Counter(res.rows) == Counter(edges)
    counts = run(g, f"MATCH (x)-[:{rel}]->(y) RETURN x.id, COUNT(y) AS n")
    assert dict(counts.rows) == dict(Counter(s for s, _ in edges))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.integers(0, 12))
def test_limit_is_a_prefix(seed, limit):
    g = random_graph(random.Random(seed), max_nodes=12, max_edges=40)
    full = run(g, "MATCH (x)-[r]->(y) RETURN x.id, y.id ORDER BY y.id")
    cut = run(g, f"MATCH (x)-[r]->(y) RETURN x.id, y.id ORDER BY y.id LIMIT {limit}")
    assert cut.rows == full.rows[:limit]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 100_000), st.sampled_from([1, 3, 10]))
def test_constrained_paths_match_filtered_oracle(seed, k):
    rng = random.Random(seed)
    g = random_graph(rng, max_nodes=12, max_edges=40)
    ids = sorted(g.entities)
    src, dst = rng.choice(ids), rng.choice(ids)
    keep = lambda rels: "a" in rels
    want = [p for p in oracle_simple_paths(g, src, dst, 5) if keep(p[1])][:k]
    got = [(p.nodes, p.rels) for p in k_shortest_paths(g, src, dst, k, rel_constraint=keep)]
    assert got == want


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_shortest_paths_are_simple_and_ordered(seed):
    rng = random.Random(seed)
    g = random_graph(rng, max_nodes=20, max_edges=60)
    ids = sorted(g.entities)
    src, dst = rng.choice(ids), rng.choice(ids)
    paths = k_shortest_paths(g, src, dst, 10)
    assert paths == sorted(paths, key=Path.sort_key)
    for p in paths:
        assert len(set(p.nodes)) == len(p.nodes)
        assert p.nodes[0] == src and p.nodes[-1] == dst
        for a, r, b in zip(p.nodes, p.rels, p.nodes[1:]):
            assert g.has_edge(a, r, b)


def test_results_are_deterministic(academia_fixture):
    q = "MATCH (a:author)-[:paper]->(p)-[:venue]->(v) RETURN DISTINCT a.name, v.name"
    assert run(academia_fixture, q).rows == run(academia_fixture, q).rows
    assert run(academia_fixture, q).digest() == run(academia_fixture, q).digest()


def test_fixture_graph_names():
    for name in ("newton", "science", "olympics", "academia"):
        assert demo.fixture_graph(name).entities
