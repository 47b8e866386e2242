import pytest

from kgplan.benchgen import bundled_templates
from kgplan.taxonomy import (SPO, SPX, SXO, SXX, BasicPattern, Nested, TraversalStrategy, UnknownTemplateError,
                             classify_templated, execution_order, is_basic, nested_shapes, parse_pattern,
                             pattern_name, strategy_for)


@pytest.mark.parametrize("pattern, strategy", [
    (SXX, TraversalStrategy.BFS_NEIGHBOR_EXPANSION),
    (SPX, TraversalStrategy.META_PATH_WALK),
    (SXO, TraversalStrategy.TOP_K_SHORTEST_PATHS),
    (SPO, TraversalStrategy.TOP_K_CONSTRAINED_SHORTEST_PATHS),
])
def test_strategy_table(pattern, strategy):
    assert strategy_for(pattern) is strategy
    assert strategy_for(pattern.value) is strategy


def test_table_is_a_bijection():
    assert len({strategy_for(p) for p in BasicPattern}) == 4


def test_nested_has_no_single_strategy():
    with pytest.raises(ValueError):
        strategy_for(Nested(SXO, (SPX, SPX)))


def test_nested_inners_must_be_spx():
    with pytest.raises(ValueError):
        Nested(SXO, (SXX,))
    with pytest.raises(ValueError):
        Nested(SXO, ())


def test_nested_shapes_and_names():
    shapes = nested_shapes()
    assert len(shapes) == 4
    assert {outer for outer, _ in shapes} == set(BasicPattern)
    for _, inners in shapes:
        assert set(inners) == {SPX}
    n = Nested(SXO, (SPX, SPX))
    assert pattern_name(n) == "nested" and str(n) == "nested"
    assert not is_basic(n) and is_basic(SXO)


def test_execution_order_puts_inners_first():
    assert execution_order(Nested(SXO, (SPX, SPX))) == [SPX, SPX, SXO]
    assert execution_order(SPO) == [SPO]


@pytest.mark.parametrize("text, expected", [("s**", SXX), ("SPX", SPX), (" s*o ", SXO), ("spo", SPO)])
def test_parse_pattern(text, expected):
    assert parse_pattern(text) is expected


def test_parse_nested_round_trip():
    n = Nested(SPX, (SPX,))
    assert parse_pattern(n.to_json()) == n
    with pytest.raises(ValueError):
        parse_pattern("xyz")


def test_templated_classification_never_needs_a_model():
    templates = {t.id: t for t in bundled_templates("academia")}
    tid = next(iter(templates))
    assert classify_templated({"template_id": tid}, templates) == templates[tid].pattern
    with pytest.raises(UnknownTemplateError):
        classify_templated({"template_id": "missing"}, templates)
