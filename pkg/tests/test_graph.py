from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ath.errors import DegenerateDistribution, UnknownVocabularyTerm
from ath.graph import (
    OBJECTS,
    BoundingBox,
    CategoricalDist,
    SceneGraph,
    Vocabulary,
    attr_slice,
    class_prob,
    normalize_dist,
    top_class,
)

from conftest import VOCAB, dist, edge, node, scene


def test_normalize_symmetric():
    d = normalize_dist([2, 2], OBJECTS)
    assert d.to_dense(2).tolist() == [0.5, 0.5]


def test_normalize_proportional():
    d = normalize_dist([1, 3], OBJECTS)
    assert d.to_dense(2).tolist() == [0.25, 0.75]


def test_normalize_empty_support():
    with pytest.raises(DegenerateDistribution):
        normalize_dist([0, 0], OBJECTS)


@pytest.mark.parametrize("bad", [[-1, 2], [np.nan, 1], []])
def test_normalize_rejects_invalid(bad):
    with pytest.raises(DegenerateDistribution):
        normalize_dist(bad, OBJECTS)


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=30).filter(lambda v: sum(v) > 1e-9))
def test_normalize_sums_to_one(values):
    d = normalize_dist(values, OBJECTS)
    assert abs(sum(p for _, p in d.probs) - 1.0) <= 1e-6
    assert all(p > 0 for _, p in d.probs)


def test_class_prob_lookup():
    d = dist(OBJECTS, {"table": 0.7, "chair": 0.3})
    assert class_prob(d, "table", VOCAB) == pytest.approx(0.7)


def test_class_prob_absent_in_one_hot():
    d = CategoricalDist.one_hot(OBJECTS, VOCAB.index(OBJECTS, "dog"))
    assert class_prob(d, "cat", VOCAB) == 0.0


def test_class_prob_wrong_slice():
    d = dist(attr_slice("color"), {"red": 1.0})
    with pytest.raises(UnknownVocabularyTerm):
        class_prob(d, "zebra", VOCAB)


def test_top_class_unique_max():
    assert top_class(dist(OBJECTS, {"table": 0.7, "chair": 0.3}), VOCAB) == ("table", pytest.approx(0.7))


def test_top_class_one_hot():
    assert top_class(dist(attr_slice("color"), {"red": 1.0}), VOCAB) == ("red", 1.0)


def test_top_class_tie_goes_to_lower_index():
    # "table" precedes "chair" in the vocabulary
    assert top_class(dist(OBJECTS, {"chair": 0.5, "table": 0.5}), VOCAB) == ("table", 0.5)


def test_top_class_empty_support():
    d = CategoricalDist(OBJECTS, (), truncated=True, other=1.0)
    with pytest.raises(DegenerateDistribution):
        top_class(d, VOCAB)


def test_dist_must_sum_to_one():
    with pytest.raises(DegenerateDistribution):
        CategoricalDist(OBJECTS, ((0, 0.5), (1, 0.4)))


def test_truncated_dist_keeps_residual():
    d = CategoricalDist(OBJECTS, ((0, 0.6), (1, 0.3)), truncated=True, other=0.1)
    assert d.prob(2) == 0.0
    assert top_class(d, VOCAB)[0] == "table"


def test_other_mass_requires_truncated_flag():
    with pytest.raises(ValueError):
        CategoricalDist(OBJECTS, ((0, 0.9),), other=0.1)


def test_uniform_dist():
    d = CategoricalDist.uniform(attr_slice("color"), [2, 0])
    assert d.probs == ((0, 0.5), (2, 0.5))


def test_vocabulary_rejects_shared_attribute():
    with pytest.raises(ValueError):
        Vocabulary(("a",), (("c1", ("x",)), ("c2", ("x",))), ("r",))


def test_vocabulary_round_trip_json():
    assert Vocabulary.from_json(VOCAB.to_json()) == VOCAB


def test_vocabulary_lookup():
    assert VOCAB.category_of("wooden") == "material"
    assert VOCAB.names(attr_slice("color"))[0] == "red"
    assert VOCAB.spatial_relations == ("on", "near", "to the left of")
    with pytest.raises(UnknownVocabularyTerm):
        VOCAB.index(OBJECTS, "zebra")


def test_bounding_box_validation():
    with pytest.raises(ValueError):
        BoundingBox(5, 0, 5, 10)
    b = BoundingBox(0, 0, 10, 20)
    assert b.area == 200
    assert b.expanded(0.15).as_tuple() == (-1.5, -3.0, 11.5, 23.0)


def test_scene_graph_rejects_dangling_edge():
    with pytest.raises(ValueError):
        scene([node("n0", {"cup": 1})], [edge("n0", "n9", {"on": 1})])


def test_scene_graph_rejects_self_loop():
    with pytest.raises(ValueError):
        edge("n0", "n0", {"on": 1})


def test_scene_graph_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        scene([node("n0", {"cup": 1}), node("n0", {"dog": 1})])


def test_predicted_graph_object_cap():
    nodes = [node(f"n{k}", {"cup": 1}) for k in range(101)]
    with pytest.raises(ValueError):
        SceneGraph("x", 10, 10, nodes, (), VOCAB, {"objects": "predicted", "attributes": "predicted", "relationships": "predicted"})
    SceneGraph("x", 10, 10, nodes[:100], (), VOCAB, {"objects": "predicted", "attributes": "predicted", "relationships": "predicted"})


def test_scene_graph_lookup():
    g = scene([node("n0", {"cup": 1}), node("n1", {"table": 1})], [edge("n0", "n1", {"on": 1})])
    assert g.node("n1").id == "n1"
    assert g.edge("n0", "n1") is not None
    assert g.edge("n1", "n0") is None
