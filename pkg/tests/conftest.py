from __future__ import annotations

import sys

import numpy as np
import pytest

from ath.graph import (
    OBJECTS,
    RELATIONS,
    BoundingBox,
    CategoricalDist,
    ObjectNode,
    RelationEdge,
    SceneGraph,
    Vocabulary,
    attr_slice,
    normalize_dist,
)
from ath.opseq import default_registry
from ath.synthetic import SyntheticConfig, generate

VOCAB = Vocabulary(
    ("table", "chair", "cup", "dog", "cat", "man"),
    (("color", ("red", "blue", "green", "brown")), ("material", ("wooden", "metal"))),
    ("on", "holding", "near", "to the left of"),
    (True, False, True, True),
)


def dist(slice_name: str, mapping: dict[str, float], vocab: Vocabulary = VOCAB) -> CategoricalDist:
    return normalize_dist({vocab.index(slice_name, k): v for k, v in mapping.items()}, slice_name)


def node(node_id: str, cls: dict[str, float], attrs: dict[str, dict[str, float]] | None = None, box=None) -> ObjectNode:
    k = int("".join(c for c in node_id if c.isdigit()) or 0)
    box = box or BoundingBox(10.0 * k, 0.0, 10.0 * k + 8.0, 8.0)
    return ObjectNode(
        node_id,
        box,
        dist(OBJECTS, cls),
        {c: dist(attr_slice(c), d) for c, d in (attrs or {}).items()},
    )


def edge(src: str, dst: str, rels: dict[str, float]) -> RelationEdge:
    return RelationEdge(src, dst, dist(RELATIONS, rels))


def scene(nodes, edges=(), image_id: str = "img") -> SceneGraph:
    return SceneGraph(image_id, 200.0, 100.0, tuple(nodes), tuple(edges), VOCAB)


def random_graph(rng: np.random.Generator, n_nodes: int, vocab: Vocabulary = VOCAB, sparsity: float = 0.3) -> SceneGraph:
    """Graph with random, valid (sum-to-one) distributions, some exact zeros."""

    def rand(size):
        p = rng.dirichlet(np.ones(size))
        p[rng.random(size) < sparsity] = 0.0
        if p.sum() == 0:
            p[rng.integers(size)] = 1.0
        return p / p.sum()

    nodes = []
    for k in range(n_nodes):
        attrs = {}
        for cat, members in vocab.attribute_categories:
            if rng.random() < 0.8:
                attrs[cat] = normalize_dist(rand(len(members)), attr_slice(cat))
        nodes.append(
            ObjectNode(
                f"n{k}",
                BoundingBox(10.0 * k, 0.0, 10.0 * k + 8.0, 8.0),
                normalize_dist(rand(len(vocab.object_names)), OBJECTS),
                attrs,
            )
        )
    edges = []
    for i in range(n_nodes):
        for j in range(n_nodes):
            if i != j and rng.random() < 0.5:
                edges.append(RelationEdge(f"n{i}", f"n{j}", normalize_dist(rand(len(vocab.relationship_names)), RELATIONS)))
    return SceneGraph("rand", 200.0, 100.0, tuple(nodes), tuple(edges), vocab)


@pytest.fixture
def vocab() -> Vocabulary:
    return VOCAB


@pytest.fixture
def registry():
    return default_registry(VOCAB.categories)


@pytest.fixture(scope="session")
def clean_corpus():
    return generate(SyntheticConfig(seed=1, n_images=90, questions_per_image=6, n_dev_images=10))


@pytest.fixture(scope="session")
def noisy_corpus():
    return generate(
        SyntheticConfig(
            seed=3,
            n_images=40,
            questions_per_image=6,
            n_dev_images=10,
            object_noise=0.3,
            attribute_noise=0.3,
            relation_noise=0.5,
            opseq_noise=0.05,
            lossy_rate=0.1,
        )
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.format_results():
        terminalreporter.write_line(line)
