"""Probabilistic scene graphs and the vocabularies they index.

Every class, attribute and relationship value on a node or edge is a
:class:`CategoricalDist`: a sparse probability vector over one slice of a
:class:`Vocabulary`. Slices are named ``"objects"``, ``"relations"`` and
``"attr:<category>"``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateDistribution, UnknownVocabularyTerm

SUM_TOL = 1e-6
MAX_PREDICTED_OBJECTS = 100

OBJECTS = "objects"
RELATIONS = "relations"
ATTR_PREFIX = "attr:"


def attr_slice(category: str) -> str:
    return ATTR_PREFIX + category


@dataclass(frozen=True)
class Vocabulary:
    object_names: tuple[str, ...]
    attribute_categories: tuple[tuple[str, tuple[str, ...]], ...]
    relationship_names: tuple[str, ...]
    spatial_flags: tuple[bool, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "object_names", tuple(self.object_names))
        object.__setattr__(
            self,
            "attribute_categories",
            tuple((c, tuple(m)) for c, m in self.attribute_categories),
        )
        object.__setattr__(self, "relationship_names", tuple(self.relationship_names))
        flags = tuple(bool(f) for f in self.spatial_flags) or (False,) * len(
            self.relationship_names
        )
        object.__setattr__(self, "spatial_flags", flags)
        if len(flags) != len(self.relationship_names):
            raise ValueError("spatial_flags must align with relationship_names")
        _check_unique(self.object_names, "object name")
        _check_unique(self.relationship_names, "relationship name")
        _check_unique([c for c, _ in self.attribute_categories], "attribute category")
        # every attribute in exactly one category
        _check_unique(
            [a for _, members in self.attribute_categories for a in members],
            "attribute (across categories)",
        )

    @cached_property
    def _slices(self) -> dict[str, tuple[str, ...]]:
        out = {OBJECTS: self.object_names, RELATIONS: self.relationship_names}
        for cat, members in self.attribute_categories:
            out[attr_slice(cat)] = members
        return out

    @cached_property
    def _index(self) -> dict[str, dict[str, int]]:
        return {s: {n: i for i, n in enumerate(names)} for s, names in self._slices.items()}

    @cached_property
    def _category_of(self) -> dict[str, str]:
        return {a: c for c, members in self.attribute_categories for a in members}

    @property
    def categories(self) -> tuple[str, ...]:
        return tuple(c for c, _ in self.attribute_categories)

    @property
    def spatial_relations(self) -> tuple[str, ...]:
        return tuple(r for r, f in zip(self.relationship_names, self.spatial_flags) if f)

    def has_slice(self, slice_name: str) -> bool:
        return slice_name in self._slices

    def names(self, slice_name: str) -> tuple[str, ...]:
        try:
            return self._slices[slice_name]
        except KeyError:
            raise UnknownVocabularyTerm(f"unknown vocabulary slice {slice_name!r}") from None

    def size(self, slice_name: str) -> int:
        return len(self.names(slice_name))

    def index(self, slice_name: str, name: str) -> int:
        table = self._index.get(slice_name)
        if table is None:
            raise UnknownVocabularyTerm(f"unknown vocabulary slice {slice_name!r}")
        try:
            return table[name]
        except KeyError:
            raise UnknownVocabularyTerm(f"{name!r} is not a member of {slice_name!r}") from None

    def name(self, slice_name: str, idx: int) -> str:
        return self.names(slice_name)[idx]

    def category_of(self, attribute: str) -> str:
        try:
            return self._category_of[attribute]
        except KeyError:
            raise UnknownVocabularyTerm(f"{attribute!r} is not a known attribute") from None

    def to_json(self) -> dict:
        return {
            "objects": list(self.object_names),
            "attributes": [[c, list(m)] for c, m in self.attribute_categories],
            "relations": list(self.relationship_names),
            "spatial": [r for r, f in zip(self.relationship_names, self.spatial_flags) if f],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "Vocabulary":
        rels = list(data["relations"])
        spatial = set(data.get("spatial", ()))
        unknown = spatial - set(rels)
        if unknown:
            raise ValueError(f"spatial flags reference unknown relations: {sorted(unknown)}")
        attrs = data["attributes"]
        if isinstance(attrs, Mapping):
            attrs = list(attrs.items())
        return cls(
            object_names=tuple(data["objects"]),
            attribute_categories=tuple((c, tuple(m)) for c, m in attrs),
            relationship_names=tuple(rels),
            spatial_flags=tuple(r in spatial for r in rels),
        )


def _check_unique(items: Iterable[str], what: str) -> None:
    seen = set()
    for item in items:
        if item in seen:
            raise ValueError(f"duplicate {what}: {item!r}")
        seen.add(item)


@dataclass(frozen=True)
class CategoricalDist:
    """Sparse categorical distribution over one vocabulary slice.

    ``probs`` holds ``(index, probability)`` pairs sorted by index; absent
    indices have probability 0. A producer that kept only its top-k entries
    sets ``truncated`` and puts the dropped mass in ``other``.
    """

    slice: str
    probs: tuple[tuple[int, float], ...]
    truncated: bool = False
    other: float = 0.0

    def __post_init__(self):
        items = tuple(sorted((int(i), float(p)) for i, p in dict(self.probs).items()))
        object.__setattr__(self, "probs", items)
        if any(p < 0 or not math.isfinite(p) for _, p in items) or self.other < 0:
            raise DegenerateDistribution(f"negative or non-finite probability in {self.slice}")
        if any(i < 0 for i, _ in items):
            raise ValueError("negative class index")
        if self.other > 0 and not self.truncated:
            raise ValueError("residual 'other' mass requires truncated=True")
        total = sum(p for _, p in items) + self.other
        if abs(total - 1.0) > SUM_TOL:
            raise DegenerateDistribution(
                f"distribution over {self.slice} sums to {total!r}, not 1"
            )

    @classmethod
    def one_hot(cls, slice_name: str, idx: int) -> "CategoricalDist":
        return cls(slice_name, ((idx, 1.0),))

    @classmethod
    def uniform(cls, slice_name: str, indices: Sequence[int]) -> "CategoricalDist":
        indices = sorted(set(indices))
        if not indices:
            raise DegenerateDistribution("uniform distribution over no classes")
        p = 1.0 / len(indices)
        return cls(slice_name, tuple((i, p) for i in indices))

    @cached_property
    def as_dict(self) -> dict[int, float]:
        return dict(self.probs)

    def prob(self, idx: int) -> float:
        return self.as_dict.get(idx, 0.0)

    @property
    def is_one_hot(self) -> bool:
        return len(self.probs) == 1 and self.probs[0][1] == 1.0

    def to_dense(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        for i, p in self.probs:
            out[i] = p
        return out


def normalize_dist(raw, slice_name: str) -> CategoricalDist:
    """Scale non-negative scores so they sum to 1.

    ``raw`` is either a dense sequence indexed by class or a mapping from
    class index to score. Zero entries are dropped from the sparse result.
    """
    if isinstance(raw, Mapping):
        idx = np.fromiter(raw.keys(), dtype=int, count=len(raw))
        vals = np.fromiter(raw.values(), dtype=float, count=len(raw))
    else:
        vals = np.asarray(raw, dtype=float).ravel()
        idx = np.arange(vals.size)
    if vals.size == 0 or np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise DegenerateDistribution("scores must be finite and non-negative")
    total = vals.sum()
    if total <= 0:
        raise DegenerateDistribution("scores have empty support")
    probs = vals / total
    keep = probs > 0  # after scaling, so underflowed entries are dropped too
    return CategoricalDist(slice_name, tuple(zip(idx[keep].tolist(), probs[keep].tolist())))


def class_prob(dist: CategoricalDist, name: str, vocab: Vocabulary) -> float:
    return dist.prob(vocab.index(dist.slice, name))


def top_class(dist: CategoricalDist, vocab: Vocabulary) -> tuple[str, float]:
    """Most probable class; ties go to the lowest vocabulary index."""
    best_i, best_p = -1, 0.0
    for i, p in dist.probs:  # sorted by index, so strict > keeps the lowest
        if p > best_p:
            best_i, best_p = i, p
    if best_i < 0:
        raise DegenerateDistribution(f"no listed mass in distribution over {dist.slice}")
    return vocab.name(dist.slice, best_i), best_p


@dataclass(frozen=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"invalid box {self.as_tuple()}: need x1<x2 and y1<y2")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)

    def expanded(self, fraction: float) -> "BoundingBox":
        dx, dy = self.width * fraction, self.height * fraction
        return BoundingBox(self.x1 - dx, self.y1 - dy, self.x2 + dx, self.y2 + dy)

    def within(self, width: float, height: float) -> bool:
        return self.x1 >= 0 and self.y1 >= 0 and self.x2 <= width and self.y2 <= height


@dataclass(frozen=True)
class ObjectNode:
    id: str
    bbox: BoundingBox
    class_dist: CategoricalDist
    attr_dists: Mapping[str, CategoricalDist] = field(default_factory=dict)

    def __post_init__(self):
        if self.class_dist.slice != OBJECTS:
            raise ValueError(f"node {self.id}: class_dist must index {OBJECTS!r}")
        for cat, dist in self.attr_dists.items():
            if dist.slice != attr_slice(cat):
                raise ValueError(f"node {self.id}: attribute dist for {cat!r} indexes {dist.slice!r}")


@dataclass(frozen=True)
class RelationEdge:
    src: str
    dst: str
    rel_dist: CategoricalDist

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError(f"self-loop edge on {self.src!r}")
        if self.rel_dist.slice != RELATIONS:
            raise ValueError("rel_dist must index the relations slice")


_DIGITS = re.compile(r"(\d+)")


def natural_key(node_id: str):
    """Sort key that orders "2" before "10"."""
    return [(0, int(t), "") if t.isdigit() else (1, 0, t) for t in _DIGITS.split(node_id) if t]


@dataclass(frozen=True)
class SceneGraph:
    """Immutable scene graph.

    Node order is significant: executors break score ties in favour of the
    node listed first. Loaders list nodes in natural id order.
    """

    image_id: str
    width: float
    height: float
    nodes: tuple[ObjectNode, ...]
    edges: tuple[RelationEdge, ...]
    vocab: Vocabulary = field(repr=False)
    provenance: Mapping[str, str] = field(
        default_factory=lambda: {"objects": "oracle", "attributes": "oracle", "relationships": "oracle"}
    )

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "provenance", dict(self.provenance))
        for layer in ("objects", "attributes", "relationships"):
            if self.provenance.get(layer) not in ("oracle", "predicted"):
                raise ValueError(f"provenance[{layer!r}] must be 'oracle' or 'predicted'")
        ids = [n.id for n in self.nodes]
        _check_unique(ids, "node id")
        known = set(ids)
        pairs = set()
        for e in self.edges:
            if e.src not in known or e.dst not in known:
                raise ValueError(f"edge {e.src}->{e.dst} references a missing node")
            if (e.src, e.dst) in pairs:
                raise ValueError(f"duplicate edge {e.src}->{e.dst}")
            pairs.add((e.src, e.dst))
        if self.provenance["objects"] == "predicted" and len(self.nodes) > MAX_PREDICTED_OBJECTS:
            raise ValueError(f"predicted graph has {len(self.nodes)} > {MAX_PREDICTED_OBJECTS} nodes")
        for n in self.nodes:
            self._check_dist(n.class_dist)
            for d in n.attr_dists.values():
                self._check_dist(d)
        for e in self.edges:
            self._check_dist(e.rel_dist)

    def _check_dist(self, dist: CategoricalDist) -> None:
        size = self.vocab.size(dist.slice)
        if dist.probs and dist.probs[-1][0] >= size:
            raise ValueError(f"class index out of range for slice {dist.slice!r}")

    @cached_property
    def node_index(self) -> dict[str, int]:
        return {n.id: i for i, n in enumerate(self.nodes)}

    @cached_property
    def edge_map(self) -> dict[tuple[str, str], RelationEdge]:
        return {(e.src, e.dst): e for e in self.edges}

    def node(self, node_id: str) -> ObjectNode:
        return self.nodes[self.node_index[node_id]]

    def edge(self, src: str, dst: str) -> RelationEdge | None:
        return self.edge_map.get((src, dst))
