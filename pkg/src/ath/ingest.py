"""Normalized file formats, box geometry and scene-graph construction.

All files are single JSON documents carrying ``schema_version`` and
``kind``. Layouts are documented in ``docs/formats.md``. Oracle graphs are
built from annotations with one-hot distributions; predicted layers come
from detection files; a :class:`GraphRecipe` mixes the two per layer.
"""

from __future__ import annotations

import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .errors import IngestError, ParseError
from .graph import (
    MAX_PREDICTED_OBJECTS,
    OBJECTS,
    RELATIONS,
    BoundingBox,
    CategoricalDist,
    ObjectNode,
    RelationEdge,
    SceneGraph,
    Vocabulary,
    attr_slice,
    natural_key,
)
from .opseq import OperationRegistry, OpSeq, parse_opseq

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
IOU_MATCH = 0.5
EXPANSION = 0.15
CATEGORIES = ("Q", "A", "FA")
ALL = "Q+A+FA"


def write_json(path, data: Any) -> None:
    text = json.dumps(data, indent=1, ensure_ascii=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_document(path, kind: str) -> dict | None:
    """Read a versioned document; None (with a warning) for an empty file."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(p, "<file>", str(exc)) from None
    if not text.strip():
        log.warning("%s is empty", p)
        return None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise IngestError(p, "<file>", f"invalid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise IngestError(p, "<root>", "expected a JSON object")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise IngestError(p, "schema_version", f"expected {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    if data.get("kind") != kind:
        raise IngestError(p, "kind", f"expected {kind!r}, got {data.get('kind')!r}")
    return data


def _get(obj: Mapping, key: str, path, where: str, typ=None):
    if not isinstance(obj, Mapping) or key not in obj:
        raise IngestError(path, f"{where}.{key}", "missing")
    val = obj[key]
    if typ is not None and not isinstance(val, typ):
        raise IngestError(path, f"{where}.{key}", f"expected {getattr(typ, '__name__', typ)}")
    return val


def _bbox(raw, path, where: str) -> BoundingBox:
    try:
        x1, y1, x2, y2 = (float(v) for v in raw)
        return BoundingBox(x1, y1, x2, y2)
    except (TypeError, ValueError) as exc:
        raise IngestError(path, where, f"bad bounding box {raw!r}: {exc}") from None


# --- vocabulary -----------------------------------------------------------


def load_vocabulary(path) -> Vocabulary:
    data = read_document(path, "vocabulary")
    if data is None:
        raise IngestError(path, "<file>", "empty vocabulary file")
    try:
        return Vocabulary.from_json(data)
    except (KeyError, ValueError) as exc:
        raise IngestError(path, "vocabulary", str(exc)) from None


def save_vocabulary(path, vocab: Vocabulary) -> None:
    write_json(path, {"schema_version": SCHEMA_VERSION, "kind": "vocabulary", **vocab.to_json()})


# --- distributions --------------------------------------------------------


def dist_to_json(dist: CategoricalDist, vocab: Vocabulary) -> dict:
    out: dict[str, Any] = {"probs": {vocab.name(dist.slice, i): p for i, p in dist.probs}}
    if dist.truncated:
        out["truncated"] = True
        out["other"] = dist.other
    return out


def dist_from_json(raw, slice_name: str, vocab: Vocabulary, path, where: str) -> CategoricalDist:
    probs = _get(raw, "probs", path, where, Mapping)
    try:
        items = {vocab.index(slice_name, name): float(p) for name, p in probs.items()}
        return CategoricalDist(
            slice_name,
            tuple(items.items()),
            truncated=bool(raw.get("truncated", False)),
            other=float(raw.get("other", 0.0)),
        )
    except (KeyError, ValueError) as exc:
        raise IngestError(path, where, str(exc)) from None


# --- serialized scene graphs ---------------------------------------------


def graph_to_json(g: SceneGraph) -> dict:
    v = g.vocab
    return {
        "image_id": g.image_id,
        "width": g.width,
        "height": g.height,
        "provenance": dict(g.provenance),
        "nodes": [
            {
                "id": n.id,
                "bbox": list(n.bbox.as_tuple()),
                "class": dist_to_json(n.class_dist, v),
                "attributes": {c: dist_to_json(d, v) for c, d in n.attr_dists.items()},
            }
            for n in g.nodes
        ],
        "edges": [{"src": e.src, "dst": e.dst, "rel": dist_to_json(e.rel_dist, v)} for e in g.edges],
    }


def graph_from_json(raw: Mapping, vocab: Vocabulary, path, where: str = "graph") -> SceneGraph:
    nodes = []
    for k, rn in enumerate(_get(raw, "nodes", path, where, list)):
        w = f"{where}.nodes[{k}]"
        attrs = {
            c: dist_from_json(d, attr_slice(c), vocab, path, f"{w}.attributes.{c}")
            for c, d in rn.get("attributes", {}).items()
        }
        nodes.append(
            ObjectNode(
                str(_get(rn, "id", path, w)),
                _bbox(_get(rn, "bbox", path, w), path, f"{w}.bbox"),
                dist_from_json(_get(rn, "class", path, w), OBJECTS, vocab, path, f"{w}.class"),
                attrs,
            )
        )
    edges = []
    for k, re_ in enumerate(raw.get("edges", [])):
        w = f"{where}.edges[{k}]"
        edges.append(
            RelationEdge(
                str(_get(re_, "src", path, w)),
                str(_get(re_, "dst", path, w)),
                dist_from_json(_get(re_, "rel", path, w), RELATIONS, vocab, path, f"{w}.rel"),
            )
        )
    try:
        return SceneGraph(
            str(_get(raw, "image_id", path, where)),
            float(_get(raw, "width", path, where)),
            float(_get(raw, "height", path, where)),
            tuple(nodes),
            tuple(edges),
            vocab,
            raw.get("provenance", {"objects": "oracle", "attributes": "oracle", "relationships": "oracle"}),
        )
    except ValueError as exc:
        raise IngestError(path, where, str(exc)) from None


def save_graphs(path, graphs: Iterable[SceneGraph]) -> None:
    write_json(
        path,
        {"schema_version": SCHEMA_VERSION, "kind": "scene_graphs", "graphs": [graph_to_json(g) for g in graphs]},
    )


def load_graphs(path, vocab: Vocabulary) -> dict[str, SceneGraph]:
    data = read_document(path, "scene_graphs")
    if data is None:
        return {}
    out = {}
    for k, raw in enumerate(_get(data, "graphs", path, "<root>", list)):
        g = graph_from_json(raw, vocab, path, f"graphs[{k}]")
        out[g.image_id] = g
    return out


# --- annotations ----------------------------------------------------------


@dataclass(frozen=True)
class AnnotatedObject:
    id: str
    name: str
    bbox: BoundingBox
    attributes: tuple[str, ...] = ()
    relations: tuple[tuple[str, str], ...] = ()  # (relation name, target object id)


@dataclass(frozen=True)
class AnnotatedImage:
    image_id: str
    width: float
    height: float
    objects: tuple[AnnotatedObject, ...]

    def object(self, obj_id: str) -> AnnotatedObject:
        for o in self.objects:
            if o.id == obj_id:
                return o
        raise KeyError(obj_id)


def load_annotations(path) -> dict[str, AnnotatedImage]:
    data = read_document(path, "annotations")
    if data is None:
        return {}
    out = {}
    for k, raw in enumerate(_get(data, "images", path, "<root>", list)):
        where = f"images[{k}]"
        objs = []
        for j, ro in enumerate(_get(raw, "objects", path, where, list)):
            w = f"{where}.objects[{j}]"
            rels = tuple(
                (str(_get(r, "name", path, f"{w}.relations")), str(_get(r, "object", path, f"{w}.relations")))
                for r in ro.get("relations", [])
            )
            objs.append(
                AnnotatedObject(
                    str(_get(ro, "id", path, w)),
                    str(_get(ro, "name", path, w)),
                    _bbox(_get(ro, "bbox", path, w), path, f"{w}.bbox"),
                    tuple(ro.get("attributes", [])),
                    rels,
                )
            )
        img = AnnotatedImage(
            str(_get(raw, "image_id", path, where)),
            float(_get(raw, "width", path, where)),
            float(_get(raw, "height", path, where)),
            tuple(objs),
        )
        ids = {o.id for o in img.objects}
        if len(ids) != len(img.objects):
            raise IngestError(path, f"{where}.objects", "duplicate object id")
        for o in img.objects:
            for rel, target in o.relations:
                if target not in ids:
                    raise IngestError(path, f"{where}.objects[{o.id}].relations", f"dangling target {target!r}")
        out[img.image_id] = img
    return out


def annotations_to_json(images: Iterable[AnnotatedImage]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "annotations",
        "images": [
            {
                "image_id": img.image_id,
                "width": img.width,
                "height": img.height,
                "objects": [
                    {
                        "id": o.id,
                        "name": o.name,
                        "bbox": list(o.bbox.as_tuple()),
                        "attributes": list(o.attributes),
                        "relations": [{"name": r, "object": t} for r, t in o.relations],
                    }
                    for o in img.objects
                ],
            }
            for img in images
        ],
    }


def oracle_attr_dists(obj: AnnotatedObject, vocab: Vocabulary) -> dict[str, CategoricalDist]:
    """One-hot per annotated category; several members become uniform."""
    by_cat: dict[str, list[int]] = defaultdict(list)
    for a in obj.attributes:
        cat = vocab.category_of(a)
        by_cat[cat].append(vocab.index(attr_slice(cat), a))
    return {c: CategoricalDist.uniform(attr_slice(c), idx) for c, idx in sorted(by_cat.items(), key=lambda kv: vocab.categories.index(kv[0]))}


def _uniform_relations(names: Sequence[str], vocab: Vocabulary) -> CategoricalDist:
    return CategoricalDist.uniform(RELATIONS, [vocab.index(RELATIONS, r) for r in names])


def oracle_graph(img: AnnotatedImage, vocab: Vocabulary, path="<annotations>") -> SceneGraph:
    where = f"images[{img.image_id}]"
    try:
        nodes = [
            ObjectNode(o.id, o.bbox, CategoricalDist.one_hot(OBJECTS, vocab.index(OBJECTS, o.name)), oracle_attr_dists(o, vocab))
            for o in sorted(img.objects, key=lambda o: natural_key(o.id))
        ]
        rels: dict[tuple[str, str], list[str]] = defaultdict(list)
        for o in img.objects:
            for r, t in o.relations:
                if t == o.id:
                    continue
                if r not in rels[(o.id, t)]:
                    rels[(o.id, t)].append(r)
        edges = [RelationEdge(s, d, _uniform_relations(names, vocab)) for (s, d), names in rels.items()]
        return SceneGraph(img.image_id, img.width, img.height, tuple(nodes), tuple(edges), vocab)
    except (KeyError, ValueError) as exc:
        raise IngestError(path, where, str(exc)) from None


def load_scene_graph_annotations(path, vocab: Vocabulary) -> dict[str, SceneGraph]:
    return {k: oracle_graph(img, vocab, path) for k, img in load_annotations(path).items()}


# --- questions ------------------------------------------------------------


@dataclass(frozen=True)
class InferenceObject:
    id: str
    bbox: BoundingBox


@dataclass(frozen=True)
class QuestionRecord:
    question_id: str
    image_id: str
    question: str
    words: tuple[str, ...]
    answer: str
    full_answer: str
    opseq: str
    qtype: str  # "binary" | "open"
    refs: Mapping[str, tuple[InferenceObject, ...]] = field(default_factory=dict)
    gold: OpSeq | None = field(default=None, compare=False)
    parse_error: str | None = field(default=None, compare=False)

    def category_refs(self, category: str) -> tuple[InferenceObject, ...]:
        if category == ALL:
            seen: dict[str, InferenceObject] = {}
            for c in CATEGORIES:
                for o in self.refs.get(c, ()):
                    seen.setdefault(o.id, o)
            return tuple(seen.values())
        return tuple(self.refs.get(category, ()))


def load_questions(path, registry: OperationRegistry | None = None) -> list[QuestionRecord]:
    from .tokens import question_words

    data = read_document(path, "questions")
    if data is None:
        return []
    out = []
    for k, rq in enumerate(_get(data, "questions", path, "<root>", list)):
        w = f"questions[{k}]"
        qtype = _get(rq, "type", path, w, str)
        if qtype not in ("binary", "open"):
            raise IngestError(path, f"{w}.type", f"must be 'binary' or 'open', got {qtype!r}")
        lines = _get(rq, "opseq", path, w)
        text = lines if isinstance(lines, str) else "\n".join(lines)
        refs = {}
        for cat, objs in rq.get("refs", {}).items():
            if cat not in CATEGORIES:
                raise IngestError(path, f"{w}.refs", f"unknown category {cat!r}")
            refs[cat] = tuple(
                InferenceObject(str(_get(o, "id", path, f"{w}.refs.{cat}")), _bbox(_get(o, "bbox", path, f"{w}.refs.{cat}"), path, f"{w}.refs.{cat}"))
                for o in objs
            )
        qid = str(_get(rq, "question_id", path, w))
        question = str(_get(rq, "question", path, w))
        gold, err = None, None
        if registry is not None:
            try:
                gold = parse_opseq(text, registry, qid)
            except ParseError as exc:
                err = str(exc)
        out.append(
            QuestionRecord(
                qid,
                str(_get(rq, "image_id", path, w)),
                question,
                tuple(question_words(question)),
                str(_get(rq, "answer", path, w)),
                str(rq.get("full_answer", "")),
                text,
                qtype,
                refs,
                gold,
                err,
            )
        )
    return out


def questions_to_json(records: Iterable[QuestionRecord]) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "questions",
        "questions": [
            {
                "question_id": r.question_id,
                "image_id": r.image_id,
                "question": r.question,
                "answer": r.answer,
                "full_answer": r.full_answer,
                "type": r.qtype,
                "opseq": r.opseq.splitlines(),
                "refs": {c: [{"id": o.id, "bbox": list(o.bbox.as_tuple())} for o in objs] for c, objs in r.refs.items()},
            }
            for r in records
        ],
    }


# --- detections -----------------------------------------------------------


@dataclass(frozen=True)
class DetectedObject:
    bbox: BoundingBox
    class_dist: CategoricalDist
    attr_dists: Mapping[str, CategoricalDist] | None = None


@dataclass(frozen=True)
class DetectionRecord:
    image_id: str
    width: float
    height: float
    objects: tuple[DetectedObject, ...]
    relations: tuple[tuple[int, int, CategoricalDist], ...] | None = None

    def node_id(self, k: int) -> str:
        return f"d{k}"


def load_detections(path, vocab: Vocabulary, max_objects: int = MAX_PREDICTED_OBJECTS) -> dict[str, DetectionRecord]:
    data = read_document(path, "detections")
    if data is None:
        return {}
    out = {}
    for k, raw in enumerate(_get(data, "images", path, "<root>", list)):
        where = f"images[{k}]"
        objs_raw = _get(raw, "objects", path, where, list)
        if len(objs_raw) > max_objects:
            raise IngestError(path, f"{where}.objects", f"{len(objs_raw)} objects exceed the cap of {max_objects}")
        objs = []
        for j, ro in enumerate(objs_raw):
            w = f"{where}.objects[{j}]"
            attrs = None
            if "attributes" in ro:
                attrs = {
                    c: dist_from_json(d, attr_slice(c), vocab, path, f"{w}.attributes.{c}")
                    for c, d in ro["attributes"].items()
                }
            objs.append(
                DetectedObject(
                    _bbox(_get(ro, "bbox", path, w), path, f"{w}.bbox"),
                    dist_from_json(_get(ro, "class", path, w), OBJECTS, vocab, path, f"{w}.class"),
                    attrs,
                )
            )
        rels = None
        if "relations" in raw:
            rels = []
            for j, rr in enumerate(raw["relations"]):
                w = f"{where}.relations[{j}]"
                s, d = int(_get(rr, "src", path, w)), int(_get(rr, "dst", path, w))
                if not (0 <= s < len(objs) and 0 <= d < len(objs)) or s == d:
                    raise IngestError(path, w, f"bad endpoints {s}->{d}")
                rels.append((s, d, dist_from_json(_get(rr, "rel", path, w), RELATIONS, vocab, path, f"{w}.rel")))
            rels = tuple(rels)
        rec = DetectionRecord(
            str(_get(raw, "image_id", path, where)),
            float(_get(raw, "width", path, where)),
            float(_get(raw, "height", path, where)),
            tuple(objs),
            rels,
        )
        out[rec.image_id] = rec
    return out


def detections_to_json(records: Iterable[DetectionRecord], vocab: Vocabulary) -> dict:
    images = []
    for r in records:
        img: dict[str, Any] = {
            "image_id": r.image_id,
            "width": r.width,
            "height": r.height,
            "objects": [],
        }
        for o in r.objects:
            obj: dict[str, Any] = {"bbox": list(o.bbox.as_tuple()), "class": dist_to_json(o.class_dist, vocab)}
            if o.attr_dists is not None:
                obj["attributes"] = {c: dist_to_json(d, vocab) for c, d in o.attr_dists.items()}
            img["objects"].append(obj)
        if r.relations is not None:
            img["relations"] = [{"src": s, "dst": d, "rel": dist_to_json(dist, vocab)} for s, d, dist in r.relations]
        images.append(img)
    return {"schema_version": SCHEMA_VERSION, "kind": "detections", "images": images}


# --- predicted op-seqs and thresholds -------------------------------------


def load_opseqs(path) -> dict[str, str]:
    data = read_document(path, "opseqs")
    if data is None:
        return {}
    raw = _get(data, "opseqs", path, "<root>", Mapping)
    return {str(k): v if isinstance(v, str) else "\n".join(v) for k, v in raw.items()}


def save_opseqs(path, seqs: Mapping[str, str]) -> None:
    write_json(
        path,
        {"schema_version": SCHEMA_VERSION, "kind": "opseqs", "opseqs": {k: v.splitlines() for k, v in seqs.items()}},
    )


def load_threshold(path):
    from .executor import VerifyThreshold

    data = read_document(path, "threshold")
    if data is None:
        raise IngestError(path, "<file>", "empty threshold file")
    try:
        return VerifyThreshold(float(data["value"]), data.get("dev_id"), data.get("f1"))
    except (KeyError, ValueError) as exc:
        raise IngestError(path, "value", str(exc)) from None


def save_threshold(path, threshold) -> None:
    write_json(path, {"schema_version": SCHEMA_VERSION, "kind": "threshold", **threshold.to_json()})


# --- geometry ---------------------------------------------------------------


def iou(a: BoundingBox, b: BoundingBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _overlaps(a: BoundingBox, b: BoundingBox) -> bool:
    return min(a.x2, b.x2) > max(a.x1, b.x1) and min(a.y2, b.y2) > max(a.y1, b.y1)


def candidate_pairs(nodes: Sequence, expansion: float = EXPANSION) -> list[tuple[str, str]]:
    """Ordered id pairs whose boxes overlap once each box grows by
    ``expansion`` of its own width/height on every side."""
    grown = [n.bbox.expanded(expansion) for n in nodes]
    out = []
    for i, a in enumerate(nodes):
        for j, b in enumerate(nodes):
            if i != j and _overlaps(grown[i], grown[j]):
                out.append((a.id, b.id))
    return out


def match_boxes(
    detected: Sequence[BoundingBox], annotated: Sequence[BoundingBox], threshold: float = IOU_MATCH
) -> dict[int, int]:
    """Greedy one-to-one matching by descending IoU, keeping IoU > threshold.

    Returns detection index -> annotation index. Equal IoUs resolve to the
    lower detection index, then the lower annotation index.
    """
    scored = []
    for i, d in enumerate(detected):
        for j, a in enumerate(annotated):
            v = iou(d, a)
            if v > threshold:
                scored.append((-v, i, j))
    scored.sort()
    used_d, used_a, out = set(), set(), {}
    for _, i, j in scored:
        if i not in used_d and j not in used_a:
            out[i] = j
            used_d.add(i)
            used_a.add(j)
    return out


# --- recipes ---------------------------------------------------------------


@dataclass(frozen=True)
class GraphRecipe:
    objects: str = "oracle"
    attributes: str = "oracle"
    relationships: str = "oracle"

    def __post_init__(self):
        for layer in (self.objects, self.attributes, self.relationships):
            if layer not in ("oracle", "predicted"):
                raise ValueError(f"layer source must be 'oracle' or 'predicted', got {layer!r}")
        if self.objects == "oracle" and "predicted" in (self.attributes, self.relationships):
            raise ValueError("predicted attributes/relationships need predicted objects")

    @property
    def is_oracle(self) -> bool:
        return self.objects == self.attributes == self.relationships == "oracle"

    def as_dict(self) -> dict[str, str]:
        return {"objects": self.objects, "attributes": self.attributes, "relationships": self.relationships}

    @classmethod
    def parse(cls, text: str) -> "GraphRecipe":
        """Accepts "oracle", "predicted", "obj", "obj+attr" or "o,a,r" letters (o/p)."""
        presets = {
            "oracle": cls(),
            "gqa": cls(),
            "obj": cls("predicted", "oracle", "oracle"),
            "obj+attr": cls("predicted", "predicted", "oracle"),
            "predicted": cls("predicted", "predicted", "predicted"),
            "ath": cls("predicted", "predicted", "predicted"),
        }
        key = text.strip().lower()
        if key in presets:
            return presets[key]
        parts = key.split(",")
        names = {"o": "oracle", "p": "predicted", "oracle": "oracle", "predicted": "predicted"}
        if len(parts) == 3 and all(p in names for p in parts):
            return cls(*(names[p] for p in parts))
        raise ValueError(f"unknown graph recipe {text!r}")


def build_graph(
    recipe: GraphRecipe,
    annotation: AnnotatedImage | None,
    detections: DetectionRecord | None,
    vocab: Vocabulary,
    iou_threshold: float = IOU_MATCH,
    path="<recipe>",
) -> SceneGraph:
    if recipe.is_oracle:
        if annotation is None:
            raise IngestError(path, "annotations", "oracle layers need scene-graph annotations")
        return oracle_graph(annotation, vocab, path)
    if detections is None:
        raise IngestError(path, "detections", "predicted objects need a detection record")
    needs_ann = "oracle" in (recipe.attributes, recipe.relationships)
    if needs_ann and annotation is None:
        raise IngestError(path, "annotations", "oracle attributes/relationships need annotations")
    match: dict[int, int] = {}
    if needs_ann:
        match = match_boxes([o.bbox for o in detections.objects], [o.bbox for o in annotation.objects], iou_threshold)
    ids = [detections.node_id(k) for k in range(len(detections.objects))]
    nodes = []
    try:
        for k, det in enumerate(detections.objects):
            if recipe.attributes == "predicted":
                if det.attr_dists is None:
                    raise IngestError(path, f"detections[{detections.image_id}].objects[{k}].attributes", "missing")
                attrs = dict(det.attr_dists)
            elif k in match:
                attrs = oracle_attr_dists(annotation.objects[match[k]], vocab)
            else:
                attrs = {}
            nodes.append(ObjectNode(ids[k], det.bbox, det.class_dist, attrs))
        edges = []
        if recipe.relationships == "predicted":
            if detections.relations is None:
                raise IngestError(path, f"detections[{detections.image_id}].relations", "missing")
            edges = [RelationEdge(ids[s], ids[d], dist) for s, d, dist in detections.relations]
        else:
            ann_to_det = {j: i for i, j in match.items()}
            pos = {o.id: j for j, o in enumerate(annotation.objects)}
            rels: dict[tuple[int, int], list[str]] = defaultdict(list)
            for j, o in enumerate(annotation.objects):
                for r, t in o.relations:
                    jt = pos[t]
                    if j in ann_to_det and jt in ann_to_det and jt != j and r not in rels[(ann_to_det[j], ann_to_det[jt])]:
                        rels[(ann_to_det[j], ann_to_det[jt])].append(r)
            edges = [RelationEdge(ids[s], ids[d], _uniform_relations(names, vocab)) for (s, d), names in sorted(rels.items())]
        return SceneGraph(
            detections.image_id,
            detections.width,
            detections.height,
            tuple(nodes),
            tuple(edges),
            vocab,
            recipe.as_dict(),
        )
    except (KeyError, ValueError) as exc:
        raise IngestError(path, detections.image_id, str(exc)) from None
