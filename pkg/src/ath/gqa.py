"""Conversion of raw GQA scene graphs and questions into the normalized files."""

from __future__ import annotations

import json
import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .errors import IngestError, ParseError
from .graph import BoundingBox, Vocabulary
from .ingest import (
    AnnotatedImage,
    AnnotatedObject,
    InferenceObject,
    QuestionRecord,
    annotations_to_json,
    questions_to_json,
    save_vocabulary,
    write_json,
)
from .opseq import OperationRegistry, parse_opseq, scan_registry
from .tokens import ClassInventory, build_inventory, question_words

log = logging.getLogger(__name__)

_ID_SUFFIX = re.compile(r"\s*\((?:[\d,\s-]+)\)")
_CATEGORY_HEAD = re.compile(r"^(filter|verify|choose|same|different)\s+(\S+)$")
FALLBACK_CATEGORY = "other"


def _read(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(path, "<file>", str(exc)) from None


def strip_ids(argument: str) -> str:
    """Drop GQA object ids such as ``table (2309)`` from an argument."""
    return _ID_SUFFIX.sub("", argument).strip()


def semantic_lines(semantic) -> list[str]:
    out = []
    for op in semantic:
        deps = ",".join(str(d) for d in op.get("dependencies", []))
        arg = strip_ids(str(op.get("argument", "")))
        out.append(f"{op['operation']}: {arg} [{deps}]")
    return out


def _box(o: Mapping) -> BoundingBox:
    x, y, w, h = float(o["x"]), float(o["y"]), float(o["w"]), float(o["h"])
    return BoundingBox(x, y, x + max(w, 1.0), y + max(h, 1.0))


def infer_categories(raw_questions: Mapping, attributes) -> dict[str, list[str]]:
    """Assign each attribute to the category it is most often used with."""
    votes: dict[str, Counter] = defaultdict(Counter)
    for q in raw_questions.values():
        for op in q.get("semantic", []):
            m = _CATEGORY_HEAD.match(op["operation"])
            if not m or m.group(1) in ("same", "different"):
                continue
            for v in re.split(r"[|]", strip_ids(str(op.get("argument", "")))):
                v = v.strip()
                if v.startswith("not(") and v.endswith(")"):
                    v = v[4:-1]
                if v in attributes:
                    votes[v][m.group(2)] += 1
    cats: dict[str, list[str]] = defaultdict(list)
    for a in sorted(attributes):
        cat = min(votes[a], key=lambda c: (-votes[a][c], c)) if votes[a] else FALLBACK_CATEGORY
        cats[cat].append(a)
    return dict(sorted(cats.items()))


@dataclass
class ConvertedGQA:
    vocab: Vocabulary
    registry: OperationRegistry
    inventory: ClassInventory
    annotations: list[AnnotatedImage]
    questions: list[QuestionRecord]
    skipped: int

    def write(self, outdir) -> dict[str, str]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            "vocab": "vocab.json",
            "registry": "registry.json",
            "inventory": "inventory.json",
            "annotations": "annotations.json",
            "questions": "questions.json",
        }
        save_vocabulary(out / files["vocab"], self.vocab)
        self.registry.save(out / files["registry"])
        self.inventory.save(out / files["inventory"])
        write_json(out / files["annotations"], annotations_to_json(self.annotations))
        write_json(out / files["questions"], questions_to_json(self.questions))
        write_json(out / "config.json", {"schema_version": 1, "kind": "config", "paths": files})
        return {k: str(out / v) for k, v in files.items()}


def convert(
    scene_graphs_path,
    questions_path,
    category_map: Mapping[str, list[str]] | None = None,
    spatial: tuple[str, ...] = (),
) -> ConvertedGQA:
    raw_graphs = _read(scene_graphs_path)
    raw_qs = _read(questions_path)
    images = []
    objects, attributes, relations = set(), set(), set()
    for image_id in sorted(raw_graphs):
        g = raw_graphs[image_id]
        objs = []
        for oid in sorted(g.get("objects", {})):
            o = g["objects"][oid]
            rels = tuple((r["name"], str(r["object"])) for r in o.get("relations", []) if str(r["object"]) in g["objects"])
            objects.add(o["name"])
            attributes.update(o.get("attributes", []))
            relations.update(r for r, _ in rels)
            try:
                box = _box(o)
            except (KeyError, ValueError) as exc:
                raise IngestError(scene_graphs_path, f"{image_id}.objects.{oid}", str(exc)) from None
            objs.append(AnnotatedObject(str(oid), o["name"], box, tuple(o.get("attributes", [])), rels))
        images.append(AnnotatedImage(str(image_id), float(g["width"]), float(g["height"]), tuple(objs)))

    cats = dict(category_map) if category_map else infer_categories(raw_qs, attributes)
    mapped = {a for m in cats.values() for a in m}
    rest = sorted(attributes - mapped)
    if rest:
        cats.setdefault(FALLBACK_CATEGORY, [])
        cats[FALLBACK_CATEGORY] = sorted(set(cats[FALLBACK_CATEGORY]) | set(rest))
    rel_names = tuple(sorted(relations))
    vocab = Vocabulary(
        tuple(sorted(objects)),
        tuple((c, tuple(m)) for c, m in sorted(cats.items())),
        rel_names,
        tuple(r in spatial for r in rel_names),
    )

    heads: list[str] = []
    for qid in sorted(raw_qs):
        heads.extend(op["operation"] for op in raw_qs[qid].get("semantic", []))
    registry = scan_registry(heads, vocab.categories)

    by_image = {img.image_id: {o.id: o for o in img.objects} for img in images}
    records, skipped = [], 0
    for qid in sorted(raw_qs):
        q = raw_qs[qid]
        image_id = str(q["imageId"])
        if image_id not in by_image:
            skipped += 1
            continue
        text = "\n".join(semantic_lines(q.get("semantic", [])))
        gold, err = None, None
        try:
            gold = parse_opseq(text, registry, qid)
        except ParseError as exc:
            err = str(exc)
        refs = {}
        for cat, key in (("Q", "question"), ("A", "answer"), ("FA", "fullAnswer")):
            ids = []
            for v in q.get("annotations", {}).get(key, {}).values():
                for oid in str(v).split(","):
                    oid = oid.strip()
                    if oid in by_image[image_id] and oid not in ids:
                        ids.append(oid)
            refs[cat] = tuple(InferenceObject(i, by_image[image_id][i].bbox) for i in ids)
        answer = str(q.get("answer", ""))
        records.append(
            QuestionRecord(
                qid,
                image_id,
                q["question"],
                tuple(question_words(q["question"])),
                answer,
                str(q.get("fullAnswer", "")),
                text,
                "binary" if answer.lower() in ("yes", "no") else "open",
                refs,
                gold,
                err,
            )
        )
    if skipped:
        log.warning("skipped %d questions whose image has no scene graph", skipped)
    corpus = [(r.gold, r.words) for r in records if r.gold is not None]
    inventory = build_inventory(registry, corpus)
    return ConvertedGQA(vocab, registry, inventory, images, records, skipped)
