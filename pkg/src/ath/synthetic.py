"""Seeded synthetic corpora with planted, uniquely answerable questions.

Images are laid out on a grid so neighbouring objects are relationship
candidates and non-neighbours are not. Question truth comes from set
semantics over the annotations (which objects carry which name, attribute
and relation), computed here without touching the executor.

Per-layer noise turns annotations into detector-style outputs: at noise 0
every predicted distribution is exactly the one-hot annotation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DetokenizeError, UntokenizableArgument
from .graph import (
    OBJECTS,
    RELATIONS,
    BoundingBox,
    CategoricalDist,
    Vocabulary,
    attr_slice,
)
from .ingest import (
    EXPANSION,
    AnnotatedImage,
    AnnotatedObject,
    DetectedObject,
    DetectionRecord,
    InferenceObject,
    QuestionRecord,
    annotations_to_json,
    candidate_pairs,
    detections_to_json,
    questions_to_json,
    save_opseqs,
    save_vocabulary,
    write_json,
)
from .opseq import OperationRegistry, default_registry, format_line, parse_opseq
from .tokens import (
    ClassInventory,
    ClassToken,
    PointerToken,
    TokenizedOpSeq,
    build_inventory,
    detokenize,
    question_words,
    tokenize,
)

OBJECT_NAMES = (
    "cup", "table", "chair", "dog", "cat", "man", "woman", "car", "tree", "bag",
    "plate", "bottle", "lamp", "book", "phone", "horse", "bus", "boat", "shirt", "hat",
    "bench", "fence", "window", "door", "clock", "bowl", "pizza", "laptop", "kite", "sign",
)
ATTRIBUTES = (
    ("color", ("red", "blue", "green", "white", "black", "yellow", "brown", "gray")),
    ("material", ("wooden", "metal", "plastic", "glass")),
    ("size", ("small", "large", "tiny", "huge")),
    ("pattern", ("striped", "plain", "dotted", "checkered")),
)
RELATION_NAMES = (
    "on", "under", "near", "holding", "behind", "wearing", "beside",
    "to the left of", "to the right of", "in front of",
)
SPATIAL = ("on", "under", "near", "behind", "beside", "to the left of", "to the right of", "in front of")

GRID_COLS, GRID_ROWS, CELL = 4, 3, 160

QUESTION_KINDS = (
    "query_name", "query_attr", "exist", "exist_rel", "verify_attr", "verify_rel",
    "and", "or", "choose", "same", "different",
)


def synthetic_vocabulary() -> Vocabulary:
    return Vocabulary(
        OBJECT_NAMES,
        ATTRIBUTES,
        RELATION_NAMES,
        tuple(r in SPATIAL for r in RELATION_NAMES),
    )


@dataclass(frozen=True)
class SyntheticConfig:
    seed: int = 1
    n_images: int = 100
    questions_per_image: int = 6
    n_dev_images: int = 20
    min_objects: int = 5
    max_objects: int = 9
    relation_rate: float = 0.5
    object_noise: float = 0.0
    attribute_noise: float = 0.0
    relation_noise: float = 0.0
    opseq_noise: float = 0.0
    lossy_rate: float = 0.0
    max_attempts: int = 200

    def validate(self) -> None:
        if self.max_objects > GRID_COLS * GRID_ROWS:
            raise ConfigError(f"at most {GRID_COLS * GRID_ROWS} objects fit on the layout grid")
        if not 2 <= self.min_objects <= self.max_objects:
            raise ConfigError("need 2 <= min_objects <= max_objects")
        if self.max_objects > len(OBJECT_NAMES):
            raise ConfigError("object vocabulary too small for unique descriptions")
        for name in ("relation_rate", "object_noise", "attribute_noise", "relation_noise", "opseq_noise", "lossy_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.n_images < 1 or self.questions_per_image < 1 or self.n_dev_images < 0:
            raise ConfigError("image and question counts must be positive")


@dataclass
class SyntheticCorpus:
    config: SyntheticConfig
    vocab: Vocabulary
    registry: OperationRegistry
    inventory: ClassInventory
    annotations: list[AnnotatedImage]
    detections: list[DetectionRecord]
    questions: list[QuestionRecord]
    dev_questions: list[QuestionRecord]
    predicted: dict[str, str] = field(default_factory=dict)

    FILES = {
        "vocab": "vocab.json",
        "registry": "registry.json",
        "inventory": "inventory.json",
        "annotations": "annotations.json",
        "detections": "detections.json",
        "questions": "questions.json",
        "dev_questions": "dev_questions.json",
        "predicted": "predicted_opseqs.json",
    }

    def write(self, outdir) -> dict[str, str]:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        f = {k: out / v for k, v in self.FILES.items()}
        save_vocabulary(f["vocab"], self.vocab)
        self.registry.save(f["registry"])
        self.inventory.save(f["inventory"])
        write_json(f["annotations"], annotations_to_json(self.annotations))
        write_json(f["detections"], detections_to_json(self.detections, self.vocab))
        write_json(f["questions"], questions_to_json(self.questions))
        write_json(f["dev_questions"], questions_to_json(self.dev_questions))
        save_opseqs(f["predicted"], self.predicted)
        paths = {k: v for k, v in self.FILES.items()}
        write_json(
            out / "config.json",
            {
                "schema_version": 1,
                "kind": "config",
                "paths": paths,
                "seed": self.config.seed,
                "threshold": 0.5,
            },
        )
        return {k: str(v) for k, v in f.items()}


# --- images -----------------------------------------------------------------


def _neighbours(a: int, b: int) -> bool:
    ra, ca = divmod(a, GRID_COLS)
    rb, cb = divmod(b, GRID_COLS)
    return a != b and abs(ra - rb) <= 1 and abs(ca - cb) <= 1


def _make_image(rng: np.random.Generator, image_id: str, cfg: SyntheticConfig) -> AnnotatedImage:
    k = int(rng.integers(cfg.min_objects, cfg.max_objects + 1))
    cells = rng.choice(GRID_COLS * GRID_ROWS, size=k, replace=False)
    # a small name pool per image so repeated names force attribute filters
    pool = rng.choice(len(OBJECT_NAMES), size=max(2, k // 2 + 1), replace=False)
    objs = []
    for i, cell in enumerate(cells):
        r, c = divmod(int(cell), GRID_COLS)
        m = rng.uniform(4, 10, size=4)
        box = BoundingBox(
            float(round(c * CELL + m[0], 2)),
            float(round(r * CELL + m[1], 2)),
            float(round((c + 1) * CELL - m[2], 2)),
            float(round((r + 1) * CELL - m[3], 2)),
        )
        name = OBJECT_NAMES[int(rng.choice(pool))]
        attrs = []
        for _, members in ATTRIBUTES:
            if rng.random() < 0.85:
                attrs.append(members[int(rng.integers(len(members)))])
        objs.append([str(i), name, box, tuple(attrs), []])
    for i in range(k):
        for j in range(i + 1, k):
            if _neighbours(int(cells[i]), int(cells[j])) and rng.random() < cfg.relation_rate:
                rel = RELATION_NAMES[int(rng.integers(len(RELATION_NAMES)))]
                s, d = (i, j) if rng.random() < 0.5 else (j, i)
                objs[s][4].append((rel, str(d)))
    return AnnotatedImage(
        image_id,
        float(GRID_COLS * CELL),
        float(GRID_ROWS * CELL),
        tuple(AnnotatedObject(i, n, b, a, tuple(r)) for i, n, b, a, r in objs),
    )


# --- set-semantics truth ----------------------------------------------------


class _Scene:
    def __init__(self, img: AnnotatedImage):
        self.img = img
        self.objs = img.objects
        self.n = len(self.objs)
        self.rel = {(int(o.id), int(t), r) for o in self.objs for r, t in o.relations}

    def attr(self, i: int, cat: str) -> str | None:
        members = dict(ATTRIBUTES)[cat]
        vals = [a for a in self.objs[i].attributes if a in members]
        return vals[0] if len(vals) == 1 else None

    def holds(self, cur: int, tgt: int, rel: str, side: str) -> bool:
        return (cur, tgt, rel) in self.rel if side == "o" else (tgt, cur, rel) in self.rel

    def run(self, steps) -> tuple[list[tuple[int, ...]], list[tuple[int, ...]]]:
        """(full matching paths, longest viable prefix paths)."""
        kind, name = steps[0][0], steps[0][1]
        assert kind == "select"
        paths = [(i,) for i in range(self.n) if self.objs[i].name == name]
        if not paths:
            return [], []
        for step in steps[1:]:
            new = []
            for p in paths:
                c = p[-1]
                if step[0] == "filter":
                    if step[2] in self.objs[c].attributes:
                        new.append(p + (c,))
                else:
                    _, tname, rel, side = step
                    for t in range(self.n):
                        if t != c and self.holds(c, t, rel, side) and (tname == "_" or self.objs[t].name == tname):
                            new.append(p + (t,))
            if not new:
                return [], paths
            paths = new
        return paths, paths

    def describe(self, i: int, rng) -> list | None:
        """Select (+ one attribute filter) that singles out object i."""
        name = self.objs[i].name
        same = [j for j in range(self.n) if self.objs[j].name == name]
        if len(same) == 1 and rng.random() < 0.6:
            return [("select", name)]
        cats = [c for c, _ in ATTRIBUTES]
        order = rng.permutation(len(cats))
        for k in order:
            cat = cats[int(k)]
            v = self.attr(i, cat)
            if v is not None and all(v not in self.objs[j].attributes for j in same if j != i):
                return [("select", name), ("filter", cat, v)]
        if len(same) == 1:
            return [("select", name)]
        return None


def _op_lines(steps) -> list[str]:
    out = []
    for s in steps:
        if s[0] == "select":
            out.append(f"select: {s[1]}")
        elif s[0] == "filter":
            out.append(f"filter {s[1]}: {s[2]}")
        else:
            out.append(f"relate: {s[1]},{s[2]},{s[3]}")
    return out


def _desc_text(steps) -> str:
    words = [s[2] for s in steps if s[0] == "filter"] + [steps[0][1]]
    return " ".join(words)


@dataclass
class _Planted:
    kind: str
    text: str
    lines: list[str]  # without dependencies
    deps: list[list[int]]
    answer: str
    full_answer: str
    qtype: str
    q_nodes: list[int]
    a_nodes: list[int]
    fa_nodes: list[int]
    arg_words: list[str]


def _linear_deps(n: int, offset: int = 0) -> list[list[int]]:
    return [[] if k == 0 else [offset + k - 1] for k in range(n)]


def _nodes(paths) -> list[int]:
    out: list[int] = []
    for p in paths:
        for i in p:
            if i not in out:
                out.append(i)
    return out


def _arg_words(steps) -> list[str]:
    out = []
    for s in steps:
        if s[0] == "select":
            out.append(s[1])
        elif s[0] == "filter":
            out.append(s[2])
        else:
            if s[1] != "_":
                out.append(s[1])
    return out


def _plant(scene: _Scene, kind: str, rng) -> _Planted | None:
    n = scene.n
    i = int(rng.integers(n))
    desc = scene.describe(i, rng)
    if desc is None:
        return None
    cats = [c for c, _ in ATTRIBUTES]
    d = _desc_text(desc)

    def relate_option(cur: int):
        opts = sorted(
            [(t, r, "o") for (s, t, r) in scene.rel if s == cur] + [(s, r, "s") for (s, t, r) in scene.rel if t == cur]
        )
        if not opts:
            return None
        return opts[int(rng.integers(len(opts)))]

    if kind == "query_name":
        opt = relate_option(i)
        if opt is None:
            return None
        t, rel, side = opt
        steps = desc + [("relate", "_", rel, side)]
        full, _ = scene.run(steps)
        if len(full) != 1:
            return None
        text = f"What is the {d} {rel}?" if side == "o" else f"What is {rel} the {d}?"
        ans = scene.objs[t].name
        lines = _op_lines(steps) + ["query: name"]
        return _Planted(kind, text, lines, _linear_deps(len(lines)), ans, f"The {d} is {rel} the {ans}." if side == "o" else f"The {ans} is {rel} the {d}.",
                        "open", [i], [t], _nodes(full), _arg_words(steps))

    if kind == "query_attr":
        steps = list(desc)
        target = i
        if rng.random() < 0.5:
            opt = relate_option(i)
            if opt is not None:
                t, rel, side = opt
                steps.append(("relate", scene.objs[t].name, rel, side))
                target = t
        full, _ = scene.run(steps)
        if len(full) != 1:
            return None
        avail = [c for c in cats if scene.attr(target, c) is not None]
        if not avail:
            return None
        cat = avail[int(rng.integers(len(avail)))]
        ans = scene.attr(target, cat)
        if target == i:
            text = f"What {cat} is the {d}?"
        else:
            tname, rel, side = steps[-1][1], steps[-1][2], steps[-1][3]
            text = (f"What {cat} is the {tname} that the {d} is {rel}?" if side == "o"
                    else f"What {cat} is the {tname} {rel} the {d}?")
        lines = _op_lines(steps) + [f"query: {cat}"]
        nodes = _nodes(full)
        return _Planted(kind, text, lines, _linear_deps(len(lines)), ans, f"It is {ans}.", "open",
                        nodes, [target], nodes, _arg_words(steps) + [cat])

    if kind in ("exist", "exist_rel", "verify_rel"):
        steps = list(desc)
        if kind == "exist":
            if rng.random() < 0.4:
                absent = [x for x in OBJECT_NAMES if all(o.name != x for o in scene.objs)]
                steps = [("select", absent[int(rng.integers(len(absent)))])]
            elif rng.random() < 0.5:
                cat = cats[int(rng.integers(len(cats)))]
                members = dict(ATTRIBUTES)[cat]
                steps = [("select", scene.objs[i].name), ("filter", cat, members[int(rng.integers(len(members)))])]
            d = _desc_text(steps)
            text = f"Is there a {d}?"
            lines = _op_lines(steps) + ["exist: ?"]
        else:
            opt = relate_option(i)
            if opt is None or rng.random() < 0.4:
                tname = OBJECT_NAMES[int(rng.integers(len(OBJECT_NAMES)))]
                rel = RELATION_NAMES[int(rng.integers(len(RELATION_NAMES)))]
                side = "o" if rng.random() < 0.5 else "s"
            else:
                t, rel, side = opt
                tname = scene.objs[t].name
            steps = steps + [("relate", tname, rel, side)]
            if kind == "exist_rel":
                text = f"Is there a {tname} {rel} the {d}?" if side == "s" else f"Is the {d} {rel} a {tname}?"
                lines = _op_lines(steps) + ["exist: ?"]
            else:
                text = f"Is a {tname} {rel} the {d}?" if side == "s" else f"Is the {d} {rel} the {tname}?"
                lines = _op_lines(steps[:-1]) + [f"verify rel: {tname},{rel},{side}"]
        full, prefix = scene.run(steps)
        ans = "yes" if full else "no"
        nodes = _nodes(full or prefix)
        return _Planted(kind, text, lines, _linear_deps(len(lines)), ans, f"{ans.capitalize()}.", "binary",
                        nodes, [], nodes, _arg_words(steps))

    if kind == "verify_attr":
        cat = cats[int(rng.integers(len(cats)))]
        members = dict(ATTRIBUTES)[cat]
        v = scene.attr(i, cat) if rng.random() < 0.5 else None
        v = v or members[int(rng.integers(len(members)))]
        steps = desc + [("filter", cat, v)]
        if desc[-1][0] == "filter" and desc[-1][1] == cat:
            return None
        full, prefix = scene.run(steps)
        ans = "yes" if full else "no"
        nodes = _nodes(full or prefix)
        lines = _op_lines(desc) + [f"verify {cat}: {v}"]
        return _Planted(kind, f"Is the {d} {v}?", lines, _linear_deps(len(lines)), ans, f"{ans.capitalize()}.",
                        "binary", nodes, [], nodes, _arg_words(steps))

    if kind in ("and", "or"):
        j = int(rng.integers(n))
        desc2 = scene.describe(j, rng)
        if desc2 is None or j == i:
            return None
        if rng.random() < 0.4:
            absent = [x for x in OBJECT_NAMES if all(o.name != x for o in scene.objs)]
            desc2 = [("select", absent[int(rng.integers(len(absent)))])]
        f1, p1 = scene.run(desc)
        f2, p2 = scene.run(desc2)
        e1, e2 = bool(f1), bool(f2)
        ok = (e1 and e2) if kind == "and" else (e1 or e2)
        ans = "yes" if ok else "no"
        d2 = _desc_text(desc2)
        text = (f"Are there both a {d} and a {d2}?" if kind == "and" else f"Is there a {d} or a {d2}?")
        l1 = _op_lines(desc) + ["exist: ?"]
        l2 = _op_lines(desc2) + ["exist: ?"]
        deps = _linear_deps(len(l1)) + _linear_deps(len(l2), len(l1)) + [[len(l1) - 1, len(l1) + len(l2) - 1]]
        nodes = _nodes((f1 or p1) + (f2 or p2))
        return _Planted(kind, text, l1 + l2 + [f"{kind}:"], deps, ans, f"{ans.capitalize()}.", "binary",
                        nodes, [], nodes, _arg_words(desc) + _arg_words(desc2))

    if kind == "choose":
        avail = [c for c in cats if scene.attr(i, c) is not None and not (desc[-1][0] == "filter" and desc[-1][1] == c)]
        if not avail:
            return None
        cat = avail[int(rng.integers(len(avail)))]
        v = scene.attr(i, cat)
        others = [m for m in dict(ATTRIBUTES)[cat] if m != v]
        w = others[int(rng.integers(len(others)))]
        a, b = (v, w) if rng.random() < 0.5 else (w, v)
        full, _ = scene.run(desc)
        if len(full) != 1:
            return None
        lines = _op_lines(desc) + [f"choose {cat}: {a}|{b}"]
        nodes = _nodes(full)
        return _Planted(kind, f"Is the {d} {a} or {b}?", lines, _linear_deps(len(lines)), v, f"The {d} is {v}.",
                        "open", nodes, nodes, nodes, _arg_words(desc) + [a, b])

    if kind in ("same", "different"):
        j = int(rng.integers(n))
        desc2 = scene.describe(j, rng)
        if desc2 is None or j == i:
            return None
        avail = [c for c in cats if scene.attr(i, c) is not None and scene.attr(j, c) is not None]
        if not avail:
            return None
        cat = avail[int(rng.integers(len(avail)))]
        f1, _ = scene.run(desc)
        f2, _ = scene.run(desc2)
        if len(f1) != 1 or len(f2) != 1:
            return None
        eq = scene.attr(i, cat) == scene.attr(j, cat)
        ans = "yes" if eq == (kind == "same") else "no"
        d2 = _desc_text(desc2)
        text = (f"Are the {d} and the {d2} the same {cat}?" if kind == "same"
                else f"Do the {d} and the {d2} have a different {cat}?")
        l1, l2 = _op_lines(desc), _op_lines(desc2)
        deps = _linear_deps(len(l1)) + _linear_deps(len(l2), len(l1)) + [[len(l1) - 1, len(l1) + len(l2) - 1]]
        nodes = _nodes(f1 + f2)
        return _Planted(kind, text, l1 + l2 + [f"{kind} {cat}:"], deps, ans, f"{ans.capitalize()}.", "binary",
                        nodes, [], nodes, _arg_words(desc) + _arg_words(desc2))
    raise ValueError(kind)


def _with_deps(lines: Sequence[str], deps: Sequence[Sequence[int]]) -> str:
    return "\n".join(f"{ln} [{','.join(str(x) for x in d)}]" for ln, d in zip(lines, deps))


def _capitalize_argument(text: str, words: Sequence[str], rng) -> str:
    """Capitalize one argument word in the question text."""
    toks = question_words(text)
    hits = [k for k, t in enumerate(toks) if k > 0 and t in words]
    if not hits:
        return text
    k = hits[int(rng.integers(len(hits)))]
    toks[k] = toks[k].capitalize()
    out = " ".join(toks)
    return out.replace(" ?", "?").replace(" .", ".")


def _questions_for(img: AnnotatedImage, count: int, rng, cfg: SyntheticConfig, prefix: str) -> list[QuestionRecord]:
    scene = _Scene(img)
    out = []
    attempts = 0
    k = 0
    while len(out) < count:
        attempts += 1
        if attempts > cfg.max_attempts * count:
            raise ConfigError(f"could not plant {count} questions in image {img.image_id}")
        kind = QUESTION_KINDS[k % len(QUESTION_KINDS)] if rng.random() < 0.5 else QUESTION_KINDS[int(rng.integers(len(QUESTION_KINDS)))]
        planted = _plant(scene, kind, rng)
        if planted is None:
            continue
        k += 1
        text = planted.text
        if cfg.lossy_rate and rng.random() < cfg.lossy_rate:
            text = _capitalize_argument(text, planted.arg_words, rng)
        words = question_words(text)
        if len(words) > 20:
            continue
        by_id = {int(o.id): o for o in img.objects}

        def refs(idx):
            return tuple(InferenceObject(by_id[x].id, by_id[x].bbox) for x in idx)

        qid = f"{prefix}{img.image_id}_{len(out)}"
        out.append(
            QuestionRecord(
                qid,
                img.image_id,
                text,
                tuple(words),
                planted.answer,
                planted.full_answer,
                _with_deps(planted.lines, planted.deps),
                planted.qtype,
                {"Q": refs(planted.q_nodes), "A": refs(planted.a_nodes), "FA": refs(planted.fa_nodes)},
            )
        )
    return out


# --- detector-style noise ---------------------------------------------------


def _noisy(rng, slice_name: str, size: int, true_idx: Sequence[int], eps: float, k: int = 4) -> CategoricalDist:
    """(1 - eps) on the true class(es), eps spread over k random classes.

    With probability eps/2 the true mass moves to a wrong class instead.
    """
    base = np.zeros(size)
    if true_idx:
        for t in true_idx:
            base[t] = 1.0 / len(true_idx)
    if eps == 0.0:
        nz = np.flatnonzero(base)
        return CategoricalDist(slice_name, tuple((int(i), float(base[i])) for i in nz))
    if rng.random() < eps / 2 or not true_idx:
        wrong = int(rng.integers(size))
        base = np.zeros(size)
        base[wrong] = 1.0
    noise = np.zeros(size)
    picks = rng.choice(size, size=min(k, size), replace=False)
    noise[picks] = rng.dirichlet(np.ones(len(picks)))
    probs = (1 - eps) * base + eps * noise
    probs = probs / probs.sum()
    nz = np.flatnonzero(probs)
    return CategoricalDist(slice_name, tuple((int(i), float(probs[i])) for i in nz))


def _jitter(rng, box: BoundingBox, eps: float, width: float, height: float) -> BoundingBox:
    if eps == 0.0:
        return box
    d = rng.uniform(-1, 1, size=4) * eps * 0.15
    w, h = box.width, box.height
    x1 = min(max(0.0, box.x1 + d[0] * w), width - 1)
    y1 = min(max(0.0, box.y1 + d[1] * h), height - 1)
    x2 = max(min(width, box.x2 + d[2] * w), x1 + 1)
    y2 = max(min(height, box.y2 + d[3] * h), y1 + 1)
    return BoundingBox(round(x1, 2), round(y1, 2), round(x2, 2), round(y2, 2))


def _detect(rng, img: AnnotatedImage, vocab: Vocabulary, cfg: SyntheticConfig) -> DetectionRecord:
    eo, ea, er = cfg.object_noise, cfg.attribute_noise, cfg.relation_noise
    kept = [k for k in range(len(img.objects)) if not (eo and rng.random() < eo * 0.2)]
    objs = []
    for k in kept:
        o = img.objects[k]
        cls = _noisy(rng, OBJECTS, len(OBJECT_NAMES), [vocab.index(OBJECTS, o.name)], eo)
        attrs = {}
        for cat, members in ATTRIBUTES:
            true = [members.index(a) for a in o.attributes if a in members]
            if true or ea > 0:
                attrs[cat] = _noisy(rng, attr_slice(cat), len(members), true, ea)
        objs.append(DetectedObject(_jitter(rng, o.bbox, eo, img.width, img.height), cls, attrs))
    pos = {img.objects[k].id: n for n, k in enumerate(kept)}
    truth: dict[tuple[int, int], list[int]] = {}
    for o in img.objects:
        for r, t in o.relations:
            if o.id in pos and t in pos:
                truth.setdefault((pos[o.id], pos[t]), []).append(vocab.index(RELATIONS, r))

    class _N:
        def __init__(self, i, b):
            self.id, self.bbox = i, b

    cands = candidate_pairs([_N(n, d.bbox) for n, d in enumerate(objs)], EXPANSION)
    rels = []
    for s, d in cands:
        if (s, d) in truth:
            rels.append((s, d, _noisy(rng, RELATIONS, len(RELATION_NAMES), truth[(s, d)], er)))
        elif er and rng.random() < er:
            rels.append((s, d, _noisy(rng, RELATIONS, len(RELATION_NAMES), [], er)))
    return DetectionRecord(img.image_id, img.width, img.height, tuple(objs), tuple(rels))


def _corrupt(tok: TokenizedOpSeq, n_words: int, inventory: ClassInventory, rng, eps: float) -> TokenizedOpSeq:
    """Parser-style errors: wrong pointer targets and swapped word classes."""
    if eps == 0.0:
        return tok
    out = []
    word_lo = inventory.n_pointers + 1 + len(inventory.operations)
    for t in tok.tokens:
        if isinstance(t, PointerToken) and rng.random() < eps:
            t = PointerToken(int(rng.integers(n_words)))
        elif isinstance(t, ClassToken) and t.id >= word_lo and rng.random() < eps / 2:
            t = ClassToken(int(rng.integers(word_lo, inventory.size)))
        out.append(t)
    return replace(tok, tokens=tuple(out))


def generate(cfg: SyntheticConfig) -> SyntheticCorpus:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    vocab = synthetic_vocabulary()
    registry = default_registry(vocab.categories)
    images, questions, dev = [], [], []
    for k in range(cfg.n_images + cfg.n_dev_images):
        is_dev = k >= cfg.n_images
        img = _make_image(rng, f"{'dev' if is_dev else 'img'}{k}", cfg)
        images.append(img)
        qs = _questions_for(img, cfg.questions_per_image, rng, cfg, "q")
        (dev if is_dev else questions).extend(qs)
    questions = [replace(q, gold=parse_opseq(q.opseq, registry, q.question_id)) for q in questions]
    dev = [replace(q, gold=parse_opseq(q.opseq, registry, q.question_id)) for q in dev]
    inventory = build_inventory(registry, [(q.gold, q.words) for q in questions + dev])
    detections = [_detect(rng, img, vocab, cfg) for img in images]
    predicted = {}
    for q in questions + dev:
        try:
            tok = tokenize(q.gold, q.words, inventory, registry)
            tok = _corrupt(tok, len(q.words), inventory, rng, cfg.opseq_noise)
            seq = detokenize(tok, q.words, inventory, registry)
            predicted[q.question_id] = "\n".join(format_line(op, registry) for op in seq.ops)
        except (UntokenizableArgument, DetokenizeError):
            predicted[q.question_id] = ""
    return SyntheticCorpus(cfg, vocab, registry, inventory, images, detections, questions, dev, predicted)

