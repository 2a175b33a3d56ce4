"""Answer accuracy, detection coverage, IoU-based grounding and ablations."""

from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import ATHError, AnswerFailure, ConfigError, ParseError
from .executor import Answer, VerifyThreshold, execute, path_attention
from .graph import SceneGraph, Vocabulary
from .ingest import (
    ALL,
    CATEGORIES,
    IOU_MATCH,
    AnnotatedImage,
    DetectionRecord,
    GraphRecipe,
    QuestionRecord,
    build_graph,
    iou,
)
from .opseq import OperationRegistry, OpSeq, parse_opseq
from .tokens import ClassInventory, round_trip

REPORT_CATEGORIES = CATEGORIES + (ALL,)
OPSEQ_SOURCES = ("gold", "processed", "predicted")


def score_answer(pred: Answer | AnswerFailure | str | None, gold: QuestionRecord | str) -> bool:
    """Case-insensitive exact match on the short answer."""
    if pred is None or isinstance(pred, AnswerFailure):
        return False
    value = pred.value if isinstance(pred, Answer) else str(pred)
    target = gold.answer if isinstance(gold, QuestionRecord) else str(gold)
    return value.strip().lower() == target.strip().lower()


def grounding_score(
    attention: Mapping[str, float],
    record: QuestionRecord,
    graph: SceneGraph,
    iou_threshold: float = IOU_MATCH,
) -> dict[str, float | None]:
    """Percent of attention on graph objects that match an inference object.

    A graph object counts once per category if its IoU with any of that
    category's inference objects exceeds ``iou_threshold``. Categories
    without inference objects score None.
    """
    out: dict[str, float | None] = {}
    for cat in REPORT_CATEGORIES:
        refs = record.category_refs(cat)
        if not refs:
            out[cat] = None
            continue
        total = 0.0
        for node in graph.nodes:
            w = attention.get(node.id, 0.0)
            if w and any(iou(node.bbox, r.bbox) > iou_threshold for r in refs):
                total += w
        out[cat] = 100.0 * total
    return out


@dataclass(frozen=True)
class CoverageReport:
    matched: Mapping[str, int]
    total: Mapping[str, int]

    @property
    def percent(self) -> dict[str, float | None]:
        return {c: (100.0 * self.matched[c] / self.total[c] if self.total[c] else None) for c in REPORT_CATEGORIES}

    def to_json(self) -> dict:
        return {"percent": self.percent, "matched": dict(self.matched), "total": dict(self.total)}


def detection_coverage(
    graphs: Mapping[str, SceneGraph], records: Iterable[QuestionRecord], iou_threshold: float = IOU_MATCH
) -> CoverageReport:
    matched = Counter({c: 0 for c in REPORT_CATEGORIES})
    total = Counter({c: 0 for c in REPORT_CATEGORIES})
    for rec in records:
        if rec.image_id not in graphs:
            raise ConfigError(f"question {rec.question_id}: no graph for image {rec.image_id}")
        boxes = [n.bbox for n in graphs[rec.image_id].nodes]
        for cat in REPORT_CATEGORIES:
            for ref in rec.category_refs(cat):
                total[cat] += 1
                if any(iou(b, ref.bbox) > iou_threshold for b in boxes):
                    matched[cat] += 1
    return CoverageReport(dict(matched), dict(total))


@dataclass(frozen=True)
class QuestionOutcome:
    question_id: str
    qtype: str
    gold: str
    predicted: str | None
    correct: bool
    failure: str | None = None
    grounding: Mapping[str, float | None] = field(default_factory=dict)
    flags: tuple[str, ...] = ()


def _pct(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


@dataclass(frozen=True)
class EvalResult:
    outcomes: tuple[QuestionOutcome, ...]

    def _acc(self, qtype: str | None) -> float | None:
        sel = [o for o in self.outcomes if qtype is None or o.qtype == qtype]
        return _pct(sum(o.correct for o in sel), len(sel))

    @property
    def accuracy(self) -> float | None:
        return self._acc(None)

    @property
    def binary_accuracy(self) -> float | None:
        return self._acc("binary")

    @property
    def open_accuracy(self) -> float | None:
        return self._acc("open")

    @property
    def failures(self) -> dict[str, int]:
        return dict(sorted(Counter(o.failure for o in self.outcomes if o.failure).items()))

    @property
    def flag_counts(self) -> dict[str, int]:
        return dict(sorted(Counter(f for o in self.outcomes for f in o.flags).items()))

    def to_json(self) -> dict:
        return {
            "questions": len(self.outcomes),
            "accuracy": self.accuracy,
            "binary_accuracy": self.binary_accuracy,
            "open_accuracy": self.open_accuracy,
            "failures": self.failures,
            "flags": self.flag_counts,
        }


@dataclass(frozen=True)
class GroundingReport:
    scores: Mapping[str, float | None]
    counts: Mapping[str, int]

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[QuestionOutcome]) -> "GroundingReport":
        """Average per category over the questions where it is defined."""
        sums = Counter()
        counts = Counter({c: 0 for c in REPORT_CATEGORIES})
        for o in outcomes:
            for cat in REPORT_CATEGORIES:
                v = o.grounding.get(cat)
                if v is not None:
                    sums[cat] += v
                    counts[cat] += 1
        scores = {c: (sums[c] / counts[c] if counts[c] else None) for c in REPORT_CATEGORIES}
        return cls(scores, dict(counts))

    def to_json(self) -> dict:
        return {"scores": dict(self.scores), "questions": dict(self.counts)}


def evaluate_question(
    record: QuestionRecord,
    seq: OpSeq | ATHError,
    graph: SceneGraph | None,
    threshold: VerifyThreshold,
    registry: OperationRegistry,
    iou_threshold: float = IOU_MATCH,
    flags: tuple[str, ...] = (),
) -> QuestionOutcome:
    """Execute one question and score its answer and grounding.

    ``seq`` may be the error that prevented producing an op-seq; the
    question is then scored incorrect with that error as failure type.
    """
    failure = None
    paths = ()
    predicted = None
    if isinstance(seq, ATHError):
        failure = type(seq).__name__
    elif graph is None:
        failure = "MissingGraph"
    else:
        try:
            ans = execute(seq, graph, threshold, registry)
            predicted = ans.value
            paths = ans.paths
        except AnswerFailure as exc:
            failure = exc.reason
            paths = exc.paths
    grounding: dict[str, float | None] = {}
    if graph is not None:
        attention = path_attention(paths) if paths else {}
        grounding = grounding_score(attention, record, graph, iou_threshold)
    correct = predicted is not None and score_answer(predicted, record)
    return QuestionOutcome(record.question_id, record.qtype, record.answer, predicted, correct, failure, grounding, flags)


@dataclass(frozen=True)
class AblationRecipe:
    name: str
    opseq_source: str
    graph: GraphRecipe

    def __post_init__(self):
        if self.opseq_source not in OPSEQ_SOURCES:
            raise ConfigError(f"op-seq source must be one of {OPSEQ_SOURCES}, got {self.opseq_source!r}")

    @property
    def qp_label(self) -> str:
        return {"gold": "GQA", "processed": "ATH*", "predicted": "ATH"}[self.opseq_source]

    @property
    def sg_label(self) -> str:
        g = self.graph
        if g.is_oracle:
            return "GQA"
        if (g.attributes, g.relationships) == ("oracle", "oracle"):
            return "ATH obj"
        if (g.attributes, g.relationships) == ("predicted", "oracle"):
            return "ATH obj+attr"
        if (g.attributes, g.relationships) == ("predicted", "predicted"):
            return "ATH"
        return f"obj={g.objects[0]} attr={g.attributes[0]} rel={g.relationships[0]}"


def default_ablation_recipes() -> list[AblationRecipe]:
    """The ten combinations of op-seq source and graph layer sources."""
    full = GraphRecipe("predicted", "predicted", "predicted")
    obj_attr = GraphRecipe("predicted", "predicted", "oracle")
    obj = GraphRecipe("predicted", "oracle", "oracle")
    oracle = GraphRecipe()
    return [
        AblationRecipe("ATH", "predicted", full),
        AblationRecipe("ATH-1", "processed", full),
        AblationRecipe("ATH-2", "gold", full),
        AblationRecipe("ATH-3", "predicted", obj_attr),
        AblationRecipe("ATH-4", "gold", obj_attr),
        AblationRecipe("ATH-5", "predicted", obj),
        AblationRecipe("ATH-6", "gold", obj),
        AblationRecipe("ATH-7", "predicted", oracle),
        AblationRecipe("ATH-8", "processed", oracle),
        AblationRecipe("ATH-Oracle", "gold", oracle),
    ]


@dataclass
class Dataset:
    vocab: Vocabulary
    registry: OperationRegistry
    questions: Sequence[QuestionRecord]
    annotations: Mapping[str, AnnotatedImage] = field(default_factory=dict)
    detections: Mapping[str, DetectionRecord] = field(default_factory=dict)
    inventory: ClassInventory | None = None
    predicted: Mapping[str, str] | None = None
    threshold: VerifyThreshold = field(default_factory=VerifyThreshold)
    iou_threshold: float = IOU_MATCH

    def check_sources(self, recipe: AblationRecipe) -> None:
        if recipe.opseq_source == "processed" and self.inventory is None:
            raise ConfigError(f"{recipe.name}: processed op-seqs need a class inventory")
        if recipe.opseq_source == "predicted" and self.predicted is None:
            raise ConfigError(f"{recipe.name}: no predicted op-seq file supplied")
        g = recipe.graph
        if "oracle" in (g.objects, g.attributes, g.relationships) and not self.annotations:
            raise ConfigError(f"{recipe.name}: oracle layers need scene-graph annotations")
        if g.objects == "predicted" and not self.detections:
            raise ConfigError(f"{recipe.name}: predicted objects need detections")

    def opseq(self, record: QuestionRecord, source: str) -> tuple[OpSeq | ATHError, tuple[str, ...]]:
        try:
            gold = record.gold or parse_opseq(record.opseq, self.registry, record.question_id)
        except ParseError as exc:
            if source != "predicted":
                return exc, ()
            gold = None
        if source == "gold":
            return gold, ()
        if source == "processed":
            rt = round_trip(gold, record.words, self.inventory, self.registry)
            flags = ("lossy",) if rt.lossy else ()
            flags += ("pointer-conflict",) if rt.conflicts else ()
            return (rt.result if rt.error is None else rt.error), flags
        text = self.predicted.get(record.question_id)
        if text is None:
            return ConfigError(f"no predicted op-seq for {record.question_id}"), ()
        try:
            return parse_opseq(text, self.registry, record.question_id), ()
        except ParseError as exc:
            return exc, ()

    def graph(self, image_id: str, recipe: GraphRecipe) -> SceneGraph | None:
        ann = self.annotations.get(image_id)
        det = self.detections.get(image_id)
        if recipe.is_oracle and ann is None:
            return None
        if recipe.objects == "predicted" and det is None:
            return None
        return build_graph(recipe, ann, det, self.vocab, self.iou_threshold)


def _evaluate_chunk(args) -> list[QuestionOutcome]:
    dataset, recipe, records = args
    cache: dict[str, SceneGraph | None] = {}
    out = []
    for rec in records:
        if rec.image_id not in cache:
            cache[rec.image_id] = dataset.graph(rec.image_id, recipe.graph)
        seq, flags = dataset.opseq(rec, recipe.opseq_source)
        out.append(
            evaluate_question(rec, seq, cache[rec.image_id], dataset.threshold, dataset.registry, dataset.iou_threshold, flags)
        )
    return out


def evaluate(dataset: Dataset, recipe: AblationRecipe, workers: int = 1) -> tuple[EvalResult, GroundingReport]:
    dataset.check_sources(recipe)
    records = list(dataset.questions)
    if workers <= 1 or len(records) < 2:
        outcomes = _evaluate_chunk((dataset, recipe, records))
    else:
        # group by image so each worker builds a graph once
        records.sort(key=lambda r: r.image_id)
        size = -(-len(records) // workers)
        chunks = [records[i : i + size] for i in range(0, len(records), size)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = pool.map(_evaluate_chunk, [(dataset, recipe, c) for c in chunks])
        by_id = {o.question_id: o for part in parts for o in part}
        outcomes = [by_id[r.question_id] for r in dataset.questions]
    return EvalResult(tuple(outcomes)), GroundingReport.from_outcomes(outcomes)


@dataclass(frozen=True)
class AblationRow:
    recipe: AblationRecipe
    result: EvalResult
    grounding: GroundingReport
    gqa_grounding: float | None = None

    def to_json(self) -> dict:
        return {
            "system": self.recipe.name,
            "qp": self.recipe.qp_label,
            "sg": self.recipe.sg_label,
            "opseq_source": self.recipe.opseq_source,
            "graph": self.recipe.graph.as_dict(),
            **self.result.to_json(),
            "grounding": self.grounding.to_json(),
            "gqa_grounding": self.gqa_grounding,
        }


def ablation_matrix(
    recipes: Sequence[AblationRecipe],
    dataset: Dataset,
    workers: int = 1,
    gqa_grounding: Mapping[str, float] | None = None,
) -> list[AblationRow]:
    """Evaluate every recipe; rows keep the order of ``recipes``."""
    for r in recipes:
        dataset.check_sources(r)
    rows = []
    for r in recipes:
        res, gr = evaluate(dataset, r, workers)
        rows.append(AblationRow(r, res, gr, (gqa_grounding or {}).get(r.name)))
    return rows


def _fmt(v: float | None) -> str:
    return "n/a" if v is None else f"{v:.2f}"


def format_table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    line = lambda cells: " | ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows])


def format_ablation(rows: Sequence[AblationRow]) -> str:
    headers = ["System", "QP", "SG", "Binary", "Open", "Q", "A", "FA", "Q+A+FA", "Grounding", "Accuracy"]
    body = []
    for row in rows:
        g = row.grounding.scores
        body.append(
            [
                row.recipe.name,
                row.recipe.qp_label,
                row.recipe.sg_label,
                _fmt(row.result.binary_accuracy),
                _fmt(row.result.open_accuracy),
                _fmt(g["Q"]),
                _fmt(g["A"]),
                _fmt(g["FA"]),
                _fmt(g[ALL]),
                _fmt(row.gqa_grounding),
                _fmt(row.result.accuracy),
            ]
        )
    return format_table(headers, body)


def format_grounding(name: str, report: GroundingReport, coverage: CoverageReport | None = None) -> str:
    headers = ["System", "Q", "A", "FA", "Q+A+FA"]
    body = []
    if coverage is not None:
        body.append(["Det. Obj."] + [_fmt(coverage.percent[c]) for c in REPORT_CATEGORIES])
    body.append([name] + [_fmt(report.scores[c]) for c in REPORT_CATEGORIES])
    return format_table(headers, body)


def report_json(data) -> str:
    return json.dumps(data, indent=1, sort_keys=False) + "\n"


def calibration_points(dataset: Dataset, recipe: AblationRecipe) -> list[tuple[float, str]]:
    """(geometric mean, gold answer) for every single-branch binary question."""
    dataset.check_sources(recipe)
    cache: dict[str, SceneGraph | None] = {}
    out = []
    for rec in dataset.questions:
        if rec.qtype != "binary":
            continue
        if rec.image_id not in cache:
            cache[rec.image_id] = dataset.graph(rec.image_id, recipe.graph)
        seq, _ = dataset.opseq(rec, recipe.opseq_source)
        if isinstance(seq, ATHError) or cache[rec.image_id] is None:
            continue
        try:
            ans = execute(seq, cache[rec.image_id], dataset.threshold, dataset.registry)
        except AnswerFailure:
            continue
        if len(ans.scores) == 1:
            out.append((ans.scores[0], rec.answer))
    return out
