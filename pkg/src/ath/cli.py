"""Command-line entry point.

Exit codes: 0 success, 1 finished but some questions failed, 2 bad
configuration or input files.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .errors import ATHError, AnswerFailure, CalibrationError, ConfigError, IngestError
from .executor import VerifyThreshold, calibrate_threshold, execute, format_trace, path_attention
from .graph import SceneGraph
from .ingest import (
    CATEGORIES,
    iou,
    load_annotations,
    load_detections,
    load_opseqs,
    load_questions,
    load_threshold,
    load_vocabulary,
    save_threshold,
)
from .metrics import (
    REPORT_CATEGORIES,
    AblationRecipe,
    Dataset,
    ablation_matrix,
    calibration_points,
    default_ablation_recipes,
    detection_coverage,
    evaluate,
    format_ablation,
    format_grounding,
    grounding_score,
    report_json,
)
from .opseq import OperationRegistry
from .tokens import ClassInventory

log = logging.getLogger("ath")

EXIT_OK, EXIT_FAILURES, EXIT_CONFIG = 0, 1, 2


def load_dataset(cfg: RunConfig, questions_key: str = "questions") -> Dataset:
    vocab = load_vocabulary(cfg.path("vocab"))
    registry = OperationRegistry.load(cfg.path("registry"))
    questions = load_questions(cfg.path(questions_key), registry)
    p = cfg.path("annotations", False)
    annotations = load_annotations(p) if p else {}
    p = cfg.path("detections", False)
    detections = load_detections(p, vocab, cfg.max_objects) if p else {}
    p = cfg.path("inventory", False)
    inventory = ClassInventory.load(p) if p else None
    p = cfg.path("predicted", False)
    predicted = load_opseqs(p) if p else None
    return Dataset(vocab, registry, questions, annotations, detections, inventory, predicted, _threshold(cfg), cfg.iou_threshold)


def _threshold(cfg: RunConfig) -> VerifyThreshold:
    if cfg.threshold is not None:
        return VerifyThreshold(cfg.threshold)
    p = cfg.path("threshold_file", False)
    if p is not None and Path(p).exists():
        return load_threshold(p)
    return VerifyThreshold()


def _recipe(cfg: RunConfig) -> AblationRecipe:
    return AblationRecipe("run", cfg.opseq_source, cfg.graph_recipe)


def _calibrate(cfg: RunConfig) -> VerifyThreshold:
    dev = load_dataset(cfg, "dev_questions")
    points = calibration_points(dev, _recipe(cfg))
    return calibrate_threshold(points, dev_id=str(cfg.path("dev_questions").name))


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text, encoding="utf-8")


def _find(dataset: Dataset, question_id: str):
    for rec in dataset.questions:
        if rec.question_id == question_id:
            return rec
    return None


def _graph_for(dataset: Dataset, cfg: RunConfig, image_id: str) -> SceneGraph:
    g = dataset.graph(image_id, cfg.graph_recipe)
    if g is None:
        raise IngestError(cfg.path("annotations", False) or cfg.path("detections", False), image_id, "no graph for image")
    return g


# --- commands ---------------------------------------------------------------


def cmd_answer(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    rec = _find(ds, args.question_id)
    if rec is None:
        print(f"question not found: {args.question_id}", file=sys.stderr)
        return EXIT_CONFIG
    graph = _graph_for(ds, cfg, rec.image_id)
    seq, flags = ds.opseq(rec, cfg.opseq_source)
    print(f"question: {rec.question}")
    if isinstance(seq, ATHError):
        print(f"failure: {type(seq).__name__}: {seq}")
        return EXIT_FAILURES
    for op in seq.ops:
        print(f"  op: {op.head}: {', '.join(op.args)}")
    try:
        ans = execute(seq, graph, ds.threshold, ds.registry)
    except AnswerFailure as exc:
        print(format_trace(exc, graph))
        return EXIT_FAILURES
    print(format_trace(ans, graph))
    return EXIT_OK


def cmd_eval(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    if cfg.calibrate:
        ds.threshold = _calibrate(cfg)
    recipe = _recipe(cfg)
    result, grounding = evaluate(ds, recipe, cfg.workers)
    coverage = None
    if recipe.graph.objects == "predicted":
        graphs = {r.image_id: ds.graph(r.image_id, recipe.graph) for r in ds.questions}
        coverage = detection_coverage({k: g for k, g in graphs.items() if g is not None}, ds.questions, cfg.iou_threshold)
    acc = result.accuracy
    print(f"questions: {len(result.outcomes)}")
    print(f"accuracy: {acc:.1f}" if acc is not None else "accuracy: n/a")
    for label, v in (("binary", result.binary_accuracy), ("open", result.open_accuracy)):
        print(f"{label} accuracy: {v:.1f}" if v is not None else f"{label} accuracy: n/a")
    print(f"threshold: {ds.threshold.value:.6g}")
    for reason, n in result.failures.items():
        print(f"failures[{reason}]: {n}")
    print(format_grounding(cfg.recipe, grounding, coverage))
    out = args.out or cfg.outputs.get("report")
    if out:
        report = {
            "recipe": recipe.graph.as_dict(),
            "opseq_source": recipe.opseq_source,
            "threshold": ds.threshold.to_json(),
            **result.to_json(),
            "grounding": grounding.to_json(),
            "coverage": coverage.to_json() if coverage else None,
            "outcomes": [
                {"question_id": o.question_id, "predicted": o.predicted, "gold": o.gold, "correct": o.correct, "failure": o.failure}
                for o in result.outcomes
            ],
        }
        _write(out, report_json(report))
    return EXIT_FAILURES if result.failures else EXIT_OK


def cmd_ablate(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    recipes = default_ablation_recipes()
    if args.rows:
        wanted = [r.strip() for r in args.rows.split(",") if r.strip()]
        by_name = {r.name: r for r in recipes}
        missing = [w for w in wanted if w not in by_name]
        if missing:
            raise ConfigError(f"unknown ablation rows: {missing}")
        recipes = [by_name[w] for w in wanted]
    gqa = None
    p = cfg.path("gqa_grounding", False)
    if p is not None:
        try:
            gqa = {str(k): float(v) for k, v in json.loads(Path(p).read_text(encoding="utf-8")).items()}
        except (OSError, ValueError, AttributeError) as exc:
            raise IngestError(p, "<file>", str(exc)) from None
    rows = ablation_matrix(recipes, ds, cfg.workers, gqa)
    print(format_ablation(rows))
    out = args.out or cfg.outputs.get("ablation")
    if out:
        _write(out, report_json({"threshold": ds.threshold.to_json(), "rows": [r.to_json() for r in rows]}))
    return EXIT_FAILURES if any(r.result.failures for r in rows) else EXIT_OK


def cmd_calibrate(cfg: RunConfig, args) -> int:
    try:
        th = _calibrate(cfg)
    except CalibrationError as exc:
        print(f"calibration failed: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    out = args.out or cfg.outputs.get("threshold") or cfg.path("threshold_file", False)
    print(f"threshold: {th.value:.6g}")
    print(f"f1: {th.f1:.6g}")
    if out:
        save_threshold(out, th)
        print(f"written: {out}")
    return EXIT_OK


def cmd_convert(cfg: RunConfig, args) -> int:
    from .gqa import convert

    cats = None
    if args.categories:
        try:
            cats = json.loads(Path(args.categories).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise IngestError(args.categories, "<file>", str(exc)) from None
    spatial = tuple(s.strip() for s in (args.spatial or "").split(",") if s.strip())
    conv = convert(args.scene_graphs, args.questions, cats, spatial)
    files = conv.write(args.out)
    print(f"images: {len(conv.annotations)}")
    print(f"questions: {len(conv.questions)} (skipped {conv.skipped})")
    unparsed = sum(1 for q in conv.questions if q.gold is None)
    print(f"unparsed op-seqs: {unparsed}")
    for k, v in files.items():
        print(f"{k}: {v}")
    return EXIT_OK


def cmd_gen_synthetic(cfg: RunConfig, args) -> int:
    from .synthetic import SyntheticConfig, generate

    sc = SyntheticConfig(
        seed=cfg.seed,
        n_images=args.images,
        questions_per_image=args.questions_per_image,
        n_dev_images=args.dev_images,
        object_noise=args.object_noise,
        attribute_noise=args.attribute_noise,
        relation_noise=args.relation_noise,
        opseq_noise=args.opseq_noise,
        lossy_rate=args.lossy_rate,
    )
    corpus = generate(sc)
    corpus.write(args.out)
    print(f"images: {len(corpus.annotations)}")
    print(f"questions: {len(corpus.questions)} (+{len(corpus.dev_questions)} dev)")
    print(f"config: {Path(args.out) / 'config.json'}")
    return EXIT_OK


def cmd_trace_grounding(cfg: RunConfig, args) -> int:
    ds = load_dataset(cfg)
    rec = _find(ds, args.question_id)
    if rec is None:
        print(f"question not found: {args.question_id}", file=sys.stderr)
        return EXIT_CONFIG
    graph = _graph_for(ds, cfg, rec.image_id)
    seq, _ = ds.opseq(rec, cfg.opseq_source)
    paths, failed = (), None
    if isinstance(seq, ATHError):
        failed = type(seq).__name__
    else:
        try:
            paths = execute(seq, graph, ds.threshold, ds.registry).paths
        except AnswerFailure as exc:
            failed, paths = exc.reason, exc.paths
    att = path_attention(paths) if paths else {}
    print(f"question: {rec.question}")
    if failed:
        print(f"failure: {failed}")
    for nid, w in att.items():
        box = graph.node(nid).bbox
        hits = []
        for cat in CATEGORIES:
            best = max((iou(box, r.bbox) for r in rec.category_refs(cat)), default=0.0)
            hits.append(f"{cat}={best:.2f}")
        print(f"attention {nid}: {w:.4f} iou[{' '.join(hits)}]")
    scores = grounding_score(att, rec, graph, cfg.iou_threshold)
    print("grounding: " + " ".join(f"{c}={'n/a' if scores[c] is None else f'{scores[c]:.2f}'}" for c in REPORT_CATEGORIES))
    return EXIT_FAILURES if failed else EXIT_OK


COMMANDS = {
    "answer": cmd_answer,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
    "calibrate": cmd_calibrate,
    "convert": cmd_convert,
    "gen-synthetic": cmd_gen_synthetic,
    "trace-grounding": cmd_trace_grounding,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--recipe", help="graph recipe: oracle, predicted, obj, obj+attr or letters like p,o,o")
    common.add_argument("--opseq-source", choices=("gold", "processed", "predicted"))
    common.add_argument("--threshold", type=float, help="verification threshold (overrides any threshold file)")
    common.add_argument("--calibrate", action="store_true", default=None, help="calibrate the threshold on dev questions first")
    common.add_argument("--workers", type=int, help="question-level worker processes")
    common.add_argument("--iou-threshold", type=float)
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="ath", description="Scene-graph question answering by probabilistic path search.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("answer", parents=[common], help="answer one question and print the trace")
    a.add_argument("question_id")
    e = sub.add_parser("eval", parents=[common], help="evaluate accuracy and grounding")
    e.add_argument("--out", help="JSON report path")
    ab = sub.add_parser("ablate", parents=[common], help="run the recipe matrix")
    ab.add_argument("--rows", help="comma-separated subset of row names")
    ab.add_argument("--out", help="JSON report path")
    c = sub.add_parser("calibrate", parents=[common], help="fit the verification threshold")
    c.add_argument("--out", help="threshold file to write")
    cv = sub.add_parser("convert", parents=[common], help="convert raw GQA files")
    cv.add_argument("--scene-graphs", required=True)
    cv.add_argument("--questions", required=True)
    cv.add_argument("--categories", help="JSON map of attribute category to attributes")
    cv.add_argument("--spatial", help="comma-separated spatial relationship names")
    cv.add_argument("--out", required=True)
    g = sub.add_parser("gen-synthetic", parents=[common], help="write a synthetic corpus")
    g.add_argument("--out", required=True)
    g.add_argument("--images", type=int, default=100)
    g.add_argument("--questions-per-image", type=int, default=6)
    g.add_argument("--dev-images", type=int, default=20)
    for name in ("object", "attribute", "relation", "opseq"):
        g.add_argument(f"--{name}-noise", type=float, default=0.0)
    g.add_argument("--lossy-rate", type=float, default=0.0)
    t = sub.add_parser("trace-grounding", parents=[common], help="show attention and grounding for one question")
    t.add_argument("question_id")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    overrides = {
        "recipe": args.recipe,
        "opseq_source": args.opseq_source,
        "threshold": args.threshold,
        "calibrate": args.calibrate,
        "workers": args.workers,
        "iou_threshold": args.iou_threshold,
        "seed": args.seed,
    }
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except (ConfigError, IngestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ATHError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURES


if __name__ == "__main__":
    sys.exit(main())
