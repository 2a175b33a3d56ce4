"""Acceptance criteria, one test each.

Run with ``pytest tests/test_acceptance.py`` (a PASS/FAIL line per criterion
is printed in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import VOCAB, node, random_graph, scene  # noqa: E402

from ath.cli import main  # noqa: E402
from ath.errors import NoViablePath  # noqa: E402
from ath.executor import brute_force_best_path, calibrate_threshold, path_attention, viterbi  # noqa: E402
from ath.graph import BoundingBox  # noqa: E402
from ath.ingest import ALL, InferenceObject, QuestionRecord, candidate_pairs, iou  # noqa: E402
from ath.metrics import Dataset, ablation_matrix, default_ablation_recipes, grounding_score  # noqa: E402
from ath.opseq import default_registry, parse_opseq, serialize_opseq  # noqa: E402
from ath.synthetic import SyntheticConfig, generate  # noqa: E402
from ath.tokens import round_trip  # noqa: E402

RESULTS: dict[int, tuple[bool, str, str]] = {}

REG = default_registry(VOCAB.categories)


def _record(number: int, title: str, ok: bool, detail: str) -> None:
    RESULTS[number] = (ok, title, detail)


# --- criterion functions --------------------------------------------------------


def _random_chain(rng, length):
    lines = [f"select: {VOCAB.object_names[rng.integers(len(VOCAB.object_names))]}"]
    for _ in range(length - 1):
        if rng.random() < 0.4:
            cat, members = VOCAB.attribute_categories[rng.integers(len(VOCAB.attribute_categories))]
            lines.append(f"filter {cat}: {members[rng.integers(len(members))]}")
        else:
            tgt = "_" if rng.random() < 0.5 else VOCAB.object_names[rng.integers(len(VOCAB.object_names))]
            rel = VOCAB.relationship_names[rng.integers(len(VOCAB.relationship_names))]
            lines.append(f"relate: {tgt},{rel},{'s' if rng.random() < 0.5 else 'o'}")
    return parse_opseq(lines, REG).ops


def criterion_1():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    viable = mismatches = 0
    for _ in range(1000):
        g = random_graph(rng, int(rng.integers(1, 9)))
        chain = _random_chain(rng, int(rng.integers(1, 7)))
        try:
            v = viterbi(chain, g, REG)
        except NoViablePath as exc:
            try:
                brute_force_best_path(chain, g, REG)
                mismatches += 1
            except NoViablePath as exc2:
                mismatches += exc2.step != exc.step
            continue
        b = brute_force_best_path(chain, g, REG)
        viable += 1
        if not math.isclose(v.log_joint, b.log_joint, rel_tol=1e-9, abs_tol=1e-12):
            mismatches += 1
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and elapsed < 60
    return ok, f"1000 instances ({viable} viable), {mismatches} mismatches, {elapsed:.1f}s"


def criterion_2():
    att = path_attention([("obj0", "obj0", "obj3")])
    exact = att == {"obj0": 2 / 3, "obj3": 1 / 3}
    rounded = abs(att["obj0"] - 0.66) <= 0.01 and abs(att["obj3"] - 0.33) <= 0.01
    return exact and rounded, f"obj0={att['obj0']:.6f} obj3={att['obj3']:.6f}"


def criterion_3():
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp) / "synthetic"
        buf = io.StringIO()
        with contextlib.redirect_stdout(buf):
            rc_gen = main(["gen-synthetic", "--out", str(out), "--seed", "1", "--images", "100", "--dev-images", "10"])
            rc_eval = main(["eval", "--config", str(out / "config.json"), "--recipe", "oracle", "--out", str(out / "report.json")])
        report = json.loads((out / "report.json").read_text())
        questions = json.loads((out / "questions.json").read_text())["questions"]
    lines = [ln for q in questions for ln in (q["opseq"] if isinstance(q["opseq"], list) else q["opseq"].splitlines())]
    heads = {ln.split(":")[0].split()[0] for ln in lines}
    needed = {"select", "filter", "relate", "query", "exist", "and", "or"}
    acc = report["accuracy"]
    qaf = report["grounding"]["scores"][ALL]
    ok = (
        rc_gen == 0
        and rc_eval == 0
        and len(questions) >= 500
        and needed <= heads
        and acc == 100.0
        and abs(qaf - 100.0) <= 1e-9
    )
    return ok, f"{len(questions)} questions, accuracy {acc:.1f}, Q+A+FA {qaf:.4f}, heads cover {sorted(needed & heads)}"


def criterion_4():
    corpus = generate(SyntheticConfig(seed=11, n_images=100, questions_per_image=6, n_dev_images=0, lossy_rate=0.1))
    reg = corpus.registry
    parse_fail = silent = flagged = clean = 0
    for q in corpus.questions:
        seq = parse_opseq(q.opseq, reg)
        text = serialize_opseq(seq, reg)
        if text != q.opseq or parse_opseq(text, reg).ops != seq.ops:
            parse_fail += 1
        rt = round_trip(seq, q.words, corpus.inventory, reg)
        if rt.identical:
            clean += 1
        elif rt.predicted_lossy:
            flagged += 1
        else:
            # changed without being flagged, conflict or not
            silent += 1
    ok = parse_fail == 0 and silent == 0
    return ok, f"{len(corpus.questions)} op-seqs: parse/serialize failures {parse_fail}; round trip identical {clean}, flagged lossy {flagged}, silent {silent}"


def _sweep(points):
    scores = sorted({s for s, _ in points})
    cands = sorted({0.0, 1.0} | {(a + b) / 2 for a, b in zip(scores, scores[1:])})
    best = None
    for tau in cands:
        tp = sum(1 for s, g in points if s >= tau and g)
        fp = sum(1 for s, g in points if s >= tau and not g)
        fn = sum(1 for s, g in points if s < tau and g)
        f1 = 2 * tp / (2 * tp + fp + fn)
        if best is None or f1 > best[1]:
            best = (tau, f1)
    return best


def criterion_5():
    rng = np.random.default_rng(5)
    sets = []
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        # coarse rounding creates ties between scores
        scores = np.round(rng.random(n), int(rng.integers(2, 5)))
        labels = rng.random(n) < np.clip(scores + rng.normal(0, 0.3, n), 0, 1)
        labels[0], labels[1] = True, False
        sets.append(list(zip(scores.tolist(), labels.tolist())))
    start = time.perf_counter()
    fitted = [calibrate_threshold(pts) for pts in sets]
    elapsed = time.perf_counter() - start
    disagree = sum((th.value, th.f1) != _sweep(pts) for th, pts in zip(fitted, sets))
    return disagree == 0 and elapsed < 10, f"100 dev sets, {disagree} disagreements, calibration {elapsed:.2f}s"


def criterion_6():
    checks = {}
    checks["iou"] = abs(iou(BoundingBox(0, 0, 10, 10), BoundingBox(5, 0, 15, 10)) - 1 / 3) <= 1e-12
    a, b = BoundingBox(0, 0, 10, 10), BoundingBox(50, 0, 60, 10)
    g = scene([node("n0", {"cup": 1}, box=a), node("n1", {"table": 1}, box=b)])
    rec = QuestionRecord("q", "img", "?", ("?",), "x", "x", "select: cup", "open", {"Q": (InferenceObject("r", a),)})
    for att, want in (({"n1": 1.0}, 0.0), ({"n0": 0.5, "n1": 0.5}, 50.0), ({"n0": 1.0}, 100.0)):
        checks[f"grounding {want:g}"] = grounding_score(att, rec, g)["Q"] == want

    class N:
        def __init__(self, i, box):
            self.id, self.bbox = i, box

    left = N("a", BoundingBox(0, 0, 10, 10))
    # 10-wide boxes grow by 1.5 px per side: a 2 px gap closes, a 4 px gap does not
    checks["gap 2 px included"] = candidate_pairs([left, N("b", BoundingBox(12, 0, 22, 10))]) == [("a", "b"), ("b", "a")]
    checks["gap 4 px excluded"] = candidate_pairs([left, N("c", BoundingBox(14, 0, 24, 10))]) == []
    failed = [k for k, v in checks.items() if not v]
    return not failed, "all fixtures exact" if not failed else f"failed: {failed}"


# (better row, worse row): the worse row swaps one oracle component for its noisy counterpart
MONOTONE_PAIRS = (
    ("ATH-Oracle", "ATH-6"),
    ("ATH-6", "ATH-4"),
    ("ATH-4", "ATH-2"),
    ("ATH-7", "ATH-5"),
    ("ATH-5", "ATH-3"),
    ("ATH-3", "ATH"),
    ("ATH-8", "ATH-1"),
    ("ATH-Oracle", "ATH-8"),
    ("ATH-Oracle", "ATH-7"),
    ("ATH-2", "ATH-1"),
    ("ATH-2", "ATH"),
    ("ATH-4", "ATH-3"),
    ("ATH-6", "ATH-5"),
)


def criterion_7():
    violations = []
    margins = []
    for seed in range(1, 6):
        c = generate(
            SyntheticConfig(
                seed=seed,
                n_images=60,
                questions_per_image=6,
                n_dev_images=0,
                object_noise=0.3,
                attribute_noise=0.3,
                relation_noise=0.5,
                opseq_noise=0.05,
                lossy_rate=0.05,
            )
        )
        ds = Dataset(
            c.vocab,
            c.registry,
            c.questions,
            {a.image_id: a for a in c.annotations},
            {d.image_id: d for d in c.detections},
            c.inventory,
            c.predicted,
        )
        acc = {r.recipe.name: r.result.accuracy for r in ablation_matrix(default_ablation_recipes(), ds)}
        if acc["ATH-Oracle"] != max(acc.values()):
            violations.append(f"seed {seed}: oracle row not maximal")
        for better, worse in MONOTONE_PAIRS:
            margins.append(acc[better] - acc[worse])
            if acc[worse] > acc[better]:
                violations.append(f"seed {seed}: {worse} {acc[worse]:.2f} > {better} {acc[better]:.2f}")
    detail = f"5 seeds x {len(MONOTONE_PAIRS)} pairs, min margin {min(margins):.2f} points"
    return not violations, detail if not violations else f"{detail}; {violations}"


GQA_DIR = os.environ.get("ATH_GQA_DIR")


def criterion_8():
    cfg = Path(GQA_DIR) / "config.json"
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf):
        main(["eval", "--config", str(cfg), "--recipe", "oracle", "--opseq-source", "gold"])
    acc = next((ln for ln in buf.getvalue().splitlines() if ln.startswith("accuracy:")), "accuracy: n/a")
    return True, f"{acc} (reference 92.31, comparison only)"


CRITERIA = {
    1: ("Viterbi equals brute-force oracle", criterion_1),
    2: ("Path-attention fixture", criterion_2),
    3: ("Synthetic end-to-end", criterion_3),
    4: ("Round-trip suites", criterion_4),
    5: ("Threshold calibration equals sweep", criterion_5),
    6: ("Metric fixtures", criterion_6),
    7: ("Ablation monotonicity", criterion_7),
    8: ("Full-data reference", criterion_8),
}


def _run(number: int) -> None:
    title, fn = CRITERIA[number]
    ok, detail = fn()
    _record(number, title, ok, detail)
    assert ok, detail


def test_criterion_1_viterbi_oracle():
    _run(1)


def test_criterion_2_path_attention():
    _run(2)


def test_criterion_3_synthetic_end_to_end():
    _run(3)


def test_criterion_4_round_trips():
    _run(4)


def test_criterion_5_calibration():
    _run(5)


def test_criterion_6_metric_fixtures():
    _run(6)


def test_criterion_7_ablation_monotonicity():
    _run(7)


@pytest.mark.skipif(not GQA_DIR, reason="set ATH_GQA_DIR to a converted GQA directory")
def test_criterion_8_full_data_reference():
    _run(8)


def format_results() -> list[str]:
    lines = []
    for n in sorted(CRITERIA):
        if n in RESULTS:
            ok, title, detail = RESULTS[n]
            lines.append(f"{'PASS' if ok else 'FAIL'} criterion {n} ({title}): {detail}")
        else:
            lines.append(f"SKIP criterion {n} ({CRITERIA[n][0]})")
    return lines


if __name__ == "__main__":
    failed = False
    for n, (title, fn) in CRITERIA.items():
        if n == 8 and not GQA_DIR:
            continue
        try:
            ok, detail = fn()
        except Exception as exc:  # report and continue with the rest
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        _record(n, title, ok, detail)
        failed |= not ok
    print("\n".join(format_results()))
    sys.exit(1 if failed else 0)
