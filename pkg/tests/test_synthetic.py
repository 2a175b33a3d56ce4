from __future__ import annotations

import filecmp
import json

import pytest

from ath.errors import ConfigError
from ath.ingest import CATEGORIES, candidate_pairs
from ath.opseq import parse_opseq
from ath.synthetic import SyntheticConfig, generate, synthetic_vocabulary

SMALL = SyntheticConfig(seed=1, n_images=10, questions_per_image=4, n_dev_images=2)


def test_same_seed_same_bytes(tmp_path):
    generate(SMALL).write(tmp_path / "a")
    generate(SMALL).write(tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert not mismatch and not errors and len(match) == len(names)


def test_different_seed_differs():
    a = generate(SMALL)
    b = generate(SyntheticConfig(seed=2, n_images=10, questions_per_image=4, n_dev_images=2))
    assert a.annotations != b.annotations


def test_written_config_points_at_files(tmp_path):
    generate(SMALL).write(tmp_path)
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["kind"] == "config" and cfg["seed"] == 1
    for name in cfg["paths"].values():
        assert (tmp_path / name).exists()


@pytest.mark.parametrize(
    "kwargs",
    [
        {"max_objects": 13},
        {"min_objects": 1},
        {"min_objects": 6, "max_objects": 5},
        {"object_noise": 1.5},
        {"n_images": 0},
    ],
)
def test_infeasible_config(kwargs):
    with pytest.raises(ConfigError):
        generate(SyntheticConfig(**kwargs))


def test_vocabulary_shape():
    v = synthetic_vocabulary()
    assert len(v.object_names) == 30
    assert [c for c, _ in v.attribute_categories] == ["color", "material", "size", "pattern"]


def test_question_mix(clean_corpus):
    qs = clean_corpus.questions
    assert len(qs) >= 500
    heads = {op.kind for q in qs for op in q.gold.ops}
    assert {"select", "filter", "relate", "query", "exist", "and", "or"} <= heads
    assert {q.qtype for q in qs} == {"binary", "open"}
    answers = {q.answer for q in qs if q.qtype == "binary"}
    assert answers == {"yes", "no"}


def test_gold_text_parses(clean_corpus):
    for q in clean_corpus.questions:
        assert parse_opseq(q.opseq, clean_corpus.registry).ops == q.gold.ops


def test_refs_are_annotated_objects(clean_corpus):
    by_img = {a.image_id: {o.id: o.bbox for o in a.objects} for a in clean_corpus.annotations}
    for q in clean_corpus.questions:
        for cat in CATEGORIES:
            for ref in q.category_refs(cat):
                assert by_img[q.image_id][ref.id] == ref.bbox


def test_annotated_relations_are_candidate_pairs(clean_corpus):
    for img in clean_corpus.annotations:
        pairs = set(candidate_pairs(img.objects))
        for o in img.objects:
            for _, target in o.relations:
                assert (o.id, target) in pairs


def test_noise_free_predicted_opseqs_equal_gold(clean_corpus):
    reg = clean_corpus.registry
    for q in clean_corpus.questions:
        assert parse_opseq(clean_corpus.predicted[q.question_id], reg).ops == q.gold.without_dependencies().ops


def test_noisy_opseqs_sometimes_differ(noisy_corpus):
    reg = noisy_corpus.registry
    changed = 0
    for q in noisy_corpus.questions:
        text = noisy_corpus.predicted[q.question_id]
        if not text or parse_opseq(text, reg).ops != q.gold.without_dependencies().ops:
            changed += 1
    assert 0 < changed < len(noisy_corpus.questions)
