from __future__ import annotations

import itertools
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ath.errors import AnswerFailure, CalibrationError, EmptyPath, NoViablePath, OracleTooLarge
from ath.executor import (
    InferencePath,
    brute_force_best_path,
    calibrate_threshold,
    emission,
    execute,
    format_trace,
    path_attention,
    relation_side,
    threshold_candidates,
    transition,
    viterbi,
)
from ath.graph import top_class
from ath.opseq import Operation, default_registry, parse_opseq

from conftest import VOCAB, edge, node, random_graph, scene

REG = default_registry(VOCAB.categories)


def ops(*lines):
    return parse_opseq(list(lines), REG).ops


def seq(*lines):
    return parse_opseq(list(lines), REG)


# --- emissions and transitions ---------------------------------------------


def test_select_emission():
    g = scene([node("n0", {"table": 0.7, "chair": 0.3})])
    assert emission(ops("select: table")[0], g, REG)["n0"] == pytest.approx(0.7)


def test_filter_emission_and_negation():
    g = scene([node("n0", {"cup": 1}, {"color": {"red": 0.9, "blue": 0.1}})])
    assert emission(ops("filter color: red")[0], g, REG)["n0"] == pytest.approx(0.9)
    assert emission(ops("filter color: not(red)")[0], g, REG)["n0"] == pytest.approx(0.1)
    assert emission(Operation("filter", None, ("not red",)), g, REG)["n0"] == pytest.approx(0.1)


def test_filter_on_node_without_category_scores_zero():
    g = scene([node("n0", {"cup": 1})])
    assert emission(ops("filter color: red")[0], g, REG)["n0"] == 0.0


def test_relate_transition_and_missing_edge():
    g = scene(
        [node("n0", {"man": 1}), node("n1", {"cup": 1}), node("n2", {"dog": 1})],
        [edge("n0", "n1", {"holding": 0.8, "near": 0.2})],
    )
    tr = transition(ops("relate: _,holding,o")[0], g, REG)
    assert tr.score("n0", "n1") == pytest.approx(0.8)
    assert tr.score("n0", "n2") == 0.0
    # with "s" the target is the subject, so the move runs against the edge
    tr_s = transition(ops("relate: _,holding,s")[0], g, REG)
    assert tr_s.score("n1", "n0") == pytest.approx(0.8)
    assert tr_s.score("n0", "n1") == 0.0


def test_non_relational_step_is_identity():
    g = scene([node("n0", {"cup": 1}), node("n1", {"cup": 1})])
    tr = transition(ops("filter color: red")[0], g, REG)
    assert tr.identity
    assert tr.score("n0", "n0") == 1.0 and tr.score("n0", "n1") == 0.0


def test_missing_relation_side_defaults_to_subject(caplog):
    with caplog.at_level(logging.INFO, logger="ath.executor"):
        assert relation_side(Operation("relate", None, ("_", "on"))) == "o"
    assert "relation side missing" in caplog.text


# --- viterbi ------------------------------------------------------------------


def test_single_node_single_step():
    g = scene([node("n0", {"cup": 0.8, "dog": 0.2})])
    p = viterbi(ops("select: cup"), g, REG)
    assert p.node_ids == ("n0",)
    assert p.joint == pytest.approx(0.8)


def test_three_node_chain_matches_enumeration():
    g = scene(
        [node("n0", {"cup": 0.6, "table": 0.4}), node("n1", {"table": 0.9, "cup": 0.1}), node("n2", {"cup": 0.7, "chair": 0.3})],
        [edge("n0", "n1", {"on": 0.5, "near": 0.5}), edge("n2", "n1", {"on": 0.9, "near": 0.1}), edge("n2", "n0", {"on": 0.3, "near": 0.7})],
    )
    chain = ops("select: cup", "relate: _,on,o")
    p = viterbi(chain, g, REG)
    # hand enumeration: start s, target t -> P(cup|s) * P(on|s->t)
    best = max(
        (g.node(s).class_dist.prob(VOCAB.index("objects", "cup")) * (g.edge(s, t).rel_dist.prob(0) if g.edge(s, t) else 0), (s, t))
        for s, t in itertools.product(["n0", "n1", "n2"], repeat=2)
    )
    assert p.joint == pytest.approx(best[0])
    assert p.node_ids == best[1] == ("n2", "n1")
    assert p.factor_count == 3


def test_ties_go_to_earliest_node():
    g = scene([node("n0", {"dog": 1}), node("n1", {"cup": 1}), node("n2", {"cup": 1})])
    assert viterbi(ops("select: cup"), g, REG).node_ids == ("n1",)


def test_no_viable_path_reports_prefix():
    g = scene([node("n0", {"cup": 1}, {"color": {"blue": 1}})])
    with pytest.raises(NoViablePath) as ei:
        viterbi(ops("select: cup", "filter color: red"), g, REG)
    assert ei.value.step == 1
    assert ei.value.partial.node_ids == ("n0",)
    with pytest.raises(NoViablePath) as ei:
        viterbi(ops("select: cat"), g, REG)
    assert ei.value.step == 0 and ei.value.partial is None


def test_geometric_mean():
    p = InferencePath(("a", "b"), math.log(0.5 * 0.8 * 0.9), 3)
    assert p.geometric_mean == pytest.approx((0.5 * 0.8 * 0.9) ** (1 / 3))


def _random_chain(rng, length):
    lines = [f"select: {VOCAB.object_names[rng.integers(len(VOCAB.object_names))]}"]
    for _ in range(length - 1):
        r = rng.random()
        if r < 0.4:
            cat, members = VOCAB.attribute_categories[rng.integers(len(VOCAB.attribute_categories))]
            val = members[rng.integers(len(members))]
            lines.append(f"filter {cat}: {'not(' + val + ')' if rng.random() < 0.2 else val}")
        else:
            tgt = "_" if rng.random() < 0.5 else VOCAB.object_names[rng.integers(len(VOCAB.object_names))]
            rel = VOCAB.relationship_names[rng.integers(len(VOCAB.relationship_names))]
            lines.append(f"relate: {tgt},{rel},{'s' if rng.random() < 0.5 else 'o'}")
    return ops(*lines)


def viterbi_vs_oracle(rng):
    g = random_graph(rng, int(rng.integers(1, 9)))
    chain = _random_chain(rng, int(rng.integers(1, 7)))
    try:
        v = viterbi(chain, g, REG)
    except NoViablePath as exc:
        with pytest.raises(NoViablePath) as ei:
            brute_force_best_path(chain, g, REG)
        assert ei.value.step == exc.step
        return False
    b = brute_force_best_path(chain, g, REG)
    assert math.isclose(v.log_joint, b.log_joint, rel_tol=1e-9, abs_tol=1e-12)
    return True


def test_viterbi_matches_brute_force_sample():
    rng = np.random.default_rng(7)
    viable = sum(viterbi_vs_oracle(rng) for _ in range(200))
    assert viable > 50


def test_brute_force_single_node():
    g = scene([node("n0", {"cup": 1})])
    p = brute_force_best_path(ops("select: cup"), g, REG)
    assert p.node_ids == ("n0",) and p.joint == 1.0


def test_brute_force_limit():
    g = random_graph(np.random.default_rng(0), 8)
    with pytest.raises(OracleTooLarge):
        brute_force_best_path(ops("select: cup", "relate: _,on,o", "relate: _,on,o"), g, REG, limit=100)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_appending_certain_step(seed):
    """A factor of 1 keeps the joint and can only raise the geometric mean,
    which always stays within the range of the path's factors."""
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(1, 6)), sparsity=0.0)
    chain = _random_chain(rng, int(rng.integers(1, 5)))
    try:
        p = viterbi(chain, g, REG)
    except NoViablePath:
        return
    assert min(p.factors) - 1e-12 <= p.geometric_mean <= max(p.factors) + 1e-12
    assert math.isclose(math.exp(p.log_joint), math.prod(p.factors), rel_tol=1e-9)
    extended = InferencePath(p.node_ids + (p.final,), p.log_joint, p.factor_count + 1, p.factors + (1.0,))
    assert extended.joint == pytest.approx(p.joint)
    assert extended.geometric_mean >= p.geometric_mean - 1e-12
    assert extended.geometric_mean <= 1.0


# --- attention ----------------------------------------------------------------


def test_attention_worked_example():
    att = path_attention([["obj0", "obj0", "obj3"]])
    assert att == {"obj0": 2 / 3, "obj3": 1 / 3}
    assert att["obj0"] == pytest.approx(0.66, abs=0.01)
    assert att["obj3"] == pytest.approx(0.33, abs=0.01)


def test_attention_single_step():
    assert path_attention([["obj5"]]) == {"obj5": 1.0}


def test_attention_pools_branches():
    assert path_attention([["a", "b"], ["c"]]) == {"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}


def test_attention_empty():
    with pytest.raises(EmptyPath):
        path_attention([])


@given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=6), min_size=1, max_size=3))
def test_attention_sums_to_one(paths):
    assert abs(sum(path_attention(paths).values()) - 1.0) <= 1e-9


# --- answers ------------------------------------------------------------------


def planted_scene():
    return scene(
        [
            node("n0", {"cup": 1}, {"color": {"blue": 1}}),
            node("n1", {"cup": 1}, {"color": {"red": 1}, "material": {"metal": 1}}),
            node("n2", {"table": 1}, {"color": {"brown": 1}, "material": {"wooden": 1}}),
            node("n3", {"chair": 1}, {"color": {"brown": 1}}),
        ],
        [edge("n1", "n2", {"on": 1}), edge("n0", "n3", {"on": 1}), edge("n3", "n2", {"near": 1})],
    )


def test_planted_red_cup_on_table():
    ans = execute(seq("select: cup", "filter color: red", "relate: _,on,o", "query: name"), planted_scene(), 0.5, REG)
    assert ans.value == "table" and ans.kind == "open"
    assert ans.paths[0].node_ids == ("n1", "n1", "n2")


def test_open_answer_comes_from_final_node():
    g = planted_scene()
    ans = execute(seq("select: table", "query: material"), g, 0.5, REG)
    final = g.node(ans.paths[0].final)
    assert ans.value == top_class(final.attr_dists["material"], VOCAB)[0] == "wooden"


def test_exist_threshold():
    g = scene([node("n0", {"cup": 0.9, "dog": 0.1})])
    assert execute(seq("select: cup", "exist: ?"), g, 0.5, REG).value == "yes"
    assert execute(seq("select: cup", "exist: ?"), g, 0.95, REG).value == "no"


def test_exist_without_any_match_is_no_with_prefix_attention():
    g = planted_scene()
    ans = execute(seq("select: cup", "filter color: green", "exist: ?"), g, 0.5, REG)
    assert ans.value == "no"
    assert ans.paths[0].node_ids == ("n0",)


def test_verify_attribute():
    g = planted_scene()
    assert execute(seq("select: table", "verify color: brown"), g, 0.5, REG).value == "yes"
    assert execute(seq("select: table", "verify color: red"), g, 0.5, REG).value == "no"


def test_verify_relation():
    g = planted_scene()
    assert execute(seq("select: table", "verify rel: cup,on,s"), g, 0.5, REG).value == "yes"
    assert execute(seq("select: table", "verify rel: dog,on,s"), g, 0.5, REG).value == "no"


def test_and_or_combiners():
    g = planted_scene()
    yes_no = ["select: cup []", "exist: ? [0]", "select: dog []", "exist: ? [2]"]
    assert execute(seq(*yes_no, "and: [1,3]"), g, 0.5, REG).value == "no"
    assert execute(seq(*yes_no, "or: [1,3]"), g, 0.5, REG).value == "yes"


def test_same_and_different():
    g = planted_scene()
    a = ["select: table []", "select: chair []"]
    assert execute(seq(*a, "same color: [0,1]"), g, 0.5, REG).value == "yes"
    assert execute(seq(*a, "different color: [0,1]"), g, 0.5, REG).value == "no"
    assert execute(seq("select: table []", "select: cup []", "filter color: red [1]", "same material: [0,2]"), g, 0.5, REG).value == "no"


def test_choose():
    g = planted_scene()
    assert execute(seq("select: table", "choose color: red|brown"), g, 0.5, REG).value == "brown"
    assert execute(seq("select: table", "choose name: chair|table"), g, 0.5, REG).value == "table"


def test_common():
    g = planted_scene()
    ans = execute(seq("select: table []", "select: chair []", "common: [0,1]"), g, 0.5, REG)
    assert ans.value == "color"


def test_open_question_failure():
    g = planted_scene()
    with pytest.raises(AnswerFailure) as ei:
        execute(seq("select: dog", "query: name"), g, 0.5, REG)
    assert ei.value.reason == "NoViablePath"


def test_unknown_term_failure():
    with pytest.raises(AnswerFailure) as ei:
        execute(seq("select: Table", "query: name"), planted_scene(), 0.5, REG)
    assert ei.value.reason == "UnknownVocabularyTerm"


def test_unsupported_operation_failure():
    from ath.opseq import scan_registry

    reg = scan_registry(["select", "choose older"], VOCAB.categories)
    s = parse_opseq(["select: cup []", "select: table []", "choose older: cup|table [0,1]"], reg)
    with pytest.raises(AnswerFailure) as ei:
        execute(s, planted_scene(), 0.5, reg)
    assert ei.value.reason in ("UnsupportedOperation", "UnsupportedStructure")


def test_trace_lists_steps():
    g = planted_scene()
    ans = execute(seq("select: cup", "filter color: red", "relate: _,on,o", "query: name"), g, 0.5, REG)
    text = format_trace(ans, g)
    assert "step 0: select: cup" in text and "chosen n1" in text
    assert text.splitlines()[-1] == "answer: table"


# --- calibration --------------------------------------------------------------


def test_calibration_needs_both_labels():
    with pytest.raises(CalibrationError):
        calibrate_threshold([(0.3, "yes"), (0.9, "yes")])


def test_calibration_separable():
    th = calibrate_threshold([(0.1, "no"), (0.2, "no"), (0.8, "yes"), (0.9, "yes")])
    assert 0.2 < th.value < 0.8
    assert th.f1 == 1.0


def sweep_oracle(points):
    """Exhaustive sweep: every candidate threshold scored from scratch."""
    scores = sorted({s for s, _ in points})
    cands = sorted({0.0, 1.0} | {(a + b) / 2 for a, b in zip(scores, scores[1:])})
    best = None
    for tau in cands:
        tp = sum(1 for s, g in points if s >= tau and g == "yes")
        fp = sum(1 for s, g in points if s >= tau and g == "no")
        fn = sum(1 for s, g in points if s < tau and g == "yes")
        f1 = 2 * tp / (2 * tp + fp + fn)
        if best is None or f1 > best[1]:
            best = (tau, f1)
    return best


def test_calibration_matches_sweep_on_mixed_set():
    rng = np.random.default_rng(20)
    pts = [(round(float(rng.random()), 3), "yes" if rng.random() < 0.5 else "no") for _ in range(20)]
    th = calibrate_threshold(pts)
    tau, f1 = sweep_oracle(pts)
    assert th.value == tau and th.f1 == f1


def test_threshold_candidates():
    assert threshold_candidates([0.2, 0.4, 0.4]).tolist() == [0.0, 0.30000000000000004, 1.0]
