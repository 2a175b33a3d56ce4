"""Operation-sequence executor.

Each path-consuming operation scores every node (emission) and, for
relational operations, every ordered node pair (transition). The Viterbi
recursion finds the node sequence with the largest product of those
factors; answers are read off the final node's distributions.

Path-consuming semantics: select, filter, relate, verify_attr, verify_rel.
Everything else (exist, query, choose, and, or, same, different, common)
consumes the finished path(s).
"""

from __future__ import annotations

import itertools
import logging
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    AnswerFailure,
    CalibrationError,
    EmptyPath,
    NoViablePath,
    OracleTooLarge,
    UnknownOperation,
    UnknownVocabularyTerm,
    UnsupportedOperation,
    UnsupportedStructure,
)
from .graph import OBJECTS, RELATIONS, SceneGraph, Vocabulary, top_class
from .opseq import (
    PATH_SEMANTICS,
    Operation,
    OperationRegistry,
    OpSeq,
    RegistryEntry,
    format_line,
    infer_entry,
    split_branches,
)

log = logging.getLogger(__name__)

RELATIONAL = frozenset({"relate", "verify_rel"})
BINARY_SEMANTICS = frozenset({"exist", "verify_attr", "verify_rel", "and", "or", "same", "different"})
_NOT = re.compile(r"^not\s*\(\s*(.+?)\s*\)$|^not\s+(.+)$")


@dataclass(frozen=True)
class StepScores:
    node_ids: tuple[str, ...]
    values: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.node_ids, self.values.tolist()))

    def __getitem__(self, node_id: str) -> float:
        return float(self.values[self.node_ids.index(node_id)])


@dataclass(frozen=True)
class TransitionScores:
    """Pairwise scores, ``matrix[i, j]`` for moving from node i to node j.

    ``matrix`` is None for non-relational steps: stay on the same node.
    """

    node_ids: tuple[str, ...]
    matrix: np.ndarray | None = None

    @property
    def identity(self) -> bool:
        return self.matrix is None

    def score(self, src: str, dst: str) -> float:
        if self.matrix is None:
            return 1.0 if src == dst else 0.0
        return float(self.matrix[self.node_ids.index(src), self.node_ids.index(dst)])


@dataclass(frozen=True)
class Trellis:
    ops: tuple[Operation, ...]
    emissions: tuple[np.ndarray, ...]
    log_scores: np.ndarray  # (steps, nodes)
    backpointers: np.ndarray  # (steps, nodes); row 0 unused


@dataclass(frozen=True)
class InferencePath:
    node_ids: tuple[str, ...]
    log_joint: float
    factor_count: int
    factors: tuple[float, ...] = field(default=(), compare=False)
    trellis: Trellis | None = field(default=None, compare=False, repr=False)

    def __len__(self) -> int:
        return len(self.node_ids)

    @property
    def joint(self) -> float:
        return math.exp(self.log_joint)

    @property
    def geometric_mean(self) -> float:
        if self.factor_count == 0:
            return 1.0
        return math.exp(self.log_joint / self.factor_count)

    @property
    def final(self) -> str:
        return self.node_ids[-1]


@dataclass(frozen=True)
class VerifyThreshold:
    value: float = 0.5
    dev_id: str | None = None
    f1: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"threshold {self.value} outside [0, 1]")

    def to_json(self) -> dict:
        return {"value": self.value, "dev_id": self.dev_id, "f1": self.f1}


@dataclass(frozen=True)
class Answer:
    kind: str  # "open" | "binary"
    value: str
    paths: tuple[InferencePath, ...] = ()
    scores: tuple[float, ...] = ()  # per-branch geometric means for binary answers
    ops: tuple[tuple[Operation, ...], ...] = field(default=(), compare=False)


def _entry(op: Operation, registry: OperationRegistry | None, vocab: Vocabulary) -> RegistryEntry:
    if registry is None:
        return infer_entry(op.head, vocab.categories)
    try:
        return registry.entry_for(op)
    except UnknownOperation:
        raise UnsupportedOperation(f"{op.head!r} is not registered") from None


def semantics_of(op: Operation, registry: OperationRegistry | None, vocab: Vocabulary) -> str:
    return _entry(op, registry, vocab).active_semantics


def _attribute_probs(vocab: Vocabulary, nodes, arg: str, qualifier: str | None) -> np.ndarray:
    m = _NOT.match(arg)
    attr = (m.group(1) or m.group(2)) if m else arg
    cat = vocab.category_of(attr)
    if qualifier and qualifier != cat and vocab.has_slice("attr:" + qualifier):
        raise UnknownVocabularyTerm(f"{attr!r} is not a {qualifier!r} attribute")
    idx = vocab.index("attr:" + cat, attr)
    probs = np.array(
        [n.attr_dists[cat].prob(idx) if cat in n.attr_dists else 0.0 for n in nodes]
    )
    return 1.0 - probs if m else probs


def _class_probs(graph: SceneGraph, name: str) -> np.ndarray:
    if name == "_":
        return np.ones(len(graph.nodes))
    idx = graph.vocab.index(OBJECTS, name)
    return np.array([n.class_dist.prob(idx) for n in graph.nodes])


def emission(op: Operation, graph: SceneGraph, registry: OperationRegistry | None = None) -> StepScores:
    """Per-node probability of matching one path-consuming operation."""
    sem = semantics_of(op, registry, graph.vocab)
    if sem == "select":
        values = _class_probs(graph, op.args[0])
    elif sem in ("filter", "verify_attr"):
        values = _attribute_probs(graph.vocab, graph.nodes, op.args[0], op.qualifier)
    elif sem in RELATIONAL:
        values = _class_probs(graph, op.args[0] or "_")
    else:
        raise UnsupportedOperation(f"{op.head!r} does not score nodes")
    ids = tuple(n.id for n in graph.nodes)
    return StepScores(ids, np.clip(values, 0.0, 1.0))


def relation_side(op: Operation) -> str:
    """Role of the node being moved to: "s" (subject) or "o" (object).

    A missing side means the current node is the subject.
    """
    if len(op.args) >= 3 and op.args[2]:
        side = op.args[2]
        if side not in ("s", "o"):
            raise UnsupportedOperation(f"unknown relation side {side!r}")
        return side
    log.info("relation side missing in %r; assuming current node is the subject", format_line(op))
    return "o"


def transition(op: Operation, graph: SceneGraph, registry: OperationRegistry | None = None) -> TransitionScores:
    ids = tuple(n.id for n in graph.nodes)
    sem = semantics_of(op, registry, graph.vocab)
    if sem not in RELATIONAL:
        if sem == "unsupported":
            raise UnsupportedOperation(f"{op.head!r} is not supported")
        return TransitionScores(ids)
    rel_idx = graph.vocab.index(RELATIONS, op.args[1])
    side = relation_side(op)
    n = len(ids)
    pos = graph.node_index
    matrix = np.zeros((n, n))
    for e in graph.edges:
        p = e.rel_dist.prob(rel_idx)
        if side == "o":  # current -> target
            matrix[pos[e.src], pos[e.dst]] = p
        else:  # target -> current
            matrix[pos[e.dst], pos[e.src]] = p
    return TransitionScores(ids, matrix)


def _step_tables(branch: Sequence[Operation], graph: SceneGraph, registry):
    if not branch:
        raise UnsupportedStructure("empty branch")
    if not graph.nodes:
        raise NoViablePath(0)
    ems, trs = [], []
    for t, op in enumerate(branch):
        if semantics_of(op, registry, graph.vocab) not in PATH_SEMANTICS:
            raise UnsupportedOperation(f"{op.head!r} cannot extend a path")
        tr = transition(op, graph, registry)
        if t == 0 and not tr.identity:
            raise UnsupportedStructure("a path cannot start with a relational step")
        ems.append(emission(op, graph, registry).values)
        trs.append(None if tr.identity else tr.matrix)
    return ems, trs


def _backtrack(log_scores: np.ndarray, back: np.ndarray, last: int) -> list[int]:
    path = [int(np.argmax(log_scores[last]))]
    for t in range(last, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def _make_path(ids, idx_path, ems, trs, log_joint, trellis) -> InferencePath:
    factors = [float(ems[0][idx_path[0]])]
    for t in range(1, len(idx_path)):
        if trs[t] is not None:
            factors.append(float(trs[t][idx_path[t - 1], idx_path[t]]))
        factors.append(float(ems[t][idx_path[t]]))
    return InferencePath(
        tuple(ids[i] for i in idx_path), float(log_joint), len(factors), tuple(factors), trellis
    )


def viterbi(branch: Sequence[Operation], graph: SceneGraph, registry: OperationRegistry | None = None) -> InferencePath:
    """Maximum-product node path for a linear chain of path operations.

    Computed in log space; ties resolve to the earlier node in graph order
    at every backpointer and at the final argmax. On failure NoViablePath
    carries the best path over the viable prefix.
    """
    ems, trs = _step_tables(branch, graph, registry)
    ids = tuple(n.id for n in graph.nodes)
    T, N = len(ems), len(ids)
    with np.errstate(divide="ignore"):
        log_em = [np.log(e) for e in ems]
        log_tr = [None if m is None else np.log(m) for m in trs]
    log_scores = np.full((T, N), -np.inf)
    back = np.zeros((T, N), dtype=int)
    log_scores[0] = log_em[0]
    if not np.isfinite(log_scores[0]).any():
        raise NoViablePath(0)
    for t in range(1, T):
        prev = log_scores[t - 1]
        if log_tr[t] is None:
            best, bp = prev, np.arange(N)
        else:
            cand = prev[:, None] + log_tr[t]
            bp = np.argmax(cand, axis=0)
            best = cand[bp, np.arange(N)]
        log_scores[t] = best + log_em[t]
        back[t] = bp
        if not np.isfinite(log_scores[t]).any():
            trellis = Trellis(tuple(branch[:t]), tuple(ems[:t]), log_scores[:t], back[:t])
            idx_path = _backtrack(log_scores, back, t - 1)
            partial = _make_path(ids, idx_path, ems, trs, log_scores[t - 1].max(), trellis)
            raise NoViablePath(t, partial)
    trellis = Trellis(tuple(branch), tuple(ems), log_scores, back)
    idx_path = _backtrack(log_scores, back, T - 1)
    return _make_path(ids, idx_path, ems, trs, log_scores[-1].max(), trellis)


def brute_force_best_path(
    branch: Sequence[Operation],
    graph: SceneGraph,
    registry: OperationRegistry | None = None,
    limit: int = 10**7,
) -> InferencePath:
    """Exhaustive max-product search, the reference for :func:`viterbi`.

    Products are formed directly in linear space. A non-relational step
    scores 0 for any move, so only the start node and the target of each
    relational step are free; every other node is pinned to its
    predecessor. ``limit`` bounds the number of enumerated paths.
    """
    ems, trs = _step_tables(branch, graph, registry)
    ids = tuple(n.id for n in graph.nodes)
    N = len(ids)
    free = [0] + [t for t in range(1, len(ems)) if trs[t] is not None]
    count = N ** len(free)
    if count > limit:
        raise OracleTooLarge(f"{count} paths exceed the limit of {limit}")
    combos = np.array(list(itertools.product(range(N), repeat=len(free))), dtype=int)
    combos = combos.reshape(count, len(free))
    paths = np.zeros((count, len(ems)), dtype=int)
    k = -1
    for t in range(len(ems)):
        if t in free:
            k += 1
        paths[:, t] = combos[:, k]
    product = np.ones(count)
    for t in range(len(ems)):
        if trs[t] is not None:
            product = product * trs[t][paths[:, t - 1], paths[:, t]]
        product = product * ems[t][paths[:, t]]
        if product.max() == 0.0:
            raise NoViablePath(t)
    best = int(np.argmax(product))
    idx_path = paths[best].tolist()
    return _make_path(ids, idx_path, ems, trs, math.log(product[best]), None)


def path_attention(paths: Iterable[InferencePath | Sequence[str]]) -> dict[str, float]:
    """Each traversed step gets an equal share; multiple paths are pooled."""
    steps: list[str] = []
    for p in paths:
        steps.extend(p.node_ids if isinstance(p, InferencePath) else p)
    if not steps:
        raise EmptyPath("no traversed steps")
    counts: dict[str, int] = {}
    for node in steps:
        counts[node] = counts.get(node, 0) + 1
    return {node: c / len(steps) for node, c in counts.items()}


@dataclass
class _Branch:
    ops: tuple[Operation, ...]
    path_ops: tuple[Operation, ...]
    terminal: Operation | None
    path: InferencePath | None = None
    partial: InferencePath | None = None
    failure: NoViablePath | None = None

    @property
    def visited(self) -> InferencePath | None:
        return self.path or self.partial

    @property
    def score(self) -> float:
        return self.path.geometric_mean if self.path is not None else 0.0


def _run_branch(ops, graph, registry) -> _Branch:
    sems = [semantics_of(op, registry, graph.vocab) for op in ops]
    k = len(ops)
    while k > 0 and sems[k - 1] not in PATH_SEMANTICS:
        k -= 1
    if k == 0:
        raise UnsupportedStructure("branch has no path operations")
    tail = ops[k:]
    for op, sem in zip(ops[:k], sems[:k]):
        if sem not in PATH_SEMANTICS:
            raise UnsupportedOperation(f"{op.head!r} inside a path is not supported")
    if len(tail) > 1:
        raise UnsupportedStructure("more than one answer operation at the end of a branch")
    br = _Branch(tuple(ops), tuple(ops[:k]), tail[0] if tail else None)
    try:
        br.path = viterbi(br.path_ops, graph, registry)
    except NoViablePath as exc:
        br.failure, br.partial = exc, exc.partial
    return br


def _paths(branches) -> tuple[InferencePath, ...]:
    return tuple(b.visited for b in branches if b.visited is not None)


def _yes(flag: bool) -> str:
    return "yes" if flag else "no"


def _attribute_value(graph: SceneGraph, node_id: str, what: str) -> str:
    node = graph.node(node_id)
    if what == "name":
        return top_class(node.class_dist, graph.vocab)[0]
    if what not in graph.vocab.categories:
        raise UnknownVocabularyTerm(f"{what!r} is neither 'name' nor an attribute category")
    dist = node.attr_dists.get(what)
    if dist is None:
        raise UnsupportedOperation(f"node {node_id} has no {what!r} distribution")
    return top_class(dist, graph.vocab)[0]


def _choose(op: Operation, graph: SceneGraph, node_id: str) -> str:
    """Pick whichever of the two candidates the final node supports more."""
    vocab = graph.vocab
    node = graph.node(node_id)
    objects = set(vocab.object_names)
    if op.qualifier in (None, "name") and all(x in objects for x in op.args):
        pa, pb = (node.class_dist.prob(vocab.index(OBJECTS, x)) for x in op.args)
    else:
        pa, pb = (float(_attribute_probs(vocab, (node,), x, op.qualifier)[0]) for x in op.args)
    return op.args[0] if pa >= pb else op.args[1]


def _category_arg(op: Operation) -> str:
    if op.qualifier:
        return op.qualifier
    if op.args:
        return op.args[0]
    return "name"


def execute(
    seq: OpSeq,
    graph: SceneGraph,
    threshold: VerifyThreshold | float = 0.5,
    registry: OperationRegistry | None = None,
) -> Answer:
    """Answer one question by traversing ``graph`` as ``seq`` prescribes.

    Raises AnswerFailure, whose ``reason`` names the underlying error type,
    whenever no answer can be produced.
    """
    tau = threshold.value if isinstance(threshold, VerifyThreshold) else float(threshold)
    branches: list[_Branch] = []
    try:
        if registry is None:
            from .opseq import default_registry

            registry = default_registry(graph.vocab.categories)
        plan = split_branches(seq, registry)
        branches = [_run_branch(b, graph, registry) for b in plan.branches]
        return _answer(plan, branches, graph, tau, registry)
    except AnswerFailure:
        raise
    except (
        NoViablePath,
        UnsupportedOperation,
        UnsupportedStructure,
        UnknownVocabularyTerm,
        UnknownOperation,
    ) as exc:
        raise AnswerFailure(type(exc).__name__, exc, _paths(branches)) from exc


def _answer(plan, branches, graph, tau, registry) -> Answer:
    paths = _paths(branches)
    all_ops = tuple(b.ops for b in branches)
    scores = tuple(b.score for b in branches)
    if plan.combiner is None:
        (br,) = branches
        term = br.terminal
        sem = semantics_of(term, registry, graph.vocab) if term else semantics_of(br.path_ops[-1], registry, graph.vocab)
        if (term is None and sem in ("verify_attr", "verify_rel")) or sem == "exist":
            return Answer("binary", _yes(br.path is not None and br.score >= tau), paths, scores, all_ops)
        if term is None:
            raise AnswerFailure("NoAnswerOperation", paths=paths)
        if sem == "unsupported":
            raise UnsupportedOperation(f"{term.head!r} is not supported")
        if br.failure is not None:
            raise br.failure
        if sem == "query":
            value = _attribute_value(graph, br.path.final, term.args[0])
            return Answer("open", value, paths, scores, all_ops)
        if sem == "choose":
            return Answer("open", _choose(term, graph, br.path.final), paths, scores, all_ops)
        raise UnsupportedStructure(f"{term.head!r} needs two branches")

    comb = plan.combiner
    sem = semantics_of(comb, registry, graph.vocab)
    for br in branches:
        if br.terminal is not None and semantics_of(br.terminal, registry, graph.vocab) != "exist":
            raise UnsupportedStructure(f"{br.terminal.head!r} cannot feed a combiner")
    if sem in ("and", "or"):
        verdicts = [b.path is not None and b.score >= tau for b in branches]
        flag = all(verdicts) if sem == "and" else any(verdicts)
        return Answer("binary", _yes(flag), paths, scores, all_ops)
    if sem in ("same", "different"):
        if any(b.failure for b in branches):
            return Answer("binary", "no", paths, scores, all_ops)
        what = _category_arg(comb)
        a, b = (_attribute_value(graph, br.path.final, what) for br in branches)
        return Answer("binary", _yes((a == b) == (sem == "same")), paths, scores, all_ops)
    if sem == "common":
        for br in branches:
            if br.failure is not None:
                raise br.failure
        n1, n2 = (graph.node(br.path.final) for br in branches)
        for cat in graph.vocab.categories:
            if cat in n1.attr_dists and cat in n2.attr_dists:
                if top_class(n1.attr_dists[cat], graph.vocab)[0] == top_class(n2.attr_dists[cat], graph.vocab)[0]:
                    return Answer("open", cat, paths, scores, all_ops)
        raise AnswerFailure("NoCommonAttribute", paths=paths)
    if sem == "unsupported":
        raise UnsupportedOperation(f"{comb.head!r} is not supported")
    raise UnsupportedStructure(f"{comb.head!r} cannot combine two branches")


def expected_kind(seq: OpSeq, registry: OperationRegistry | None, vocab: Vocabulary) -> str:
    """"binary" or "open", judged from the final operation."""
    return "binary" if semantics_of(seq.ops[-1], registry, vocab) in BINARY_SEMANTICS else "open"


def calibrate_threshold(dev: Iterable[tuple[float, object]], dev_id: str | None = None) -> VerifyThreshold:
    """Threshold maximizing F1 of the "yes" class on scored dev questions.

    Candidates are 0, 1 and the midpoints between adjacent distinct scores;
    a score at or above the threshold predicts "yes". Ties go to the
    smallest threshold.
    """
    pairs = list(dev)
    scores = np.array([float(s) for s, _ in pairs])
    labels = np.array([_as_bool(g) for _, g in pairs], dtype=bool)
    if labels.size == 0 or labels.all() or not labels.any():
        raise CalibrationError("dev set needs both yes and no labels")
    cands = threshold_candidates(scores)
    yes = np.sort(scores[labels])
    no = np.sort(scores[~labels])
    tp = yes.size - np.searchsorted(yes, cands, side="left")
    fp = no.size - np.searchsorted(no, cands, side="left")
    fn = yes.size - tp
    f1 = 2 * tp / (2 * tp + fp + fn)
    best = int(np.argmax(f1))
    return VerifyThreshold(float(cands[best]), dev_id, float(f1[best]))


def threshold_candidates(scores) -> np.ndarray:
    uniq = np.unique(np.asarray(scores, dtype=float))
    mids = (uniq[:-1] + uniq[1:]) / 2
    return np.unique(np.concatenate([[0.0, 1.0], mids]))


def _as_bool(label) -> bool:
    if isinstance(label, str):
        low = label.strip().lower()
        if low not in ("yes", "no"):
            raise CalibrationError(f"gold label {label!r} is not yes/no")
        return low == "yes"
    return bool(label)


def format_trace(answer: Answer | AnswerFailure, graph: SceneGraph, top: int = 3) -> str:
    """Step-by-step record of how an answer was reached."""
    lines = []
    paths = answer.paths
    for b, path in enumerate(paths):
        tr = path.trellis
        lines.append(f"branch {b + 1}")
        if tr is not None:
            for t, op in enumerate(tr.ops):
                em = tr.emissions[t]
                order = sorted(range(len(em)), key=lambda i: (-em[i], i))[:top]
                cand = " ".join(f"{graph.nodes[i].id}={em[i]:.3f}" for i in order)
                lines.append(
                    f"  step {t}: {format_line(op)} | candidates {cand} | chosen {path.node_ids[t]}"
                )
        lines.append(
            f"  path: {' -> '.join(path.node_ids)} | joint {path.joint:.6g} | "
            f"geomean {path.geometric_mean:.6g}"
        )
    if paths:
        att = path_attention(paths)
        lines.append("attention: " + " ".join(f"{k}={v:.3f}" for k, v in att.items()))
    if isinstance(answer, AnswerFailure):
        lines.append(f"failure: {answer.reason}")
    else:
        lines.append(f"answer: {answer.value}")
    return "\n".join(lines)
