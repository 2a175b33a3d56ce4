"""Answering a question by searching for the most probable path.

A three-object scene: a red cup standing on a wooden table, with a dog
nearby. The question "What is the red cup on?" becomes an op-seq, and the
executor finds the node sequence that best explains it.

Run with ``python demos/01_path_search.py``.
"""

# %%
from ath.executor import execute, format_trace, path_attention, viterbi
from ath.graph import OBJECTS, RELATIONS, BoundingBox, ObjectNode, RelationEdge, SceneGraph, Vocabulary, attr_slice, normalize_dist
from ath.opseq import default_registry, parse_opseq

vocab = Vocabulary(
    ("table", "cup", "dog", "bowl"),
    (("color", ("red", "blue", "brown")), ("material", ("wooden", "metal"))),
    ("on", "near"),
    (True, True),
)


def dist(slice_name, mapping):
    return normalize_dist({vocab.index(slice_name, k): v for k, v in mapping.items()}, slice_name)


# %% [markdown]
# Detections are uncertain: the cup might be a bowl, and its colour is only
# mostly red. Distributions are sparse, so absent classes have probability 0.

# %%
nodes = (
    ObjectNode("t", BoundingBox(0, 60, 200, 120), dist(OBJECTS, {"table": 0.9, "dog": 0.1}), {"material": dist(attr_slice("material"), {"wooden": 0.8, "metal": 0.2})}),
    ObjectNode("c", BoundingBox(40, 30, 70, 62), dist(OBJECTS, {"cup": 0.7, "bowl": 0.3}), {"color": dist(attr_slice("color"), {"red": 0.85, "blue": 0.15})}),
    ObjectNode("d", BoundingBox(190, 40, 260, 120), dist(OBJECTS, {"dog": 0.95, "table": 0.05}), {"color": dist(attr_slice("color"), {"brown": 1.0})}),
)
edges = (
    RelationEdge("c", "t", dist(RELATIONS, {"on": 0.9, "near": 0.1})),
    RelationEdge("d", "t", dist(RELATIONS, {"near": 1.0})),
)
graph = SceneGraph("demo", 300, 150, nodes, edges, vocab)
registry = default_registry(vocab.categories)

# %%
seq = parse_opseq(["select: cup", "filter color: red", "relate: _,on,o", "query: name"], registry)
path = viterbi(seq.ops[:3], graph, registry)
print("best path:", path.node_ids)
print("joint probability:", round(path.joint, 4))
print("geometric mean:", round(path.geometric_mean, 4))

# %% [markdown]
# The full executor adds the final query and reports a trace. The attention
# map spreads one unit of mass over the nodes the path visits.

# %%
answer = execute(seq, graph, 0.5, registry)
print(format_trace(answer, graph))
print("attention:", path_attention(answer.paths))

# %% [markdown]
# A yes/no question compares the path's geometric mean against a threshold.

# %%
verify = parse_opseq(["select: dog", "verify color: brown"], registry)
print("is the dog brown?", execute(verify, graph, 0.5, registry).value)
exist = parse_opseq(["select: bowl", "exist: ?"], registry)
print("is there a bowl?", execute(exist, graph, 0.5, registry).value)
