"""Question answering over probabilistic scene graphs by most-probable-path search."""

from .errors import *  # noqa: F401,F403
from .executor import (
    Answer,
    InferencePath,
    VerifyThreshold,
    brute_force_best_path,
    calibrate_threshold,
    execute,
    format_trace,
    path_attention,
    viterbi,
)
from .graph import BoundingBox, CategoricalDist, ObjectNode, RelationEdge, SceneGraph, Vocabulary, class_prob, normalize_dist, top_class
from .ingest import GraphRecipe, build_graph, candidate_pairs, iou, load_annotations, load_detections, load_questions, match_boxes
from .metrics import Dataset, ablation_matrix, default_ablation_recipes, evaluate, grounding_score
from .opseq import OperationRegistry, OpSeq, Operation, default_registry, parse_line, parse_opseq, serialize_opseq, split_branches
from .tokens import ClassInventory, build_inventory, detokenize, round_trip, tokenize

__version__ = "0.1.0"
