from .naive import naive_baseline, naive_from_tree
from .oracle import brute_force_select
from .scoring import (
    METRICS,
    Assignment,
    ScoreMatrix,
    assoc_scores,
    check_assignment,
    composite_scores,
    dice_matrix,
    euclidean_similarity_matrix,
)
from .solver import feasible_k, select_nodes

__all__ = [
    "METRICS",
    "Assignment",
    "ScoreMatrix",
    "assoc_scores",
    "brute_force_select",
    "check_assignment",
    "composite_scores",
    "dice_matrix",
    "euclidean_similarity_matrix",
    "feasible_k",
    "naive_baseline",
    "naive_from_tree",
    "select_nodes",
]
