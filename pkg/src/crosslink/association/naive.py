"""Two-step baseline: cut the dendrogram into K flat clusters, then match
clusters to devices by attendance similarity alone."""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConfigError, ContractError
from ..linkage_tree import LinkageTree, build_tree, flat_cut
from ..model import BiometricSample, MacAddress, Session
from .scoring import Assignment, assoc_scores


def naive_from_tree(
    tree: LinkageTree, device_matrix: np.ndarray, macs: Sequence[MacAddress], k: int, metric: str = "dice"
) -> Assignment:
    """Baseline on an existing tree; cluster ids in the result are tree node ids."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k <= 0:
        raise ConfigError(f"K must be a positive integer, got {k!r}")
    if k > tree.n_leaves:
        raise ContractError(f"K={k} exceeds the {tree.n_leaves} samples")
    clusters = flat_cut(tree, int(k))
    order = sorted(range(len(macs)), key=lambda j: macs[j])
    macs = [macs[j] for j in order]
    if not macs:
        return Assignment.build([], [], k, True, method="naive")
    dev = np.asarray(device_matrix)[order]
    sim = assoc_scores(tree.context[clusters], dev, metric)
    rows, cols = linear_sum_assignment(sim, maximize=True)
    pairs = [(clusters[i], macs[j]) for i, j in zip(rows, cols)]
    scores = [float(sim[i, j]) for i, j in zip(rows, cols)]
    return Assignment.build(pairs, scores, k, len(pairs) < k, method="naive")


def naive_baseline(
    samples: Sequence[BiometricSample],
    sessions: Sequence[Session],
    device_vectors: Mapping[MacAddress, np.ndarray],
    k: int,
    metric: str = "dice",
    tree: LinkageTree | None = None,
) -> Assignment:
    if tree is None:
        tree = build_tree(samples, sessions)
    macs = sorted(device_vectors)
    mat = np.vstack([device_vectors[m] for m in macs]) if macs else np.zeros((0, len(sessions)), bool)
    return naive_from_tree(tree, mat, macs, k, metric)
