"""Exhaustive reference solver for small instances, used to check the exact search."""

from __future__ import annotations

import itertools

import numpy as np

from ..errors import ConfigError, ContractError
from ..linkage_tree import LinkageTree
from .scoring import Assignment, ScoreMatrix
from .solver import TIE_RTOL

MAX_LEAVES = 16
MAX_DEVICES = 8


def _antichains(lo, hi, size):
    """Yield every antichain of ``size`` candidate indices, each in increasing order."""
    n = len(lo)
    # bit j of disjoint[i] is set iff candidates i and j have disjoint leaf spans
    disjoint = [sum(1 << j for j in range(n) if hi[i] <= lo[j] or hi[j] <= lo[i]) for i in range(n)]

    def rec(start, picked, allowed):
        if len(picked) == size:
            yield tuple(picked)
            return
        for i in range(start, n):
            if allowed >> i & 1:
                picked.append(i)
                yield from rec(i + 1, picked, allowed & disjoint[i])
                picked.pop()

    yield from rec(0, [], (1 << n) - 1)


def brute_force_select(tree: LinkageTree, score_matrix: ScoreMatrix, k: int) -> Assignment:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k <= 0:
        raise ConfigError(f"K must be a positive integer, got {k!r}")
    if not score_matrix.node_ids:
        raise ContractError("no candidate nodes to select from")
    m = len(score_matrix.macs)
    if tree.n_leaves > MAX_LEAVES or m > MAX_DEVICES:
        raise ContractError(
            f"instance too large for enumeration ({tree.n_leaves} leaves, {m} devices; "
            f"limits {MAX_LEAVES} and {MAX_DEVICES})"
        )
    node_order = np.argsort(score_matrix.node_ids, kind="stable")
    dev_order = sorted(range(m), key=lambda j: score_matrix.macs[j])
    node_ids = [int(score_matrix.node_ids[i]) for i in node_order]
    macs = [score_matrix.macs[j] for j in dev_order]
    w = score_matrix.scores[np.ix_(node_order, dev_order)]
    lo = tree.lo[node_ids].tolist()
    hi = tree.hi[node_ids].tolist()

    widest = 0
    for size in range(1, len(node_ids) + 1):
        if next(_antichains(lo, hi, size), None) is not None:
            widest = size
        else:
            break
    k_eff = min(int(k), m, widest)
    if k_eff == 0:
        return Assignment.build([], [], k, True, method="brute_force")

    perms = np.array(list(itertools.permutations(range(m), k_eff)), dtype=np.int64)
    chains = list(_antichains(lo, hi, k_eff))
    totals = [w[np.asarray(c)[None, :], perms].sum(axis=1) for c in chains]
    top = max(float(t.max()) for t in totals)
    floor = top - TIE_RTOL * float(np.abs(w).max())
    best_pairs = None
    # chains come in increasing order and permutations in lexicographic order, so
    # the first near-optimal permutation of each chain is that chain's smallest
    for chain, t in zip(chains, totals):
        keep = np.flatnonzero(t >= floor)
        if not len(keep):
            continue
        pairs = tuple(zip(chain, perms[keep[0]].tolist()))
        if best_pairs is None or pairs < best_pairs:
            best_pairs = pairs
    pairs = best_pairs
    return Assignment.build(
        [(node_ids[i], macs[j]) for i, j in pairs],
        [float(w[i, j]) for i, j in pairs],
        k,
        k_eff < k,
        method="brute_force",
    )
