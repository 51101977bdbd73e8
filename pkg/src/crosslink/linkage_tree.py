"""Average-linkage dendrogram over biometric embeddings.

Every node carries a linkage score (mean pairwise ``(1 + cos) / 2`` over its
members, 1 for leaves) and a session-attendance context vector (OR of the
sessions its samples came from).

Node ids: leaves are ``0..N-1`` in input order, internal nodes ``N..2N-2`` in
merge order. Ties in the minimum linkage distance go to the lexicographically
smallest ``(node_id_a, node_id_b)`` pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ContractError
from .model import BiometricSample, Session, bits_to_str, session_index_map


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    children: tuple[int, ...]
    members: frozenset[str]
    q_link: float
    context: np.ndarray
    merge_height: float

    @property
    def is_leaf(self) -> bool:
        return not self.children


class LinkageTree:
    """Immutable dendrogram; nodes are stored column-wise in numpy arrays."""

    def __init__(
        self,
        sample_ids: Sequence[str],
        children: np.ndarray,
        merge_height: np.ndarray,
        q_link: np.ndarray,
        context: np.ndarray,
    ):
        self.sample_ids = list(sample_ids)
        self.n_leaves = len(self.sample_ids)
        self.children = children
        self.merge_height = merge_height
        self.q_link = q_link
        self.context = context
        n_nodes = len(children)
        if n_nodes != 2 * self.n_leaves - 1:
            raise ContractError(f"{n_nodes} nodes for {self.n_leaves} leaves")
        self.parent = np.full(n_nodes, -1, dtype=np.int64)
        for v in range(self.n_leaves, n_nodes):
            self.parent[children[v]] = v
        self.size = np.ones(n_nodes, dtype=np.int64)
        for v in range(self.n_leaves, n_nodes):
            self.size[v] = self.size[children[v, 0]] + self.size[children[v, 1]]
        self._layout()

    @property
    def n_nodes(self) -> int:
        return len(self.children)

    @property
    def root_id(self) -> int:
        return self.n_nodes - 1

    @property
    def n_sessions(self) -> int:
        return self.context.shape[1]

    def _layout(self) -> None:
        # DFS leaf order so every node's leaves form a contiguous span [lo, hi)
        order: list[int] = []
        stack = [self.root_id]
        while stack:
            v = stack.pop()
            if v < self.n_leaves:
                order.append(v)
            else:
                a, b = self.children[v]
                stack.append(b)
                stack.append(a)
        self.leaf_order = np.asarray(order, dtype=np.int64)
        pos = np.empty(self.n_leaves, dtype=np.int64)
        pos[self.leaf_order] = np.arange(self.n_leaves)
        lo = np.empty(self.n_nodes, dtype=np.int64)
        hi = np.empty(self.n_nodes, dtype=np.int64)
        lo[: self.n_leaves] = pos
        hi[: self.n_leaves] = pos + 1
        for v in range(self.n_leaves, self.n_nodes):
            a, b = self.children[v]
            lo[v] = min(lo[a], lo[b])
            hi[v] = max(hi[a], hi[b])
        self.lo, self.hi = lo, hi

    def is_leaf(self, node_id: int) -> bool:
        return node_id < self.n_leaves

    def member_indices(self, node_id: int) -> np.ndarray:
        """Sample indices (input order positions) under ``node_id``."""
        return np.sort(self.leaf_order[self.lo[node_id] : self.hi[node_id]])

    def members(self, node_id: int) -> frozenset[str]:
        return frozenset(self.sample_ids[i] for i in self.member_indices(node_id))

    def is_ancestor(self, a: int, d: int) -> bool:
        """True iff ``a`` is a proper ancestor of ``d``."""
        return a != d and self.lo[a] <= self.lo[d] and self.hi[d] <= self.hi[a]

    def comparable(self, a: int, b: int) -> bool:
        return a == b or self.is_ancestor(a, b) or self.is_ancestor(b, a)

    def comparable_mask(self, node_id: int) -> np.ndarray:
        """Boolean mask over all nodes that are ancestors, descendants, or the node itself."""
        lo, hi = self.lo, self.hi
        a_lo, a_hi = lo[node_id], hi[node_id]
        below = (lo >= a_lo) & (hi <= a_hi)
        above = (lo <= a_lo) & (hi >= a_hi)
        return below | above

    def is_antichain(self, node_ids) -> bool:
        ids = sorted(set(node_ids))
        if len(ids) != len(list(node_ids)):
            return False
        return not any(self.comparable(a, b) for a, b in combinations(ids, 2))

    def node(self, node_id: int) -> TreeNode:
        ch = () if node_id < self.n_leaves else tuple(int(c) for c in self.children[node_id])
        return TreeNode(
            node_id=node_id,
            children=ch,
            members=self.members(node_id),
            q_link=float(self.q_link[node_id]),
            context=self.context[node_id].copy(),
            merge_height=float(self.merge_height[node_id]),
        )

    @cached_property
    def depth(self) -> int:
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for v in range(self.n_nodes - 2, -1, -1):
            d[v] = d[self.parent[v]] + 1
        return int(d.max()) if self.n_nodes else 0

    def to_dict(self) -> dict:
        """JSON form. Members of node ``v`` are ``leaf_order[leaf_span[0]:leaf_span[1]]``."""
        nodes = []
        for v in range(self.n_nodes):
            entry = {
                "id": v,
                "children": [] if v < self.n_leaves else [int(c) for c in self.children[v]],
                "size": int(self.size[v]),
                "leaf_span": [int(self.lo[v]), int(self.hi[v])],
                "q_link": float(self.q_link[v]),
                "merge_height": float(self.merge_height[v]),
                "context": bits_to_str(self.context[v]),
            }
            if v < self.n_leaves:
                entry["sample_id"] = self.sample_ids[v]
            nodes.append(entry)
        return {
            "n_leaves": self.n_leaves,
            "n_nodes": self.n_nodes,
            "root": self.root_id,
            "leaf_order": [self.sample_ids[i] for i in self.leaf_order],
            "nodes": nodes,
        }


def _normalized(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ContractError("zero embedding cannot be normalized")
    return x / norms


def average_linkage(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Average-linkage agglomeration under cosine distance.

    Returns ``(children, heights)`` for the ``N-1`` merges in order.
    """
    n = len(x)
    children = np.empty((max(n - 1, 0), 2), dtype=np.int64)
    heights = np.empty(max(n - 1, 0))
    if n < 2:
        return children, heights

    d = 1.0 - x @ x.T
    np.clip(d, 0.0, 2.0, out=d)
    np.fill_diagonal(d, np.inf)

    slot_node = np.arange(n, dtype=np.int64)
    size = np.ones(n, dtype=np.float64)
    active = np.ones(n, dtype=bool)
    nn_dist = d.min(axis=1)
    nn_idx = d.argmin(axis=1)

    for step in range(n - 1):
        best = nn_dist.min()
        rows = np.flatnonzero(nn_dist == best)
        if len(rows) == 2 and nn_idx[rows[0]] == rows[1]:
            a, b = int(rows[0]), int(rows[1])
        else:
            pairs = []
            for r in rows:
                for c in np.flatnonzero(d[r] == best):
                    na, nb = slot_node[r], slot_node[c]
                    pairs.append((min(na, nb), max(na, nb), int(r), int(c)))
            _, _, a, b = min(pairs)
        if slot_node[a] > slot_node[b]:
            a, b = b, a
        children[step] = (slot_node[a], slot_node[b])
        heights[step] = best

        # merged cluster takes slot a
        sa, sb = size[a], size[b]
        merged = (sa * d[a] + sb * d[b]) / (sa + sb)
        active[b] = False
        merged[~active] = np.inf
        merged[a] = np.inf
        d[a, :] = merged
        d[:, a] = merged
        d[b, :] = np.inf
        d[:, b] = np.inf
        size[a] = sa + sb
        slot_node[a] = n + step
        nn_dist[b] = np.inf

        stale = active & ((nn_idx == a) | (nn_idx == b))
        stale[a] = True
        fresh = active & ~stale
        closer = fresh & (merged < nn_dist)
        nn_dist[closer] = merged[closer]
        nn_idx[closer] = a
        for r in np.flatnonzero(stale):
            nn_idx[r] = int(d[r].argmin())
            nn_dist[r] = d[r, nn_idx[r]]
    return children, heights


def build_tree_arrays(
    embeddings: np.ndarray,
    session_idx: Sequence[int],
    n_sessions: int,
    sample_ids: Sequence[str] | None = None,
) -> LinkageTree:
    x = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
    n = len(x) if np.asarray(embeddings).size else 0
    if n == 0:
        raise ContractError("cannot build a linkage tree from zero samples")
    x = _normalized(x)
    session_idx = np.asarray(session_idx, dtype=np.int64)
    if session_idx.shape != (n,):
        raise ContractError(f"{session_idx.size} session indices for {n} samples")
    if n and (session_idx.min() < 0 or session_idx.max() >= n_sessions):
        raise ContractError("session index out of range")
    if sample_ids is None:
        sample_ids = [str(i) for i in range(n)]

    merges, heights = average_linkage(x)
    n_nodes = 2 * n - 1
    children = np.full((n_nodes, 2), -1, dtype=np.int64)
    children[n:] = merges
    merge_height = np.zeros(n_nodes)
    merge_height[n:] = heights

    context = np.zeros((n_nodes, n_sessions), dtype=bool)
    context[np.arange(n), session_idx] = True
    sums = np.zeros((n_nodes, x.shape[1]))
    sums[:n] = x
    sq = np.zeros(n_nodes)
    sq[:n] = np.einsum("ij,ij->i", x, x)
    size = np.ones(n_nodes)
    q_link = np.ones(n_nodes)
    for v in range(n, n_nodes):
        a, b = children[v]
        context[v] = context[a] | context[b]
        sums[v] = sums[a] + sums[b]
        sq[v] = sq[a] + sq[b]
        size[v] = size[a] + size[b]
        k = size[v]
        mean_cos = (sums[v] @ sums[v] - sq[v]) / (k * (k - 1))
        q_link[v] = min(1.0, max(0.0, (1.0 + mean_cos) / 2.0))
    return LinkageTree(sample_ids, children, merge_height, q_link, context)


def build_tree(samples: Sequence[BiometricSample], sessions: Sequence[Session]) -> LinkageTree:
    if not samples:
        raise ContractError("cannot build a linkage tree from zero samples")
    index = session_index_map(sessions)
    try:
        sidx = [index[s.session_id] for s in samples]
    except KeyError as exc:
        raise ContractError(f"sample references unknown session {exc.args[0]!r}") from None
    x = np.vstack([s.embedding for s in samples])
    return build_tree_arrays(x, sidx, len(sessions), [s.sample_id for s in samples])


def linkage_score(node: TreeNode | int, samples: Sequence[BiometricSample], tree: LinkageTree | None = None) -> float:
    """Mean pairwise ``(1 + cos) / 2`` over the node's members, computed directly."""
    members = tree.members(node) if isinstance(node, (int, np.integer)) else node.members
    if len(members) < 2:
        return 1.0
    by_id = {s.sample_id: s.embedding for s in samples}
    x = _normalized(np.vstack([by_id[m] for m in sorted(members)]))
    g = x @ x.T
    k = len(x)
    iu = np.triu_indices(k, 1)
    return float(np.mean((1.0 + g[iu]) / 2.0))


def node_context_vector(
    node: TreeNode | int,
    samples: Sequence[BiometricSample],
    sessions: Sequence[Session],
    tree: LinkageTree | None = None,
) -> np.ndarray:
    members = tree.members(node) if isinstance(node, (int, np.integer)) else node.members
    index = session_index_map(sessions)
    by_id = {s.sample_id: s.session_id for s in samples}
    bits = np.zeros(len(sessions), dtype=bool)
    for m in members:
        bits[index[by_id[m]]] = True
    return bits


def candidate_nodes(tree: LinkageTree, min_cluster_size: int = 1) -> list[int]:
    if min_cluster_size < 1:
        raise ContractError("min_cluster_size must be >= 1")
    return [int(v) for v in np.flatnonzero(tree.size >= min_cluster_size)]


def flat_cut(tree: LinkageTree, k: int) -> list[int]:
    """Node ids of the ``k`` clusters left after undoing the last ``k-1`` merges."""
    n = tree.n_leaves
    if not 1 <= k <= n:
        raise ContractError(f"cannot cut {n} samples into {k} clusters")
    last = 2 * n - 1 - k  # highest node id still formed
    return sorted(v for v in range(last + 1) if tree.parent[v] == -1 or tree.parent[v] > last)
