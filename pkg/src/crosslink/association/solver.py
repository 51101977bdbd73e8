"""Exact node selection: pick an antichain of tree nodes and pair it one-to-one
with devices so the summed composite score is maximal.

The search is a depth-first branch-and-bound. Its relaxation drops the
antichain rule, which leaves a cardinality-constrained assignment problem
solved exactly with ``scipy.optimize.linear_sum_assignment``. When the relaxed
optimum selects a node together with one of its descendants, the search
branches on that node: either it is excluded, or everything comparable to it
is excluded.

Co-optimal solutions (objective within a relative 1e-9 of the optimum) are
resolved to the lexicographically smallest pair list under ``(node_id, mac)``
by a greedy pass that fixes pairs one at a time, smallest first. Each step
asks one grouped question: does any near-optimal completion use a pair that
sorts before the current one? Assignment duals bound every pair of the group
at once, and antichain conflicts are branched on once for the whole group.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..errors import ConfigError, ContractError
from ..linkage_tree import LinkageTree
from .scoring import Assignment, ScoreMatrix

log = logging.getLogger(__name__)

TIE_RTOL = 1e-9
_PRUNE_RTOL = 1e-12
_BOUND_SLACK_RTOL = 1e-7


@dataclass
class _Relaxed:
    value: float
    rows: np.ndarray  # local node indices
    cols: np.ndarray  # local device indices
    rc: np.ndarray | None = None  # reduced costs, local (node, device)


def _assign_k(w: np.ndarray, k: int, want_duals: bool = False) -> _Relaxed | None:
    """Max-weight matching with exactly ``k`` edges on a complete bipartite graph."""
    n, m = w.shape
    if k == 0:
        rc = np.zeros((n, m)) if want_duals else None
        return _Relaxed(0.0, np.zeros(0, np.int64), np.zeros(0, np.int64), rc)
    if k > min(n, m):
        return None
    transposed = m < n
    p = w.T if transposed else w  # rows <= cols
    r, c = p.shape
    extra = r - k
    if extra:
        span = float(np.max(p) - np.min(p)) if p.size else 0.0
        big = (k + 1) * (span + abs(float(np.max(p)))) + 1.0
        p = np.hstack([p, np.full((r, extra), big)])
    cost = -p
    ri, ci = linear_sum_assignment(cost)
    real = ci < c
    rows_p, cols_p = ri[real], ci[real]
    if transposed:
        nodes, devs = cols_p, rows_p
    else:
        nodes, devs = rows_p, cols_p
    value = float(np.sum(w[nodes, devs]))
    rc_local = None
    if want_duals:
        rc_full = _reduced_costs(cost, ri, ci)[:, :c]
        rc_local = rc_full.T if transposed else rc_full
    return _Relaxed(value, nodes, devs, rc_local)


def _reduced_costs(cost: np.ndarray, ri: np.ndarray, ci: np.ndarray) -> np.ndarray:
    """Reduced costs from optimal dual potentials of a solved rectangular assignment.

    Rows are fully assigned; unmatched columns get zero potential. Row
    potentials come from shortest paths over the swap graph (Bellman-Ford).
    """
    r, c = cost.shape
    sigma = np.empty(r, dtype=np.int64)
    sigma[ri] = ci
    cs = cost[np.arange(r), sigma]
    unmatched = np.ones(c, dtype=bool)
    unmatched[sigma] = False
    w = cost[:, sigma] - cs[:, None]  # w[i, k]: move row i onto row k's column
    if unmatched.any():
        t = cost[:, unmatched].min(axis=1) - cs
    else:
        t = np.zeros(r)
    for _ in range(r + 1):
        nt = np.minimum(t, (w + t[None, :]).min(axis=1))
        if np.array_equal(nt, t):
            break
        t = nt
    u = cs + t
    v = np.zeros(c)
    v[sigma] = -t
    return cost - u[:, None] - v[None, :]


class _Search:
    """Branch-and-bound over candidate subsets for a fixed score matrix."""

    def __init__(self, tree: LinkageTree, node_ids: np.ndarray, w: np.ndarray):
        self.tree = tree
        self.node_ids = node_ids
        self.w = w
        self.lo = tree.lo[node_ids]
        self.hi = tree.hi[node_ids]
        self.scale = float(np.max(np.abs(w))) if w.size else 0.0
        self.prune_eps = _PRUNE_RTOL * self.scale
        self.nodes_visited = 0
        self._level_groups = self._levels()
        self._comparable_cache: dict[int, np.ndarray] = {}
        # per device, candidate indices by decreasing score
        self._order = np.argsort(-w.T, axis=1, kind="stable") if w.size else np.zeros((w.shape[1], 0), np.int64)

    # -- structure helpers ---------------------------------------------

    def comparable(self, ci: int) -> np.ndarray:
        """Mask of candidates that are ``ci`` itself, its ancestors or its descendants."""
        hit = self._comparable_cache.get(ci)
        if hit is not None:
            return hit
        lo, hi = self.lo, self.hi
        below = (lo >= lo[ci]) & (hi <= hi[ci])
        above = (lo <= lo[ci]) & (hi >= hi[ci])
        out = below | above
        out.flags.writeable = False
        if len(self._comparable_cache) < 4096:
            self._comparable_cache[ci] = out
        return out

    def _levels(self) -> list[np.ndarray]:
        """Internal node ids grouped by height, children always in earlier groups."""
        tree = self.tree
        height = np.zeros(tree.n_nodes, dtype=np.int64)
        ch = tree.children
        for v in range(tree.n_leaves, tree.n_nodes):
            height[v] = 1 + max(height[ch[v, 0]], height[ch[v, 1]])
        internal = np.arange(tree.n_leaves, tree.n_nodes)
        order = internal[np.argsort(height[internal], kind="stable")]
        cuts = np.flatnonzero(np.diff(height[order])) + 1
        return np.split(order, cuts) if len(order) else []

    def max_antichain(self, allowed: np.ndarray) -> int:
        """Largest antichain among the allowed candidates (tree DP)."""
        tree = self.tree
        full = np.zeros(tree.n_nodes, dtype=bool)
        full[self.node_ids[allowed]] = True
        f = full.astype(np.int64)
        ch = tree.children
        for group in self._level_groups:
            s = f[ch[group, 0]] + f[ch[group, 1]]
            f[group] = np.where(s > 0, s, full[group])
        return int(f[tree.root_id])

    def is_antichain(self, cand: np.ndarray) -> bool:
        order = np.argsort(self.lo[cand], kind="stable")
        lo = self.lo[cand][order]
        hi = self.hi[cand][order]
        return bool(np.all(hi[:-1] <= lo[1:]))

    def _conflict_node(self, cand: np.ndarray) -> int:
        lo, hi = self.lo[cand], self.hi[cand]
        contains = (lo[:, None] <= lo[None, :]) & (hi[None, :] <= hi[:, None])
        np.fill_diagonal(contains, False)
        counts = contains.sum(axis=1)
        best = counts.max()
        picks = cand[counts == best]
        return int(picks.min())

    # -- relaxation and repair -------------------------------------------

    def _shortlist(self, nodes: np.ndarray, devs: np.ndarray) -> np.ndarray:
        """Allowed nodes among each device's top ``len(devs)`` allowed nodes.

        With more nodes than devices, some optimal exactly-k matching uses only
        these: a device matched outside its shortlist can always move to an
        unused shortlisted node without losing score.
        """
        r = len(devs)
        n = len(self.node_ids)
        mask = np.zeros(n, dtype=bool)
        mask[nodes] = True
        width = min(n, 4 * r + 8)
        while True:
            ords = self._order[devs, :width]
            ok = mask[ords]
            if width == n or ok.sum(axis=1).min() >= r:
                break
            width = min(n, width * 4)
        keep = ok & (np.cumsum(ok, axis=1) <= r)
        return np.unique(ords[keep])

    def relax(self, nodes: np.ndarray, devs: np.ndarray, k: int, want_duals=False):
        if not want_duals and len(nodes) > len(devs) > 0:
            nodes = self._shortlist(nodes, devs)
        sub = self.w[np.ix_(nodes, devs)]
        res = _assign_k(sub, k, want_duals)
        if res is None:
            return None
        return _Relaxed(res.value, nodes[res.rows], devs[res.cols], res.rc)

    def repair(self, rel: _Relaxed, nodes: np.ndarray, devs: np.ndarray, k: int):
        """Greedy feasible completion seeded from a relaxed solution."""
        order = np.argsort(-self.w[rel.rows, rel.cols], kind="stable")
        chosen_n: list[int] = []
        chosen_d: list[int] = []
        blocked = np.zeros(len(self.node_ids), dtype=bool)
        for t in order:
            ci, dj = int(rel.rows[t]), int(rel.cols[t])
            if blocked[ci]:
                continue
            chosen_n.append(ci)
            chosen_d.append(dj)
            blocked |= self.comparable(ci)
        if len(chosen_n) < k:
            avail_n = nodes[~blocked[nodes]]
            used = set(chosen_d)
            avail_d = np.array([d for d in devs if d not in used], dtype=np.int64)
            while len(chosen_n) < k and len(avail_n) and len(avail_d):
                sub = self.w[np.ix_(avail_n, avail_d)]
                flat = int(np.argmax(sub))
                i, j = divmod(flat, sub.shape[1])
                ci, dj = int(avail_n[i]), int(avail_d[j])
                chosen_n.append(ci)
                chosen_d.append(dj)
                avail_n = avail_n[~self.comparable(ci)[avail_n]]
                avail_d = np.delete(avail_d, j)
        if len(chosen_n) < k:
            return None
        value = float(np.sum(self.w[chosen_n, chosen_d]))
        return value, list(zip(chosen_n, chosen_d))

    # -- search ----------------------------------------------------------

    def run(self, allowed: np.ndarray, devs: np.ndarray, k: int, floor: float | None = None):
        """Best solution over ``allowed`` candidates and ``devs`` with exactly ``k`` pairs.

        With ``floor`` set, return the first solution found whose value reaches
        it (or ``None``); otherwise return the optimum.
        """
        if k == 0:
            if floor is not None and floor > 0.0:
                return None
            return 0.0, []
        first_hit = floor is not None
        best_val = -math.inf
        best_sol = None

        def bound_ok(val: float) -> bool:
            if first_hit:
                return val >= floor
            return val > best_val + self.prune_eps

        def consider(cand):
            nonlocal best_val, best_sol
            if cand is None:
                return False
            val, sol = cand
            if first_hit:
                if val >= floor:
                    best_val, best_sol = val, sol
                    return True
                return False
            if val > best_val:
                best_val, best_sol = val, sol
            return False

        def evaluate(mask):
            rel = self.relax(np.flatnonzero(mask), devs, k)
            if rel is None or not bound_ok(rel.value) or self.max_antichain(mask) < k:
                return None
            return rel

        stack = []
        root_rel = evaluate(allowed)
        if root_rel is None:
            return None
        stack.append((allowed, root_rel))
        while stack:
            mask, rel = stack.pop()
            self.nodes_visited += 1
            if not bound_ok(rel.value):
                continue
            if self.is_antichain(rel.rows):
                if consider((rel.value, list(zip(rel.rows.tolist(), rel.cols.tolist())))):
                    return best_val, best_sol
                continue
            if consider(self.repair(rel, np.flatnonzero(mask), devs, k)):
                return best_val, best_sol
            if not bound_ok(rel.value):
                continue
            a = self._conflict_node(rel.rows)
            without_a = mask.copy()
            without_a[a] = False
            keep_a = mask & ~self.comparable(a)
            keep_a[a] = mask[a]
            children = []
            for child in (without_a, keep_a):
                crel = evaluate(child)
                if crel is not None and bound_ok(crel.value):
                    children.append((crel.value, child, crel))
            # explore the higher bound first
            children.sort(key=lambda t: t[0])
            for _, child, crel in children:
                stack.append((child, crel))
        if best_sol is None:
            return None
        return best_val, best_sol


    def run_any(self, allowed: np.ndarray, devs: np.ndarray, k: int, floor: float, cand: np.ndarray):
        """A solution reaching ``floor`` that uses at least one pair marked in ``cand``, or ``None``.

        ``cand`` is a full (candidate, device) mask. The bound is the best
        relaxation with one marked pair forced in; conflicts are branched on
        once for all marked pairs rather than pair by pair.
        """
        slack = _BOUND_SLACK_RTOL * self.scale
        free = np.zeros(self.w.shape[1], dtype=bool)
        free[devs] = True
        stack = [(allowed, cand & allowed[:, None] & free[None, :])]
        while stack:
            mask, marks = stack.pop()
            self.nodes_visited += 1
            if not marks.any() or self.max_antichain(mask) < k:
                continue
            nodes = np.flatnonzero(mask)
            rel = self.relax(nodes, devs, k, want_duals=True)
            if rel is None:
                continue
            bound = np.full(marks.shape, -math.inf)
            bound[np.ix_(nodes, devs)] = rel.value - rel.rc
            bound[~marks] = -math.inf
            while True:
                flat = int(np.argmax(bound))
                ci, dj = divmod(flat, bound.shape[1])
                if bound[ci, dj] < floor - slack:
                    break
                # relaxation with (ci, dj) forced and everything comparable to ci dropped
                rest = mask & ~self.comparable(ci)
                sub = self.relax(np.flatnonzero(rest), devs[devs != dj], k - 1) if k > 1 else _Relaxed(
                    0.0, np.zeros(0, np.int64), np.zeros(0, np.int64)
                )
                value = -math.inf if sub is None else float(self.w[ci, dj]) + sub.value
                if sub is not None and self.is_antichain(sub.rows) and value >= floor:
                    return value, [(int(ci), int(dj))] + list(zip(sub.rows.tolist(), sub.cols.tolist()))
                if sub is None or value < floor - slack or self.is_antichain(sub.rows):
                    # a feasible relaxed optimum is exact, so no qualifying solution inside
                    # ``mask`` uses this pair
                    marks[ci, dj] = False
                    bound[ci, dj] = -math.inf
                    continue
                a = self._conflict_node(sub.rows)
                without_a = mask.copy()
                without_a[a] = False
                keep_a = mask & ~self.comparable(a)
                keep_a[a] = mask[a]
                stack.append((keep_a, marks & keep_a[:, None]))
                stack.append((without_a, marks & without_a[:, None]))
                break
        return None


def feasible_k(tree: LinkageTree, node_ids, m: int) -> int:
    """Largest selectable pair count: min(devices, max antichain among candidates)."""
    if len(node_ids) == 0:
        return 0
    search = _Search(tree, np.asarray(node_ids, dtype=np.int64), np.zeros((len(node_ids), 0)))
    return min(m, search.max_antichain(np.ones(len(node_ids), dtype=bool)))


def select_nodes(tree: LinkageTree, score_matrix: ScoreMatrix, k: int) -> Assignment:
    """Optimal antichain-constrained assignment of exactly ``min(k, feasible)`` pairs."""
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k <= 0:
        raise ConfigError(f"K must be a positive integer, got {k!r}")
    if not score_matrix.node_ids:
        raise ContractError("no candidate nodes to select from")

    node_order = np.argsort(score_matrix.node_ids, kind="stable")
    dev_order = sorted(range(len(score_matrix.macs)), key=lambda j: score_matrix.macs[j])
    node_ids = np.asarray(score_matrix.node_ids, dtype=np.int64)[node_order]
    if node_ids.min() < 0 or node_ids.max() >= tree.n_nodes:
        raise ContractError("score matrix references nodes outside the tree")
    macs = [score_matrix.macs[j] for j in dev_order]
    w = score_matrix.scores[np.ix_(node_order, dev_order)] if len(dev_order) else np.zeros((len(node_ids), 0))

    search = _Search(tree, node_ids, w)
    n, m = w.shape
    all_nodes = np.ones(n, dtype=bool)
    all_devs = np.arange(m, dtype=np.int64)
    k_eff = min(int(k), m, search.max_antichain(all_nodes)) if m else 0
    clamped = k_eff < k
    if k_eff == 0:
        return Assignment.build([], [], k, clamped)

    found = search.run(all_nodes, all_devs, k_eff)
    if found is None:  # cannot happen: k_eff is feasible by construction
        raise ContractError("no feasible assignment")
    best_val, best_sol = found
    best_val = math.fsum(float(w[i, j]) for i, j in best_sol)
    pairs = _lex_smallest(search, best_sol, best_val, k_eff)

    result = Assignment.build(
        [(int(node_ids[i]), macs[j]) for i, j in pairs],
        [float(w[i, j]) for i, j in pairs],
        k,
        clamped,
        search_nodes=search.nodes_visited,
    )
    return result


def _lex_smallest(search: _Search, sol, value: float, k: int):
    """Smallest pair list, in (node, device) order, among solutions within tolerance.

    Pairs are fixed one at a time. At each step the pairs lexicographically
    before the current solution's next pair are asked as a group whether any
    near-optimal completion uses one of them; if so, a bisection over that
    ordered group finds the smallest such pair.
    """
    w = search.w
    n, m = w.shape
    floor = value - TIE_RTOL * search.scale
    current = sorted(sol)
    chosen: list[tuple[int, int]] = []
    node_ok = np.ones(n, dtype=bool)
    dev_ok = np.ones(m, dtype=bool)
    last_ci = -1
    fixed = 0.0

    while len(chosen) < k:
        rest = [p for p in current if p not in chosen]
        nxt = rest[0]
        region = node_ok.copy()
        region[: last_ci + 1] = False
        devs = np.flatnonzero(dev_ok)
        k_rem = k - len(chosen)
        need = floor - fixed

        # region pairs lexicographically before nxt, in row-major (= lexicographic) order
        before = np.zeros((n, m), dtype=bool)
        rows = np.flatnonzero(region[: nxt[0] + 1])
        before[rows] = dev_ok
        before[nxt[0], nxt[1]:] = False
        order = np.flatnonzero(before.ravel())

        def witness(count):
            marks = np.zeros(n * m, dtype=bool)
            marks[order[:count]] = True
            return search.run_any(region, devs, k_rem, need, marks.reshape(n, m))

        found = witness(len(order)) if len(order) else None
        picked = nxt
        if found is not None:
            # invariant: no witness within the first ``lo`` pairs; one within the first ``hi``
            lo = 0
            hi = int(np.searchsorted(order, min(i * m + j for i, j in found[1]))) + 1
            while lo + 1 < hi:
                mid = (lo + hi) // 2
                res = witness(mid)
                if res is None:
                    lo = mid
                else:
                    found = res
                    hi = int(np.searchsorted(order, min(i * m + j for i, j in res[1]))) + 1
            picked = divmod(int(order[hi - 1]), m)
            current = sorted(chosen + [tuple(map(int, p)) for p in found[1]])
        chosen.append(picked)
        fixed += float(w[picked])
        node_ok &= ~search.comparable(picked[0])
        dev_ok[picked[1]] = False
        last_ci = picked[0]
    return chosen
