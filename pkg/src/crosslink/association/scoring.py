from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, ContractError
from ..model import MacAddress

METRICS = ("dice", "euclidean")


def _bits(m) -> np.ndarray:
    return np.atleast_2d(np.asarray(m)).astype(bool)


def dice_matrix(nodes, devices) -> np.ndarray:
    """Pairwise Dice between the rows of two bit matrices; 0 where both rows are empty."""
    a = _bits(nodes).astype(np.float64)
    b = _bits(devices).astype(np.float64)
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"context length mismatch: {a.shape[1]} vs {b.shape[1]}")
    inter = a @ b.T
    denom = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :]
    out = np.zeros_like(inter)
    np.divide(2.0 * inter, denom, out=out, where=denom > 0)
    return out


def euclidean_similarity_matrix(nodes, devices) -> np.ndarray:
    a = _bits(nodes).astype(np.float64)
    b = _bits(devices).astype(np.float64)
    if a.shape[1] != b.shape[1]:
        raise ContractError(f"context length mismatch: {a.shape[1]} vs {b.shape[1]}")
    # for 0/1 vectors the squared distance is the Hamming count
    sq = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return 1.0 / (1.0 + np.sqrt(np.maximum(sq, 0.0)))


def assoc_scores(node_contexts, device_contexts, metric: str = "dice") -> np.ndarray:
    if metric == "dice":
        return dice_matrix(node_contexts, device_contexts)
    if metric == "euclidean":
        return euclidean_similarity_matrix(node_contexts, device_contexts)
    raise ConfigError(f"unknown metric {metric!r}; expected one of {METRICS}")


@dataclass
class ScoreMatrix:
    """Composite scores, rows over candidate tree nodes, columns over devices."""

    scores: np.ndarray
    node_ids: list[int]
    macs: list[MacAddress]
    omega: float = 0.5

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if self.scores.ndim != 2:
            raise ContractError("score matrix must be 2-D")
        n, m = self.scores.shape
        if len(self.node_ids) != n or len(self.macs) != m:
            raise ContractError(
                f"score matrix shape {self.scores.shape} does not match "
                f"{len(self.node_ids)} nodes x {len(self.macs)} devices"
            )
        if not np.all(np.isfinite(self.scores)):
            raise ContractError("score matrix has non-finite entries")
        if len(set(self.node_ids)) != n or len(set(self.macs)) != m:
            raise ContractError("duplicate node ids or devices in score matrix")

    @property
    def shape(self) -> tuple[int, int]:
        return self.scores.shape

    def score(self, node_id: int, mac: MacAddress) -> float:
        return float(self.scores[self.node_ids.index(node_id), self.macs.index(mac)])


def composite_scores(q_link, q_assoc, omega: float = 0.5, *, node_ids=None, macs=None) -> ScoreMatrix:
    """``(1 - omega) * q_link[i] + omega * q_assoc[i, j]`` entry-wise."""
    if not (isinstance(omega, (int, float)) and 0.0 <= omega <= 1.0):
        raise ConfigError(f"omega must lie in [0, 1], got {omega!r}")
    q_assoc = np.atleast_2d(np.asarray(q_assoc, dtype=np.float64))
    q_link = np.asarray(q_link, dtype=np.float64).reshape(-1)
    if q_link.size != q_assoc.shape[0]:
        raise ContractError(f"{q_link.size} linkage scores for {q_assoc.shape[0]} rows")
    scores = (1.0 - omega) * q_link[:, None] + omega * q_assoc
    if node_ids is None:
        node_ids = list(range(q_assoc.shape[0]))
    if macs is None:
        macs = [MacAddress((0, 0, 0, 0, j // 256, j % 256)) for j in range(q_assoc.shape[1])]
    return ScoreMatrix(scores, list(node_ids), list(macs), float(omega))


@dataclass
class Assignment:
    """Selected (node, device) pairs; pairs are kept sorted by ``(node_id, mac)``."""

    pairs: list[tuple[int, MacAddress]]
    pair_scores: list[float]
    objective: float
    k_requested: int
    k_achieved: int
    clamped: bool
    method: str = "ours"
    extra: dict = field(default_factory=dict)

    @classmethod
    def build(cls, pairs, scores, k_requested: int, clamped: bool, method: str = "ours", **extra) -> Assignment:
        items = sorted(zip(pairs, scores), key=lambda t: t[0])
        ps = [p for p, _ in items]
        ss = [float(s) for _, s in items]
        return cls(ps, ss, math.fsum(ss), int(k_requested), len(ps), bool(clamped), method, dict(extra))

    def node_ids(self) -> list[int]:
        return [n for n, _ in self.pairs]

    def macs(self) -> list[MacAddress]:
        return [m for _, m in self.pairs]

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "pairs": [
                {"node": int(n), "mac": str(m), "score": float(s)}
                for (n, m), s in zip(self.pairs, self.pair_scores)
            ],
            "objective": float(self.objective),
            "k_requested": self.k_requested,
            "k_achieved": self.k_achieved,
            "clamped": self.clamped,
        }
        out.update(self.extra)
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> Assignment:
        from ..model import parse_mac

        pairs = [(int(p["node"]), parse_mac(p["mac"])) for p in obj["pairs"]]
        scores = [float(p["score"]) for p in obj["pairs"]]
        known = {"method", "pairs", "objective", "k_requested", "k_achieved", "clamped"}
        extra = {k: v for k, v in obj.items() if k not in known}
        a = cls.build(pairs, scores, obj["k_requested"], obj["clamped"], obj.get("method", "ours"), **extra)
        return a


def check_assignment(tree, assignment: Assignment) -> None:
    """Raise if the assignment breaks injectivity or the antichain rule."""
    nodes = assignment.node_ids()
    macs = assignment.macs()
    if len(set(nodes)) != len(nodes):
        raise ContractError("a node is assigned more than once")
    if len(set(macs)) != len(macs):
        raise ContractError("a device is assigned more than once")
    if not tree.is_antichain(nodes):
        raise ContractError("selected nodes are not an antichain")
    if assignment.k_achieved != len(assignment.pairs):
        raise ContractError("k_achieved disagrees with the pair count")


def sorted_devices(macs: Sequence[MacAddress]) -> list[int]:
    return sorted(range(len(macs)), key=lambda j: macs[j])
