"""End-to-end run: filter devices, build the tree, score, select, evaluate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .association import Assignment, ScoreMatrix, assoc_scores, composite_scores, naive_from_tree, select_nodes
from .device_filter import FACE_RSS_THRESHOLD, FilterConfig, FilterReport, device_context_vectors, device_matrix, run_filter
from .errors import ConfigError
from .evaluation import EvalReport, evaluate
from .ingest import OuiDatabase, SessionizedSightings, sessionize
from .linkage_tree import LinkageTree, build_tree, candidate_nodes
from .model import Dataset, MacAddress

BASELINES = ("ours", "naive")


@dataclass(frozen=True)
class RunConfig:
    rss_threshold: int = FACE_RSS_THRESHOLD
    omega: float = 0.5
    k: int | None = None
    k_ratio: float | None = None
    metric: str = "dice"
    baseline: str = "ours"
    min_cluster_size: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.baseline not in BASELINES:
            raise ConfigError(f"unknown baseline {self.baseline!r}; expected one of {BASELINES}")
        if self.metric not in ("dice", "euclidean"):
            raise ConfigError(f"unknown metric {self.metric!r}")
        if not 0.0 <= self.omega <= 1.0:
            raise ConfigError(f"omega must lie in [0, 1], got {self.omega}")
        if self.k is not None and self.k_ratio is not None:
            raise ConfigError("give either k or k_ratio, not both")
        if self.k is not None and self.k <= 0:
            raise ConfigError("k must be positive")
        if self.k_ratio is not None and self.k_ratio <= 0:
            raise ConfigError("k_ratio must be positive")
        if self.min_cluster_size < 1:
            raise ConfigError("min_cluster_size must be >= 1")

    def resolve_k(self, registry: Mapping | None) -> int:
        if self.k is not None:
            return int(self.k)
        if not registry:
            raise ConfigError("a relative K needs a registry to count victims")
        ratio = 1.25 if self.k_ratio is None else self.k_ratio
        return max(1, int(round(ratio * len(registry))))


@dataclass
class RunResult:
    filter_report: FilterReport
    sessionized: SessionizedSightings
    tree: LinkageTree
    device_vectors: dict[MacAddress, np.ndarray]
    assignment: Assignment
    scores: ScoreMatrix | None = None
    report: EvalReport | None = None
    extra: dict = field(default_factory=dict)


def prepare(dataset: Dataset, oui_db: OuiDatabase, config: RunConfig):
    """Filter devices and build the tree; these do not depend on K, omega or the method."""
    sessionized = sessionize(dataset.sightings, dataset.sessions)
    report = run_filter(dataset, oui_db, FilterConfig(config.rss_threshold), sessionized)
    vectors = device_context_vectors(report.survivors, sessionized, config.rss_threshold)
    tree = build_tree(dataset.samples, dataset.sessions)
    return report, sessionized, vectors, tree


def associate(tree: LinkageTree, survivors, vectors, config: RunConfig, k: int):
    dev = device_matrix(vectors, survivors)
    if config.baseline == "naive":
        return naive_from_tree(tree, dev.reshape(len(survivors), tree.n_sessions), survivors, k, config.metric), None
    cands = candidate_nodes(tree, config.min_cluster_size)
    if len(survivors):
        q_assoc = assoc_scores(tree.context[cands], dev, config.metric)
    else:
        q_assoc = np.zeros((len(cands), 0))
    sm = composite_scores(tree.q_link[cands], q_assoc, config.omega, node_ids=cands, macs=list(survivors))
    return select_nodes(tree, sm, k), sm


def run(dataset: Dataset, oui_db: OuiDatabase, config: RunConfig, labels=None, prepared=None) -> RunResult:
    """Full pipeline; evaluates when ``labels`` (sample id -> subject) and a registry are available."""
    report, sessionized, vectors, tree = prepared or prepare(dataset, oui_db, config)
    k = config.resolve_k(dataset.registry)
    assignment, sm = associate(tree, report.survivors, vectors, config, k)
    result = RunResult(report, sessionized, tree, vectors, assignment, sm)
    if labels is not None and dataset.registry:
        result.report = evaluate(assignment, tree, labels, dataset.registry)
    return result
