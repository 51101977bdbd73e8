"""Association accuracy and cluster purity against planted ground truth."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from ..association.scoring import Assignment
from ..errors import ContractError
from ..linkage_tree import LinkageTree, TreeNode
from ..model import BiometricSample, MacAddress


def _labels_by_id(samples: Sequence[BiometricSample] | Mapping[str, str]) -> Mapping[str, str | None]:
    if isinstance(samples, Mapping):
        return samples
    return {s.sample_id: s.true_label for s in samples}


def _member_labels(node, tree: LinkageTree | None, labels: Mapping[str, str | None]) -> list[str]:
    members = node.members if isinstance(node, TreeNode) else tree.members(node)
    out = []
    for sid in sorted(members):
        label = labels.get(sid)
        if label is None:
            raise ContractError(f"sample {sid!r} has no ground-truth label")
        out.append(label)
    return out


def majority_label(node: TreeNode | int, samples, tree: LinkageTree | None = None) -> str:
    """Most frequent true label under the node; ties go to the smallest label.

    ``node`` is a ``TreeNode`` or a node id of ``tree``.
    """
    counts = Counter(_member_labels(node, tree, _labels_by_id(samples)))
    top = max(counts.values())
    return min(label for label, c in counts.items() if c == top)


@dataclass
class PairOutcome:
    node_id: int
    mac: MacAddress
    owner: str | None
    majority_label: str
    correct: bool
    purity: float

    def to_dict(self) -> dict:
        return {
            "node_id": self.node_id,
            "mac": str(self.mac),
            "owner": self.owner,
            "majority_label": self.majority_label,
            "correct": self.correct,
            "purity": self.purity,
        }


@dataclass
class EvalReport:
    accuracy: float
    mean_purity: float | None
    victims_total: int
    per_pair: list[PairOutcome] = field(default_factory=list)

    @property
    def correct(self) -> int:
        return sum(p.correct for p in self.per_pair)

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "mean_purity": self.mean_purity,
            "correct_pairs": self.correct,
            "victims_total": self.victims_total,
            "per_pair": [p.to_dict() for p in self.per_pair],
        }


def evaluate(assignment: Assignment, tree: LinkageTree, samples, registry: Mapping[MacAddress, str]) -> EvalReport:
    if not registry:
        raise ContractError("evaluation needs a nonempty registry")
    labels = _labels_by_id(samples)
    outcomes = []
    for node_id, mac in assignment.pairs:
        member_labels = _member_labels(node_id, tree, labels)
        counts = Counter(member_labels)
        top = max(counts.values())
        major = min(label for label, c in counts.items() if c == top)
        owner = registry.get(mac)
        ok = owner is not None and major == owner
        purity = counts[owner] / len(member_labels) if owner is not None else 0.0
        outcomes.append(PairOutcome(int(node_id), mac, owner, major, ok, purity))
    good = [o.purity for o in outcomes if o.correct]
    mean_purity = sum(good) / len(good) if good else None
    return EvalReport(len(good) / len(registry), mean_purity, len(registry), outcomes)


def association_accuracy(assignment: Assignment, tree: LinkageTree, samples, registry) -> float:
    """Correct pairs over the number of registered victims."""
    return evaluate(assignment, tree, samples, registry).accuracy


def cluster_purity(assignment: Assignment, tree: LinkageTree, samples, registry) -> float | None:
    """Unweighted mean purity over correctly associated pairs; ``None`` if there are none."""
    return evaluate(assignment, tree, samples, registry).mean_purity
