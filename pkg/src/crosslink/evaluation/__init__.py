from .feasibility import (
    cont_g_distinguishability,
    feasibility_curve,
    rand_g_distinguishability,
    write_curve,
)
from .metrics import (
    EvalReport,
    PairOutcome,
    association_accuracy,
    cluster_purity,
    evaluate,
    majority_label,
)

__all__ = [
    "EvalReport",
    "PairOutcome",
    "association_accuracy",
    "cluster_purity",
    "cont_g_distinguishability",
    "evaluate",
    "feasibility_curve",
    "majority_label",
    "rand_g_distinguishability",
    "write_curve",
]
