"""Sampling-based k-means clustering with outliers, via penalized costs.

The package is organized around one reduction: instead of discarding the
``z`` most expensive points outright, each point's cost is clamped at a
penalty threshold, and the threshold is swept over a geometric ladder of
cost guesses.  Everything else — seeding, local search, the accelerated
samplers, the distributed coordinator and the experiment harness — is built
on that clamped objective.
"""

__version__ = "0.1.0"

from .baselines import kmeanspp_baseline, lloyd_outliers
from .core import (
    BudgetExhausted,
    CenterSet,
    ClusteringSolution,
    CostCache,
    CountingSpace,
    DataError,
    Dataset,
    DistanceCounter,
    InfeasibleProblem,
    InfeasibleRung,
    PenaltyThreshold,
    RaggedRowError,
    RngStream,
    TotalCostZero,
    dist_sq,
    farthest_indices,
    mean,
    out_set,
    phi_minus_z,
    tau_point,
    tau_total,
)
from .distributed import (
    AlmostMetricInstance,
    MachineShard,
    MessageLedger,
    WeightedSummary,
    build_almost_metric,
    coordinator_solve_refined,
    coordinator_solve_simple,
    kmeans_par_overseed,
    machine_overseed,
    outlier_budget,
    run_distributed,
    shard_dataset,
)
from .hardness import (
    HardInstance,
    QueryOracle,
    exhaustive_label_cover,
    gen_hard_instance,
    oracle_fast_strategy,
    run_budgeted_eval,
    uniform_random_centers,
)
from .local_search import (
    LadderEntry,
    SearchBudget,
    local_search_step,
    local_search_with_outliers,
    theta_ladder,
)
from .metropolis import (
    MHConfig,
    estimate_robust_cost,
    fast_algorithm,
    fast_coreset_solve,
    metropolized_overseed,
    mh_sample,
)
from .seeding import overseed_penalized, sample_tau_weighted

__all__ = [
    "AlmostMetricInstance",
    "BudgetExhausted",
    "CenterSet",
    "ClusteringSolution",
    "CostCache",
    "CountingSpace",
    "DataError",
    "Dataset",
    "DistanceCounter",
    "HardInstance",
    "InfeasibleProblem",
    "InfeasibleRung",
    "LadderEntry",
    "MHConfig",
    "MachineShard",
    "MessageLedger",
    "PenaltyThreshold",
    "QueryOracle",
    "RaggedRowError",
    "RngStream",
    "SearchBudget",
    "TotalCostZero",
    "WeightedSummary",
    "__version__",
    "build_almost_metric",
    "coordinator_solve_refined",
    "coordinator_solve_simple",
    "dist_sq",
    "estimate_robust_cost",
    "exhaustive_label_cover",
    "farthest_indices",
    "fast_algorithm",
    "fast_coreset_solve",
    "gen_hard_instance",
    "kmeans_par_overseed",
    "kmeanspp_baseline",
    "lloyd_outliers",
    "local_search_step",
    "local_search_with_outliers",
    "machine_overseed",
    "mean",
    "metropolized_overseed",
    "mh_sample",
    "oracle_fast_strategy",
    "out_set",
    "outlier_budget",
    "overseed_penalized",
    "phi_minus_z",
    "run_budgeted_eval",
    "run_distributed",
    "sample_tau_weighted",
    "shard_dataset",
    "tau_point",
    "tau_total",
    "theta_ladder",
    "uniform_random_centers",
]
