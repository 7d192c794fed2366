"""Multi-target latency-constrained evolutionary subnetwork search.

Searches a design space of subnetwork configs for the most accurate one
under each of several latency targets, with three schedules: independent
full searches (vanilla), and two warm-started chains (top-down, bottom-up)
that reuse the previous target's optimum.
"""

from .design_space import (
    OFA_SPACES,
    PRESETS,
    ArchitectureConfig,
    DesignSpaceSpec,
    crossover,
    derive_seed,
    enumerate_all,
    get_space,
    make_rng,
    mutate,
    prune_random,
    prune_to_latency,
    sample_random,
)
from .errors import (
    ConfigurationError,
    ConstraintTooTightError,
    IncompatibleParentsError,
    IncompleteTableError,
    InfeasibleTargetError,
    InvalidConfigError,
    SearchError,
    SpaceTooLargeError,
    WarmStartError,
)
from .estimators import (
    AccuracyModel,
    LatencyModel,
    OracleResult,
    brute_force_best,
    calibrated_latency_model,
    default_latency_model,
    latency,
    predict_accuracy,
)
from .multi_target import (
    MultiTargetOutcome,
    MultiTargetPlan,
    StrategyKind,
    run_bottom_up,
    run_strategy,
    run_top_down,
    run_vanilla,
)
from .search import Candidate, SearchOutcome, SearchParams, WarmStart, evolutionary_search, mutate_valid, sample_valid

__version__ = "0.1.0"
