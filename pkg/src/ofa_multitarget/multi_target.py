"""Multi-target scheduling: vanilla, top-down, and bottom-up.

Vanilla runs an independent full-budget search per target. The two warm
strategies spend the full budget only on the first target they process and
``n_rest`` iterations on each later one, seeding its population from the
previous optimum:

* top-down walks targets in descending order and seeds with a randomly
  pruned copy of the previous optimum, shrunk until it fits the tighter
  target;
* bottom-up walks targets in ascending order and seeds with the previous
  optimum itself, which always fits the looser target.

Search ``i`` in processing order uses the sub-seed ``derive_seed(seed, i, 0)``
and pruning uses ``derive_seed(seed, i, 1)``, so the first search is the
same for every strategy.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

from .design_space import DesignSpaceSpec, derive_seed, make_rng, prune_to_latency
from .errors import ConfigurationError
from .estimators import AccuracyModel, LatencyModel
from .search import SearchOutcome, SearchParams, WarmStart, check_feasible, evolutionary_search, with_iterations

DEFAULT_N_FIRST = 500
DEFAULT_N_REST = 63


class StrategyKind(str, enum.Enum):
    VANILLA = "vanilla"
    TOP_DOWN = "top-down"
    BOTTOM_UP = "bottom-up"

    @classmethod
    def parse(cls, value: str | StrategyKind) -> StrategyKind:
        try:
            return cls(value)
        except ValueError:
            raise ConfigurationError(
                f"unknown strategy {value!r}; choose from {[k.value for k in cls]}"
            ) from None


def sqrt_budget(n_first: int) -> int:
    """``ceil(sqrt(n_first))``: the reduced budget the complexity argument uses."""
    return math.isqrt(n_first - 1) + 1 if n_first > 1 else 1


@dataclass(frozen=True)
class MultiTargetPlan:
    targets_ms: tuple[float, ...]
    n_first: int = DEFAULT_N_FIRST
    n_rest: int = DEFAULT_N_REST
    base_params: SearchParams = field(default_factory=SearchParams)
    seed: int = 0
    warm_seed_count: int = 1

    def __post_init__(self) -> None:
        targets = tuple(float(t) for t in self.targets_ms)
        object.__setattr__(self, "targets_ms", targets)
        if not targets:
            raise ConfigurationError("at least one latency target is required")
        if len(set(targets)) != len(targets):
            raise ConfigurationError(f"latency targets must be distinct: {targets}")
        if not self.n_first >= self.n_rest >= 1:
            raise ConfigurationError("need n_first >= n_rest >= 1")
        if self.warm_seed_count < 1:
            raise ConfigurationError("warm_seed_count must be >= 1")

    @classmethod
    def with_sqrt_rest(cls, targets_ms: Sequence[float], n_first: int = DEFAULT_N_FIRST, **kw: Any) -> MultiTargetPlan:
        return cls(tuple(targets_ms), n_first, sqrt_budget(n_first), **kw)

    @property
    def k(self) -> int:
        return len(self.targets_ms)

    def warm_iteration_budget(self) -> int:
        return self.n_first + (self.k - 1) * self.n_rest

    def vanilla_iteration_budget(self) -> int:
        return self.k * self.n_first


@dataclass
class MultiTargetOutcome:
    strategy: StrategyKind
    per_target: dict[float, SearchOutcome]
    order_processed: list[float]

    @property
    def total_evaluations(self) -> int:
        return sum(o.evaluations for o in self.per_target.values())

    @property
    def total_rejections(self) -> int:
        return sum(o.rejections for o in self.per_target.values())

    @property
    def total_iterations(self) -> int:
        return sum(o.iterations_run for o in self.per_target.values())

    @property
    def total_wall_time(self) -> float:
        return sum(o.wall_time for o in self.per_target.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "strategy": self.strategy.value,
            "order_processed": self.order_processed,
            "per_target": [self.per_target[t].to_dict() for t in self.order_processed],
            "total_evaluations": self.total_evaluations,
            "total_rejections": self.total_rejections,
            "total_iterations": self.total_iterations,
            "total_wall_time": self.total_wall_time,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], space: DesignSpaceSpec) -> MultiTargetOutcome:
        outcomes = [SearchOutcome.from_dict(d, space) for d in data["per_target"]]
        return cls(
            StrategyKind(data["strategy"]),
            {o.target_ms: o for o in outcomes},
            [float(t) for t in data["order_processed"]],
        )


def _check_targets(plan: MultiTargetPlan, space: DesignSpaceSpec, lat: LatencyModel) -> None:
    for t in plan.targets_ms:
        check_feasible(space, lat, t)


def _run_chain(
    kind: StrategyKind,
    order: list[float],
    plan: MultiTargetPlan,
    space: DesignSpaceSpec,
    lat: LatencyModel,
    acc: AccuracyModel,
) -> MultiTargetOutcome:
    _check_targets(plan, space, lat)
    per_target: dict[float, SearchOutcome] = {}
    prev: SearchOutcome | None = None
    for i, target in enumerate(order):
        if kind is StrategyKind.VANILLA or prev is None:
            warm, n = WarmStart(), plan.n_first
        elif kind is StrategyKind.TOP_DOWN:
            prune_rng = make_rng(derive_seed(plan.seed, i, 1))
            warm = WarmStart(
                prune_to_latency(prev.best.config, target, lat, prune_rng) for _ in range(plan.warm_seed_count)
            )
            n = plan.n_rest
        else:
            warm, n = WarmStart((prev.best.config,)), plan.n_rest
        prev = evolutionary_search(
            space, lat, acc, target, with_iterations(plan.base_params, n), warm, derive_seed(plan.seed, i, 0)
        )
        per_target[target] = prev
    return MultiTargetOutcome(kind, per_target, list(order))


def run_vanilla(
    plan: MultiTargetPlan, space: DesignSpaceSpec, lat: LatencyModel, acc: AccuracyModel
) -> MultiTargetOutcome:
    """Independent full-budget search per target, in the given order."""
    return _run_chain(StrategyKind.VANILLA, list(plan.targets_ms), plan, space, lat, acc)


def run_top_down(
    plan: MultiTargetPlan, space: DesignSpaceSpec, lat: LatencyModel, acc: AccuracyModel
) -> MultiTargetOutcome:
    return _run_chain(StrategyKind.TOP_DOWN, sorted(plan.targets_ms, reverse=True), plan, space, lat, acc)


def run_bottom_up(
    plan: MultiTargetPlan, space: DesignSpaceSpec, lat: LatencyModel, acc: AccuracyModel
) -> MultiTargetOutcome:
    return _run_chain(StrategyKind.BOTTOM_UP, sorted(plan.targets_ms), plan, space, lat, acc)


_RUNNERS = {
    StrategyKind.VANILLA: run_vanilla,
    StrategyKind.TOP_DOWN: run_top_down,
    StrategyKind.BOTTOM_UP: run_bottom_up,
}


def run_strategy(
    kind: StrategyKind | str,
    plan: MultiTargetPlan,
    space: DesignSpaceSpec,
    lat: LatencyModel,
    acc: AccuracyModel,
) -> MultiTargetOutcome:
    return _RUNNERS[StrategyKind.parse(kind)](plan, space, lat, acc)
