"""Single-target evolutionary search under a hard latency constraint.

Candidates that miss the constraint are never admitted: every generation
attempt (random sample, mutation, or crossover) is repeated until the
result fits, and each failed attempt is counted as a rejection. Accuracy
is only queried for admitted candidates, so ``evaluations`` counts
predictor calls exactly.

Offspring that repeat a config already evaluated in the same run are
regenerated: first from the same parents, then (after ``novelty_retries``
duplicates) as fresh random samples, and accepted anyway after twice that
many. These retries are counted in ``duplicates``, not in ``rejections``.
"""

from __future__ import annotations

import json
import math
import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .design_space import (
    ArchitectureConfig,
    DesignSpaceSpec,
    Rng,
    crossover_batch,
    make_rng,
    mutate,
    mutate_batch,
    sample_batch,
    sample_random,
)
from .errors import ConstraintTooTightError, InfeasibleTargetError, WarmStartError
from .estimators import AccuracyModel, LatencyModel, lexicographic_rank, rank_order


@dataclass(frozen=True)
class SearchParams:
    population_size: int = 100
    num_iterations: int = 500
    parent_ratio: float = 0.25
    mutation_ratio: float = 0.5
    p_mut: float = 0.1
    max_reject: int = 10_000
    novelty_retries: int = 3

    def __post_init__(self) -> None:
        if self.population_size < 2:
            raise ValueError("population_size must be >= 2")
        if not 0 < self.parent_ratio <= 1:
            raise ValueError("parent_ratio must be in (0, 1]")
        if not 0 <= self.mutation_ratio <= 1:
            raise ValueError("mutation_ratio must be in [0, 1]")
        if not 0 <= self.p_mut <= 1:
            raise ValueError("p_mut must be in [0, 1]")
        if self.num_iterations < 1:
            raise ValueError("num_iterations must be >= 1")
        if self.max_reject < 0:
            raise ValueError("max_reject must be >= 0")
        if self.novelty_retries < 0:
            raise ValueError("novelty_retries must be >= 0")

    @property
    def num_parents(self) -> int:
        # Guard against 0.25 * 100 drifting above an integer.
        return min(self.population_size, math.ceil(self.parent_ratio * self.population_size - 1e-9))

    def evaluations_per_run(self) -> int:
        """Predictor calls of one search: initial population plus offspring."""
        return self.population_size + self.num_iterations * (self.population_size - self.num_parents)

    def to_dict(self) -> dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SearchParams:
        return cls(**data)


@dataclass(frozen=True)
class Candidate:
    config: ArchitectureConfig
    accuracy: float
    latency: float

    def to_dict(self) -> dict[str, Any]:
        return {"config": self.config.to_dict(), "accuracy": self.accuracy, "latency": self.latency}


@dataclass(frozen=True)
class WarmStart:
    seeds: tuple[ArchitectureConfig, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "seeds", tuple(self.seeds))


@dataclass
class SearchOutcome:
    best: Candidate
    target_ms: float
    evaluations: int
    rejections: int
    iterations_run: int
    wall_time: float
    seed: int | None
    duplicates: int = 0
    log: list[dict[str, Any]] | None = field(default=None, repr=False)

    def to_dict(self) -> dict[str, Any]:
        out = {
            "best": self.best.to_dict(),
            "target_ms": self.target_ms,
            "evaluations": self.evaluations,
            "rejections": self.rejections,
            "iterations_run": self.iterations_run,
            "wall_time": self.wall_time,
            "seed": self.seed,
            "duplicates": self.duplicates,
        }
        if self.log is not None:
            out["log"] = self.log
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any], space: DesignSpaceSpec) -> SearchOutcome:
        b = data["best"]
        best = Candidate(ArchitectureConfig.from_dict(b["config"], space), b["accuracy"], b["latency"])
        return cls(
            best=best,
            target_ms=data["target_ms"],
            evaluations=data["evaluations"],
            rejections=data["rejections"],
            iterations_run=data["iterations_run"],
            wall_time=data["wall_time"],
            seed=data["seed"],
            duplicates=data.get("duplicates", 0),
            log=data.get("log"),
        )

    def write_log(self, path: str) -> None:
        """One JSON object per iteration."""
        with open(path, "w") as fh:
            for rec in self.log or ():
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def check_feasible(space: DesignSpaceSpec, lat: LatencyModel, target: float) -> float:
    """Return the minimal-config latency, raising if ``target`` is below it."""
    floor = lat.latency(space.minimal_config())
    if target < floor:
        raise InfeasibleTargetError(target, floor)
    return floor


def _retry_until_valid(
    attempt: Callable[[], ArchitectureConfig],
    lat: LatencyModel,
    target: float,
    max_reject: int,
) -> tuple[ArchitectureConfig, int]:
    rejections = 0
    while True:
        arch = attempt()
        if lat.latency(arch) <= target:
            return arch, rejections
        rejections += 1
        if rejections > max_reject:
            raise ConstraintTooTightError(f"no valid candidate after {max_reject} rejections at {target} ms")


def sample_valid(
    space: DesignSpaceSpec, lat: LatencyModel, target: float, rng: Rng, max_reject: int = 10_000
) -> tuple[ArchitectureConfig, int]:
    """Random config meeting ``target`` and the number of failed attempts."""
    check_feasible(space, lat, target)
    return _retry_until_valid(lambda: sample_random(space, rng), lat, target, max_reject)


def mutate_valid(
    parent: ArchitectureConfig,
    space: DesignSpaceSpec,
    lat: LatencyModel,
    target: float,
    p_mut: float,
    rng: Rng,
    max_reject: int = 10_000,
) -> tuple[ArchitectureConfig, int]:
    check_feasible(space, lat, target)
    return _retry_until_valid(lambda: mutate(parent, p_mut, rng), lat, target, max_reject)


def _generate(
    attempt: Callable[[np.ndarray], np.ndarray],
    n: int,
    space: DesignSpaceSpec,
    lat: LatencyModel,
    target: float,
    params: SearchParams,
    seen: set[bytes] | None = None,
    fallback: Callable[[np.ndarray], np.ndarray] | None = None,
    width: int = 1,
) -> tuple[np.ndarray, np.ndarray, int, int]:
    """Batched rejection loop: ``attempt(rows)`` proposes genomes for ``rows``.

    Rows that miss the target are re-proposed until they fit. With ``seen``
    given, a feasible proposal whose canonical genome is already in it is
    also re-proposed: by ``attempt`` for the first ``novelty_retries``
    duplicates of a row, then by ``fallback`` for as many more, after which
    the duplicate is accepted.

    Each round proposes a block of attempts per pending row, starting at
    ``width`` and doubling up to 16, and consumes them in order, so the
    counters match a one-at-a-time loop. Returns genomes, latencies, rejections, and duplicate retries.
    """
    genomes = np.empty((n, space.num_genes), dtype=np.int64)
    ms = np.empty(n)
    fails = [0] * n
    dups = [0] * n
    rejections = duplicates = 0
    cap = params.novelty_retries
    limit = 2 * cap if fallback is not None else cap
    check_novel = seen is not None and cap > 0
    total = space.total_configs() if check_novel else 0

    pending, width = np.arange(n), max(1, min(width, 16))
    while pending.size:
        rows = np.repeat(pending, width)
        if check_novel and fallback is not None:
            late = np.asarray(dups)[rows] >= cap
        else:
            late = np.zeros(rows.size, dtype=bool)
        prop = np.empty((rows.size, space.num_genes), dtype=np.int64)
        if (~late).any():
            prop[~late] = attempt(rows[~late])
        if late.any():
            prop[late] = fallback(rows[late])
        prop_ms = lat.latency_batch(space, prop)
        ok = prop_ms <= target
        canon = space.canonicalize(prop) if check_novel else prop

        ok_list = ok.tolist()
        rows_done, props_done, unfinished = [], [], []
        for i, r in enumerate(pending.tolist()):
            accepted = False
            for j in range(i * width, (i + 1) * width):
                if not ok_list[j]:
                    rejections += 1
                    fails[r] += 1
                    if fails[r] > params.max_reject:
                        raise ConstraintTooTightError(
                            f"no valid candidate after {params.max_reject} rejections at {target} ms"
                        )
                    continue
                if check_novel and len(seen) < total:
                    key = canon[j].tobytes()
                    if key in seen and dups[r] < limit:
                        dups[r] += 1
                        duplicates += 1
                        if dups[r] == cap and fallback is not None:
                            break  # remaining proposals came from the wrong generator
                        continue
                    seen.add(key)
                rows_done.append(r)
                props_done.append(j)
                accepted = True
                break
            if not accepted:
                unfinished.append(r)
        genomes[rows_done] = prop[props_done]
        ms[rows_done] = prop_ms[props_done]
        pending = np.asarray(unfinished, dtype=np.int64)
        width = min(2 * width, 16)
    return genomes, ms, rejections, duplicates


def select_parents(
    space: DesignSpaceSpec, pop: np.ndarray, acc: np.ndarray, ms: np.ndarray, n_par: int
) -> np.ndarray:
    """Indices of the ``n_par`` best candidates, distinct configs first.

    Duplicates of a higher-ranked config only fill parent slots once the
    distinct configs run out, so the parent count never changes.
    """
    canon = space.canonicalize(pop)
    lex = lexicographic_rank(canon)
    order = np.lexsort((lex, ms, -acc))
    _, first = np.unique(lex[order], return_index=True)
    is_first = np.zeros(order.size, dtype=bool)
    is_first[first] = True
    return np.concatenate([order[is_first], order[~is_first]])[:n_par]


def evolutionary_search(
    space: DesignSpaceSpec,
    lat: LatencyModel,
    acc: AccuracyModel,
    target: float,
    params: SearchParams = SearchParams(),
    warm: WarmStart = WarmStart(),
    rng: Rng | int = 0,
    record_log: bool = False,
) -> SearchOutcome:
    """Maximize predicted accuracy subject to ``latency <= target``.

    ``rng`` may be a generator or an integer seed; only integer seeds are
    recorded in the outcome.
    """
    t0 = time.perf_counter()
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    if seed is not None:
        rng = make_rng(seed)
    check_feasible(space, lat, target)

    P, n_par = params.population_size, params.num_parents
    seeds = warm.seeds[:P]
    if seeds:
        if any(s.space != space for s in seeds):
            raise WarmStartError("warm-start seed from a different design space")
        seed_genomes = np.stack([s.genome for s in seeds]).astype(np.int64)
        seed_ms = lat.latency_batch(space, seed_genomes)
        if (seed_ms > target).any():
            i = int(np.argmax(seed_ms > target))
            raise WarmStartError(f"warm seed {i} has latency {seed_ms[i]!r} ms > target {target} ms")
    else:
        seed_genomes = np.empty((0, space.num_genes), dtype=np.int64)
        seed_ms = np.empty(0)

    seen: set[bytes] | None = None
    if params.novelty_retries:
        seen = {c.tobytes() for c in space.canonicalize(seed_genomes)}

    def immigrant(rows: np.ndarray) -> np.ndarray:
        return sample_batch(space, rng, rows.size)

    fresh, fresh_ms, rejections, duplicates = _generate(
        immigrant, P - len(seeds), space, lat, target, params, seen
    )
    pop = np.concatenate([seed_genomes, fresh])
    pop_ms = np.concatenate([seed_ms, fresh_ms])
    pop_acc = acc.predict_batch(space, pop)
    evaluations = P
    log: list[dict[str, Any]] | None = [] if record_log else None

    n_off = P - n_par
    width = 1
    for it in range(params.num_iterations):
        order = select_parents(space, pop, pop_acc, pop_ms, n_par)
        parents, par_ms, par_acc = pop[order], pop_ms[order], pop_acc[order]
        if log is not None:
            log.append(
                {
                    "iteration": it,
                    "best_accuracy": float(par_acc[0]),
                    "evaluations": evaluations,
                    "rejections": rejections,
                }
            )

        is_mut = rng.random(n_off) < params.mutation_ratio
        pa = rng.integers(0, n_par, size=n_off)
        # Second parent is distinct from the first whenever there are two to pick from.
        pb = (pa + rng.integers(1, n_par, size=n_off)) % n_par if n_par > 1 else pa

        def attempt(rows: np.ndarray) -> np.ndarray:
            out = np.empty((rows.size, space.num_genes), dtype=np.int64)
            m = is_mut[rows]
            if m.any():
                out[m] = mutate_batch(space, parents[pa[rows[m]]], params.p_mut, rng)
            if (~m).any():
                c = rows[~m]
                out[~m] = crossover_batch(parents[pa[c]], parents[pb[c]], rng)
            return out

        kids, kids_ms, rej, dup = _generate(attempt, n_off, space, lat, target, params, seen, immigrant, width)
        # Size the next generation's first block from this one's attempts per offspring.
        width = -(-(n_off + rej + dup) // n_off)
        rejections += rej
        duplicates += dup
        kids_acc = acc.predict_batch(space, kids)
        evaluations += n_off
        pop = np.concatenate([parents, kids])
        pop_ms = np.concatenate([par_ms, kids_ms])
        pop_acc = np.concatenate([par_acc, kids_acc])

    assert (pop_ms <= target).all(), "admitted a candidate above the latency target"
    top = rank_order(space.canonicalize(pop), pop_acc, pop_ms)[0]
    best = Candidate(ArchitectureConfig(space, pop[top]), float(pop_acc[top]), float(pop_ms[top]))
    if log is not None:
        log.append(
            {
                "iteration": params.num_iterations,
                "best_accuracy": best.accuracy,
                "evaluations": evaluations,
                "rejections": rejections,
            }
        )
    return SearchOutcome(
        best=best,
        target_ms=float(target),
        evaluations=evaluations,
        rejections=rejections,
        iterations_run=params.num_iterations,
        wall_time=time.perf_counter() - t0,
        seed=seed,
        duplicates=duplicates,
        log=log,
    )


def with_iterations(params: SearchParams, n: int) -> SearchParams:
    return replace(params, num_iterations=n)

