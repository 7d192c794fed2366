"""Benchmark harness: repeated seeded runs, aggregation, and report files.

One run is a multi-target search by one strategy over the ``k`` largest
targets of the grid, repeated with seed ``derive_seed(cfg.seed, r)`` for
repetition ``r``. Cost is counted in predictor evaluations; wall time is
recorded but never enters the byte-stable outputs.

Vanilla and top-down both process targets in descending order with one
sub-seed per position, so their run on the ``k`` largest targets is exactly
the first ``k`` searches of the run on all of them. The k-sweep therefore
runs those two strategies once per repetition and slices; bottom-up starts
from the smallest target and is run separately for every ``k``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import statistics
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Any

from scipy.stats import binomtest

from .design_space import ArchitectureConfig, DesignSpaceSpec, derive_seed, get_space
from .errors import ConfigurationError, SearchError
from .estimators import AccuracyModel, LatencyModel, default_latency_model
from .multi_target import (
    DEFAULT_N_FIRST,
    DEFAULT_N_REST,
    MultiTargetOutcome,
    MultiTargetPlan,
    StrategyKind,
    run_strategy,
    sqrt_budget,
)
from .search import SearchParams

DEFAULT_TARGETS = tuple(float(t) for t in range(15, 61, 5))
DEFAULT_K_VALUES = (1, 2, 3, 4, 5, 10)
STRATEGIES = tuple(k.value for k in StrategyKind)
COLUMN_PREFIX = {"vanilla": "vanilla", "top-down": "topdown", "bottom-up": "bottomup"}
METRICS = ("accuracy", "evaluations", "rejections", "iterations", "wall_time")
STABLE_METRICS = METRICS[:-1]  # wall_time varies between runs
SWEEPS = ("k", "accuracy", "profile")
SIGN_TEST_ALPHA = 0.05
ALL_FORMATS = ("csv", "json", "jsonl", "svg")


@dataclass(frozen=True)
class ExperimentConfig:
    space_name: str = "mobilenetv3"
    latency_seed: int = 1
    accuracy: AccuracyModel = field(default_factory=AccuracyModel)
    targets_ms: tuple[float, ...] = DEFAULT_TARGETS
    strategies: tuple[str, ...] = STRATEGIES
    repetitions: int = 10
    n_first: int = DEFAULT_N_FIRST
    n_rest: int | str = DEFAULT_N_REST  # or "sqrt" for ceil(sqrt(n_first))
    search: SearchParams = field(default_factory=SearchParams)
    seed: int = 0
    k_values: tuple[int, ...] = ()  # empty: DEFAULT_K_VALUES below the grid size, plus the grid size
    spaces: tuple[str, ...] = ()
    profile_targets: tuple[float, ...] = ()
    profile_strategies: tuple[str, ...] = ("vanilla",)
    output_dir: str | None = None
    jobs: int | None = None

    def __post_init__(self) -> None:
        norm = {
            "targets_ms": tuple(float(t) for t in self.targets_ms),
            "strategies": tuple(StrategyKind.parse(s).value for s in self.strategies),
            "k_values": tuple(sorted({int(k) for k in self.k_values})),
            "spaces": tuple(self.spaces),
            "profile_targets": tuple(float(t) for t in self.profile_targets),
            "profile_strategies": tuple(StrategyKind.parse(s).value for s in self.profile_strategies),
        }
        for name, value in norm.items():
            object.__setattr__(self, name, value)
        if self.repetitions < 1:
            raise ConfigurationError("repetitions must be >= 1")
        if not self.strategies:
            raise ConfigurationError("at least one strategy is required")
        if not self.targets_ms:
            raise ConfigurationError("at least one latency target is required")
        if len(set(self.targets_ms)) != len(self.targets_ms):
            raise ConfigurationError("latency targets must be distinct")
        if self.k_values and not 1 <= self.k_values[0] <= self.k_values[-1] <= len(self.targets_ms):
            raise ConfigurationError(f"k values must lie in [1, {len(self.targets_ms)}]")
        if not (self.n_rest == "sqrt" or (isinstance(self.n_rest, int) and self.n_rest >= 1)):
            raise ConfigurationError("n_rest must be a positive integer or 'sqrt'")
        if self.jobs is not None and self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        for name in (self.space_name, *self.spaces):
            get_space(name)

    @property
    def k_grid(self) -> tuple[int, ...]:
        n = len(self.targets_ms)
        return self.k_values or tuple(sorted({k for k in DEFAULT_K_VALUES if k < n} | {n}))

    @property
    def n_rest_value(self) -> int:
        return sqrt_budget(self.n_first) if self.n_rest == "sqrt" else int(self.n_rest)

    def rep_seed(self, r: int) -> int:
        return derive_seed(self.seed, r)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, (AccuracyModel, SearchParams)):
                value = value.to_dict()
            elif isinstance(value, tuple):
                value = list(value)
            out[name] = value
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        if not isinstance(data, dict):
            raise ConfigurationError("experiment config must be a JSON object")
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        kw = dict(data)
        try:
            if "accuracy" in kw:
                kw["accuracy"] = AccuracyModel.from_dict(kw["accuracy"])
            if "search" in kw:
                kw["search"] = SearchParams.from_dict(kw["search"])
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid experiment config: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> ExperimentConfig:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperimentConfig:
        return cls.from_json(Path(path).read_text())


# -- running ------------------------------------------------------------------


@lru_cache(maxsize=None)
def _models(space_name: str, latency_seed: int) -> tuple[DesignSpaceSpec, LatencyModel]:
    space = get_space(space_name)
    return space, default_latency_model(space, latency_seed)


def walk_latency(lat: LatencyModel, arch: ArchitectureConfig) -> float:
    """Re-derive a config's latency straight from the table, block by block."""
    total = lat.overhead_ms
    for unit, slot, kernel, expand in arch.active_blocks():
        total += lat.block_table[(unit, slot, kernel, expand, arch.resolution)]
    return total


@dataclass(frozen=True)
class _Task:
    sweep: str
    space_name: str
    latency_seed: int
    accuracy: AccuracyModel
    strategy: str
    targets: tuple[float, ...]  # descending; the run covers all of them
    ks: tuple[int, ...]  # leading prefixes to report, ascending
    n_first: int
    n_rest: int
    params: SearchParams
    repetition: int
    seed: int

    def plan(self, k: int) -> MultiTargetPlan:
        return MultiTargetPlan(self.targets[:k], self.n_first, self.n_rest, self.params, self.seed)


def _record(task: _Task, k: int, outcome: MultiTargetOutcome | None, error: str | None) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "sweep": task.sweep,
        "space": task.space_name,
        "latency_seed": task.latency_seed,
        "strategy": task.strategy,
        "k": k,
        "repetition": task.repetition,
        "seed": task.seed,
        "targets_ms": sorted(task.targets[:k]),
        "error": error,
        "per_target": [],
    }
    if outcome is None:
        return rec
    _, lat = _models(task.space_name, task.latency_seed)
    for t in outcome.order_processed[:k]:
        o = outcome.per_target[t]
        walked = walk_latency(lat, o.best.config)
        rec["per_target"].append(
            {
                "target_ms": t,
                "accuracy": o.best.accuracy,
                "latency_ms": o.best.latency,
                "verified_latency_ms": walked,
                "within_target": walked <= t,
                "evaluations": o.evaluations,
                "rejections": o.rejections,
                "iterations": o.iterations_run,
                "duplicates": o.duplicates,
                "wall_time": o.wall_time,
                "config": o.best.config.to_dict(),
            }
        )
    for name, key in (("evaluations", "evaluations"), ("rejections", "rejections"), ("iterations", "iterations")):
        rec[name] = sum(p[key] for p in rec["per_target"])
    rec["wall_time"] = sum(p["wall_time"] for p in rec["per_target"])
    return rec


def _run_one(task: _Task, k: int) -> tuple[MultiTargetOutcome | None, str | None]:
    space, lat = _models(task.space_name, task.latency_seed)
    try:
        return run_strategy(task.strategy, task.plan(k), space, lat, task.accuracy), None
    except (SearchError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _run_task(task: _Task) -> list[dict[str, Any]]:
    full = len(task.targets)
    outcome, error = _run_one(task, full)
    if error is None or task.ks == (full,):
        return [_record(task, k, outcome, error) for k in task.ks]
    # A failure late in the chain must not mark shorter prefixes as failed.
    return [_record(task, k, *_run_one(task, k)) for k in task.ks]


def _execute(tasks: Sequence[_Task], jobs: int | None) -> list[dict[str, Any]]:
    jobs = jobs or os.cpu_count() or 1
    if jobs == 1 or len(tasks) < 2:
        results = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_run_task, tasks))
    return [rec for batch in results for rec in batch]


def _task(cfg: ExperimentConfig, sweep: str, strategy: str, targets: Sequence[float], ks: Sequence[int], r: int) -> _Task:
    return _Task(
        sweep=sweep,
        space_name=cfg.space_name,
        latency_seed=cfg.latency_seed,
        accuracy=cfg.accuracy,
        strategy=strategy,
        targets=tuple(targets),
        ks=tuple(ks),
        n_first=cfg.n_first,
        n_rest=cfg.n_rest_value,
        params=cfg.search,
        repetition=r,
        seed=cfg.rep_seed(r),
    )


def _k_tasks(cfg: ExperimentConfig, k_values: Sequence[int]) -> list[_Task]:
    ks = sorted(set(k_values))
    if not ks or not 1 <= ks[0] <= ks[-1] <= len(cfg.targets_ms):
        raise ConfigurationError(f"k values must lie in [1, {len(cfg.targets_ms)}]")
    desc = sorted(cfg.targets_ms, reverse=True)
    tasks = []
    for r in range(cfg.repetitions):
        for s in cfg.strategies:
            if s == StrategyKind.BOTTOM_UP.value:
                tasks += [_task(cfg, "k", s, desc[:k], (k,), r) for k in ks]
            else:
                tasks.append(_task(cfg, "k", s, desc[: ks[-1]], ks, r))
    return tasks


def _notes(cfg: ExperimentConfig) -> tuple[str, ...]:
    return (
        f"warm strategies run n_first={cfg.n_first} iterations on their first target and "
        f"n_rest={cfg.n_rest_value} on each later one; ceil(sqrt(n_first)) = {sqrt_budget(cfg.n_first)}",
        "cost is counted in predictor evaluations; wall_time is machine-dependent and kept out of "
        "report.csv and raw_runs.jsonl",
        "single-target profile runs one search per target; all strategies coincide when k = 1",
    )


def _finish(cfg: ExperimentConfig, records: list[dict[str, Any]]) -> AggregateReport:
    report = build_report(cfg.to_dict(), records, _notes(cfg))
    if cfg.output_dir:
        emit_report(report, cfg.output_dir)
    return report


def run_experiment(cfg: ExperimentConfig) -> AggregateReport:
    """Every strategy on the whole target grid, ``cfg.repetitions`` times."""
    return _finish(cfg, _execute(_k_tasks(cfg, [len(cfg.targets_ms)]), cfg.jobs))


def sweep_k(cfg: ExperimentConfig, k_values: Sequence[int] | None = None) -> AggregateReport:
    """Run each strategy on the ``k`` largest targets for every ``k``."""
    return _finish(cfg, _execute(_k_tasks(cfg, k_values or cfg.k_grid), cfg.jobs))


def sweep_spaces(cfg: ExperimentConfig, space_names: Sequence[str] | None = None) -> AggregateReport:
    """The k-sweep (whose largest k doubles as the accuracy table) per space."""
    names = list(space_names or cfg.spaces or (cfg.space_name,))
    for name in names:
        get_space(name)  # fail before any run
    tasks = [t for n in names for t in _k_tasks(replace(cfg, space_name=n), cfg.k_grid)]
    return _finish(cfg, _execute(tasks, cfg.jobs))


def _profile_tasks(cfg: ExperimentConfig, target_grid: Sequence[float]) -> list[_Task]:
    return [
        _task(cfg, "profile", s, (float(t),), (1,), r)
        for r in range(cfg.repetitions)
        for t in target_grid
        for s in cfg.profile_strategies
    ]


def profile_grid(cfg: ExperimentConfig) -> tuple[float, ...]:
    return cfg.profile_targets or (min(cfg.targets_ms), max(cfg.targets_ms))


def single_target_profile(cfg: ExperimentConfig, target_grid: Sequence[float] | None = None) -> AggregateReport:
    """Independent single-target searches per target, paired over seeds."""
    return _finish(cfg, _execute(_profile_tasks(cfg, target_grid or profile_grid(cfg)), cfg.jobs))


def run_bench(cfg: ExperimentConfig) -> AggregateReport:
    """Full pipeline: k-sweep and accuracy table per space, then the profile."""
    names = list(cfg.spaces or (cfg.space_name,))
    for name in names:
        get_space(name)
    tasks: list[_Task] = []
    for name in names:
        sub = replace(cfg, space_name=name)
        tasks += _k_tasks(sub, cfg.k_grid)
        tasks += _profile_tasks(sub, profile_grid(sub))
    return _finish(cfg, _execute(tasks, cfg.jobs))


# -- aggregation ----------------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """Mean and sample std of each metric for one (sweep, space, strategy, x)."""

    sweep: str
    space: str
    strategy: str
    axis: str  # "k" or "target_ms"
    value: int | float
    runs: int
    failed: int
    mean: dict[str, float | None]
    std: dict[str, float | None]

    @property
    def complete(self) -> bool:
        return self.failed == 0

    def to_dict(self) -> dict[str, Any]:
        return {f: getattr(self, f) for f in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Cell:
        return cls(**data)


def _summarize(samples: list[dict[str, float]]) -> tuple[dict[str, float | None], dict[str, float | None]]:
    mean: dict[str, float | None] = {}
    std: dict[str, float | None] = {}
    for m in METRICS:
        xs = [s[m] for s in samples]
        mean[m] = statistics.fmean(xs) if xs else None
        std[m] = statistics.stdev(xs) if len(xs) > 1 else None
    return mean, std


def _run_sample(rec: dict[str, Any]) -> dict[str, float]:
    return {
        "accuracy": statistics.fmean(p["accuracy"] for p in rec["per_target"]),
        "evaluations": rec["evaluations"],
        "rejections": rec["rejections"],
        "iterations": rec["iterations"],
        "wall_time": rec["wall_time"],
    }


def _target_sample(p: dict[str, Any]) -> dict[str, float]:
    return {m: p[m] for m in METRICS}


def aggregate(records: Iterable[dict[str, Any]]) -> tuple[Cell, ...]:
    """Cells for every sweep; a pure function of the raw records."""
    records = list(records)
    spaces = list(dict.fromkeys(r["space"] for r in records))
    groups: dict[tuple, tuple[list, int]] = {}

    def add(key: tuple, sample: dict[str, float] | None) -> None:
        samples, failed = groups.get(key, ([], 0))
        if sample is None:
            failed += 1
        else:
            samples.append(sample)
        groups[key] = (samples, failed)

    kmax = {s: max((r["k"] for r in records if r["space"] == s and r["sweep"] == "k"), default=None) for s in spaces}
    for r in records:
        ok = r["error"] is None
        if r["sweep"] == "k":
            add(("k", r["space"], r["strategy"], "k", r["k"]), _run_sample(r) if ok else None)
            if r["k"] == kmax[r["space"]]:
                by_target = {p["target_ms"]: p for p in r["per_target"]}
                for t in r["targets_ms"]:
                    add(("accuracy", r["space"], r["strategy"], "target_ms", t), _target_sample(by_target[t]) if ok else None)
        elif r["sweep"] == "profile":
            t = r["targets_ms"][0]
            add(("profile", r["space"], r["strategy"], "target_ms", t), _target_sample(r["per_target"][0]) if ok else None)

    def order(key: tuple) -> tuple:
        sweep, space, strategy, _, value = key
        return SWEEPS.index(sweep), spaces.index(space), STRATEGIES.index(strategy), value

    cells = []
    for key in sorted(groups, key=order):
        samples, failed = groups[key]
        mean, std = _summarize(samples)
        cells.append(Cell(*key, runs=len(samples), failed=failed, mean=mean, std=std))
    return tuple(cells)


def sign_tests(records: Iterable[dict[str, Any]], alpha: float = SIGN_TEST_ALPHA) -> tuple[dict[str, Any], ...]:
    """One-sided sign test per space: rejections at the tightest vs loosest target.

    Pairs are matched by repetition, using the first profiled strategy;
    tied pairs are dropped.
    """
    prof = [r for r in records if r["sweep"] == "profile" and r["error"] is None]
    out = []
    for space in dict.fromkeys(r["space"] for r in prof):
        rows = [r for r in prof if r["space"] == space]
        strategy = min((r["strategy"] for r in rows), key=STRATEGIES.index)
        rows = [r for r in rows if r["strategy"] == strategy]
        targets = sorted({r["targets_ms"][0] for r in rows})
        if len(targets) < 2:
            continue
        tight, loose = targets[0], targets[-1]
        by = {(r["repetition"], r["targets_ms"][0]): r["rejections"] for r in rows}
        reps = sorted({rep for rep, t in by if (rep, tight) in by and (rep, loose) in by})
        diffs = [by[(rep, tight)] - by[(rep, loose)] for rep in reps]
        greater = sum(d > 0 for d in diffs)
        less = sum(d < 0 for d in diffs)
        p = binomtest(greater, greater + less, 0.5, alternative="greater").pvalue if greater + less else 1.0
        out.append(
            {
                "space": space,
                "strategy": strategy,
                "tight_ms": tight,
                "loose_ms": loose,
                "pairs": len(diffs),
                "greater": greater,
                "less": less,
                "mean_rejections_tight": statistics.fmean(by[(rep, tight)] for rep in reps) if reps else None,
                "mean_rejections_loose": statistics.fmean(by[(rep, loose)] for rep in reps) if reps else None,
                "p_value": float(p),
                "alpha": alpha,
                "significant": bool(p < alpha),
            }
        )
    return tuple(out)


@dataclass(frozen=True)
class AggregateReport:
    config: dict[str, Any]
    cells: tuple[Cell, ...]
    records: tuple[dict[str, Any], ...]
    tests: tuple[dict[str, Any], ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def spaces(self) -> list[str]:
        return list(dict.fromkeys(c.space for c in self.cells))

    def cells_for(self, sweep: str, space: str | None = None) -> list[Cell]:
        return [c for c in self.cells if c.sweep == sweep and (space is None or c.space == space)]

    def cell(self, sweep: str, space: str, strategy: str, value: float) -> Cell:
        for c in self.cells:
            if (c.sweep, c.space, c.strategy, c.value) == (sweep, space, strategy, value):
                return c
        raise KeyError((sweep, space, strategy, value))

    @property
    def incomplete(self) -> list[Cell]:
        return [c for c in self.cells if not c.complete]

    def cost_ratios(self, space: str) -> dict[int, dict[str, float]]:
        """Warm mean evaluations over vanilla mean evaluations, per k."""
        out: dict[int, dict[str, float]] = {}
        for c in self.cells_for("k", space):
            if c.strategy == "vanilla":
                continue
            try:
                base = self.cell("k", space, "vanilla", c.value).mean["evaluations"]
            except KeyError:
                continue
            if base and c.mean["evaluations"] is not None:
                out.setdefault(int(c.value), {})[c.strategy] = c.mean["evaluations"] / base
        return out

    def parity_gaps(self, space: str) -> dict[str, dict[float, float]]:
        """``|mean accuracy(strategy) - mean accuracy(vanilla)|`` per target."""
        out: dict[str, dict[float, float]] = {}
        for c in self.cells_for("accuracy", space):
            if c.strategy == "vanilla":
                continue
            try:
                base = self.cell("accuracy", space, "vanilla", c.value).mean["accuracy"]
            except KeyError:
                continue
            if base is not None and c.mean["accuracy"] is not None:
                out.setdefault(c.strategy, {})[c.value] = abs(c.mean["accuracy"] - base)
        return out

    def violations(self) -> int:
        """Returned configs whose re-walked latency exceeds their target."""
        return sum(not p["within_target"] for r in self.records for p in r["per_target"])

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
            "records": list(self.records),
            "tests": list(self.tests),
            "notes": list(self.notes),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AggregateReport:
        return cls(
            config=data["config"],
            cells=tuple(Cell.from_dict(c) for c in data["cells"]),
            records=tuple(data["records"]),
            tests=tuple(data["tests"]),
            notes=tuple(data["notes"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> AggregateReport:
        return cls.from_dict(json.loads(text))


def build_report(config: dict[str, Any], records: Iterable[dict[str, Any]], notes: Sequence[str] = ()) -> AggregateReport:
    records = tuple(records)
    return AggregateReport(config, aggregate(records), records, sign_tests(records), tuple(notes))


def merge_reports(*reports: AggregateReport) -> AggregateReport:
    if not reports:
        raise ValueError("nothing to merge")
    records = [r for rep in reports for r in rep.records]
    notes = list(dict.fromkeys(n for rep in reports for n in rep.notes))
    return build_report(reports[0].config, records, notes)


def reverify(report: AggregateReport) -> int:
    """Count returned configs that miss their target, rebuilt from the records alone."""
    bad = 0
    for r in report.records:
        space, lat = _models(r["space"], r["latency_seed"])
        for p in r["per_target"]:
            arch = ArchitectureConfig.from_dict(p["config"], space)
            bad += walk_latency(lat, arch) > p["target_ms"]
    return bad


# -- emission -------------------------------------------------------------------


def _fmt(x: Any) -> str:
    if x is None:
        return ""
    return repr(x) if isinstance(x, float) else str(x)


LONG_HEADER = ["sweep", "space", "strategy", "axis", "value", "runs", "failed"] + [
    f"{m}_{s}" for m in STABLE_METRICS for s in ("mean", "std")
]


def long_csv(report: AggregateReport) -> str:
    """One row per cell; wall time is left out so the file is byte-stable."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LONG_HEADER)
    for c in report.cells:
        row = [c.sweep, c.space, c.strategy, c.axis, c.value, c.runs, c.failed]
        row += [x for m in STABLE_METRICS for x in (c.mean[m], c.std[m])]
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _wide_csv(report: AggregateReport, sweep: str, space: str, axis_label: str, metric: str, ratios: bool) -> str:
    header = [axis_label] + [f"{COLUMN_PREFIX[s]}_{x}" for s in STRATEGIES for x in ("mean", "std")]
    if ratios:
        header += [f"{COLUMN_PREFIX[s]}_ratio" for s in STRATEGIES[1:]]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    cells = report.cells_for(sweep, space)
    ratio = report.cost_ratios(space) if ratios else {}
    for value in sorted({c.value for c in cells}):
        row: list[Any] = [value]
        for s in STRATEGIES:
            c = next((c for c in cells if c.strategy == s and c.value == value), None)
            row += [c.mean[metric], c.std[metric]] if c else [None, None]
        if ratios:
            row += [ratio.get(int(value), {}).get(s) for s in STRATEGIES[1:]]
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def cost_table_csv(report: AggregateReport, space: str) -> str:
    """Mean evaluations per k and strategy, with the warm/vanilla ratio."""
    return _wide_csv(report, "k", space, "k", "evaluations", ratios=True)


def accuracy_table_csv(report: AggregateReport, space: str) -> str:
    """Mean best accuracy per latency target and strategy."""
    return _wide_csv(report, "accuracy", space, "latency_ms", "accuracy", ratios=False)


def profile_table_csv(report: AggregateReport, space: str) -> str:
    """Mean rejections per single target and strategy."""
    return _wide_csv(report, "profile", space, "latency_ms", "rejections", ratios=False)


def stable_record(rec: dict[str, Any]) -> dict[str, Any]:
    out = {k: v for k, v in rec.items() if k != "wall_time"}
    out["per_target"] = [{k: v for k, v in p.items() if k != "wall_time"} for p in rec["per_target"]]
    return out


def raw_jsonl(report: AggregateReport) -> str:
    return "".join(json.dumps(stable_record(r), sort_keys=True) + "\n" for r in report.records)


_PLOT_METRIC = {"k": ("evaluations", "k (number of targets)"), "accuracy": ("accuracy", "latency target (ms)"),
                "profile": ("rejections", "latency target (ms)")}
_COLORS = {"vanilla": "#4c72b0", "top-down": "#dd8452", "bottom-up": "#55a868"}


def plot_svg(report: AggregateReport, sweep: str) -> str:
    """Grouped bar chart of one sweep, one panel per space, as SVG text."""
    import matplotlib
    from matplotlib.figure import Figure

    metric, xlabel = _PLOT_METRIC[sweep]
    spaces = [s for s in report.spaces if report.cells_for(sweep, s)]
    with matplotlib.rc_context({"svg.hashsalt": "ofa-multitarget", "svg.fonttype": "path"}):
        fig = Figure(figsize=(7, 2.6 * max(1, len(spaces))))
        axes = fig.subplots(max(1, len(spaces)), 1, squeeze=False)[:, 0]
        for ax, space in zip(axes, spaces):
            cells = report.cells_for(sweep, space)
            values = sorted({c.value for c in cells})
            present = [s for s in STRATEGIES if any(c.strategy == s for c in cells)]
            width = 0.8 / max(1, len(present))
            for i, s in enumerate(present):
                xs, ys, es = [], [], []
                for j, v in enumerate(values):
                    c = next((c for c in cells if c.strategy == s and c.value == v), None)
                    if c is None or c.mean[metric] is None:
                        continue
                    xs.append(j + (i - (len(present) - 1) / 2) * width)
                    ys.append(c.mean[metric])
                    es.append(c.std[metric] or 0.0)
                ax.bar(xs, ys, width, yerr=es, color=_COLORS[s], label=s, capsize=2)
            ax.set_xticks(range(len(values)))
            ax.set_xticklabels([_fmt(v) for v in values])
            ax.set_title(space)
            ax.set_xlabel(xlabel)
            ax.set_ylabel(metric)
            if sweep == "accuracy" and cells:
                lo = min(c.mean[metric] for c in cells if c.mean[metric] is not None)
                ax.set_ylim(max(0.0, lo - 0.05), None)
            ax.legend(fontsize="small")
        fig.tight_layout()
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return buf.getvalue()


def emit_report(report: AggregateReport, output_dir: str | os.PathLike, formats: Sequence[str] = ALL_FORMATS) -> list[Path]:
    """Write report files; returns the paths written. Raises OSError on I/O failure."""
    unknown = set(formats) - set(ALL_FORMATS)
    if unknown:
        raise ConfigurationError(f"unknown report formats: {sorted(unknown)}")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    if "csv" in formats:
        files["report.csv"] = long_csv(report)
        for space in report.spaces:
            if report.cells_for("k", space):
                files[f"table_cost_{space}.csv"] = cost_table_csv(report, space)
            if report.cells_for("accuracy", space):
                files[f"table_accuracy_{space}.csv"] = accuracy_table_csv(report, space)
            if report.cells_for("profile", space):
                files[f"table_profile_{space}.csv"] = profile_table_csv(report, space)
    if "json" in formats:
        files["report.json"] = report.to_json()
    if "jsonl" in formats:
        files["raw_runs.jsonl"] = raw_jsonl(report)
    if "svg" in formats:
        for sweep in SWEEPS:
            if report.cells_for(sweep):
                files[f"plot_{sweep}.svg"] = plot_svg(report, sweep)
    paths = []
    for name, text in files.items():
        path = out / name
        path.write_text(text)
        paths.append(path)
    return paths
