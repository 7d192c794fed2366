"""Latency lookup table, surrogate accuracy predictor, and exhaustive oracle."""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np

from .design_space import (
    DEFAULT_ENUMERATION_CAP,
    ArchitectureConfig,
    DesignSpaceSpec,
    enumerate_genomes,
    make_rng,
)
from .errors import ConfigurationError, IncompleteTableError, InfeasibleTargetError

Descriptor = tuple  # (unit, slot, kernel, expand, resolution)


@dataclass(frozen=True)
class LatencyModel:
    """Additive per-block latency lookup table.

    ``block_table`` maps ``(unit, slot, kernel, expand, resolution)`` to
    milliseconds. A config's latency is ``overhead_ms`` plus the entries of
    its active slots.
    """

    overhead_ms: float
    block_table: Mapping[Descriptor, float]
    _dense: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        table = {tuple(k): float(v) for k, v in self.block_table.items()}
        if any(v < 0 for v in table.values()) or self.overhead_ms < 0:
            raise ConfigurationError("latency entries must be non-negative")
        object.__setattr__(self, "block_table", table)
        object.__setattr__(self, "overhead_ms", float(self.overhead_ms))

    def __hash__(self) -> int:
        return hash((self.overhead_ms, tuple(sorted(self.block_table.items()))))

    def _flat(self, space: DesignSpaceSpec) -> tuple[np.ndarray, np.ndarray]:
        """Dense table flattened to 1-D plus each slot's base offset."""
        cached = self._dense.get(space)
        if cached is not None:
            return cached
        U, D = space.num_units, space.max_depth
        K, E, R = len(space.kernel_choices), len(space.expand_choices), len(space.resolution_choices)
        dense = np.full((U, D, K, E, R), np.nan)
        for u in range(U):
            for s in range(D):
                for ki, k in enumerate(space.kernel_choices):
                    for ei, e in enumerate(space.expand_choices):
                        for ri, r in enumerate(space.resolution_choices):
                            v = self.block_table.get((u, s, k, e, r))
                            if v is not None:
                                dense[u, s, ki, ei, ri] = v
        base = np.arange(U * D, dtype=np.int64) * (K * E * R)
        cached = (dense.reshape(-1), base)
        self._dense[space] = cached
        return cached

    def block_latencies(self, space: DesignSpaceSpec, genomes: np.ndarray) -> np.ndarray:
        """``(B, S)`` per-slot milliseconds, zero for inactive slots."""
        flat, base = self._flat(space)
        U, S = space.num_units, space.num_slots
        E, R = len(space.expand_choices), len(space.resolution_choices)
        k = genomes[:, U : U + S]
        e = genomes[:, U + S : U + 2 * S]
        r = genomes[:, -1:]
        vals = flat[base[None, :] + k * (E * R) + e * R + r]
        active = space.active_slots(genomes)
        missing = np.isnan(vals) & active
        if missing.any():
            row, col = np.argwhere(missing)[0]
            raise IncompleteTableError(_descriptor(space, genomes[row], col))
        return np.where(active, vals, 0.0)

    def latency_batch(self, space: DesignSpaceSpec, genomes: np.ndarray) -> np.ndarray:
        """Latency of every row; summed left to right, slot by slot."""
        blocks = self.block_latencies(space, genomes)
        acc = np.empty((blocks.shape[0], blocks.shape[1] + 1))
        acc[:, 0] = self.overhead_ms
        acc[:, 1:] = blocks
        return np.cumsum(acc, axis=1)[:, -1]

    def latency(self, arch: ArchitectureConfig) -> float:
        return float(self.latency_batch(arch.space, arch.genome[None])[0])

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        entries = [
            {"unit": k[0], "slot": k[1], "kernel": k[2], "expand": k[3], "resolution": k[4], "ms": v}
            for k, v in sorted(self.block_table.items())
        ]
        return {"overhead_ms": self.overhead_ms, "entries": entries}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> LatencyModel:
        try:
            table = {
                (e["unit"], e["slot"], e["kernel"], e["expand"], e["resolution"]): e["ms"]
                for e in data["entries"]
            }
            return cls(data["overhead_ms"], table)
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed latency model: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> LatencyModel:
        return cls.from_dict(json.loads(text))


def _descriptor(space: DesignSpaceSpec, genome: np.ndarray, slot: int) -> Descriptor:
    U, S, D = space.num_units, space.num_slots, space.max_depth
    return (
        slot // D,
        slot % D,
        space.kernel_choices[genome[U + slot]],
        space.expand_choices[genome[U + S + slot]],
        space.resolution_choices[genome[-1]],
    )


def latency(lat: LatencyModel, arch: ArchitectureConfig) -> float:
    return lat.latency(arch)


def synthesize_latency_table(
    space: DesignSpaceSpec, seed: int, scale_ms: float, overhead_ms: float = 2.0
) -> LatencyModel:
    """FLOP-proxy table: ``scale * e * k^2 * (r/224)^2 * u(unit, slot)``.

    ``u`` is a per-slot jitter in [0.8, 1.2] drawn from ``seed``; it does
    not depend on kernel, expand, or resolution, so the table is monotone
    in all three.
    """
    if scale_ms <= 0:
        raise ConfigurationError("scale_ms must be positive")
    jitter = make_rng(seed).uniform(0.8, 1.2, size=(space.num_units, space.max_depth))
    table = {}
    for u in range(space.num_units):
        for s in range(space.max_depth):
            for k in space.kernel_choices:
                for e in space.expand_choices:
                    for r in space.resolution_choices:
                        table[(u, s, k, e, r)] = scale_ms * e * k * k * (r / 224) ** 2 * jitter[u, s]
    return LatencyModel(overhead_ms, table)


def calibrated_latency_model(
    space: DesignSpaceSpec, seed: int, max_latency_ms: float = 60.0, overhead_ms: float = 2.0
) -> LatencyModel:
    """Synthesized table scaled so the maximal config costs ``max_latency_ms``.

    Rounding can push the maximal config an ulp past the cap, so the scale is
    nudged down until it does not: a target equal to the cap never binds.
    """
    if max_latency_ms <= overhead_ms:
        raise ConfigurationError("max_latency_ms must exceed overhead_ms")
    unit = synthesize_latency_table(space, seed, 1.0, overhead_ms)
    top = space.maximal_config()
    scale = (max_latency_ms - overhead_ms) / (unit.latency(top) - overhead_ms)
    while True:
        model = synthesize_latency_table(space, seed, scale, overhead_ms)
        if model.latency(top) <= max_latency_ms:
            return model
        scale = float(np.nextafter(scale, 0.0))


def tiny_fixture_latency_model(space: DesignSpaceSpec) -> LatencyModel:
    """Hand-written table for the tiny fixture: 1.0 ms for k=3, 1.5 ms for k=5."""
    table = {
        (u, s, k, e, r): {3: 1.0, 5: 1.5}[k]
        for u in range(space.num_units)
        for s in range(space.max_depth)
        for k in space.kernel_choices
        for e in space.expand_choices
        for r in space.resolution_choices
    }
    return LatencyModel(2.0, table)


def default_latency_model(space: DesignSpaceSpec, seed: int = 1) -> LatencyModel:
    if space.name == "tiny-fixture":
        return tiny_fixture_latency_model(space)
    return calibrated_latency_model(space, seed)


# -- accuracy surrogate -----------------------------------------------------

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


@lru_cache(maxsize=64)
def _hash_weights(seed: int, n_genes: int) -> np.ndarray:
    w = make_rng(seed).integers(0, 2**64, size=n_genes, dtype=np.uint64, endpoint=False)
    return w | np.uint64(1)


def _splitmix(z: np.ndarray) -> np.ndarray:
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@dataclass(frozen=True)
class AccuracyModel:
    """Deterministic surrogate for a trained accuracy predictor.

    ``base + amplitude * (1 - exp(-saturation_rate * capacity))`` plus a
    small hash-derived interaction term in ``[-interaction_weight,
    interaction_weight]``, clamped to [0, 1]. ``capacity`` is the mean
    normalized choice index over the canonical genome.
    """

    base: float = 0.60
    amplitude: float = 0.25
    saturation_rate: float = 2.0
    interaction_weight: float = 0.02
    seed: int = 0

    def capacity(self, space: DesignSpaceSpec, canon: np.ndarray) -> np.ndarray:
        span = space.gene_counts - 1
        norm = np.where(span > 0, canon / np.maximum(span, 1), 1.0)
        return np.cumsum(norm, axis=1)[:, -1] / space.num_genes

    def interaction(self, space: DesignSpaceSpec, canon: np.ndarray) -> np.ndarray:
        w = _hash_weights(int(self.seed), space.num_genes)
        with np.errstate(over="ignore"):
            mixed = (canon.astype(np.uint64) * w[None, :]).sum(axis=1, dtype=np.uint64)
            z = _splitmix(mixed ^ np.uint64(int(self.seed) & 0xFFFFFFFFFFFFFFFF))
        return (z >> np.uint64(11)).astype(np.float64) * (2.0 / 2**53) - 1.0

    def predict_batch(self, space: DesignSpaceSpec, genomes: np.ndarray) -> np.ndarray:
        canon = space.canonicalize(genomes)
        u = self.capacity(space, canon)
        raw = self.base + self.amplitude * (1.0 - np.exp(-self.saturation_rate * u))
        if self.interaction_weight:
            raw = raw + self.interaction_weight * self.interaction(space, canon)
        return np.clip(raw, 0.0, 1.0)

    def predict(self, arch: ArchitectureConfig) -> float:
        return float(self.predict_batch(arch.space, arch.genome[None])[0])

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AccuracyModel:
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigurationError(f"malformed accuracy model: {exc}") from exc


def predict_accuracy(acc: AccuracyModel, arch: ArchitectureConfig) -> float:
    return acc.predict(arch)


# -- oracle -----------------------------------------------------------------


@dataclass(frozen=True)
class OracleResult:
    best_config: ArchitectureConfig
    best_accuracy: float
    best_latency: float
    feasible_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "best_config": self.best_config.to_dict(),
            "best_accuracy": self.best_accuracy,
            "best_latency": self.best_latency,
            "feasible_count": self.feasible_count,
        }


def lexicographic_rank(canon: np.ndarray) -> np.ndarray:
    """Dense rank of each row in lexicographic order; equal rows share a rank."""
    b = np.ascontiguousarray(canon, dtype=np.uint8)  # choice indices are < 256
    rows = b.view(np.dtype((np.void, b.shape[1]))).reshape(-1)
    return np.unique(rows, return_inverse=True)[1].reshape(-1)


def rank_order(canon: np.ndarray, accuracy: np.ndarray, lat: np.ndarray) -> np.ndarray:
    """Indices sorted by accuracy desc, then latency asc, then canonical genome."""
    return np.lexsort((lexicographic_rank(canon), lat, -accuracy))


def brute_force_best(
    space: DesignSpaceSpec,
    lat: LatencyModel,
    acc: AccuracyModel,
    target: float,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> OracleResult:
    """Exhaustively pick the most accurate config with latency <= target."""
    genomes = enumerate_genomes(space, cap)
    ms = lat.latency_batch(space, genomes)
    feasible = np.flatnonzero(ms <= target)
    if feasible.size == 0:
        raise InfeasibleTargetError(target, float(ms.min()))
    g = genomes[feasible]
    a = acc.predict_batch(space, g)
    best = rank_order(space.canonicalize(g), a, ms[feasible])[0]
    return OracleResult(
        ArchitectureConfig(space, g[best]), float(a[best]), float(ms[feasible][best]), int(feasible.size)
    )
