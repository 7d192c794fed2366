"""Design spaces, the fixed-length genome, and genome transformations.

A config is stored as a vector of choice *indices* laid out as::

    [unit depths (U) | slot kernels (U*D) | slot expands (U*D) | resolution]

where ``D = max(depth_choices)``. Slot ``j`` of unit ``u`` is active iff
``j < depths[u]``. Inactive slots keep a valid index but are zeroed in the
canonical form used for equality, hashing, and the accuracy surrogate.

Every operator has a batched form working on ``(B, G)`` index arrays; the
scalar functions are thin wrappers over a batch of one, so both paths draw
from the generator identically.
"""

from __future__ import annotations

import itertools
import json
from collections.abc import Iterator, Sequence
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Any

import numpy as np

from .errors import (
    ConfigurationError,
    IncompatibleParentsError,
    InfeasibleTargetError,
    InvalidConfigError,
    SpaceTooLargeError,
)

Rng = np.random.Generator

DEFAULT_ENUMERATION_CAP = 10**6
DEFAULT_P_SHRINK = 0.5
DEFAULT_MAX_PRUNE_ROUNDS = 32


def make_rng(seed: int) -> Rng:
    """PCG64 generator; the stream for a given seed is platform independent."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def _check_choices(name: str, values: Sequence[Any]) -> tuple:
    values = tuple(values)
    if not values:
        raise ConfigurationError(f"{name} must be non-empty")
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ConfigurationError(f"{name} must be strictly increasing: {values}")
    return values


@dataclass(frozen=True)
class DesignSpaceSpec:
    """A searchable architecture family."""

    name: str
    num_units: int
    depth_choices: tuple[int, ...]
    kernel_choices: tuple[int, ...]
    expand_choices: tuple[float, ...]
    resolution_choices: tuple[int, ...]

    def __post_init__(self) -> None:
        if int(self.num_units) < 1:
            raise ConfigurationError("num_units must be >= 1")
        object.__setattr__(self, "num_units", int(self.num_units))
        for field in ("depth_choices", "kernel_choices", "expand_choices", "resolution_choices"):
            object.__setattr__(self, field, _check_choices(field, getattr(self, field)))
        if min(self.depth_choices) < 0:
            raise ConfigurationError("depth_choices must be non-negative")

    # -- genome layout -------------------------------------------------

    @property
    def max_depth(self) -> int:
        return max(self.depth_choices)

    @property
    def num_slots(self) -> int:
        return self.num_units * self.max_depth

    @property
    def num_genes(self) -> int:
        return self.num_units + 2 * self.num_slots + 1

    @cached_property
    def gene_counts(self) -> np.ndarray:
        """Number of choices for every gene position."""
        U, S = self.num_units, self.num_slots
        counts = np.empty(self.num_genes, dtype=np.int64)
        counts[:U] = len(self.depth_choices)
        counts[U : U + S] = len(self.kernel_choices)
        counts[U + S : U + 2 * S] = len(self.expand_choices)
        counts[-1] = len(self.resolution_choices)
        return counts

    @cached_property
    def _depth_values(self) -> np.ndarray:
        return np.asarray(self.depth_choices, dtype=np.int64)

    @cached_property
    def _slot_position(self) -> np.ndarray:
        return np.tile(np.arange(self.max_depth), self.num_units)

    def active_slots(self, genomes: np.ndarray) -> np.ndarray:
        """Boolean ``(B, S)`` mask of active layer slots."""
        depths = self._depth_values[genomes[:, : self.num_units]]
        return self._slot_position[None, :] < np.repeat(depths, self.max_depth, axis=1)

    def active_genes(self, genomes: np.ndarray) -> np.ndarray:
        """Boolean ``(B, G)`` mask; depth and resolution genes are always active."""
        slots = self.active_slots(genomes)
        ones = np.ones((genomes.shape[0], self.num_units), dtype=bool)
        return np.concatenate([ones, slots, slots, ones[:, :1]], axis=1)

    def canonicalize(self, genomes: np.ndarray) -> np.ndarray:
        """Zero the indices of inactive slots."""
        return np.where(self.active_genes(genomes), genomes, 0)

    # -- convenience configs -------------------------------------------

    def minimal_config(self) -> ArchitectureConfig:
        return ArchitectureConfig(self, np.zeros(self.num_genes, dtype=np.int64))

    def maximal_config(self) -> ArchitectureConfig:
        return ArchitectureConfig(self, self.gene_counts - 1)

    def config(
        self,
        depths: Sequence[int],
        kernels: Sequence[int],
        expands: Sequence[float],
        resolution: int,
    ) -> ArchitectureConfig:
        """Build a config from choice *values* (not indices).

        ``kernels`` and ``expands`` may be given per slot (length
        ``num_units * max_depth``) or only for active slots, unit by unit;
        in the latter form inactive slots are filled with the list minimum.
        """
        if len(depths) != self.num_units:
            raise InvalidConfigError(f"expected {self.num_units} depths, got {len(depths)}")
        d_idx = [_index_of("depth", self.depth_choices, d) for d in depths]
        kernels, expands = list(kernels), list(expands)
        if len(kernels) != self.num_slots or len(expands) != self.num_slots:
            n_active = sum(depths)
            if len(kernels) != n_active or len(expands) != n_active:
                raise InvalidConfigError(
                    f"kernels/expands must have {self.num_slots} slots or {n_active} active entries"
                )
            kernels, expands = self._pad_active(depths, kernels), self._pad_active(depths, expands, True)
        genome = np.array(
            d_idx
            + [_index_of("kernel", self.kernel_choices, k) for k in kernels]
            + [_index_of("expand", self.expand_choices, e) for e in expands]
            + [_index_of("resolution", self.resolution_choices, resolution)],
            dtype=np.int64,
        )
        return ArchitectureConfig(self, genome)

    def _pad_active(self, depths: Sequence[int], values: list, expand: bool = False) -> list:
        fill = self.expand_choices[0] if expand else self.kernel_choices[0]
        out, it = [], iter(values)
        for d in depths:
            out.extend(next(it) if j < d else fill for j in range(self.max_depth))
        return out

    # -- size / serialization -------------------------------------------

    def total_configs(self) -> int:
        """Number of distinct canonical configs."""
        per_slot = len(self.kernel_choices) * len(self.expand_choices)
        per_unit = sum(per_slot**d for d in self.depth_choices)
        return per_unit**self.num_units * len(self.resolution_choices)

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> DesignSpaceSpec:
        try:
            return cls(
                name=str(data["name"]),
                num_units=data["num_units"],
                depth_choices=data["depth_choices"],
                kernel_choices=data["kernel_choices"],
                expand_choices=data["expand_choices"],
                resolution_choices=data["resolution_choices"],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"malformed design space: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> DesignSpaceSpec:
        return cls.from_dict(json.loads(text))


def _index_of(what: str, choices: tuple, value: Any) -> int:
    for i, c in enumerate(choices):
        if c == value:
            return i
    raise InvalidConfigError(f"{what} {value!r} not in {choices}")


class ArchitectureConfig:
    """One subnetwork: a validated, immutable genome bound to its space."""

    __slots__ = ("space", "genome", "_canonical")

    def __init__(self, space: DesignSpaceSpec, genome: Sequence[int] | np.ndarray) -> None:
        g = np.array(genome, dtype=np.int64).reshape(-1)
        if g.shape[0] != space.num_genes:
            raise InvalidConfigError(f"genome length {g.shape[0]} != {space.num_genes}")
        if (g < 0).any() or (g >= space.gene_counts).any():
            raise InvalidConfigError("genome index out of range")
        g.flags.writeable = False
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "genome", g)
        object.__setattr__(self, "_canonical", tuple(int(x) for x in space.canonicalize(g[None])[0]))

    def __setattr__(self, name: str, value: Any) -> None:
        raise AttributeError("ArchitectureConfig is immutable")

    @property
    def canonical(self) -> tuple[int, ...]:
        """Index tuple with inactive slots zeroed; the identity of the config."""
        return self._canonical

    @property
    def depths(self) -> tuple[int, ...]:
        U = self.space.num_units
        return tuple(self.space.depth_choices[i] for i in self.genome[:U])

    @property
    def kernels(self) -> tuple[int, ...]:
        U, S = self.space.num_units, self.space.num_slots
        return tuple(self.space.kernel_choices[i] for i in self.genome[U : U + S])

    @property
    def expands(self) -> tuple[float, ...]:
        U, S = self.space.num_units, self.space.num_slots
        return tuple(self.space.expand_choices[i] for i in self.genome[U + S : U + 2 * S])

    @property
    def resolution(self) -> int:
        return self.space.resolution_choices[self.genome[-1]]

    def active_blocks(self) -> Iterator[tuple[int, int, int, float]]:
        """Yield ``(unit, slot, kernel, expand)`` for every active slot, in order."""
        D = self.space.max_depth
        kernels, expands = self.kernels, self.expands
        for u, d in enumerate(self.depths):
            for j in range(d):
                yield u, j, kernels[u * D + j], expands[u * D + j]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ArchitectureConfig):
            return NotImplemented
        return self.space == other.space and self._canonical == other._canonical

    def __hash__(self) -> int:
        return hash((self.space, self._canonical))

    def __repr__(self) -> str:
        return (
            f"ArchitectureConfig({self.space.name!r}, depths={list(self.depths)}, "
            f"resolution={self.resolution})"
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "space": self.space.name,
            "depths": list(self.depths),
            "kernels": list(self.kernels),
            "expands": list(self.expands),
            "resolution": self.resolution,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], space: DesignSpaceSpec) -> ArchitectureConfig:
        return space.config(data["depths"], data["kernels"], data["expands"], data["resolution"])


# -- batched operators ---------------------------------------------------


def stack(configs: Sequence[ArchitectureConfig]) -> np.ndarray:
    return np.stack([c.genome for c in configs]).astype(np.int64)


def sample_batch(space: DesignSpaceSpec, rng: Rng, n: int) -> np.ndarray:
    """``n`` genomes, every gene uniform over its choice list."""
    return rng.integers(0, space.gene_counts, size=(n, space.num_genes))


def mutate_batch(space: DesignSpaceSpec, genomes: np.ndarray, p_mut: float, rng: Rng) -> np.ndarray:
    # Both draws happen regardless of p_mut so the stream layout is fixed.
    hit = rng.random(genomes.shape) < p_mut
    fresh = rng.integers(0, space.gene_counts, size=genomes.shape)
    hit &= space.active_genes(genomes)
    return np.where(hit, fresh, genomes)


def crossover_batch(a: np.ndarray, b: np.ndarray, rng: Rng) -> np.ndarray:
    return np.where(rng.random(a.shape) < 0.5, a, b)


def prune_batch(
    space: DesignSpaceSpec, genomes: np.ndarray, rng: Rng, p_shrink: float = DEFAULT_P_SHRINK
) -> np.ndarray:
    """Move genes one index down with probability ``p_shrink`` each.

    At least one eligible gene moves, so a row is unchanged only when it
    is already canonical-minimal.
    """
    eligible = space.active_genes(genomes) & (genomes > 0)
    hit = (rng.random(genomes.shape) < p_shrink) & eligible
    tiebreak = rng.random(genomes.shape)
    forced = eligible.any(axis=1) & ~hit.any(axis=1)
    if forced.any():
        pick = np.argmax(np.where(eligible, tiebreak, -1.0), axis=1)
        rows = np.flatnonzero(forced)
        hit[rows, pick[rows]] = True
    return genomes - hit


# -- scalar operators -----------------------------------------------------


def sample_random(space: DesignSpaceSpec, rng: Rng) -> ArchitectureConfig:
    return ArchitectureConfig(space, sample_batch(space, rng, 1)[0])


def mutate(arch: ArchitectureConfig, p_mut: float, rng: Rng) -> ArchitectureConfig:
    """Resample each active gene with probability ``p_mut``."""
    if not 0.0 <= p_mut <= 1.0:
        raise ValueError(f"p_mut must be in [0, 1], got {p_mut}")
    return ArchitectureConfig(arch.space, mutate_batch(arch.space, arch.genome[None], p_mut, rng)[0])


def crossover(a: ArchitectureConfig, b: ArchitectureConfig, rng: Rng) -> ArchitectureConfig:
    """Uniform crossover; each gene from ``a`` or ``b`` with probability 1/2."""
    if a.space != b.space:
        raise IncompatibleParentsError(f"parents from {a.space.name!r} and {b.space.name!r}")
    return ArchitectureConfig(a.space, crossover_batch(a.genome[None], b.genome[None], rng)[0])


def prune_random(
    arch: ArchitectureConfig, rng: Rng, p_shrink: float = DEFAULT_P_SHRINK
) -> ArchitectureConfig:
    return ArchitectureConfig(arch.space, prune_batch(arch.space, arch.genome[None], rng, p_shrink)[0])


def prune_to_latency(
    arch: ArchitectureConfig,
    target: float,
    lat: Any,
    rng: Rng,
    max_rounds: int = DEFAULT_MAX_PRUNE_ROUNDS,
    p_shrink: float = DEFAULT_P_SHRINK,
) -> ArchitectureConfig:
    """Prune repeatedly until ``lat.latency(result) <= target``.

    The first round always runs. Falls back to the space's minimal config
    when ``max_rounds`` rounds are not enough.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    floor = arch.space.minimal_config()
    floor_ms = lat.latency(floor)
    if target < floor_ms:
        raise InfeasibleTargetError(target, floor_ms)
    current = arch
    for _ in range(max_rounds):
        current = prune_random(current, rng, p_shrink)
        if lat.latency(current) <= target:
            return current
    return floor


def enumerate_genomes(space: DesignSpaceSpec, cap: int = DEFAULT_ENUMERATION_CAP) -> np.ndarray:
    """All canonical genomes as a ``(N, G)`` array, in a fixed order."""
    total = space.total_configs()
    if total > cap:
        raise SpaceTooLargeError(f"space {space.name!r} has {total} configs (cap {cap})")
    D = space.max_depth
    n_k, n_e = len(space.kernel_choices), len(space.expand_choices)
    unit_options = []
    for d_idx, d in enumerate(space.depth_choices):
        for ks in itertools.product(range(n_k), repeat=d):
            for es in itertools.product(range(n_e), repeat=d):
                pad = (0,) * (D - d)
                unit_options.append((d_idx, ks + pad, es + pad))
    rows = []
    for units in itertools.product(unit_options, repeat=space.num_units):
        depth = [u[0] for u in units]
        kern = [k for u in units for k in u[1]]
        exp = [e for u in units for e in u[2]]
        for r in range(len(space.resolution_choices)):
            rows.append(depth + kern + exp + [r])
    return np.array(rows, dtype=np.int64).reshape(-1, space.num_genes)


def enumerate_all(
    space: DesignSpaceSpec, cap: int = DEFAULT_ENUMERATION_CAP
) -> list[ArchitectureConfig]:
    """Every distinct config exactly once (inactive slots at list minimum)."""
    return [ArchitectureConfig(space, g) for g in enumerate_genomes(space, cap)]


# -- presets ---------------------------------------------------------------

_RES = (128, 160, 192, 224)

PRESETS: dict[str, DesignSpaceSpec] = {
    "mobilenetv3": DesignSpaceSpec("mobilenetv3", 5, (2, 3, 4), (3, 5, 7), (3, 4, 6), _RES),
    "proxylessnas": DesignSpaceSpec("proxylessnas", 6, (2, 3, 4), (3, 5, 7), (3, 4, 6), _RES),
    # Depths are extra-block counts and expands are width ratios.
    "resnet50d": DesignSpaceSpec("resnet50d", 4, (0, 1, 2), (3,), (0.2, 0.25, 0.35), _RES),
    "tiny-fixture": DesignSpaceSpec("tiny-fixture", 2, (1, 2), (3, 5), (3,), (128,)),
}

OFA_SPACES = ("mobilenetv3", "resnet50d", "proxylessnas")


def get_space(name: str) -> DesignSpaceSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigurationError(f"unknown design space {name!r}; choose from {sorted(PRESETS)}") from None

