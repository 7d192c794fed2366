from __future__ import annotations

import itertools

import pytest

from ofa_multitarget import DesignSpaceSpec, LatencyModel, get_space
from ofa_multitarget.estimators import default_latency_model

ONE_POINT = DesignSpaceSpec("one-point", 1, (1,), (3,), (3,), (128,))


def one_point_model() -> LatencyModel:
    return LatencyModel(2.0, {(0, 0, 3, 3, 128): 1.0})


def walk(lat: LatencyModel, arch) -> float:
    """Latency recomputed slot by slot from the value-level fields."""
    space = arch.space
    total = lat.overhead_ms
    for u, d in enumerate(arch.depths):
        for j in range(d):
            i = u * space.max_depth + j
            total += lat.block_table[(u, j, arch.kernels[i], arch.expands[i], arch.resolution)]
    return total


def tiny_configs_by_value():
    """Distinct tiny-fixture configs as (depths, active kernels) pairs, by hand."""
    out = []
    for d0, d1 in itertools.product((1, 2), repeat=2):
        for k0 in itertools.product((3, 5), repeat=d0):
            for k1 in itertools.product((3, 5), repeat=d1):
                out.append(((d0, d1), k0, k1))
    return out


@pytest.fixture(scope="session")
def tiny():
    space = get_space("tiny-fixture")
    return space, default_latency_model(space)


@pytest.fixture(scope="session")
def mobilenet():
    space = get_space("mobilenetv3")
    return space, default_latency_model(space)
