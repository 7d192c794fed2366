from __future__ import annotations

import itertools
import json
import statistics

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ONE_POINT, one_point_model, walk
from ofa_multitarget import (
    AccuracyModel,
    ArchitectureConfig,
    ConstraintTooTightError,
    InfeasibleTargetError,
    SearchOutcome,
    SearchParams,
    WarmStart,
    WarmStartError,
    brute_force_best,
    evolutionary_search,
    get_space,
    make_rng,
    mutate_valid,
    sample_random,
    sample_valid,
)

TINY = get_space("tiny-fixture")


def strip_time(outcome: SearchOutcome) -> dict:
    d = outcome.to_dict()
    d.pop("wall_time")
    return d


# -- params ---------------------------------------------------------------------


def test_default_params():
    p = SearchParams()
    assert (p.population_size, p.parent_ratio, p.mutation_ratio, p.p_mut, p.max_reject) == (100, 0.25, 0.5, 0.1, 10_000)
    assert p.num_parents == 25
    assert p.evaluations_per_run() == 100 + 500 * 75


@pytest.mark.parametrize(
    "kw", [dict(population_size=1), dict(parent_ratio=0.0), dict(parent_ratio=1.5), dict(mutation_ratio=-0.1), dict(num_iterations=0)]
)
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        SearchParams(**kw)


def test_params_round_trip():
    p = SearchParams(16, 50, p_mut=0.2)
    assert SearchParams.from_dict(p.to_dict()) == p


# -- sample_valid / mutate_valid -------------------------------------------------


def test_sample_valid_nonbinding_target(tiny):
    _, lat = tiny
    rng = make_rng(0)
    assert all(sample_valid(TINY, lat, 8.0, rng)[1] == 0 for _ in range(500))


def test_sample_valid_at_floor_returns_minimal_config(tiny):
    _, lat = tiny
    rng = make_rng(1)
    for _ in range(50):
        arch, _ = sample_valid(TINY, lat, 4.0, rng)
        assert arch == TINY.minimal_config()


def test_sample_valid_rejection_mean_at_floor(tiny):
    _, lat = tiny
    # Oracle: enumerate every raw genome (inactive slots included) that
    # sample_random can draw with equal probability, count the feasible ones.
    raw = [ArchitectureConfig(TINY, list(g) + [0] * 5) for g in itertools.product(range(2), repeat=6)]
    p = sum(walk(lat, a) <= 4.0 for a in raw) / len(raw)
    expected = (1 - p) / p
    assert p == 1 / 16 and expected == 15.0
    rng = make_rng(2)
    counts = [sample_valid(TINY, lat, 4.0, rng)[1] for _ in range(10_000)]
    assert statistics.fmean(counts) == pytest.approx(expected, rel=0.10)


def test_sample_valid_rejections_fall_as_target_loosens(tiny):
    _, lat = tiny
    means = []
    for target in (4.0, 5.0, 6.0, 7.0, 8.0):
        rng = make_rng(3)
        means.append(statistics.fmean(sample_valid(TINY, lat, target, rng)[1] for _ in range(3000)))
    assert all(b <= a for a, b in zip(means, means[1:]))
    assert means[-1] == 0


def test_sample_valid_errors(tiny):
    _, lat = tiny
    with pytest.raises(InfeasibleTargetError):
        sample_valid(TINY, lat, 3.0, make_rng(0))
    with pytest.raises(ConstraintTooTightError):
        # Only 1 raw genome in 16 fits, so 200 draws with no rejections allowed fail almost surely.
        for _ in range(200):
            sample_valid(TINY, lat, 4.0, make_rng(0), max_reject=0)


def test_mutate_valid_identity(tiny):
    _, lat = tiny
    parent = TINY.config([2, 1], [5, 3, 3], [3, 3, 3], 128)
    assert mutate_valid(parent, TINY, lat, 8.0, 0.0, make_rng(0)) == (parent, 0)


def test_mutate_valid_deterministic(mobilenet):
    space, lat = mobilenet
    parent = space.maximal_config()
    a = mutate_valid(parent, space, lat, 45.0, 0.3, make_rng(7))
    b = mutate_valid(parent, space, lat, 45.0, 0.3, make_rng(7))
    assert a[0].genome.tolist() == b[0].genome.tolist() and a[1] == b[1]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63 - 1), st.floats(20.0, 60.0))
def test_prop_mutate_valid_meets_target(seed, target):
    space = get_space("mobilenetv3")
    from ofa_multitarget.estimators import default_latency_model

    lat = default_latency_model(space)
    rng = make_rng(seed)
    parent, _ = sample_valid(space, lat, target, rng)
    child, _ = mutate_valid(parent, space, lat, target, 0.2, rng)
    assert lat.latency(child) <= target


# -- evolutionary_search ----------------------------------------------------------


@pytest.mark.parametrize("n", [1, 7, 50])
def test_one_point_space_closed_form_budget(n):
    params = SearchParams(population_size=20, num_iterations=n)
    out = evolutionary_search(ONE_POINT, one_point_model(), AccuracyModel(), 10.0, params, rng=0)
    assert out.best.config == ONE_POINT.minimal_config()
    assert out.evaluations == 20 + n * (20 - 5) == params.evaluations_per_run()
    assert out.rejections == 0 and out.iterations_run == n


@pytest.mark.parametrize("seed", range(10))
def test_tiny_fixture_finds_oracle_at_8ms(tiny, seed):
    _, lat = tiny
    acc = AccuracyModel()
    oracle = brute_force_best(TINY, lat, acc, 8.0)
    out = evolutionary_search(TINY, lat, acc, 8.0, SearchParams(16, 50), rng=seed)
    assert out.best.config == oracle.best_config
    assert out.best.accuracy == oracle.best_accuracy


def test_warm_start_with_optimum_is_kept(tiny):
    _, lat = tiny
    acc = AccuracyModel()
    oracle = brute_force_best(TINY, lat, acc, 6.0)
    params = SearchParams(8, 1, mutation_ratio=1.0)
    out = evolutionary_search(TINY, lat, acc, 6.0, params, WarmStart((oracle.best_config,)), rng=0, record_log=True)
    assert out.log[0]["best_accuracy"] == oracle.best_accuracy
    assert out.best.config == oracle.best_config
    cold = evolutionary_search(TINY, lat, acc, 6.0, params, rng=0)
    assert out.best.accuracy >= cold.best.accuracy


def test_elitism_and_log(mobilenet):
    space, lat = mobilenet
    out = evolutionary_search(space, lat, AccuracyModel(), 30.0, SearchParams(num_iterations=40), rng=5, record_log=True)
    best = [e["best_accuracy"] for e in out.log]
    assert len(out.log) == 41
    assert all(b >= a for a, b in zip(best, best[1:]))
    assert best[-1] == out.best.accuracy
    evals = [e["evaluations"] for e in out.log]
    assert evals == [100 + i * 75 for i in range(41)]


def test_result_is_feasible_and_accuracy_exact(mobilenet):
    space, lat = mobilenet
    acc = AccuracyModel()
    for target in (15.0, 37.5, 60.0):
        out = evolutionary_search(space, lat, acc, target, SearchParams(num_iterations=20), rng=1)
        assert walk(lat, out.best.config) <= target
        assert out.best.latency == lat.latency(out.best.config)
        assert out.best.accuracy == acc.predict(out.best.config)


def test_search_is_deterministic(mobilenet):
    space, lat = mobilenet
    runs = [strip_time(evolutionary_search(space, lat, AccuracyModel(), 25.0, SearchParams(num_iterations=30), rng=11)) for _ in range(2)]
    assert runs[0] == runs[1]


def test_generator_and_int_seed_agree(mobilenet):
    space, lat = mobilenet
    a = evolutionary_search(space, lat, AccuracyModel(), 25.0, SearchParams(num_iterations=5), rng=3)
    b = evolutionary_search(space, lat, AccuracyModel(), 25.0, SearchParams(num_iterations=5), rng=make_rng(3))
    assert a.best.config == b.best.config and a.evaluations == b.evaluations and b.seed is None


def test_tight_target_costs_more_rejections(mobilenet):
    space, lat = mobilenet
    tight = evolutionary_search(space, lat, AccuracyModel(), 15.0, SearchParams(num_iterations=20), rng=0)
    loose = evolutionary_search(space, lat, AccuracyModel(), 60.0, SearchParams(num_iterations=20), rng=0)
    assert tight.rejections > loose.rejections == 0


def test_search_errors(tiny):
    _, lat = tiny
    acc = AccuracyModel()
    with pytest.raises(InfeasibleTargetError):
        evolutionary_search(TINY, lat, acc, 3.0)
    with pytest.raises(WarmStartError):
        evolutionary_search(TINY, lat, acc, 5.0, SearchParams(8, 2), WarmStart((TINY.maximal_config(),)))
    with pytest.raises(WarmStartError):
        other = get_space("mobilenetv3").minimal_config()
        evolutionary_search(TINY, lat, acc, 5.0, SearchParams(8, 2), WarmStart((other,)))
    with pytest.raises(ConstraintTooTightError):
        evolutionary_search(TINY, lat, acc, 4.0, SearchParams(16, 2, max_reject=0), rng=0)


def test_extra_warm_seeds_are_truncated(tiny):
    _, lat = tiny
    seeds = tuple(sample_valid(TINY, lat, 8.0, make_rng(i))[0] for i in range(12))
    out = evolutionary_search(TINY, lat, AccuracyModel(), 8.0, SearchParams(4, 3), WarmStart(seeds), rng=0)
    assert out.evaluations == 4 + 3 * 3


def test_outcome_round_trip_and_log_file(tiny, tmp_path):
    _, lat = tiny
    out = evolutionary_search(TINY, lat, AccuracyModel(), 6.0, SearchParams(8, 4), rng=2, record_log=True)
    back = SearchOutcome.from_dict(json.loads(json.dumps(out.to_dict())), TINY)
    assert back.to_dict() == out.to_dict()
    path = tmp_path / "log.jsonl"
    out.write_log(str(path))
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert [r["iteration"] for r in lines] == list(range(5))
    assert set(lines[0]) == {"iteration", "best_accuracy", "evaluations", "rejections"}


def test_population_never_exceeds_target(mobilenet, monkeypatch):
    # Every admitted batch goes through predict_batch; check each one against the target.
    space, lat = mobilenet
    acc = AccuracyModel()
    seen = []
    original = AccuracyModel.predict_batch

    def spy(self, sp, genomes):
        seen.append(lat.latency_batch(sp, genomes).max())
        return original(self, sp, genomes)

    monkeypatch.setattr(AccuracyModel, "predict_batch", spy)
    evolutionary_search(space, lat, acc, 20.0, SearchParams(num_iterations=15), rng=4)
    assert len(seen) == 16 and max(seen) <= 20.0


def test_random_configs_pass_through_constructor(mobilenet):
    space, _ = mobilenet
    g = sample_random(space, make_rng(0)).genome
    assert np.array_equal(ArchitectureConfig(space, g).genome, g)
