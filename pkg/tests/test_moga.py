from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from disassembly_planner.exceptions import NoFeasibleStart
from disassembly_planner.moga import (
    GaConfig,
    Problem,
    dominance_matrix,
    evolve,
    flip_mutation,
    knee_point,
    niching_select,
    non_dominated_sort,
    order_crossover,
    reference_points,
    swap_mutation,
    uniform_crossover,
    write_trace_csv,
)

from helpers import brute_fronts


def test_small_sort_examples():
    # (1, 2) dominates (2, 2), so they cannot share a front
    assert non_dominated_sort([(1, 1), (1, 2), (2, 2)]) == [[0], [1], [2]]
    assert non_dominated_sort([(1, 1), (1, 2), (2, 1)]) == [[0], [1, 2]]
    assert non_dominated_sort([(0, 1), (1, 0)]) == [[0, 1]]
    assert non_dominated_sort(np.zeros((0, 2))) == []


def test_duplicates_share_a_front():
    assert non_dominated_sort([(1, 1), (1, 1), (2, 2)]) == [[0, 1], [2]]


objective_sets = st.integers(1, 4).flatmap(
    lambda m: arrays(np.float64, st.tuples(st.integers(1, 30), st.just(m)),
                     elements=st.sampled_from([0.0, 0.25, 0.5, 0.75, 1.0]))
)


@settings(max_examples=200, deadline=None)
@given(objective_sets)
def test_sort_matches_brute_force(F):
    assert non_dominated_sort(F) == brute_fronts(F)


@given(objective_sets)
def test_fronts_partition_and_truncation(F):
    fronts = non_dominated_sort(F)
    assert sorted(i for f in fronts for i in f) == list(range(len(F)))
    cut = non_dominated_sort(F, max_count=1)
    assert cut == fronts[: len(cut)] and len(cut) >= 1


def test_batched_dominance_matches_single():
    rng = np.random.default_rng(0)
    F = rng.random((3, 12, 3))
    D = dominance_matrix(F)
    for b in range(3):
        assert (D[b] == dominance_matrix(F[b])).all()


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("p", range(1, 7))
def test_reference_count(m, p):
    refs = reference_points(m, p)
    assert len(refs) == comb(m + p - 1, p)
    assert np.allclose(refs.sum(axis=1), 1.0, atol=1e-12)
    assert (refs >= 0).all()
    assert np.allclose(refs * p, np.round(refs * p))
    assert len({tuple(r) for r in refs}) == len(refs)


def test_reference_examples():
    assert reference_points(2, 2).tolist() == [[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]]
    assert len(reference_points(4, 4)) == 35
    assert sorted(map(tuple, reference_points(3, 1))) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    with pytest.raises(ValueError):
        reference_points(1, 3)


def test_niching_identity_when_sizes_match():
    F = np.random.default_rng(1).random((6, 3))
    out = niching_select(F, 6, reference_points(3, 2), np.random.default_rng(0))
    assert out.tolist() == list(range(6))


def test_first_front_overflow():
    rng = np.random.default_rng(3)
    a = rng.random(10)
    front = np.column_stack([a, 1 - a])  # mutually non-dominated
    F = np.vstack([front, front + 2])
    out = niching_select(F, 5, reference_points(2, 4), np.random.default_rng(0))
    assert len(out) == 5 and (out < 10).all()


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(4, 20))
def test_niching_keeps_elite_and_is_reproducible(seed, target):
    F = np.random.default_rng(seed).random((2 * target, 3))
    refs = reference_points(3, 3)
    elite = knee_point(F)
    a = niching_select(F, target, refs, np.random.default_rng(seed), keep=(elite,))
    b = niching_select(F, target, refs, np.random.default_rng(seed), keep=(elite,))
    assert a.tolist() == b.tolist()
    assert elite in a and len(a) == target == len(set(a.tolist()))
    # whole fronts before any partial one
    fronts = non_dominated_sort(F)
    taken = set(a.tolist())
    partial = [i for i, f in enumerate(fronts) if taken & set(f) and not set(f) <= taken]
    assert len(partial) <= 1
    if partial:
        assert all(set(f) <= taken for f in fronts[: partial[0]])


def test_knee_tie_break():
    assert knee_point([(0.5, 0.5), (0.2, 0.8), (0.8, 0.2)]) == 1


def test_order_crossover_example():
    assert order_crossover([1, 2, 3, 4, 5], [5, 4, 3, 2, 1], 1, 3) == [5, 2, 3, 4, 1]


perms = st.integers(2, 9).flatmap(lambda n: st.tuples(st.permutations(range(n)), st.permutations(range(n))))


@given(perms, st.data())
def test_order_crossover_closure(pair, data):
    a, b = map(list, pair)
    n = len(a)
    cut1 = data.draw(st.integers(0, n - 1))
    cut2 = data.draw(st.integers(cut1 + 1, n))
    child = order_crossover(a, b, cut1, cut2)
    assert sorted(child) == sorted(a)
    assert child[cut1:cut2] == a[cut1:cut2]
    assert order_crossover(a, a, cut1, cut2) == a


def test_mutation_examples():
    rng = np.random.default_rng(0)
    assert swap_mutation([1, 2, 3], rng, positions=(0, 2)) == [3, 2, 1]
    assert flip_mutation([1, 1, 2], rng, position=1) == [1, 2, 2]
    child = uniform_crossover([1, 1, 1, 1], [2, 2, 2, 2], rng)
    assert set(child) <= {1, 2}


class Toy(Problem):
    """Two objectives on bit strings, trade-off between ones and position."""

    n_objectives = 2

    def __init__(self, n=8, feasible=True):
        self.n = n
        self.feasible = feasible

    def initial_population(self, size, rng):
        return [list(rng.integers(1, 3, self.n)) for _ in range(size)]

    def evaluate(self, x):
        x = np.asarray(x) - 1
        return [x.mean(), 1 - (x * np.arange(1, self.n + 1)).sum() / (self.n * (self.n + 1) / 2)]

    def crossover(self, a, b, rng):
        return uniform_crossover(a, b, rng)

    def mutate(self, x, rng):
        return flip_mutation(x, rng)

    def is_feasible(self, x):
        return self.feasible


def test_evolve_monotone_and_deterministic():
    cfg = GaConfig(population_size=12, generations=15, rng_seed=4)
    a, b = evolve(Toy(), cfg), evolve(Toy(), cfg)
    scores = [r.best_scalar for r in a.trace]
    assert scores == [r.best_scalar for r in b.trace]
    assert all(y <= x for x, y in zip(scores, scores[1:]))
    assert len(a.trace) == 16


def test_zero_generations_returns_initial():
    cfg = GaConfig(population_size=6, generations=0)
    res = evolve(Toy(), cfg)
    assert len(res.trace) == 1
    assert [list(x) for x in res.population] == [list(x) for x in res.initial_population]


def test_zero_mutation_rate_is_noop_on_children():
    class Recorder(Toy):
        def mutate(self, x, rng):
            raise AssertionError("mutation must not run")

    evolve(Recorder(), GaConfig(population_size=6, generations=3, mutation_rate=0.0))


def test_no_feasible_start():
    with pytest.raises(NoFeasibleStart):
        evolve(Toy(feasible=False), GaConfig(population_size=4, generations=1))


def test_config_validation():
    with pytest.raises(ValueError):
        GaConfig(population_size=3)
    with pytest.raises(ValueError):
        GaConfig(crossover_rate=1.5)


def test_trace_csv(tmp_path):
    res = evolve(Toy(), GaConfig(population_size=6, generations=2))
    path = tmp_path / "trace.csv"
    write_trace_csv(res.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "generation,best_scalar,best_f1,best_f2"
    assert len(lines) == 4
