"""Reference-direction many-objective GA core (NSGA-III survival).

All objectives are minimised and expected to lie in ``[0, 1]``; the
scalar score of a member is the mean of its objective vector.
"""

from __future__ import annotations

import csv
import itertools
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Hashable, Sequence

import numpy as np

from .exceptions import NoFeasibleStart


@dataclass
class GaConfig:
    population_size: int = 100
    generations: int = 200
    crossover_rate: float = 0.9
    mutation_rate: float = 0.1
    reference_divisions: int = 4
    rng_seed: int = 0
    retry_budget: int = 10

    def __post_init__(self) -> None:
        if self.population_size < 4:
            raise ValueError("population_size must be at least 4")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        for name in ("crossover_rate", "mutation_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")
        if self.reference_divisions < 1:
            raise ValueError("reference_divisions must be at least 1")


# ------------------------------------------------------------------ sorting


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    a, b = np.asarray(a), np.asarray(b)
    return bool((a <= b).all() and (a < b).any())


def dominance_matrix(F: np.ndarray) -> np.ndarray:
    """``D[..., i, j]`` is true when point ``i`` dominates point ``j``.

    Accepts one ``(n, M)`` point set or a ``(B, n, M)`` batch.
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[-2]
    shape = F.shape[:-2] + (n, n)
    le = np.ones(shape, dtype=bool)
    lt = np.zeros(shape, dtype=bool)
    # one objective at a time; reducing over a short trailing axis is slow
    for j in range(F.shape[-1]):
        col = F[..., j]
        le &= col[..., :, None] <= col[..., None, :]
        lt |= col[..., :, None] < col[..., None, :]
    return le & lt


def front_ranks(points: Any, max_count: int | None = None) -> np.ndarray:
    """0-based front index of every point, for one set or a ``(B, n, M)`` batch.

    With ``max_count`` peeling stops once every set has at least that many
    ranked points; the rest get rank ``n``.
    """
    F = np.asarray(points, dtype=float)
    single = F.ndim == 2
    if single:
        F = F[None]
    if F.ndim != 3:
        raise ValueError("points must be a 2-D array of objective vectors")
    B, n, _ = F.shape
    dom = dominance_matrix(F).astype(np.int32)
    count = dom.sum(axis=1)
    rank = np.full((B, n), n, dtype=int)
    limit = n if max_count is None else min(max_count, n)
    taken = np.zeros(B, dtype=int)
    r = 0
    while (taken < limit).any():
        front = (count == 0) & (rank == n)
        rank[front] = r
        taken += front.sum(axis=1)
        count -= (front[:, None, :].astype(np.int32) @ dom)[:, 0, :]
        r += 1
    return rank[0] if single else rank


def non_dominated_sort(points: Any, max_count: int | None = None) -> list[list[int]]:
    """Partition point indices into Pareto fronts (best first).

    With ``max_count`` the peeling stops once the fronts returned so far
    hold at least that many points.
    """
    F = np.asarray(points, dtype=float)
    if len(F) == 0:
        return []
    rank = front_ranks(F, max_count)
    n = len(F)
    return [np.flatnonzero(rank == r).tolist() for r in range(int(rank[rank < n].max()) + 1)]


def reference_points(n_objectives: int, divisions: int) -> np.ndarray:
    """Das-Dennis simplex lattice: ``C(M + p - 1, p)`` directions."""
    if n_objectives < 2 or divisions < 1:
        raise ValueError("need n_objectives >= 2 and divisions >= 1")
    rows = []
    # stars and bars: choose M-1 bar positions among p+M-1 slots
    for bars in itertools.combinations(range(divisions + n_objectives - 1), n_objectives - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(divisions + n_objectives - 2 - prev)
        rows.append(counts)
    refs = np.array(sorted(rows), dtype=float) / divisions
    return refs


def scalarize(objectives: Any) -> np.ndarray:
    return np.asarray(objectives, dtype=float).mean(axis=-1)


def knee_point(objectives: Any) -> int:
    """Index with the lowest mean objective; ties broken lexicographically."""
    return int(knee_points(np.asarray(objectives, dtype=float)[None])[0])


def knee_points(objectives: np.ndarray) -> np.ndarray:
    """Row-wise :func:`knee_point` for a ``(B, n, M)`` batch."""
    F = np.asarray(objectives, dtype=float)
    s = F.mean(axis=-1)
    idx = np.broadcast_to(np.arange(F.shape[-2]), s.shape)
    # lexsort: last key is primary
    keys = [idx] + [F[..., j] for j in range(F.shape[-1] - 1, -1, -1)] + [s]
    return np.lexsort(keys, axis=-1)[..., 0]


def _intercepts(extremes: np.ndarray, worst: np.ndarray) -> np.ndarray:
    B, m, _ = extremes.shape
    # degenerate extreme sets fall back to the worst point
    ok = np.abs(np.linalg.det(extremes)) > 1e-12
    b = np.zeros((B, m))
    if ok.any():
        b[ok] = np.linalg.solve(extremes[ok], np.ones((int(ok.sum()), m, 1)))[..., 0]
    with np.errstate(divide="ignore"):
        out = 1.0 / b
    bad = ~np.isfinite(out).all(axis=1) | (out <= 1e-10).any(axis=1)
    out[bad] = worst[bad]
    return np.where(out <= 1e-10, 1.0, out)


def _normalize(F: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Translate by the ideal point and scale by the hyperplane intercepts.

    ``F`` is ``(B, n, M)``; only points flagged in ``pool`` shape the
    ideal, extreme and worst points.
    """
    B, n, m = F.shape
    inside = pool[..., None]
    ideal = np.where(inside, F, np.inf).min(axis=1)
    T = F - ideal[:, None, :]
    Tin = np.where(inside, T, np.inf)
    asf = np.empty((B, m, n))
    for j in range(m):
        scale = np.full(m, 1e6)
        scale[j] = 1.0
        asf[:, j, :] = (Tin * scale).max(axis=2)
    extremes = np.take_along_axis(T, asf.argmin(axis=2)[..., None], axis=1)
    worst = np.where(inside, T, -np.inf).max(axis=1)
    return T / _intercepts(extremes, worst)[:, None, :]


def _associate(N: np.ndarray, refs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    W = refs / np.linalg.norm(refs, axis=1, keepdims=True)
    proj = N @ W.T
    sq = (N**2).sum(axis=-1, keepdims=True) - proj**2
    dist = np.sqrt(np.maximum(sq, 0.0))
    nearest = dist.argmin(axis=-1)
    return nearest, np.take_along_axis(dist, nearest[..., None], axis=-1)[..., 0]


def _fill(
    rank: np.ndarray,
    last_rank: int,
    nearest: list[int],
    dist: list[float],
    target_size: int,
    n_refs: int,
    rng: np.random.Generator,
    keep: Sequence[int],
) -> list[int]:
    selected = np.flatnonzero(rank < last_rank).tolist()
    last = np.flatnonzero(rank == last_rank).tolist()
    if len(selected) + len(last) == target_size:
        return sorted(selected + last)
    niche = [0] * n_refs
    for i in selected:
        niche[nearest[i]] += 1
    members_of: dict[int, list[tuple[float, int]]] = {}
    for i in last:
        if i in keep and len(selected) < target_size:
            selected.append(i)
            niche[nearest[i]] += 1
        else:
            members_of.setdefault(nearest[i], []).append((dist[i], i))

    while len(selected) < target_size:
        low = min(niche[j] for j in members_of)
        choices = sorted(j for j in members_of if niche[j] == low)
        j = choices[0] if len(choices) == 1 else choices[int(rng.integers(len(choices)))]
        members = members_of[j]
        if niche[j] == 0:
            pos = min(range(len(members)), key=members.__getitem__)
        else:
            pos = int(rng.integers(len(members)))
        selected.append(members.pop(pos)[1])
        if not members:
            del members_of[j]
        niche[j] += 1
    return sorted(selected)


def niching_select_batch(
    objectives: np.ndarray,
    target_size: int,
    refs: np.ndarray,
    rngs: Sequence[np.random.Generator],
    keep: Sequence[Sequence[int]] | None = None,
) -> np.ndarray:
    """:func:`niching_select` applied independently to each set of a ``(B, n, M)`` batch.

    Set ``b`` draws only from ``rngs[b]``, so its result does not depend on
    the rest of the batch. Returns a ``(B, target_size)`` index array.
    """
    F = np.asarray(objectives, dtype=float)
    B, n, _ = F.shape
    if n <= target_size:
        return np.tile(np.arange(n), (B, 1))
    rank = front_ranks(F, max_count=target_size)
    last_rank = np.sort(rank, axis=1)[:, target_size - 1]
    pool = rank <= last_rank[:, None]
    nearest, dist = _associate(_normalize(F, pool), refs)
    nearest, dist = nearest.tolist(), dist.tolist()
    out = np.empty((B, target_size), dtype=int)
    for b in range(B):
        out[b] = _fill(
            rank[b],
            int(last_rank[b]),
            nearest[b],
            dist[b],
            target_size,
            len(refs),
            rngs[b],
            keep[b] if keep is not None else (),
        )
    return out


def niching_select(
    objectives: Any,
    target_size: int,
    refs: np.ndarray,
    rng: np.random.Generator,
    keep: Sequence[int] = (),
) -> np.ndarray:
    """NSGA-III survival: whole fronts first, then reference-direction niching.

    ``keep`` lists indices that must survive; they are taken before niching
    starts and must belong to a front that is at least partially admitted.
    Returns the selected indices in ascending order.
    """
    F = np.asarray(objectives, dtype=float)
    if len(F) <= target_size:
        return np.arange(len(F))
    return niching_select_batch(F[None], target_size, refs, [rng], [keep])[0]


# ---------------------------------------------------------------- operators


def order_crossover(a: Sequence[int], b: Sequence[int], cut1: int, cut2: int) -> list[int]:
    """Keep ``a[cut1:cut2]`` in place; fill the other slots left to right in ``b`` order."""
    if len(a) != len(b) or sorted(a) != sorted(b):
        raise ValueError("parents must be permutations of the same ids")
    if not 0 <= cut1 < cut2 <= len(a):
        raise ValueError("need 0 <= cut1 < cut2 <= len(a)")
    kept = set(a[cut1:cut2])
    filler = iter(x for x in b if x not in kept)
    return [a[i] if cut1 <= i < cut2 else next(filler) for i in range(len(a))]


def swap_mutation(
    x: Sequence[int], rng: np.random.Generator, positions: tuple[int, int] | None = None
) -> list[int]:
    out = list(x)
    if len(out) < 2:
        return out
    if positions is None:
        i, j = rng.choice(len(out), size=2, replace=False)
    else:
        i, j = positions
    out[i], out[j] = out[j], out[i]
    return out


def flip_mutation(
    x: Sequence[int], rng: np.random.Generator, position: int | None = None
) -> list[int]:
    out = list(x)
    if not out:
        return out
    i = int(rng.integers(len(out))) if position is None else position
    out[i] = 3 - out[i]
    return out


def uniform_crossover(a: Sequence[int], b: Sequence[int], rng: np.random.Generator) -> list[int]:
    mask = rng.random(len(a)) < 0.5
    return [x if m else y for x, y, m in zip(a, b, mask)]


# ------------------------------------------------------------------ problem


class Problem(ABC):
    """What :func:`evolve` needs to know about a chromosome encoding."""

    n_objectives: int

    @abstractmethod
    def initial_population(self, size: int, rng: np.random.Generator) -> list[Any]: ...

    @abstractmethod
    def evaluate(self, x: Any) -> Sequence[float]: ...

    @abstractmethod
    def crossover(self, a: Any, b: Any, rng: np.random.Generator) -> Any: ...

    @abstractmethod
    def mutate(self, x: Any, rng: np.random.Generator) -> Any: ...

    def is_feasible(self, x: Any) -> bool:
        return True

    def key(self, x: Any) -> Hashable:
        return tuple(x)

    def evaluate_many(self, xs: list[Any]) -> np.ndarray:
        return np.array([self.evaluate(x) for x in xs], dtype=float).reshape(
            len(xs), self.n_objectives
        )

    def offspring(
        self, population: list[Any], size: int, config: GaConfig, rng: np.random.Generator
    ) -> list[Any]:
        """Produce ``size`` feasible children.

        Each child gets ``retry_budget`` crossover+mutation attempts; after
        that, mutated copies of a random parent are tried, and the parent
        itself is the last resort.
        """
        children = []
        n = len(population)
        for _ in range(size):
            child = None
            for _ in range(config.retry_budget):
                a = population[int(rng.integers(n))]
                b = population[int(rng.integers(n))]
                c = self.crossover(a, b, rng) if rng.random() < config.crossover_rate else list(a)
                if rng.random() < config.mutation_rate:
                    c = self.mutate(c, rng)
                if self.is_feasible(c):
                    child = c
                    break
            if child is None:
                parent = population[int(rng.integers(n))]
                child = list(parent)
                if config.mutation_rate > 0:
                    for _ in range(config.retry_budget):
                        c = self.mutate(parent, rng)
                        if self.is_feasible(c):
                            child = c
                            break
            children.append(child)
        return children


@dataclass
class TraceRow:
    generation: int
    best_scalar: float
    best_per_objective: tuple[float, ...]


@dataclass
class EvolutionResult:
    population: list[Any]
    objectives: np.ndarray
    front: list[int]
    trace: list[TraceRow] = field(default_factory=list)
    initial_population: list[Any] = field(default_factory=list)

    @property
    def front_members(self) -> list[Any]:
        return [self.population[i] for i in self.front]

    @property
    def front_objectives(self) -> np.ndarray:
        return self.objectives[self.front]

    @property
    def best_index(self) -> int:
        return self.front[knee_point(self.objectives[self.front])]

    @property
    def best(self) -> Any:
        return self.population[self.best_index]


def _trace_row(generation: int, F: np.ndarray) -> TraceRow:
    return TraceRow(
        generation=generation,
        best_scalar=float(scalarize(F).min()),
        best_per_objective=tuple(float(v) for v in F.min(axis=0)),
    )


def evolve(problem: Problem, config: GaConfig) -> EvolutionResult:
    """Run ``config.generations`` rounds of (mu + lambda) NSGA-III survival.

    The member with the lowest scalar score is always carried over, so the
    per-generation best score never increases.
    """
    rng = np.random.default_rng(config.rng_seed)
    size = config.population_size
    initial = [x for x in problem.initial_population(size, rng)]
    population = [x for x in initial if problem.is_feasible(x)]
    if not population:
        raise NoFeasibleStart("initializer produced no feasible chromosome")
    cache: dict[Hashable, np.ndarray] = {}

    def evaluate(xs: list[Any]) -> np.ndarray:
        keys = [problem.key(x) for x in xs]
        todo = {}
        for k, x in zip(keys, xs):
            if k not in cache and k not in todo:
                todo[k] = x
        if todo:
            values = problem.evaluate_many(list(todo.values()))
            for k, v in zip(todo, values):
                cache[k] = v
        return np.array([cache[k] for k in keys], dtype=float).reshape(len(xs), problem.n_objectives)

    F = evaluate(population)
    trace = [_trace_row(0, F)]
    if config.generations > 0:
        refs = reference_points(problem.n_objectives, config.reference_divisions)
        for generation in range(1, config.generations + 1):
            children = problem.offspring(population, size, config, rng)
            merged = population + children
            Fm = np.vstack([F, evaluate(children)])
            elite = knee_point(Fm)
            chosen = niching_select(Fm, size, refs, rng, keep=(elite,))
            population = [merged[i] for i in chosen]
            F = Fm[chosen]
            trace.append(_trace_row(generation, F))
    front = non_dominated_sort(F)[0]
    return EvolutionResult(
        population=population,
        objectives=F,
        front=front,
        trace=trace,
        initial_population=initial,
    )


def write_trace_csv(trace: Sequence[TraceRow], path: str | Path) -> None:
    n_obj = len(trace[0].best_per_objective) if trace else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["generation", "best_scalar", *[f"best_f{i + 1}" for i in range(n_obj)]])
        for row in trace:
            writer.writerow(
                [row.generation, repr(row.best_scalar), *map(repr, row.best_per_objective)]
            )
