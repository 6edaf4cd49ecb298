"""Removal-sequence admissibility, objectives, and the sequence optimiser."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .ccc import initialize_population
from .exceptions import NotAdmissible
from .model import DIRECTIONS, AssemblyModel
from .moga import EvolutionResult, GaConfig, Problem, evolve, order_crossover, swap_mutation
from .tasks import eval_assignment, solve_assignments
from .validation import check_order

INNER_DEFAULT = GaConfig(population_size=20, generations=20)


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    stable: bool
    first_violation: tuple[int, str] | None = None

    @property
    def admissible(self) -> bool:
        return self.feasible and self.stable


def _replay(order: Sequence[int], model: AssemblyModel) -> tuple[int, str] | None:
    """First removal step (0-based) violating precedence or interference."""
    m = model.masks
    removed = 0
    remaining = m.all_bits
    for step, pid in enumerate(reversed(order)):
        u = pid - 1
        bit = 1 << u
        if m.predecessors[u] & ~removed:
            return step, f"part {pid}: constraint predecessor still present"
        if m.fasteners_of[u] & remaining:
            return step, f"part {pid}: attached fastener still present"
        others = remaining & ~bit
        blockers = m.blockers[u]
        if not any(blockers[d] & others == 0 for d in m.removal_dir_index[u]):
            return step, f"part {pid}: every removal direction is obstructed"
        removed |= bit
        remaining &= ~bit
    return None


def _first_isolation(order: Sequence[int], model: AssemblyModel) -> tuple[int, str] | None:
    # Rebuild in assembly order: every stage stays base-connected iff each
    # added part touches something already present.
    m = model.masks
    present = m.base_bit
    n = len(order)
    for j, pid in enumerate(order[:-1]):
        if not m.skeleton[pid - 1] & present:
            step = n - 1 - j
            return step, f"removal step {step} leaves part {pid} detached from the base"
        present |= 1 << (pid - 1)
    return None


def check_feasible(order: Sequence[int], model: AssemblyModel) -> bool:
    return _replay(order, model) is None


def check_stable(order: Sequence[int], model: AssemblyModel) -> bool:
    return _first_isolation(order, model) is None


def assess(order: Sequence[int], model: AssemblyModel) -> FeasibilityVerdict:
    order = check_order(order, model)
    violation = _replay(order, model)
    isolation = _first_isolation(order, model)
    first = min((v for v in (violation, isolation) if v is not None), default=None)
    return FeasibilityVerdict(violation is None, isolation is None, first)


def removal_directions(order: Sequence[int], model: AssemblyModel) -> list[str]:
    """Direction used at each removal step.

    The previous step's direction is reused when it is still free; otherwise
    the first free direction in the part's listed order.
    """
    m = model.masks
    remaining = m.all_bits
    chosen: list[str] = []
    prev = None
    for pid in reversed(order):
        u = pid - 1
        others = remaining & ~(1 << u)
        free = [d for d in m.removal_dir_index[u] if m.blockers[u][d] & others == 0]
        if not free:
            raise NotAdmissible(f"part {pid} has no free removal direction")
        d = prev if prev in free else free[0]
        chosen.append(DIRECTIONS[d])
        prev = d
        remaining = others
    return chosen


def sequence_objectives(order: Sequence[int], model: AssemblyModel) -> tuple[float, float, float]:
    """``(f_difficulty, f_efficiency, f_priority)`` for an admissible order."""
    eta = model.eta
    pairs = max(eta - 2, 1)
    dirs = removal_directions(order, model)
    difficulty = sum(a != b for a, b in zip(dirs, dirs[1:])) / pairs

    removal = np.array(order[::-1]) - 1
    hops = model.com_distances[removal[:-1], removal[1:]].sum()
    efficiency = float(hops) / (pairs * model.distance_max)

    targets = model.recovery_targets
    if targets:
        step = {pid: i for i, pid in enumerate(order[::-1])}
        priority = float(np.mean([step[t] for t in targets])) / (eta - 1)
    else:
        priority = 0.0
    return difficulty, efficiency, priority


def inner_seed(order: Sequence[int], base_seed: int) -> int:
    digest = zlib.crc32(np.asarray(order, dtype=np.int32).tobytes())
    return (digest ^ (base_seed * 0x9E3779B1)) & 0xFFFFFFFF


def eval_sequences(
    orders: Sequence[Sequence[int]],
    model: AssemblyModel,
    inner_config: GaConfig | None = None,
) -> np.ndarray:
    """Batched :func:`eval_sequence` without fixed assignments; one row per order."""
    cfg = inner_config or INNER_DEFAULT
    rows = []
    for order in orders:
        verdict = assess(order, model)
        if not verdict.admissible:
            raise NotAdmissible(f"order is not admissible: {verdict.first_violation}")
        rows.append(sequence_objectives(order, model))
    seeds = [inner_seed(o, cfg.rng_seed) for o in orders]
    solutions = solve_assignments(orders, model, cfg, seeds)
    allocation = [float(np.sum(s.objectives)) / 3.0 for s in solutions]
    return np.column_stack([np.array(rows).reshape(-1, 3), allocation]).reshape(len(orders), 4)


def eval_sequence(
    order: Sequence[int],
    model: AssemblyModel,
    assignment: Sequence[int] | None = None,
    inner_config: GaConfig | None = None,
) -> np.ndarray:
    """Return ``[f_difficulty, f_efficiency, f_priority, f_allocation]``.

    ``f_allocation`` is the mean of the three task objectives at
    ``assignment``, or at the assignment chosen by a short task search
    (``inner_config``) when none is given.
    """
    if assignment is None:
        return eval_sequences([order], model, inner_config)[0]
    verdict = assess(order, model)
    if not verdict.admissible:
        raise NotAdmissible(f"order is not admissible: {verdict.first_violation}")
    difficulty, efficiency, priority = sequence_objectives(order, model)
    allocation = float(np.sum(eval_assignment(order, assignment, model))) / 3.0
    return np.array([difficulty, efficiency, priority, allocation])


class SequenceProblem(Problem):
    n_objectives = 4

    def __init__(self, model: AssemblyModel, init_seed: int, inner_config: GaConfig | None = None):
        self.model = model
        self.init_seed = init_seed
        self.inner_config = inner_config or INNER_DEFAULT

    def initial_population(self, size: int, rng: np.random.Generator) -> list[Any]:
        return initialize_population(self.model, size, self.init_seed)

    def evaluate(self, x: Any) -> np.ndarray:
        return eval_sequence(x, self.model, inner_config=self.inner_config)

    def evaluate_many(self, xs: list[Any]) -> np.ndarray:
        return eval_sequences(xs, self.model, self.inner_config)

    def is_feasible(self, x: Any) -> bool:
        return check_feasible(x, self.model) and check_stable(x, self.model)

    def crossover(self, a: Any, b: Any, rng: np.random.Generator) -> Any:
        n = len(a)
        if n < 2:
            return list(a)
        cut1 = int(rng.integers(0, n - 1))
        cut2 = int(rng.integers(cut1 + 1, n + 1))
        return order_crossover(a, b, cut1, cut2)

    def mutate(self, x: Any, rng: np.random.Generator) -> Any:
        return swap_mutation(x, rng)


@dataclass
class SequencePlan:
    best_order: list[int]
    best_objectives: np.ndarray
    front_orders: list[list[int]]
    front_objectives: np.ndarray
    initial_availability: float
    result: EvolutionResult


def plan_sequence(
    model: AssemblyModel, config: GaConfig, inner_config: GaConfig | None = None
) -> SequencePlan:
    problem = SequenceProblem(model, config.rng_seed, inner_config)
    result = evolve(problem, config)
    init = result.initial_population
    available = sum(problem.is_feasible(x) for x in init) / len(init) if init else float("nan")
    best = result.best_index
    return SequencePlan(
        best_order=list(result.population[best]),
        best_objectives=result.objectives[best],
        front_orders=[list(x) for x in result.front_members],
        front_objectives=result.front_objectives,
        initial_availability=available,
        result=result,
    )


class SequencePlanner(BaseEstimator):
    """Many-objective search over admissible removal orders.

    Attributes
    ----------
    best_order_ : list of int
        Knee point of the final front (chromosome layout, last-removed first).
    objectives_ : ndarray of shape (4,)
    front_orders_, front_objectives_ :
        Final non-dominated set.
    trace_ : list of TraceRow
    initial_availability_ : float
        Fraction of the seeded population that is admissible.
    """

    def __init__(
        self,
        population_size: int = 100,
        generations: int = 200,
        crossover_rate: float = 0.9,
        mutation_rate: float = 0.1,
        reference_divisions: int = 4,
        inner_population_size: int = 20,
        inner_generations: int = 20,
        random_state: int = 0,
    ):
        self.population_size = population_size
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.reference_divisions = reference_divisions
        self.inner_population_size = inner_population_size
        self.inner_generations = inner_generations
        self.random_state = random_state

    def fit(self, model: AssemblyModel, y: Any = None) -> "SequencePlanner":
        config = GaConfig(
            population_size=self.population_size,
            generations=self.generations,
            crossover_rate=self.crossover_rate,
            mutation_rate=self.mutation_rate,
            reference_divisions=self.reference_divisions,
            rng_seed=self.random_state,
        )
        inner = GaConfig(
            population_size=self.inner_population_size,
            generations=self.inner_generations,
            crossover_rate=self.crossover_rate,
            mutation_rate=self.mutation_rate,
            reference_divisions=self.reference_divisions,
            rng_seed=self.random_state,
        )
        plan = plan_sequence(model, config, inner)
        self.best_order_ = plan.best_order
        self.objectives_ = plan.best_objectives
        self.front_orders_ = plan.front_orders
        self.front_objectives_ = plan.front_objectives
        self.trace_ = plan.result.trace
        self.initial_availability_ = plan.initial_availability
        return self

    def predict(self, model: AssemblyModel) -> list[int]:
        """Removal order (first removed first) of the fitted best sequence."""
        check_is_fitted(self, "best_order_")
        return list(reversed(self.best_order_))
