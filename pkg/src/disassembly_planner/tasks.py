"""Arm assignment for a fixed removal order.

Assignments are aligned with the sequence chromosome: ``arms[i]`` is the arm
that removes ``order[i]``. Task records are listed in removal order.
"""

from __future__ import annotations

import itertools
from dataclasses import asdict, dataclass
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import LengthMismatch, ParseError, ValidationError
from .model import TOOLS, AssemblyModel
from .moga import (
    EvolutionResult,
    GaConfig,
    Problem,
    TraceRow,
    knee_point,
    knee_points,
    niching_select_batch,
    non_dominated_sort,
    reference_points,
    scalarize,
)
from .validation import check_assignment, check_order


@dataclass(frozen=True)
class TaskRecord:
    part: int
    kind: str
    task_kind: str
    arm: int
    tool: str
    toolchange_before: bool


@dataclass(frozen=True)
class TaskPlan:
    order: tuple[int, ...]
    arms: tuple[int, ...]
    tasks: tuple[TaskRecord, ...]

    @property
    def tool_change_count(self) -> int:
        return sum(t.toolchange_before for t in self.tasks)

    def tool_changes_per_arm(self) -> dict[int, int]:
        out = {1: 0, 2: 0}
        for t in self.tasks:
            out[t.arm] += t.toolchange_before
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "order": list(self.order),
            "arms": list(self.arms),
            "tasks": [asdict(t) for t in self.tasks],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TaskPlan":
        try:
            return cls(
                order=tuple(int(x) for x in data["order"]),
                arms=tuple(int(a) for a in data["arms"]),
                tasks=tuple(TaskRecord(**t) for t in data["tasks"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed task plan: {exc}") from None


class _TaskArrays:
    """Lookup tables in removal order for one or more orders of the same model."""

    def __init__(
        self,
        orders: Sequence[Sequence[int]],
        model: AssemblyModel,
        allowed_arms: Mapping[int, Sequence[int]] | None = None,
    ):
        removal = np.array([list(o)[::-1] for o in orders], dtype=int).reshape(len(orders), -1) - 1
        self.batch, self.n = removal.shape
        self.eta = model.eta
        tool_index = {t: i for i, t in enumerate(TOOLS)}
        codes = np.array([tool_index[p.label.tool] for p in model.parts])
        self.tools = codes[removal]
        self.dist = model.com_distances[removal[:, :, None], removal[:, None, :]]
        self.dmax = model.distance_max
        # 0 = either arm, otherwise the only permitted arm
        forced = np.zeros(model.eta, dtype=int)
        for pid, arms in (allowed_arms or {}).items():
            arms = set(check_assignment(arms))
            if not arms:
                raise ValidationError(f"part {pid}: no permitted arm")
            if len(arms) == 1:
                forced[int(pid) - 1] = arms.pop()
        self.fixed = forced[removal]

    def clamp(self, X: np.ndarray) -> np.ndarray:
        """Overwrite genes of single-arm tasks in a ``(B, P, n)`` batch."""
        if not self.fixed.any():
            return X
        return np.where(self.fixed[:, None, :] == 0, X, self.fixed[:, None, :])

    def evaluate(self, arms_removal: np.ndarray) -> np.ndarray:
        """Objectives for a ``(B, P, n)`` batch of assignments in removal order."""
        X = np.asarray(arms_removal)
        B, P, n = X.shape
        cols = np.arange(n)
        # index of the previous task on the same arm, -1 if none
        prev = np.full(X.shape, -1)
        for arm in (1, 2):
            last = np.maximum.accumulate(np.where(X == arm, cols, -1), axis=2)
            prev[..., 1:] = np.where(X[..., 1:] == arm, last[..., :-1], prev[..., 1:])
        valid = prev >= 0
        prev_safe = np.where(valid, prev, 0)
        base = (np.arange(B) * n)[:, None, None]
        prev_tool = np.take(self.tools, base + prev_safe)
        change = (valid & (prev_tool != self.tools[:, None, :])).sum(axis=2)
        hop = np.take(self.dist, (base + prev_safe) * n + cols)
        travel = np.where(valid, hop, 0.0).sum(axis=2)
        cross = X[..., 1:] != X[..., :-1]
        has_partner = np.zeros(X.shape, dtype=bool)
        has_partner[..., 1:] |= cross
        has_partner[..., :-1] |= cross
        serial = n - has_partner.sum(axis=2)
        eta = self.eta
        return np.stack(
            [serial / eta, change / max(eta - 1, 1), travel / (eta * self.dmax)], axis=-1
        )


def eval_assignment(order: Sequence[int], arms: Sequence[int], model: AssemblyModel) -> np.ndarray:
    """Return ``[f_parallel, f_change, f_distance]`` for one assignment.

    * ``f_parallel``: tasks with no neighbour (in removal order) on the other
      arm, i.e. tasks that cannot hide a tool change of the other arm,
      divided by ``eta``.
    * ``f_change``: consecutive tasks of the same arm needing different
      tools, divided by ``eta - 1``.
    * ``f_distance``: centre-of-mass travel summed over each arm's own task
      sequence, divided by ``eta`` times the largest part-to-part distance.
    """
    if len(arms) != len(order):
        raise LengthMismatch(f"{len(arms)} arms for {len(order)} tasks")
    check_assignment(arms)
    tables = _TaskArrays([order], model)
    return tables.evaluate(np.array(arms[::-1])[None, None, :])[0, 0]


def make_task_plan(
    order: Sequence[int],
    arms: Sequence[int],
    model: AssemblyModel,
    first_mount_is_change: bool = True,
) -> TaskPlan:
    if len(arms) != len(order):
        raise LengthMismatch(f"{len(arms)} arms for {len(order)} tasks")
    mounted: dict[int, str | None] = {1: None, 2: None}
    records = []
    for part_id, arm in zip(order[::-1], arms[::-1]):
        label = model.part(part_id).label
        prev = mounted[arm]
        change = prev != label.tool if prev is not None else first_mount_is_change
        mounted[arm] = label.tool
        records.append(
            TaskRecord(
                part=int(part_id),
                kind=label.kind,
                task_kind=label.task_kind,
                arm=int(arm),
                tool=label.tool,
                toolchange_before=bool(change),
            )
        )
    return TaskPlan(order=tuple(int(x) for x in order), arms=tuple(int(a) for a in arms), tasks=tuple(records))


class AssignmentProblem(Problem):
    """Arm-assignment chromosomes over ``{1, 2}``; every chromosome is feasible.

    Internally chromosomes are stored in removal order as numpy rows, and
    variation is vectorised over the whole offspring batch.
    """

    n_objectives = 3

    def __init__(
        self,
        order: Sequence[int],
        model: AssemblyModel,
        allowed_arms: Mapping[int, Sequence[int]] | None = None,
    ):
        self.tables = _TaskArrays([order], model, allowed_arms)

    def initial_population(self, size: int, rng: np.random.Generator) -> list[Any]:
        return list(self.tables.clamp(rng.integers(1, 3, size=(1, size, self.tables.n)))[0])

    def evaluate(self, x: Any) -> np.ndarray:
        return self.tables.evaluate(np.asarray(x)[None, None, :])[0, 0]

    def evaluate_many(self, xs: list[Any]) -> np.ndarray:
        return self.tables.evaluate(np.array(xs)[None])[0]

    def crossover(self, a: Any, b: Any, rng: np.random.Generator) -> Any:
        return np.where(rng.random(len(a)) < 0.5, a, b)

    def mutate(self, x: Any, rng: np.random.Generator) -> Any:
        out = np.array(x)
        i = rng.integers(len(out))
        out[i] = 3 - out[i]
        return self.tables.clamp(out[None, None, :])[0, 0]

    def key(self, x: Any) -> Any:
        return np.asarray(x, dtype=np.int8).tobytes()

    def offspring(self, population, size, config, rng):
        children = _offspring(np.array(population)[None], size, config, [rng])
        return list(self.tables.clamp(children)[0])


def _offspring(
    pop: np.ndarray, size: int, config: GaConfig, rngs: Sequence[np.random.Generator]
) -> np.ndarray:
    """Uniform crossover plus single-gene flip for a ``(B, P, n)`` batch.

    Population ``b`` draws only from ``rngs[b]``.
    """
    B, P, n = pop.shape
    # one draw per population: parent a, parent b, crossover?, mutate?, locus, n mix bits
    u = np.stack([rng.random((size, n + 5)) for rng in rngs])
    ia = (u[..., 0] * P).astype(int)
    ib = (u[..., 1] * P).astype(int)
    do_cx = u[..., 2] < config.crossover_rate
    do_mut = u[..., 3] < config.mutation_rate
    pos = (u[..., 4] * n).astype(int)
    mix = u[..., 5:] < 0.5
    rows = np.arange(B)[:, None]
    a = pop[rows, ia]
    b = pop[rows, ib]
    child = np.where(do_cx[..., None] & ~mix, b, a)
    flip = np.zeros(child.shape, dtype=bool)
    np.put_along_axis(flip, pos[..., None], do_mut[..., None], axis=2)
    return np.where(flip, 3 - child, child)


@dataclass
class TaskSolution:
    arms: tuple[int, ...]
    objectives: np.ndarray
    front_arms: list[tuple[int, ...]]
    front_objectives: np.ndarray
    result: EvolutionResult | None


def _to_order_alignment(x: Any) -> tuple[int, ...]:
    return tuple(int(v) for v in np.asarray(x)[::-1])


def _lockstep(
    tables: _TaskArrays, config: GaConfig, seeds: Sequence[int]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run one assignment GA per order side by side.

    Every population keeps its own generator, and each step consumes it
    exactly as :func:`~disassembly_planner.moga.evolve` would with
    :class:`AssignmentProblem`, so a batch of one reproduces that run.
    Returns final populations, objectives and per-generation best rows
    ``(G + 1, B, 1 + M)``.
    """
    size = config.population_size
    rngs = [np.random.default_rng(s) for s in seeds]
    pop = tables.clamp(np.stack([rng.integers(1, 3, size=(size, tables.n)) for rng in rngs]))
    F = tables.evaluate(pop)
    best = [np.concatenate([F.mean(axis=2).min(axis=1)[:, None], F.min(axis=1)], axis=1)]
    refs = reference_points(AssignmentProblem.n_objectives, config.reference_divisions)
    for _ in range(config.generations):
        children = tables.clamp(_offspring(pop, size, config, rngs))
        merged = np.concatenate([pop, children], axis=1)
        Fm = np.concatenate([F, tables.evaluate(children)], axis=1)
        elite = knee_points(Fm)
        chosen = niching_select_batch(Fm, size, refs, rngs, [(int(e),) for e in elite])
        pop = np.take_along_axis(merged, chosen[..., None], axis=1)
        F = np.take_along_axis(Fm, chosen[..., None], axis=1)
        best.append(np.concatenate([F.mean(axis=2).min(axis=1)[:, None], F.min(axis=1)], axis=1))
    return pop, F, np.stack(best)


def solve_assignments(
    orders: Sequence[Sequence[int]],
    model: AssemblyModel,
    config: GaConfig,
    seeds: Sequence[int] | None = None,
    allowed_arms: Mapping[int, Sequence[int]] | None = None,
) -> list[TaskSolution]:
    """Search arm assignments for several orders of one model at once.

    ``seeds[i]`` seeds the search for ``orders[i]`` (default
    ``config.rng_seed`` for all); results do not depend on batch
    composition. The space is enumerated when ``2**n`` fits in one
    population. ``allowed_arms`` maps part ids to the arms permitted to
    remove them; unlisted parts may go to either arm.
    """
    if not orders:
        return []
    orders = [check_order(o, model) for o in orders]
    seeds = [config.rng_seed] * len(orders) if seeds is None else list(seeds)
    if len(seeds) != len(orders):
        raise LengthMismatch(f"{len(seeds)} seeds for {len(orders)} orders")
    tables = _TaskArrays(orders, model, allowed_arms)
    n = tables.n
    if 2**n <= config.population_size:
        every = np.array(list(itertools.product((1, 2), repeat=n)), dtype=int).reshape(-1, n)
        F_all = tables.evaluate(np.broadcast_to(every, (tables.batch,) + every.shape))
        out = []
        for b in range(tables.batch):
            X, Fb = every, F_all[b]
            if tables.fixed[b].any():
                keep = np.all((tables.fixed[b] == 0) | (every == tables.fixed[b]), axis=1)
                X, Fb = every[keep], Fb[keep]
            best = knee_point(Fb)
            front = non_dominated_sort(Fb)[0]
            out.append(
                TaskSolution(
                    arms=_to_order_alignment(X[best]),
                    objectives=Fb[best],
                    front_arms=[_to_order_alignment(X[i]) for i in front],
                    front_objectives=Fb[front],
                    result=None,
                )
            )
        return out
    pop, F, best_rows = _lockstep(tables, config, seeds)
    out = []
    for b in range(tables.batch):
        members = list(pop[b])
        front = non_dominated_sort(F[b])[0]
        trace = [
            TraceRow(g, float(row[0]), tuple(float(v) for v in row[1:]))
            for g, row in enumerate(best_rows[:, b])
        ]
        result = EvolutionResult(population=members, objectives=F[b], front=front, trace=trace)
        k = result.best_index
        out.append(
            TaskSolution(
                arms=_to_order_alignment(members[k]),
                objectives=F[b][k],
                front_arms=[_to_order_alignment(x) for x in result.front_members],
                front_objectives=result.front_objectives,
                result=result,
            )
        )
    return out


def solve_assignment(
    order: Sequence[int],
    model: AssemblyModel,
    config: GaConfig,
    allowed_arms: Mapping[int, Sequence[int]] | None = None,
) -> TaskSolution:
    """Search arm assignments; exhaustive when ``2**n`` fits in one population."""
    return solve_assignments([order], model, config, allowed_arms=allowed_arms)[0]


def plan_tasks(
    order: Sequence[int], model: AssemblyModel, config: GaConfig | None = None
) -> tuple[tuple[int, ...], TaskPlan, TaskSolution]:
    """Best assignment, its task plan and the full search result."""
    solution = solve_assignment(order, model, config or GaConfig())
    return solution.arms, make_task_plan(order, solution.arms, model), solution


def random_assignment_baseline(
    order: Sequence[int],
    model: AssemblyModel,
    n_samples: int,
    rng_seed: int,
    allowed_arms: Mapping[int, Sequence[int]] | None = None,
) -> tuple[tuple[int, ...], np.ndarray]:
    """Best (by mean objective) of ``n_samples`` uniform random assignments."""
    tables = _TaskArrays([order], model, allowed_arms)
    rng = np.random.default_rng(rng_seed)
    X = tables.clamp(rng.integers(1, 3, size=(1, n_samples, tables.n)))
    F = tables.evaluate(X)[0]
    X = X[0]
    best = knee_point(F)
    return _to_order_alignment(X[best]), F[best]


class TaskPlanner(BaseEstimator):
    """Optimise the arm assignment for a fixed removal order.

    Parameters mirror :class:`~disassembly_planner.moga.GaConfig`.

    Attributes
    ----------
    arms_ : tuple of int
        Selected assignment, aligned with the order passed to ``fit``.
    objectives_ : ndarray of shape (3,)
    task_plan_ : TaskPlan
    front_arms_, front_objectives_ :
        Final non-dominated set.
    trace_ : list of TraceRow or None
        ``None`` when the assignment space was enumerated.
    """

    def __init__(
        self,
        population_size: int = 100,
        generations: int = 200,
        crossover_rate: float = 0.9,
        mutation_rate: float = 0.1,
        reference_divisions: int = 4,
        first_mount_is_change: bool = True,
        random_state: int = 0,
    ):
        self.population_size = population_size
        self.generations = generations
        self.crossover_rate = crossover_rate
        self.mutation_rate = mutation_rate
        self.reference_divisions = reference_divisions
        self.first_mount_is_change = first_mount_is_change
        self.random_state = random_state

    def ga_config(self) -> GaConfig:
        return GaConfig(
            population_size=self.population_size,
            generations=self.generations,
            crossover_rate=self.crossover_rate,
            mutation_rate=self.mutation_rate,
            reference_divisions=self.reference_divisions,
            rng_seed=self.random_state,
        )

    def fit(self, model: AssemblyModel, order: Sequence[int]) -> "TaskPlanner":
        order = check_order(order, model)
        solution = solve_assignment(order, model, self.ga_config())
        self.order_ = tuple(order)
        self.arms_ = solution.arms
        self.objectives_ = solution.objectives
        self.front_arms_ = solution.front_arms
        self.front_objectives_ = solution.front_objectives
        self.trace_ = solution.result.trace if solution.result is not None else None
        self.task_plan_ = make_task_plan(order, self.arms_, model, self.first_mount_is_change)
        return self

    def score(self, model: AssemblyModel, order: Sequence[int] | None = None) -> float:
        """Negated mean objective of the fitted assignment (higher is better)."""
        check_is_fitted(self, "arms_")
        order = self.order_ if order is None else check_order(order, model)
        return -float(scalarize(eval_assignment(order, self.arms_, model)))
