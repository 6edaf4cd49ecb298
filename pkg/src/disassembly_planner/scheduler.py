"""Makespan-minimal scheduling of tool changes, stage turns and removals.

Each removal is a job with up to three tasks: a tool change on the arm
(stage 1), a stage turn on the external axis (stage 2) and the removal
itself on the arm (stage 3). Times are integer milliseconds.

:func:`solve` is a depth-first branch and bound over exclusion pairs that
overlap in the current earliest-start schedule. Among makespan-minimal
schedules it returns the one whose start vector, with tasks ordered by
``(job, stage)``, is lexicographically smallest; that schedule is
semi-active by construction.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from sklearn.base import BaseEstimator

from .exceptions import CyclicPrecedence, InconsistentPlan, SchedulingTimeout, TooLarge, ValidationError
from .motion import MotionPlan
from .tasks import TaskPlan

RESOURCES = ("Arm1_S1", "Arm2_S1", "ExternalAxis_S2", "Arm1_S3", "Arm2_S3")


def resource_for(stage: int, arm: int | None) -> str:
    if stage == 2:
        return "ExternalAxis_S2"
    if stage in (1, 3) and arm in (1, 2):
        return f"Arm{arm}_S{stage}"
    raise ValidationError(f"no resource for stage {stage} on arm {arm}")


@dataclass(frozen=True)
class SchedTask:
    id: str
    job: int
    stage: int
    resource: str
    duration: int
    part: int | None = None

    def __post_init__(self) -> None:
        if self.stage not in (1, 2, 3):
            raise ValidationError(f"task {self.id}: stage must be 1, 2 or 3")
        if self.resource not in RESOURCES:
            raise ValidationError(f"task {self.id}: unknown resource {self.resource!r}")
        if (self.stage == 2) != (self.resource == "ExternalAxis_S2") or (
            self.stage != 2 and not self.resource.endswith(f"S{self.stage}")
        ):
            raise ValidationError(f"task {self.id}: stage {self.stage} cannot run on {self.resource}")
        if not isinstance(self.duration, int) or self.duration <= 0:
            raise ValidationError(f"task {self.id}: duration must be a positive integer (ms)")

    @property
    def arm(self) -> int | None:
        return int(self.resource[3]) if self.resource.startswith("Arm") else None


def conflicting(a: SchedTask, b: SchedTask) -> bool:
    """True when the two tasks may not overlap in time."""
    if a.resource == b.resource:
        return True
    stages = {a.stage, b.stage}
    if stages == {2, 3} or stages == {1, 2}:
        return True
    return stages == {1, 3} and a.arm == b.arm


@dataclass(frozen=True)
class SchedulingProblem:
    """Tasks plus precedence arcs ``(before, after)`` and unordered exclusion pairs."""

    tasks: tuple[SchedTask, ...]
    arcs: tuple[tuple[str, str], ...]
    exclusions: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        ids = [t.id for t in self.tasks]
        if len(set(ids)) != len(ids):
            raise ValidationError("task ids must be unique")
        known = set(ids)
        for a, b in list(self.arcs) + list(self.exclusions):
            if a not in known or b not in known:
                raise ValidationError(f"relation ({a}, {b}) names an unknown task")
            if a == b:
                raise ValidationError(f"relation ({a}, {b}) is a self-loop")

    @property
    def ordered(self) -> list[SchedTask]:
        """Tasks in canonical ``(job, stage, id)`` order."""
        return sorted(self.tasks, key=lambda t: (t.job, t.stage, t.id))

    @classmethod
    def with_default_exclusions(
        cls, tasks: Iterable[SchedTask], arcs: Iterable[tuple[str, str]]
    ) -> "SchedulingProblem":
        tasks = tuple(sorted(tasks, key=lambda t: (t.job, t.stage, t.id)))
        pairs = tuple(
            (a.id, b.id) for a, b in itertools.combinations(tasks, 2) if conflicting(a, b)
        )
        return cls(tasks=tasks, arcs=tuple(arcs), exclusions=pairs)


@dataclass(frozen=True)
class JobSpec:
    """Durations of one job; ``None`` means the stage is absent."""

    arm: int
    s3_ms: int
    s1_ms: int | None = None
    s2_ms: int | None = None
    part: int | None = None


def problem_from_jobs(jobs: Sequence[JobSpec], allow_parallel_s3: bool = False) -> SchedulingProblem:
    """Jobs listed in removal order become tasks, arcs and exclusions.

    Arcs: stage 1 before 2 before 3 within a job; consecutive removals in
    order; a tool change waits for its arm's previous removal; a stage turn
    waits for the previous removal. With ``allow_parallel_s3`` removals
    are only chained per arm.
    """
    tasks: list[SchedTask] = []
    arcs: list[tuple[str, str]] = []
    last_s3: str | None = None
    last_s3_on: dict[int, str] = {}
    for i, job in enumerate(jobs):
        stage_ids = []
        for stage, ms in ((1, job.s1_ms), (2, job.s2_ms), (3, job.s3_ms)):
            if ms is None:
                continue
            tid = f"J{i + 1}.S{stage}"
            tasks.append(SchedTask(tid, i, stage, resource_for(stage, job.arm), int(ms), job.part))
            stage_ids.append(tid)
        arcs += list(zip(stage_ids, stage_ids[1:]))
        s3 = stage_ids[-1]
        if job.s1_ms is not None and job.arm in last_s3_on:
            arcs.append((last_s3_on[job.arm], f"J{i + 1}.S1"))
        if job.s2_ms is not None and last_s3 is not None:
            arcs.append((last_s3, f"J{i + 1}.S2"))
        chain_from = last_s3_on.get(job.arm) if allow_parallel_s3 else last_s3
        if chain_from is not None:
            arcs.append((chain_from, s3))
        last_s3 = s3
        last_s3_on[job.arm] = s3
    return SchedulingProblem.with_default_exclusions(tasks, dict.fromkeys(arcs))


def build_jobs(
    task_plan: TaskPlan,
    motion_plan: MotionPlan,
    removal_order: Sequence[int] | None = None,
    allow_parallel_s3: bool = False,
) -> SchedulingProblem:
    removal = list(task_plan.order)[::-1]
    if removal_order is not None and list(removal_order) != removal:
        raise InconsistentPlan("removal order does not match the task plan")
    records = motion_plan.records
    if [r.part for r in records] != removal or [t.part for t in task_plan.tasks] != removal:
        raise InconsistentPlan("task plan and motion plan cover different removals")
    jobs = []
    for task, rec in zip(task_plan.tasks, records):
        if task.arm != rec.arm:
            raise InconsistentPlan(f"part {task.part}: arm differs between plans")
        jobs.append(
            JobSpec(
                arm=rec.arm,
                s3_ms=rec.duration_ms,
                s1_ms=rec.toolchange_ms if rec.toolchange_before else None,
                s2_ms=rec.pose_adjust_ms if rec.pose_adjust_needed else None,
                part=rec.part,
            )
        )
    return problem_from_jobs(jobs, allow_parallel_s3)


@dataclass(frozen=True)
class Schedule:
    tasks: tuple[SchedTask, ...]
    starts: dict[str, int]
    makespan: int
    optimal: bool = True

    def end(self, task_id: str) -> int:
        task = next(t for t in self.tasks if t.id == task_id)
        return self.starts[task_id] + task.duration

    def stage3_order(self) -> list[int | None]:
        s3 = sorted((t for t in self.tasks if t.stage == 3), key=lambda t: self.starts[t.id])
        return [t.part for t in s3]

    def to_dict(self) -> dict[str, Any]:
        rows = sorted(self.tasks, key=lambda t: (self.starts[t.id], t.job, t.stage))
        return {
            "makespan_ms": self.makespan,
            "optimal": self.optimal,
            "tasks": [
                {
                    "id": t.id,
                    "job": t.job,
                    "part": t.part,
                    "stage": t.stage,
                    "resource": t.resource,
                    "start_ms": self.starts[t.id],
                    "end_ms": self.starts[t.id] + t.duration,
                }
                for t in rows
            ],
        }


class _Graph:
    """Index form of a problem: tasks in canonical order, adjacency lists."""

    def __init__(self, problem: SchedulingProblem):
        self.tasks = problem.ordered
        self.index = {t.id: k for k, t in enumerate(self.tasks)}
        self.dur = [t.duration for t in self.tasks]
        n = len(self.tasks)
        self.succ: list[list[int]] = [[] for _ in range(n)]
        for a, b in problem.arcs:
            self.succ[self.index[a]].append(self.index[b])
        self.pairs = sorted(
            tuple(sorted((self.index[a], self.index[b]))) for a, b in problem.exclusions
        )

    def earliest_starts(self, extra: Sequence[tuple[int, int]] = ()) -> list[int] | None:
        """Longest-path start times, or ``None`` when the arcs contain a cycle."""
        n = len(self.tasks)
        succ = [list(s) for s in self.succ]
        for a, b in extra:
            succ[a].append(b)
        indeg = [0] * n
        for s in succ:
            for b in s:
                indeg[b] += 1
        ready = [k for k in range(n) if indeg[k] == 0]
        es = [0] * n
        seen = 0
        while ready:
            a = ready.pop()
            seen += 1
            end = es[a] + self.dur[a]
            for b in succ[a]:
                if end > es[b]:
                    es[b] = end
                indeg[b] -= 1
                if indeg[b] == 0:
                    ready.append(b)
        return es if seen == n else None

    def schedule(self, es: Sequence[int], optimal: bool) -> Schedule:
        starts = {t.id: int(s) for t, s in zip(self.tasks, es)}
        makespan = max((s + d for s, d in zip(es, self.dur)), default=0)
        return Schedule(tuple(self.tasks), starts, int(makespan), optimal)


class _Timeout(Exception):
    pass


def solve(problem: SchedulingProblem, time_limit_s: float | None = None) -> Schedule:
    """Branch and bound for the minimal ``(makespan, start vector)``.

    On timeout the best schedule found so far is returned with
    ``optimal=False``; :class:`SchedulingTimeout` is raised when none was
    found yet.
    """
    g = _Graph(problem)
    root = g.earliest_starts()
    if root is None:
        raise CyclicPrecedence("precedence arcs contain a cycle")
    dur = g.dur
    succ = g.succ
    extra: list[list[int]] = [[] for _ in dur]
    deadline = None if time_limit_s is None else time.perf_counter() + time_limit_s
    best: list[tuple[int, tuple[int, ...]] | None] = [None]

    def push(es: list[int], a: int, b: int) -> None:
        # raise b and everything downstream of it after adding a -> b
        stack = [(a, b)]
        while stack:
            u, v = stack.pop()
            end = es[u] + dur[u]
            if end > es[v]:
                es[v] = end
                stack.extend((v, w) for w in succ[v])
                stack.extend((v, w) for w in extra[v])

    def first_conflict(es: list[int]) -> tuple[int, int] | None:
        hit = None
        for i, j in g.pairs:
            if es[i] < es[j] + dur[j] and es[j] < es[i] + dur[i]:
                key = (min(es[i], es[j]), i, j)
                if hit is None or key < hit[0]:
                    hit = (key, i, j)
        return None if hit is None else (hit[1], hit[2])

    def dfs(es: list[int]) -> None:
        if deadline is not None and time.perf_counter() > deadline:
            raise _Timeout
        key = (max((s + d for s, d in zip(es, dur)), default=0), tuple(es))
        if best[0] is not None and key >= best[0]:
            return
        pair = first_conflict(es)
        if pair is None:
            best[0] = key
            return
        i, j = pair
        # canonical order puts the earlier job first
        for a, b in ((i, j), (j, i)):
            child = list(es)
            extra[a].append(b)
            push(child, a, b)
            dfs(child)
            extra[a].pop()

    try:
        dfs(list(root))
    except _Timeout:
        if best[0] is None:
            raise SchedulingTimeout(f"no schedule within {time_limit_s} s") from None
        return g.schedule(best[0][1], optimal=False)
    return g.schedule(best[0][1], optimal=True)


def oracle_solve(
    problem: SchedulingProblem, horizon: int | None = None, max_tasks: int = 6
) -> Schedule:
    """Enumerate every orientation of every exclusion pair (small instances only).

    Pairs already ordered by the precedence arcs are fixed, since the
    opposite orientation closes a cycle.
    """
    if len(problem.tasks) > max_tasks:
        raise TooLarge(f"{len(problem.tasks)} tasks exceed the oracle limit of {max_tasks}")
    g = _Graph(problem)
    n = len(g.tasks)
    if g.earliest_starts() is None:
        raise CyclicPrecedence("precedence arcs contain a cycle")
    if horizon is None:
        horizon = sum(g.dur)
    reach = [[False] * n for _ in range(n)]
    for a in range(n):
        stack = list(g.succ[a])
        while stack:
            b = stack.pop()
            if not reach[a][b]:
                reach[a][b] = True
                stack.extend(g.succ[b])
    fixed, free = [], []
    for i, j in g.pairs:
        if reach[i][j]:
            fixed.append((i, j))
        elif reach[j][i]:
            fixed.append((j, i))
        else:
            free.append((i, j))
    best = None
    for bits in itertools.product((0, 1), repeat=len(free)):
        arcs = fixed + [(i, j) if bit == 0 else (j, i) for (i, j), bit in zip(free, bits)]
        es = g.earliest_starts(arcs)
        if es is None:
            continue
        makespan = max((s + d for s, d in zip(es, g.dur)), default=0)
        if makespan > horizon:
            continue
        key = (makespan, tuple(es))
        if best is None or key < best:
            best = key
    if best is None:
        raise SchedulingTimeout(f"no schedule within horizon {horizon} ms")
    return g.schedule(best[1], optimal=True)


def validate_schedule(problem: SchedulingProblem, schedule: Schedule) -> list[str]:
    """Every violated constraint as a message; empty means valid."""
    out = []
    by_id = {t.id: t for t in problem.tasks}
    if set(schedule.starts) != set(by_id):
        return ["schedule and problem cover different tasks"]
    start = schedule.starts
    end = {k: start[k] + t.duration for k, t in by_id.items()}
    for k, s in start.items():
        if s < 0:
            out.append(f"{k} starts before 0")
    for a, b in problem.arcs:
        if end[a] > start[b]:
            out.append(f"arc {a} -> {b}: {b} starts at {start[b]} before {a} ends at {end[a]}")
    pairs = set(tuple(sorted(p)) for p in problem.exclusions)
    pairs |= {
        tuple(sorted((a.id, b.id)))
        for a, b in itertools.combinations(problem.tasks, 2)
        if a.resource == b.resource
    }
    for a, b in sorted(pairs):
        if start[a] < end[b] and start[b] < end[a]:
            out.append(f"{a} and {b} overlap")
    expected = max(end.values(), default=0)
    if schedule.makespan != expected:
        out.append(f"makespan {schedule.makespan} != latest end {expected}")
    return out


def left_shift_violations(problem: SchedulingProblem, schedule: Schedule) -> list[str]:
    """Tasks that could start earlier with every exclusion orientation held fixed."""
    start = schedule.starts
    by_id = {t.id: t for t in problem.tasks}
    preds: dict[str, list[str]] = {k: [] for k in by_id}
    for a, b in problem.arcs:
        preds[b].append(a)
    for a, b in problem.exclusions:
        first, second = (a, b) if start[a] < start[b] else (b, a)
        preds[second].append(first)
    out = []
    for k, t in by_id.items():
        bound = max((start[p] + by_id[p].duration for p in preds[k]), default=0)
        if start[k] > bound:
            out.append(f"{k} could start at {bound} instead of {start[k]}")
    return out


class Scheduler(BaseEstimator):
    """Estimator wrapper around :func:`build_jobs` and :func:`solve`.

    Attributes
    ----------
    problem_ : SchedulingProblem
    schedule_ : Schedule
    """

    def __init__(self, time_limit_s: float | None = 60.0, allow_parallel_s3: bool = False):
        self.time_limit_s = time_limit_s
        self.allow_parallel_s3 = allow_parallel_s3

    def fit(self, task_plan: TaskPlan, motion_plan: MotionPlan) -> "Scheduler":
        self.problem_ = build_jobs(task_plan, motion_plan, allow_parallel_s3=self.allow_parallel_s3)
        self.schedule_ = solve(self.problem_, self.time_limit_s)
        return self
