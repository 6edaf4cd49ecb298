"""Builders and brute-force oracles shared by the test modules."""

from __future__ import annotations

import itertools
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from disassembly_planner.model import DIRECTIONS, AssemblyModel, model_from_dict
from disassembly_planner.scheduler import JobSpec, SchedTask, SchedulingProblem, problem_from_jobs

DATA = Path(__file__).resolve().parents[1] / "src" / "disassembly_planner" / "data"
FIG3 = DATA / "fig3.json"
CORPUS = sorted((DATA / "corpus").glob("*.json"))

TASK_OF = {"screw": "screw_removal", "bolt": "screw_removal", "nut": "screw_removal",
           "regular": "grasp", "base": "grasp"}


def part(pid: int, kind: str = "regular", com=(0, 0, 0), dirs=("+Z",), arm1=(0,), arm2=(0,),
         axis=None, task_kind: str | None = None) -> dict[str, Any]:
    entry = {
        "id": pid,
        "kind": kind,
        "task_kind": task_kind or TASK_OF[kind],
        "com_mm": list(com),
        "removal_dirs": [] if kind == "base" else list(dirs),
        "orientations": {"arm1": [] if kind == "base" else list(arm1),
                         "arm2": [] if kind == "base" else list(arm2)},
    }
    if kind in ("screw", "bolt", "nut"):
        entry["fastener_axis"] = list(axis or (0, 0, 1))
    return entry


def build(parts: Sequence[dict], contact=(), connection=(), constraint=(), interference=(),
          targets=()) -> AssemblyModel:
    return model_from_dict({
        "eta": len(parts),
        "parts": list(parts),
        "contact": [list(p) for p in contact],
        "connection": [list(p) for p in connection],
        "constraint": [list(p) for p in constraint],
        "interference": [list(t) for t in interference],
        "recovery_targets": list(targets),
    })


def chain_model() -> AssemblyModel:
    """base(1) - A(2) - B(3) - C(4) touching in a line."""
    parts = [part(1, "base", (0, 0, 0))] + [part(i, "regular", (0, 0, 10 * i)) for i in (2, 3, 4)]
    return build(parts, contact=[(1, 2), (2, 3), (3, 4)])


def random_small_model(rng: np.random.Generator, eta: int) -> AssemblyModel:
    """Random valid model with ``eta`` parts; part 1 is the base."""
    kinds = ["base"] + [str(rng.choice(["screw", "regular", "regular"])) for _ in range(eta - 1)]
    parts = []
    for pid, kind in enumerate(kinds, start=1):
        dirs = list(rng.choice(DIRECTIONS, size=int(rng.integers(1, 3)), replace=False))
        parts.append(part(pid, kind, tuple(rng.integers(-50, 50, size=3)), dirs=dirs,
                          arm1=(int(rng.choice([0, 90, 180])),),
                          arm2=(int(rng.choice([0, 90, 180])),)))
    parts[1]["com_mm"] = [100, 100, 100]  # keeps the distance scale positive
    ids = range(1, eta + 1)
    fastener = {p["id"] for p in parts if p["kind"] == "screw"}
    contact, connection, constraint, interference = [], [], [], []
    for u, v in itertools.combinations(ids, 2):
        r = rng.random()
        if (u in fastener) != (v in fastener) and r < 0.35:
            connection.append((u, v))
        elif r < 0.5:
            contact.append((u, v))
        if u != 1 and v != 1 and rng.random() < 0.15:
            constraint.append((u, v))
    for u in ids:
        for v in ids:
            if u != v and u != 1 and rng.random() < 0.2:
                interference.append((u, v, str(rng.choice(DIRECTIONS))))
    targets = [int(rng.integers(2, eta + 1))] if rng.random() < 0.5 else []
    return build(parts, contact, connection, constraint, interference, targets)


# ---------------------------------------------------------------- oracles


def replay_feasible(order: Sequence[int], model: AssemblyModel) -> bool:
    """Step through the removals with plain sets and the raw matrices."""
    rel = model.relations
    remaining = set(range(1, model.eta + 1))
    for pid in reversed(list(order)):
        u = pid - 1
        if any(rel.constraint[v - 1, u] for v in remaining if v != pid):
            return False
        if not model.part(pid).is_fastener and any(
            rel.connection[u, v - 1] and model.part(v).is_fastener for v in remaining
        ):
            return False
        dirs = model.part(pid).geometry.removal_directions
        if not any(
            not any(rel.interference[u, v - 1, DIRECTIONS.index(d)] for v in remaining if v != pid)
            for d in dirs
        ):
            return False
        remaining.discard(pid)
    return True


def replay_stable(order: Sequence[int], model: AssemblyModel) -> bool:
    """After each removal, BFS from the base over what is left."""
    rel = model.relations
    skeleton = rel.contact | rel.connection
    remaining = set(range(1, model.eta + 1))
    for pid in reversed(list(order)):
        remaining.discard(pid)
        seen, stack = {model.base_id}, [model.base_id]
        while stack:
            u = stack.pop()
            for v in remaining:
                if v not in seen and skeleton[u - 1, v - 1]:
                    seen.add(v)
                    stack.append(v)
        if seen != remaining:
            return False
    return True


def brute_fronts(F: np.ndarray) -> list[list[int]]:
    F = np.asarray(F, dtype=float)
    left = set(range(len(F)))
    fronts = []
    while left:
        front = sorted(
            i for i in left
            if not any((F[j] <= F[i]).all() and (F[j] < F[i]).any() for j in left if j != i)
        )
        fronts.append(front)
        left -= set(front)
    return fronts


# ---------------------------------------------------------------- scheduling


def random_job_instance(rng: np.random.Generator, max_tasks: int = 6) -> SchedulingProblem:
    """Job-structured instance as built from real plans."""
    jobs: list[JobSpec] = []
    count = 0
    while True:
        s1 = int(rng.integers(1, 9)) * 500 if rng.random() < 0.5 else None
        s2 = 2000 if rng.random() < 0.4 else None
        size = 1 + (s1 is not None) + (s2 is not None)
        if count + size > max_tasks:
            break
        jobs.append(JobSpec(arm=int(rng.integers(1, 3)), s3_ms=int(rng.integers(1, 13)) * 500,
                            s1_ms=s1, s2_ms=s2))
        count += size
        if rng.random() < 0.25:
            break
    return problem_from_jobs(jobs, allow_parallel_s3=bool(rng.random() < 0.2))


def random_free_instance(rng: np.random.Generator, max_tasks: int = 6) -> SchedulingProblem:
    """Arbitrary tasks with a random acyclic arc set and the default exclusions."""
    n = int(rng.integers(0, max_tasks + 1))
    tasks = []
    for k in range(n):
        stage = int(rng.integers(1, 4))
        arm = int(rng.integers(1, 3))
        res = "ExternalAxis_S2" if stage == 2 else f"Arm{arm}_S{stage}"
        tasks.append(SchedTask(f"T{k}", k, stage, res, int(rng.integers(1, 9)) * 1000))
    arcs = [(f"T{a}", f"T{b}") for a, b in itertools.combinations(range(n), 2)
            if rng.random() < 0.2]
    return SchedulingProblem.with_default_exclusions(tasks, arcs)


# ---------------------------------------------------------------- acceptance

ACCEPTANCE_LINES: list[str] = []


def verdict(number: int | str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
