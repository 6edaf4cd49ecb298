"""End-to-end planning: sequence, arm assignment, motion, schedule, artifacts."""

from __future__ import annotations

import contextlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

import numpy as np

from .ccc import initialize_population, random_population
from .exceptions import ParseError, PlannerError, ValidationError
from .gantt import render_svg
from .model import AssemblyModel, load_model
from .moga import GaConfig, TraceRow
from .motion import MotionConfig, MotionPlan, can_hold, make_motion_plan
from .scheduler import Schedule, SchedulingProblem, build_jobs, solve, validate_schedule
from .sequence import SequencePlan, assess, plan_sequence
from .tasks import TaskPlan, TaskSolution, make_task_plan, solve_assignment

GA_KEYS = ("population_size", "generations", "crossover_rate", "mutation_rate", "reference_divisions")


@dataclass(frozen=True)
class SchedulerConfig:
    time_limit_s: float | None = 60.0
    allow_parallel_s3: bool = False


@dataclass(frozen=True)
class PipelineConfig:
    """Settings for every layer. ``seed`` drives all random streams."""

    seed: int = 0
    ga: Mapping[str, Any] = field(default_factory=dict)
    inner_ga: Mapping[str, Any] = field(
        default_factory=lambda: {"population_size": 20, "generations": 20}
    )
    task_ga: Mapping[str, Any] = field(default_factory=dict)
    motion: MotionConfig = field(default_factory=MotionConfig)
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    write_gantt: bool = True

    def ga_config(self, section: str) -> GaConfig:
        return GaConfig(**getattr(self, section), rng_seed=self.seed)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        known = {"seed", "ga", "inner_ga", "task_ga", "motion", "scheduler", "io"}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config sections: {sorted(extra)}")
        kw: dict[str, Any] = {}
        if "seed" in data:
            if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
                raise ValidationError("seed must be an integer")
            kw["seed"] = data["seed"]
        for section in ("ga", "inner_ga", "task_ga"):
            if section in data:
                bad = set(data[section]) - set(GA_KEYS)
                if bad:
                    raise ValidationError(f"unknown {section} settings: {sorted(bad)}")
                kw[section] = dict(data[section])
        if "motion" in data:
            kw["motion"] = MotionConfig.from_dict(data["motion"])
        if "scheduler" in data:
            try:
                kw["scheduler"] = SchedulerConfig(**data["scheduler"])
            except TypeError as exc:
                raise ValidationError(f"scheduler section: {exc}") from None
        if "io" in data:
            bad = set(data["io"]) - {"write_gantt"}
            if bad:
                raise ValidationError(f"unknown io settings: {sorted(bad)}")
            kw["write_gantt"] = bool(data["io"].get("write_gantt", True))
        config = cls(**kw)
        for section in ("ga", "inner_ga", "task_ga"):
            try:
                config.ga_config(section)
            except ValueError as exc:
                raise ValidationError(f"{section}: {exc}") from None
        return config

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            **{
                section: {k: getattr(self.ga_config(section), k) for k in GA_KEYS}
                for section in ("ga", "inner_ga", "task_ga")
            },
            "motion": self.motion.to_dict(),
            "scheduler": {f.name: getattr(self.scheduler, f.name) for f in fields(self.scheduler)},
            "io": {"write_gantt": self.write_gantt},
        }


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ParseError("config must be a JSON object")
    return PipelineConfig.from_dict(data)


def with_overrides(config: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """Apply command-line style overrides; ``None`` values are ignored."""
    cfg = config
    if overrides.get("seed") is not None:
        cfg = replace(cfg, seed=int(overrides["seed"]))
    ga = dict(cfg.ga)
    for key in ("population_size", "generations"):
        if overrides.get(key) is not None:
            ga[key] = int(overrides[key])
    cfg = replace(cfg, ga=ga)
    if overrides.get("stage_enabled") is not None:
        cfg = replace(cfg, motion=replace(cfg.motion, stage_enabled=bool(overrides["stage_enabled"])))
    if overrides.get("time_limit_s") is not None:
        cfg = replace(cfg, scheduler=replace(cfg.scheduler, time_limit_s=float(overrides["time_limit_s"])))
    return cfg


@contextlib.contextmanager
def _layer(name: str) -> Iterator[None]:
    try:
        yield
    except PlannerError as exc:
        raise type(exc)(f"{name} layer: {exc}") from exc


@dataclass
class PipelineResult:
    model: AssemblyModel
    config: PipelineConfig
    sequence: SequencePlan
    task_solution: TaskSolution
    task_plan: TaskPlan
    motion_plan: MotionPlan
    problem: SchedulingProblem
    schedule: Schedule
    stage_held: bool = False

    @property
    def removal_order(self) -> list[int]:
        return list(reversed(self.sequence.best_order))

    def report(self, model_name: str = "") -> dict[str, Any]:
        seq_trace = self.sequence.result.trace
        task_trace = self.task_solution.result.trace if self.task_solution.result else []
        return {
            "model": model_name,
            "eta": self.model.eta,
            "seed": self.config.seed,
            "removal_order": self.removal_order,
            "chromosome": list(self.sequence.best_order),
            "arms": list(self.task_plan.arms),
            "sequence_objectives": _floats(self.sequence.best_objectives),
            "task_objectives": _floats(self.task_solution.objectives),
            "makespan_ms": self.schedule.makespan,
            "makespan_s": self.schedule.makespan / 1000.0,
            "schedule_optimal": self.schedule.optimal,
            "tool_change_count": self.task_plan.tool_change_count,
            "tool_changes_per_arm": {
                str(k): v for k, v in self.task_plan.tool_changes_per_arm().items()
            },
            "pose_adjust_count": self.motion_plan.pose_adjust_count,
            "stage_enabled": self.config.motion.stage_enabled,
            "stage_held": self.stage_held,
            "initial_availability": self.sequence.initial_availability,
            "sequence_trace": _trace(seq_trace),
            "task_trace": _trace(task_trace),
            "config": self.config.to_dict(),
        }


def _floats(values: Any) -> list[float]:
    return [float(v) for v in np.asarray(values).ravel()]


def _trace(rows: Sequence[TraceRow]) -> list[dict[str, Any]]:
    return [
        {"generation": r.generation, "best_scalar": r.best_scalar, "best": list(r.best_per_objective)}
        for r in rows
    ]


def run(model: AssemblyModel, config: PipelineConfig | None = None) -> PipelineResult:
    """Sequence GA, then the task GA on the chosen order, motion model and scheduler."""
    config = config or PipelineConfig()
    with _layer("sequence"):
        sequence = plan_sequence(model, config.ga_config("ga"), config.ga_config("inner_ga"))
        order = sequence.best_order
        verdict = assess(order, model)
        if not verdict.admissible:
            raise PlannerError(f"selected order is not admissible: {verdict.first_violation}")
    with _layer("task"):
        solution = solve_assignment(order, model, config.ga_config("task_ga"))
        task_plan = make_task_plan(
            order, solution.arms, model, config.motion.first_mount_is_change
        )
    with _layer("motion"):
        holds = [False]
        if (
            config.motion.stage_enabled
            and config.motion.hold_if_faster
            and can_hold(task_plan, model, config.motion)
        ):
            holds.append(True)
    best = None
    for hold in holds:
        with _layer("motion"):
            motion_plan = make_motion_plan(task_plan, model, config.motion, hold_stage=hold)
        with _layer("schedule"):
            problem = build_jobs(
                task_plan,
                motion_plan,
                removal_order=list(reversed(order)),
                allow_parallel_s3=config.scheduler.allow_parallel_s3,
            )
            schedule = solve(problem, config.scheduler.time_limit_s)
            problems = validate_schedule(problem, schedule)
            if problems:
                raise PlannerError("invalid schedule: " + "; ".join(problems[:3]))
        if best is None or schedule.makespan < best[2].makespan:
            best = (motion_plan, problem, schedule, hold)
    motion_plan, problem, schedule, held = best
    return PipelineResult(
        model, config, sequence, solution, task_plan, motion_plan, problem, schedule, held
    )


def dumps(data: Any) -> str:
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def sequence_front(result: PipelineResult) -> dict[str, Any]:
    seq = result.sequence
    return {
        "objectives": ["difficulty", "efficiency", "priority", "allocation"],
        "best": {
            "chromosome": list(seq.best_order),
            "removal_order": list(reversed(seq.best_order)),
            "objectives": _floats(seq.best_objectives),
        },
        "front": [
            {
                "chromosome": list(x),
                "removal_order": list(reversed(x)),
                "objectives": _floats(f),
            }
            for x, f in sorted(
                zip(seq.front_orders, seq.front_objectives), key=lambda p: (tuple(p[1]), p[0])
            )
        ],
    }


ARTIFACTS = (
    "sequence_front.json",
    "task_plan.json",
    "motion_plan.json",
    "schedule.json",
    "gantt.svg",
    "report.json",
)


def write_artifacts(result: PipelineResult, out_dir: str | Path, model_name: str = "") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "sequence_front.json": dumps(sequence_front(result)),
        "task_plan.json": dumps(result.task_plan.to_dict()),
        "motion_plan.json": dumps(result.motion_plan.to_dict()),
        "schedule.json": dumps(result.schedule.to_dict()),
        "report.json": dumps(result.report(model_name)),
    }
    if result.config.write_gantt:
        files["gantt.svg"] = render_svg(result.schedule)
    written = []
    for name in ARTIFACTS:
        if name in files:
            path = out / name
            path.write_text(files[name], encoding="utf-8")
            written.append(path)
    return written


def plan_file(
    model_path: str | Path, config: PipelineConfig, out_dir: str | Path
) -> tuple[PipelineResult, list[Path]]:
    model = load_model(model_path)
    result = run(model, config)
    return result, write_artifacts(result, out_dir, Path(model_path).stem)


def availability(model: AssemblyModel, population: Sequence[Sequence[int]]) -> float | None:
    if not population:
        return None
    return sum(assess(x, model).admissible for x in population) / len(population)


def compare_init(
    model: AssemblyModel, n_genes: int, seeds: Sequence[int]
) -> dict[str, dict[str, Any]]:
    """Availability of the graph-guided and random-permutation initializers.

    Availability is ``None`` (reported as n/a) when no chromosome is generated.
    """
    makers = {"ccc": initialize_population, "random": random_population}
    table = {}
    for name, make in makers.items():
        per_seed = [availability(model, make(model, n_genes, s)) for s in seeds]
        known = [a for a in per_seed if a is not None]
        table[name] = {
            "n_genes": n_genes,
            "seeds": list(seeds),
            "per_seed": per_seed,
            "mean": float(np.mean(known)) if known else None,
        }
    return table


def schedule_from_files(
    task_plan_path: str | Path, motion_plan_path: str | Path, config: PipelineConfig
) -> tuple[SchedulingProblem, Schedule]:
    def read(path: str | Path) -> Any:
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path} is not valid JSON: {exc}") from None

    task_plan = TaskPlan.from_dict(read(task_plan_path))
    motion_plan = MotionPlan.from_dict(read(motion_plan_path))
    with _layer("schedule"):
        problem = build_jobs(
            task_plan, motion_plan, allow_parallel_s3=config.scheduler.allow_parallel_s3
        )
        return problem, solve(problem, config.scheduler.time_limit_s)
