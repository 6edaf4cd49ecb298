"""Parametric motion model: stage angles, camera alignment and task durations.

Travel is a straight line between part centres at a constant arm speed;
each task kind adds a fixed operation time. The rotary stage turns about
``+Z`` and starts at 0 degrees.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InconsistentPlan, NoFacingAngle, ParseError, ValidationError
from .model import (
    ARMS,
    TASK_KINDS,
    AssemblyModel,
    Part,
    circular_distance,
    normalize_angle,
    smallest_rotation,
)
from .tasks import TaskPlan


def _default_grid() -> tuple[float, ...]:
    return tuple(float(a) for a in range(0, 360, 45))


@dataclass(frozen=True)
class MotionConfig:
    """Motion-model constants. All defaults except ``pose_adjust_time_ms`` are
    plausible shop-floor values, not measurements."""

    arm_speed_mm_s: float = 250.0
    op_time_ms: Mapping[str, int] = field(
        default_factory=lambda: {"grasp": 4000, "suction": 3000, "screw_removal": 8000}
    )
    toolchange_time_ms: int = 10000
    pose_adjust_time_ms: int = 2000
    cameras: Mapping[str, tuple[float, float, float]] = field(
        default_factory=lambda: {"top": (0.0, 0.0, 1.0), "side": (-1.0, 0.0, 0.0)}
    )
    camera_tolerance_deg: float = 10.0
    angle_grid: tuple[float, ...] = field(default_factory=_default_grid)
    home_mm: Mapping[int, tuple[float, float, float]] = field(
        default_factory=lambda: {1: (0.0, -300.0, 150.0), 2: (0.0, 300.0, 150.0)}
    )
    stage_enabled: bool = True
    # extra handling time when the stage is fixed and the part's orientation
    # list for the assigned arm does not include 0 degrees
    misorientation_penalty_ms: int = 6000
    first_mount_is_change: bool = True
    # with the stage enabled, also schedule the plan that keeps it at 0 degrees
    # and keep whichever finishes first
    hold_if_faster: bool = True

    def __post_init__(self) -> None:
        if self.arm_speed_mm_s <= 0:
            raise ValidationError("arm_speed_mm_s must be positive")
        missing = set(TASK_KINDS) - set(self.op_time_ms)
        if missing:
            raise ValidationError(f"op_time_ms lacks {sorted(missing)}")
        if any(v <= 0 for v in self.op_time_ms.values()):
            raise ValidationError("operation times must be positive")
        for name in ("toolchange_time_ms", "pose_adjust_time_ms"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")
        if self.misorientation_penalty_ms < 0:
            raise ValidationError("misorientation_penalty_ms must be non-negative")
        if not self.cameras:
            raise ValidationError("at least one camera direction is required")
        for name, vec in self.cameras.items():
            if np.linalg.norm(vec) == 0:
                raise ValidationError(f"camera {name!r} has a zero direction")
        if not self.angle_grid:
            raise ValidationError("angle_grid must not be empty")
        if set(self.home_mm) != set(ARMS):
            raise ValidationError("home_mm needs a position for arms 1 and 2")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MotionConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown motion settings: {sorted(extra)}")
        kw = dict(data)
        if "op_time_ms" in kw:
            kw["op_time_ms"] = {**cls().op_time_ms, **kw["op_time_ms"]}
        if "cameras" in kw:
            kw["cameras"] = {k: tuple(float(c) for c in v) for k, v in kw["cameras"].items()}
        if "angle_grid" in kw:
            kw["angle_grid"] = tuple(float(a) for a in kw["angle_grid"])
        if "home_mm" in kw:
            kw["home_mm"] = {int(k): tuple(float(c) for c in v) for k, v in kw["home_mm"].items()}
        return cls(**kw)

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["op_time_ms"] = dict(sorted(self.op_time_ms.items()))
        out["cameras"] = {k: list(v) for k, v in sorted(self.cameras.items())}
        out["angle_grid"] = list(self.angle_grid)
        out["home_mm"] = {str(k): list(v) for k, v in sorted(self.home_mm.items())}
        return out


def rotate_z(vec: Any, angle_deg: float) -> np.ndarray:
    t = math.radians(angle_deg)
    c, s = math.cos(t), math.sin(t)
    x, y, z = vec
    return np.array([c * x - s * y, s * x + c * y, z])


def facing_camera(axis: Any, angle_deg: float, config: MotionConfig) -> str | None:
    """Camera the fastener head faces at this stage angle, if any (first by name)."""
    head = rotate_z(axis, angle_deg)
    head = head / np.linalg.norm(head)
    limit = math.cos(math.radians(config.camera_tolerance_deg))
    for name in sorted(config.cameras):
        cam = np.asarray(config.cameras[name], dtype=float)
        if float(head @ cam) / np.linalg.norm(cam) >= limit - 1e-12:
            return name
    return None


def allowed_angles(part: Part, arm: int, config: MotionConfig) -> tuple[float, ...]:
    """Stage angles at which ``arm`` can remove ``part``.

    Fasteners need a grid angle where the head faces a camera. Other parts use
    their orientation list for ``arm``. A disabled stage only offers 0 degrees.
    """
    if arm not in ARMS:
        raise ValidationError(f"arm must be 1 or 2, got {arm}")
    if not config.stage_enabled:
        if part.is_fastener and facing_camera(part.geometry.fastener_axis, 0.0, config) is None:
            raise NoFacingAngle(f"part {part.id}: fastener does not face a camera at 0 deg")
        return (0.0,)
    if part.is_fastener:
        ok = sorted({
            normalize_angle(a)
            for a in config.angle_grid
            if facing_camera(part.geometry.fastener_axis, a, config) is not None
        })
        if not ok:
            raise NoFacingAngle(f"part {part.id}: no grid angle faces a camera")
        return tuple(ok)
    return tuple(sorted({normalize_angle(a) for a in part.geometry.handling_orientations[arm]}))


def choose_stage_angle(
    part: Part, arm: int, current_angle: float, config: MotionConfig
) -> float:
    """Allowed angle for ``part`` nearest to ``current_angle``."""
    return smallest_rotation(allowed_angles(part, arm, config), current_angle)


def plan_stage_angles(
    options: Sequence[Sequence[float]], start: float = 0.0
) -> list[float]:
    """Pick one angle per step with as few stage turns as possible.

    ``options[i]`` lists the admissible angles of step ``i``. Among trajectories
    with the fewest turns, each step takes the nearest admissible angle (smaller
    angle on ties).
    """
    start = normalize_angle(start)
    sets = [sorted({normalize_angle(a) for a in opts}) for opts in options]
    if any(not s for s in sets):
        raise ValidationError("every step needs at least one admissible angle")
    # turns[i][a]: fewest turns over steps i.. when step i is taken at angle a
    turns: list[dict[float, int]] = [{} for _ in sets]
    for i in range(len(sets) - 1, -1, -1):
        for a in sets[i]:
            if i + 1 == len(sets):
                turns[i][a] = 0
            else:
                turns[i][a] = min((b != a) + turns[i + 1][b] for b in sets[i + 1])
    out, current = [], start
    for i, opts in enumerate(sets):
        current = min(
            opts,
            key=lambda a: ((a != current) + turns[i][a], circular_distance(a, current), a),
        )
        out.append(current)
    return out


@dataclass(frozen=True)
class MotionRecord:
    step: int
    part: int
    arm: int
    task_kind: str
    tool: str
    stage_angle_deg: float
    pose_adjust_needed: bool
    camera: str | None
    travel_mm: float
    misoriented: bool
    duration_ms: int
    toolchange_before: bool
    toolchange_ms: int
    pose_adjust_ms: int


@dataclass(frozen=True)
class MotionPlan:
    records: tuple[MotionRecord, ...]
    config: MotionConfig

    @property
    def stage_trajectory(self) -> list[float]:
        """Stage angle before the first task followed by the angle at each task."""
        return [0.0] + [r.stage_angle_deg for r in self.records]

    @property
    def pose_adjust_count(self) -> int:
        return sum(r.pose_adjust_needed for r in self.records)

    @property
    def tool_change_count(self) -> int:
        return sum(r.toolchange_before for r in self.records)

    def toolchange_ms_per_arm(self) -> dict[int, int]:
        out = {a: 0 for a in ARMS}
        for r in self.records:
            out[r.arm] += r.toolchange_ms
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "records": [asdict(r) for r in self.records],
            "stage_trajectory_deg": self.stage_trajectory,
            "toolchange_ms_per_arm": {str(k): v for k, v in self.toolchange_ms_per_arm().items()},
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "MotionPlan":
        try:
            config = MotionConfig.from_dict(data.get("config", {}))
            records = tuple(MotionRecord(**r) for r in data["records"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed motion plan: {exc}") from None
        return cls(records=records, config=config)


def can_hold(task_plan: TaskPlan, model: AssemblyModel, config: MotionConfig) -> bool:
    """True when every fastener in the plan faces a camera at 0 degrees."""
    return all(
        facing_camera(model.part(t.part).geometry.fastener_axis, 0.0, config) is not None
        for t in task_plan.tasks
        if model.part(t.part).is_fastener
    )


def make_motion_plan(
    task_plan: TaskPlan,
    model: AssemblyModel,
    config: MotionConfig | None = None,
    hold_stage: bool = False,
) -> MotionPlan:
    """Durations and stage angles for every task.

    ``hold_stage`` keeps the stage at 0 degrees as if it were disabled, with
    the same misorientation penalties.
    """
    config = config or MotionConfig()
    held = not config.stage_enabled or hold_stage
    if len(task_plan.tasks) != len(task_plan.order):
        raise InconsistentPlan("task plan has a different length than its order")
    removal = list(task_plan.order)[::-1]
    if [t.part for t in task_plan.tasks] != removal:
        raise InconsistentPlan("task records are not in removal order")

    angle_config = replace(config, stage_enabled=False) if held else config
    angles = plan_stage_angles(
        [allowed_angles(model.part(t.part), t.arm, angle_config) for t in task_plan.tasks]
    )
    position = {a: np.asarray(config.home_mm[a], dtype=float) for a in ARMS}
    tool = {a: None for a in ARMS}
    angle = 0.0
    records = []
    for step, task in enumerate(task_plan.tasks):
        part = model.part(task.part)
        new_angle = angles[step]
        adjust = circular_distance(new_angle, angle) > 1e-9
        angle = new_angle

        target = model.com[task.part - 1]
        travel = float(np.linalg.norm(target - position[task.arm]))
        position[task.arm] = target
        misoriented = (
            held
            and not part.is_fastener
            and 0.0 not in {normalize_angle(a) for a in part.geometry.handling_orientations[task.arm]}
        )
        exact = (
            travel / config.arm_speed_mm_s * 1000.0
            + config.op_time_ms[task.task_kind]
            + (config.misorientation_penalty_ms if misoriented else 0)
        )
        # tolerate float noise before rounding up to whole milliseconds
        duration = int(math.ceil(round(exact, 6)))

        prev_tool = tool[task.arm]
        change = prev_tool != task.tool if prev_tool is not None else config.first_mount_is_change
        tool[task.arm] = task.tool
        records.append(
            MotionRecord(
                step=step,
                part=task.part,
                arm=task.arm,
                task_kind=task.task_kind,
                tool=task.tool,
                stage_angle_deg=angle,
                pose_adjust_needed=adjust,
                camera=(
                    facing_camera(part.geometry.fastener_axis, angle, config)
                    if part.is_fastener
                    else None
                ),
                travel_mm=round(travel, 6),
                misoriented=misoriented,
                duration_ms=duration,
                toolchange_before=bool(change),
                toolchange_ms=config.toolchange_time_ms if change else 0,
                pose_adjust_ms=config.pose_adjust_time_ms if adjust else 0,
            )
        )
    return MotionPlan(records=tuple(records), config=config)


class MotionPlanner(BaseEstimator):
    """Estimator wrapper: ``fit`` binds the model, ``transform`` maps a task plan
    to a :class:`MotionPlan`.

    ``config`` takes a :class:`MotionConfig` or a mapping of its fields.
    """

    def __init__(self, config: MotionConfig | Mapping[str, Any] | None = None):
        self.config = config

    def _config(self) -> MotionConfig:
        if self.config is None:
            return MotionConfig()
        if isinstance(self.config, MotionConfig):
            return self.config
        return MotionConfig.from_dict(self.config)

    def fit(self, model: AssemblyModel, y: Any = None) -> "MotionPlanner":
        self.config_ = self._config()
        self.model_ = model
        return self

    def transform(self, task_plan: TaskPlan) -> MotionPlan:
        check_is_fitted(self, "model_")
        return make_motion_plan(task_plan, self.model_, self.config_)
