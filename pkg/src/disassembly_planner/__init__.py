"""Disassembly planning for a two-arm cell with a rotary stage.

Layers: removal-sequence search, arm assignment, a parametric motion model
and a makespan-minimal scheduler, each usable on its own.
"""

from .exceptions import (
    InfeasibleError,
    ParseError,
    PlannerError,
    SchedulingTimeout,
    ValidationError,
)
from .model import AssemblyModel, load_model, save_model
from .motion import MotionConfig, MotionPlan, MotionPlanner, make_motion_plan
from .pipeline import PipelineConfig, compare_init, run
from .scheduler import Schedule, Scheduler, build_jobs, oracle_solve, solve
from .sequence import SequencePlanner, assess, eval_sequence
from .tasks import TaskPlan, TaskPlanner, eval_assignment

__version__ = "0.1.0"

__all__ = [
    "AssemblyModel",
    "InfeasibleError",
    "MotionConfig",
    "MotionPlan",
    "MotionPlanner",
    "ParseError",
    "PipelineConfig",
    "PlannerError",
    "Schedule",
    "Scheduler",
    "SchedulingTimeout",
    "SequencePlanner",
    "TaskPlan",
    "TaskPlanner",
    "ValidationError",
    "assess",
    "build_jobs",
    "compare_init",
    "eval_assignment",
    "eval_sequence",
    "load_model",
    "make_motion_plan",
    "oracle_solve",
    "run",
    "save_model",
    "solve",
]
