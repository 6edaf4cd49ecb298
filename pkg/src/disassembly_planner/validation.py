"""Input checks shared by the estimators and planners."""

from __future__ import annotations

from typing import Any, Sequence

from .exceptions import LengthMismatch, ValidationError
from .model import AssemblyModel


def check_model(model: Any) -> AssemblyModel:
    if not isinstance(model, AssemblyModel):
        raise TypeError(f"expected an AssemblyModel, got {type(model).__name__}")
    return model


def check_order(order: Sequence[int], model: AssemblyModel) -> list[int]:
    """Return ``order`` as a list after checking it permutes the removable parts."""
    check_model(model)
    try:
        out = [int(x) for x in order]
    except (TypeError, ValueError):
        raise ValidationError("order must be a sequence of part ids") from None
    if sorted(out) != sorted(model.removable_ids):
        raise ValidationError(
            f"order must be a permutation of the {model.eta - 1} removable part ids"
        )
    return out


def check_assignment(arms: Sequence[int], n_tasks: int | None = None) -> list[int]:
    out = [int(a) for a in arms]
    if n_tasks is not None and len(out) != n_tasks:
        raise LengthMismatch(f"{len(out)} arms for {n_tasks} tasks")
    if any(a not in (1, 2) for a in out):
        raise ValidationError("arm ids must be 1 or 2")
    return out
