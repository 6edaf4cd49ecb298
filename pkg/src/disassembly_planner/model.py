"""Assembly description: part labels, geometry, relation matrices and JSON I/O.

Part ids are 1-based (``1..eta``); every matrix is indexed by ``id - 1``.
Units are millimetres and degrees.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import NoOrientation, ParseError, ValidationError

PART_KINDS = ("screw", "bolt", "nut", "regular", "base")
FASTENER_KINDS = frozenset({"screw", "bolt", "nut"})
TASK_KINDS = ("grasp", "suction", "screw_removal")
TOOLS = ("parallel_gripper", "suction_gripper", "air_driver")
TOOL_FOR_TASK = {
    "grasp": "parallel_gripper",
    "suction": "suction_gripper",
    "screw_removal": "air_driver",
}
DIRECTIONS = ("+X", "-X", "+Y", "-Y", "+Z", "-Z")
DIRECTION_VECTORS = {
    "+X": (1.0, 0.0, 0.0),
    "-X": (-1.0, 0.0, 0.0),
    "+Y": (0.0, 1.0, 0.0),
    "-Y": (0.0, -1.0, 0.0),
    "+Z": (0.0, 0.0, 1.0),
    "-Z": (0.0, 0.0, -1.0),
}
ARMS = (1, 2)


def normalize_angle(angle: float) -> float:
    a = math.fmod(float(angle), 360.0)
    if a < 0:
        a += 360.0
    # fmod(-1e-18, 360) + 360 rounds to 360.0
    return 0.0 if a >= 360.0 else a


def circular_distance(a: float, b: float) -> float:
    d = abs(normalize_angle(a) - normalize_angle(b))
    return min(d, 360.0 - d)


def smallest_rotation(angles: Iterable[float], current_angle: float) -> float:
    """Pick the angle closest to ``current_angle`` on the circle.

    Ties go to the smaller angle value.
    """
    candidates = [normalize_angle(a) for a in angles]
    if not candidates:
        raise NoOrientation("no handling orientation available")
    return min(candidates, key=lambda a: (circular_distance(a, current_angle), a))


@dataclass(frozen=True)
class PartLabel:
    kind: str
    task_kind: str

    @property
    def tool(self) -> str:
        return TOOL_FOR_TASK[self.task_kind]

    @property
    def is_fastener(self) -> bool:
        return self.kind in FASTENER_KINDS

    @property
    def is_base(self) -> bool:
        return self.kind == "base"


@dataclass(frozen=True)
class PartGeometry:
    center_of_mass: tuple[float, float, float]
    removal_directions: tuple[str, ...]
    handling_orientations: Mapping[int, tuple[float, ...]]
    fastener_axis: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class Part:
    id: int
    label: PartLabel
    geometry: PartGeometry

    @property
    def is_fastener(self) -> bool:
        return self.label.is_fastener

    @property
    def is_base(self) -> bool:
        return self.label.is_base


@dataclass(frozen=True)
class RelationMatrices:
    """Boolean relation arrays; ``constraint[u, v]`` means u leaves before v.

    ``interference[u, v, d]`` means extracting u along ``DIRECTIONS[d]``
    collides with v.
    """

    contact: np.ndarray
    connection: np.ndarray
    constraint: np.ndarray
    interference: np.ndarray


@dataclass(frozen=True)
class _Masks:
    """Bitmask views of the relations (bit ``i`` is part id ``i + 1``)."""

    predecessors: tuple[int, ...]
    fasteners_of: tuple[int, ...]
    blockers: tuple[tuple[int, ...], ...]
    removal_dir_index: tuple[tuple[int, ...], ...]
    skeleton: tuple[int, ...]
    connection: tuple[int, ...]
    fastener_bits: int
    regular_bits: int
    base_bit: int
    all_bits: int


@dataclass(frozen=True, eq=False)
class AssemblyModel:
    eta: int
    parts: tuple[Part, ...]
    relations: RelationMatrices
    recovery_targets: tuple[int, ...] = field(default_factory=tuple)

    def part(self, part_id: int) -> Part:
        if not 1 <= part_id <= self.eta:
            raise KeyError(f"unknown part id {part_id}")
        return self.parts[part_id - 1]

    @cached_property
    def base_id(self) -> int:
        return next(p.id for p in self.parts if p.is_base)

    @cached_property
    def removable_ids(self) -> tuple[int, ...]:
        return tuple(p.id for p in self.parts if not p.is_base)

    @cached_property
    def fastener_ids(self) -> tuple[int, ...]:
        return tuple(p.id for p in self.parts if p.is_fastener)

    @cached_property
    def com(self) -> np.ndarray:
        """``(eta, 3)`` array of centres of mass, row ``id - 1``."""
        arr = np.array([p.geometry.center_of_mass for p in self.parts], dtype=float)
        arr.flags.writeable = False
        return arr

    @cached_property
    def com_distances(self) -> np.ndarray:
        diff = self.com[:, None, :] - self.com[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=-1))
        dist.flags.writeable = False
        return dist

    @cached_property
    def distance_max(self) -> float:
        """Largest distance between the centres of mass of any two parts."""
        return float(self.com_distances.max()) if self.eta > 1 else 0.0

    def smallest_rotation(self, part_id: int, arm: int, current_angle: float) -> float:
        part = self.part(part_id)
        if part.is_base:
            raise ValueError("the base part is never handled")
        if arm not in ARMS:
            raise ValueError(f"arm must be 1 or 2, got {arm!r}")
        angles = part.geometry.handling_orientations.get(arm, ())
        if not angles:
            raise NoOrientation(f"part {part_id} has no orientation for arm {arm}")
        return smallest_rotation(angles, current_angle)

    @cached_property
    def masks(self) -> _Masks:
        rel = self.relations
        n = self.eta
        fastener = np.array([p.is_fastener for p in self.parts])

        def row_mask(row: np.ndarray) -> int:
            m = 0
            for j in np.flatnonzero(row):
                m |= 1 << int(j)
            return m

        predecessors = tuple(row_mask(rel.constraint[:, u]) for u in range(n))
        fasteners_of = tuple(
            row_mask(rel.connection[u] & fastener) if not fastener[u] else 0 for u in range(n)
        )
        blockers = tuple(
            tuple(row_mask(rel.interference[u, :, d]) for d in range(len(DIRECTIONS)))
            for u in range(n)
        )
        dir_index = tuple(
            tuple(DIRECTIONS.index(d) for d in p.geometry.removal_directions) for p in self.parts
        )
        skeleton = tuple(row_mask(rel.contact[u] | rel.connection[u]) for u in range(n))
        return _Masks(
            predecessors=predecessors,
            fasteners_of=fasteners_of,
            blockers=blockers,
            removal_dir_index=dir_index,
            skeleton=skeleton,
            connection=tuple(row_mask(rel.connection[u]) for u in range(n)),
            fastener_bits=row_mask(fastener),
            regular_bits=row_mask(np.array([p.label.kind == "regular" for p in self.parts])),
            base_bit=1 << (self.base_id - 1),
            all_bits=(1 << n) - 1,
        )


# ---------------------------------------------------------------- validation


def _kahn_order(adj: np.ndarray) -> list[int] | None:
    n = adj.shape[0]
    indeg = adj.sum(axis=0).astype(int)
    queue = deque(i for i in range(n) if indeg[i] == 0)
    order = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in np.flatnonzero(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                queue.append(int(v))
    return order if len(order) == n else None


def topological_order(model: AssemblyModel) -> list[int]:
    """Part ids in an order compatible with the constraint digraph."""
    order = _kahn_order(model.relations.constraint)
    if order is None:
        raise ValidationError("cyclic constraints")
    return [i + 1 for i in order]


def validate_model(model: AssemblyModel) -> AssemblyModel:
    n = model.eta
    if n < 1:
        raise ValidationError("eta must be positive")
    if len(model.parts) != n:
        raise ValidationError(f"expected {n} parts, found {len(model.parts)}")
    ids = [p.id for p in model.parts]
    if ids != list(range(1, n + 1)):
        raise ValidationError(f"part ids must be exactly 1..{n} in order, got {sorted(ids)}")

    bases = [p.id for p in model.parts if p.is_base]
    if len(bases) != 1:
        raise ValidationError(f"exactly one base part required, found {len(bases)}")
    if n < 2:
        raise ValidationError("no removable parts")

    for p in model.parts:
        lab, geo = p.label, p.geometry
        if lab.kind not in PART_KINDS:
            raise ValidationError(f"part {p.id}: unknown kind {lab.kind!r}")
        if lab.task_kind not in TASK_KINDS:
            raise ValidationError(f"part {p.id}: unknown task_kind {lab.task_kind!r}")
        if lab.is_fastener != (lab.task_kind == "screw_removal"):
            raise ValidationError(
                f"part {p.id}: fastener kinds and screw_removal tasks must coincide"
            )
        if len(geo.center_of_mass) != 3 or not all(map(math.isfinite, geo.center_of_mass)):
            raise ValidationError(f"part {p.id}: com_mm must be three finite numbers")
        if not geo.removal_directions and not p.is_base:
            raise ValidationError(f"part {p.id}: removal_dirs must be nonempty")
        for d in geo.removal_directions:
            if d not in DIRECTIONS:
                raise ValidationError(f"part {p.id}: unknown removal direction {d!r}")
        if not p.is_base:
            for arm in ARMS:
                if not geo.handling_orientations.get(arm):
                    raise ValidationError(f"part {p.id}: no handling orientation for arm {arm}")
        if lab.is_fastener and geo.fastener_axis is None:
            raise ValidationError(f"part {p.id}: fastener_axis required for fasteners")

    rel = model.relations
    for name in ("contact", "connection", "constraint"):
        m = getattr(rel, name)
        if m.shape != (n, n):
            raise ValidationError(f"{name} must be {n}x{n}")
        if m.diagonal().any():
            raise ValidationError(f"{name} has self relations")
    if rel.interference.shape != (n, n, len(DIRECTIONS)):
        raise ValidationError("interference tensor has the wrong shape")
    if rel.interference[np.arange(n), np.arange(n)].any():
        raise ValidationError("interference has self relations")
    for name in ("contact", "connection"):
        m = getattr(rel, name)
        if not (m == m.T).all():
            raise ValidationError(f"{name} must be symmetric")

    fastener = np.array([p.is_fastener for p in model.parts])
    for u, v in zip(*np.nonzero(np.triu(rel.connection))):
        if fastener[u] == fastener[v]:
            raise ValidationError(
                f"connection {u + 1}-{v + 1} must join a fastener to a non-fastener"
            )

    if _kahn_order(rel.constraint) is None:
        raise ValidationError("cyclic constraints")

    for t in model.recovery_targets:
        if not 1 <= t <= n or model.parts[t - 1].is_base:
            raise ValidationError(f"recovery target {t} is not a removable part")

    if model.distance_max <= 0:
        raise ValidationError("all parts share one centre of mass")
    return model


# ---------------------------------------------------------------- JSON format


def _is_dense(data: Any, n: int) -> bool:
    return (
        isinstance(data, list)
        and len(data) == n
        and all(isinstance(row, list) and len(row) == n for row in data)
        and all(v in (0, 1) for row in data for v in row)
    )


def _pair_matrix(data: Any, n: int, name: str, symmetric: bool) -> np.ndarray:
    if data is None:
        data = []
    if not isinstance(data, list):
        raise ParseError(f"{name} must be a list")
    if n > 0 and _is_dense(data, n) and data:
        m = np.array(data, dtype=bool)
        if symmetric and not (m == m.T).all():
            raise ValidationError(f"{name} must be symmetric")
        return m
    m = np.zeros((n, n), dtype=bool)
    for pair in data:
        if not (isinstance(pair, list) and len(pair) == 2 and all(isinstance(x, int) for x in pair)):
            raise ParseError(f"{name}: malformed pair {pair!r}")
        u, v = pair
        if not (1 <= u <= n and 1 <= v <= n):
            raise ValidationError(f"{name}: pair {pair!r} references unknown part")
        m[u - 1, v - 1] = True
        if symmetric:
            m[v - 1, u - 1] = True
    return m


def _interference_tensor(data: Any, n: int) -> np.ndarray:
    t = np.zeros((n, n, len(DIRECTIONS)), dtype=bool)
    if data is None:
        return t
    if not isinstance(data, list):
        raise ParseError("interference must be a list of [u, v, dir] triplets")
    for item in data:
        if not (isinstance(item, list) and len(item) == 3):
            raise ParseError(f"interference: malformed triplet {item!r}")
        u, v, d = item
        if not (isinstance(u, int) and isinstance(v, int) and 1 <= u <= n and 1 <= v <= n):
            raise ValidationError(f"interference: triplet {item!r} references unknown part")
        if d not in DIRECTIONS:
            raise ValidationError(f"interference: unknown direction {d!r}")
        t[u - 1, v - 1, DIRECTIONS.index(d)] = True
    return t


def _unit(vec: Sequence[float], where: str) -> tuple[float, float, float]:
    arr = np.asarray(vec, dtype=float)
    if arr.shape != (3,) or not np.isfinite(arr).all():
        raise ValidationError(f"{where}: expected a 3-vector")
    norm = float(np.linalg.norm(arr))
    if norm == 0:
        raise ValidationError(f"{where}: zero-length vector")
    return tuple(float(x) for x in arr / norm)  # type: ignore[return-value]


def _parse_part(raw: Mapping[str, Any]) -> Part:
    try:
        pid = raw["id"]
        kind = raw["kind"]
        task_kind = raw["task_kind"]
        com = raw["com_mm"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"part entry missing field: {exc}") from None
    if not isinstance(pid, int):
        raise ParseError(f"part id must be an integer, got {pid!r}")
    label = PartLabel(kind=kind, task_kind=task_kind)
    if "tool" in raw and task_kind in TOOL_FOR_TASK and raw["tool"] != label.tool:
        raise ValidationError(f"part {pid}: tool {raw['tool']!r} does not match {task_kind!r}")
    if not (isinstance(com, list) and len(com) == 3):
        raise ValidationError(f"part {pid}: com_mm must have three entries")
    orient = raw.get("orientations") or {}
    handling = {}
    for arm in ARMS:
        angles = orient.get(f"arm{arm}", [])
        handling[arm] = tuple(sorted({normalize_angle(a) for a in angles}))
    axis = raw.get("fastener_axis")
    geometry = PartGeometry(
        center_of_mass=tuple(float(x) for x in com),  # type: ignore[arg-type]
        removal_directions=tuple(dict.fromkeys(raw.get("removal_dirs", []))),
        handling_orientations=handling,
        fastener_axis=None if axis is None else _unit(axis, f"part {pid} fastener_axis"),
    )
    return Part(id=pid, label=label, geometry=geometry)


def model_from_dict(data: Mapping[str, Any]) -> AssemblyModel:
    if not isinstance(data, Mapping):
        raise ParseError("assembly file must contain a JSON object")
    try:
        eta = data["eta"]
        raw_parts = data["parts"]
    except KeyError as exc:
        raise ParseError(f"missing top-level key {exc}") from None
    if not isinstance(eta, int) or not isinstance(raw_parts, list):
        raise ParseError("eta must be an integer and parts a list")
    parts = sorted((_parse_part(p) for p in raw_parts), key=lambda p: p.id)
    if len(parts) != eta or [p.id for p in parts] != list(range(1, eta + 1)):
        raise ValidationError(f"part ids must be exactly 1..{eta}, got {[p.id for p in parts]}")

    relations = RelationMatrices(
        contact=_pair_matrix(data.get("contact"), eta, "contact", symmetric=True),
        connection=_pair_matrix(data.get("connection"), eta, "connection", symmetric=True),
        constraint=_pair_matrix(data.get("constraint"), eta, "constraint", symmetric=False),
        interference=_interference_tensor(data.get("interference"), eta),
    )
    for arr in (relations.contact, relations.connection, relations.constraint, relations.interference):
        arr.flags.writeable = False
    targets = data.get("recovery_targets", [])
    if not isinstance(targets, list):
        raise ParseError("recovery_targets must be a list")
    model = AssemblyModel(
        eta=eta,
        parts=tuple(parts),
        relations=relations,
        recovery_targets=tuple(targets),
    )
    return validate_model(model)


def load_model(path: str | Path) -> AssemblyModel:
    """Read and validate an assembly JSON file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return model_from_dict(data)


def _num(x: float) -> float | int:
    return int(x) if float(x).is_integer() else float(x)


def _pairs(m: np.ndarray, symmetric: bool) -> list[list[int]]:
    src = np.triu(m) if symmetric else m
    return [[int(u) + 1, int(v) + 1] for u, v in zip(*np.nonzero(src))]


def model_to_dict(model: AssemblyModel) -> dict[str, Any]:
    """Canonical (sparse) JSON-ready representation."""
    parts = []
    for p in model.parts:
        geo = p.geometry
        entry: dict[str, Any] = {
            "id": p.id,
            "kind": p.label.kind,
            "task_kind": p.label.task_kind,
            "com_mm": [_num(x) for x in geo.center_of_mass],
            "removal_dirs": list(geo.removal_directions),
            "orientations": {
                f"arm{arm}": [_num(a) for a in geo.handling_orientations.get(arm, ())]
                for arm in ARMS
            },
        }
        if geo.fastener_axis is not None:
            entry["fastener_axis"] = [_num(round(x, 12)) for x in geo.fastener_axis]
        parts.append(entry)
    rel = model.relations
    return {
        "eta": model.eta,
        "parts": parts,
        "contact": _pairs(rel.contact, symmetric=True),
        "connection": _pairs(rel.connection, symmetric=True),
        "constraint": _pairs(rel.constraint, symmetric=False),
        "interference": [
            [int(u) + 1, int(v) + 1, DIRECTIONS[int(d)]]
            for u, v, d in zip(*np.nonzero(rel.interference))
        ],
        "recovery_targets": list(model.recovery_targets),
    }


def dumps_model(model: AssemblyModel) -> str:
    # one key per line, one part per line: diff-friendly without pair-per-line bloat
    data = model_to_dict(model)
    lines = []
    for key in sorted(data):
        value = data[key]
        if key == "parts":
            body = ",\n".join("  " + json.dumps(p, sort_keys=True) for p in value)
            lines.append(f' "parts": [\n{body}\n ]')
        else:
            lines.append(f" {json.dumps(key)}: {json.dumps(value, sort_keys=True)}")
    return "{\n" + ",\n".join(lines) + "\n}\n"


def save_model(model: AssemblyModel, path: str | Path) -> None:
    Path(path).write_text(dumps_model(model), encoding="utf-8")
