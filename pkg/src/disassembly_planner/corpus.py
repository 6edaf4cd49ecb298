"""Procedural assemblies: stacked plates screwed onto a base, plus side brackets.

Each plate rests on the base or on the plate below it and is held by one to
three fasteners driven into whatever it rests on. A plate covers the plate
below and that plate's fasteners, which yields both constraint edges and
upward interference. Side brackets hang on the base's ``-X`` face with
horizontal fasteners that face the side camera at stage angle 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import AssemblyModel, model_from_dict, save_model

ANGLES = (0, 90, 180, 270)
FASTENER_KINDS = ("screw", "screw", "bolt", "nut")


@dataclass
class _Part:
    kind: str
    task_kind: str
    com: list[float]
    dirs: list[str]
    orient: dict[str, list[int]]
    axis: list[float] | None = None


@dataclass
class _Builder:
    parts: list[_Part] = field(default_factory=list)
    contact: list[tuple[int, int]] = field(default_factory=list)
    connection: list[tuple[int, int]] = field(default_factory=list)
    constraint: list[tuple[int, int]] = field(default_factory=list)
    interference: list[tuple[int, int, str]] = field(default_factory=list)

    def add(self, part: _Part) -> int:
        self.parts.append(part)
        return len(self.parts) - 1


def _orientations(rng: np.random.Generator) -> dict[str, list[int]]:
    out = {}
    for arm in ("arm1", "arm2"):
        k = int(rng.integers(1, 3))
        out[arm] = sorted(int(a) for a in rng.choice(ANGLES, size=k, replace=False))
    return out


def generate_assembly(eta: int, seed: int, side_fraction: float = 0.15) -> AssemblyModel:
    """Build a valid random assembly with exactly ``eta`` parts (``eta >= 3``)."""
    if eta < 3:
        raise ValueError("eta must be at least 3")
    rng = np.random.default_rng(seed)
    b = _Builder()
    base = b.add(_Part("base", "grasp", [0.0, 0.0, 0.0], [], {"arm1": [], "arm2": []}))
    budget = eta - 1

    def fastener(com: list[float], axis: list[float], direction: str) -> int:
        kind = str(rng.choice(FASTENER_KINDS))
        return b.add(
            _Part(kind, "screw_removal", com, [direction], {"arm1": [0], "arm2": [0]}, axis)
        )

    # side brackets on the -X face
    n_side_budget = int(round(budget * side_fraction))
    while n_side_budget >= 2 and budget >= 4:
        n_fast = int(min(rng.integers(1, 3), n_side_budget - 1))
        y = float(rng.uniform(-120, 120))
        z = float(rng.uniform(-40, -10))
        bracket = b.add(
            _Part(
                "regular",
                str(rng.choice(["grasp", "suction"])),
                [-210.0, y, z],
                ["-X"],
                _orientations(rng),
            )
        )
        b.contact.append((bracket, base))
        for k in range(n_fast):
            f = fastener([-215.0, y + 20 * (k - 0.5), z], [-1.0, 0.0, 0.0], "-X")
            b.connection += [(f, bracket), (f, base)]
        n_side_budget -= 1 + n_fast
        budget -= 1 + n_fast

    # stacks of plates on the top face
    n_stacks = max(1, budget // 7)
    centres = [
        (float(rng.uniform(-180, 180)), float(rng.uniform(-130, 130))) for _ in range(n_stacks)
    ]
    tops: list[int | None] = [None] * n_stacks
    top_fasteners: list[list[int]] = [[] for _ in range(n_stacks)]
    levels = [0] * n_stacks
    plates: list[tuple[int, int]] = []  # (plate, stack)

    while budget >= 2:
        s = int(rng.integers(n_stacks))
        n_fast = int(min(rng.integers(1, 4), budget - 1))
        cx, cy = centres[s]
        z = 10.0 + 15.0 * levels[s]
        below = tops[s] if tops[s] is not None else base
        dirs = ["+Z"]
        if rng.random() < 0.3:
            dirs.append(str(rng.choice(["+X", "-X", "+Y", "-Y"])))
        plate = b.add(
            _Part(
                "regular",
                str(rng.choice(["grasp", "suction"])),
                [cx + float(rng.uniform(-15, 15)), cy + float(rng.uniform(-15, 15)), z],
                dirs,
                _orientations(rng),
            )
        )
        b.contact.append((plate, below))
        if tops[s] is not None:
            lower = tops[s]
            b.constraint.append((plate, lower))
            b.interference.append((lower, plate, "+Z"))
            for d in b.parts[lower].dirs:
                if d != "+Z":
                    b.interference.append((lower, plate, d))
            for f in top_fasteners[s]:
                b.constraint.append((plate, f))
                b.interference.append((f, plate, "+Z"))
        new_fasteners = []
        for _ in range(n_fast):
            off = rng.uniform(-40, 40, size=2)
            f = fastener([cx + float(off[0]), cy + float(off[1]), z + 5.0], [0.0, 0.0, 1.0], "+Z")
            b.connection += [(f, plate), (f, below)]
            new_fasteners.append(f)
        tops[s] = plate
        top_fasteners[s] = new_fasteners
        levels[s] += 1
        plates.append((plate, s))
        budget -= 1 + n_fast

    if budget == 1:
        plate, s = plates[int(rng.integers(len(plates)))] if plates else (None, None)
        if plate is None:
            raise ValueError("eta too small for the requested layout")
        below = next(v for u, v in b.contact if u == plate)
        p = b.parts[plate].com
        f = fastener([p[0] + 30.0, p[1] - 30.0, p[2] + 5.0], [0.0, 0.0, 1.0], "+Z")
        b.connection += [(f, plate), (f, below)]
        for u, v in list(b.constraint):
            if v == plate and b.parts[u].kind == "regular":
                b.constraint.append((u, f))
                b.interference.append((f, u, "+Z"))
        budget -= 1

    # shuffle ids so the base and stacks are not in generation order
    perm = rng.permutation(len(b.parts))
    new_id = {old: int(perm[old]) + 1 for old in range(len(b.parts))}
    bottom = [p for p, _ in plates if b.parts[p].com[2] == 10.0]
    target_pool = bottom or [p for p, _ in plates]
    target = int(target_pool[int(rng.integers(len(target_pool)))])

    parts = []
    for old, part in enumerate(b.parts):
        entry = {
            "id": new_id[old],
            "kind": part.kind,
            "task_kind": part.task_kind,
            "com_mm": [round(c, 1) for c in part.com],
            "removal_dirs": part.dirs,
            "orientations": part.orient,
        }
        if part.axis is not None:
            entry["fastener_axis"] = part.axis
        parts.append(entry)

    def remap(pairs):
        return [[new_id[u], new_id[v]] for u, v in pairs]

    data = {
        "eta": len(b.parts),
        "parts": sorted(parts, key=lambda p: p["id"]),
        "contact": remap(b.contact),
        "connection": remap(b.connection),
        "constraint": remap(b.constraint),
        "interference": [[new_id[u], new_id[v], d] for u, v, d in b.interference],
        "recovery_targets": [new_id[target]],
    }
    return model_from_dict(data)


def corpus_specs(n_models: int = 30, seed: int = 2024) -> list[tuple[str, int, int]]:
    """``(name, eta, seed)`` triples: sizes spread over 8..60 parts."""
    rng = np.random.default_rng(seed)
    sizes = np.linspace(8, 60, n_models).round().astype(int)
    return [
        (f"corpus_{i:02d}_eta{int(eta)}", int(eta), int(rng.integers(1, 2**31)))
        for i, eta in enumerate(sizes)
    ]


def write_corpus(directory: str | Path, n_models: int = 30, seed: int = 2024) -> list[Path]:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, eta, model_seed in corpus_specs(n_models, seed):
        path = out / f"{name}.json"
        save_model(generate_assembly(eta, model_seed), path)
        paths.append(path)
    return paths
