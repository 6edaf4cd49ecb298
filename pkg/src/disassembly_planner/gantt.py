"""Plain SVG Gantt chart: one row per physical resource (Arm1, Arm2, ExternalAxis)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .scheduler import Schedule

ROWS = ("Arm1", "Arm2", "ExternalAxis")
COLORS = {1: "#e69f00", 2: "#56b4e9", 3: "#009e73"}
STAGE_NAMES = {1: "tool change", 2: "pose adjustment", 3: "disassembly"}


def _row(resource: str) -> int:
    return ROWS.index(resource.split("_")[0])


def _tick_step(makespan: int) -> int:
    for step in (1000, 2000, 5000, 10000, 20000, 50000, 100000, 200000, 500000):
        if makespan / step <= 12:
            return step
    return 1000000


def render_svg(schedule: Schedule, width: int = 960, row_height: int = 36) -> str:
    left, top, right, bottom = 110, 30, 20, 60
    plot_w = width - left - right
    height = top + row_height * len(ROWS) + bottom
    span = max(schedule.makespan, 1)

    def x(ms: int) -> float:
        return left + plot_w * ms / span

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for i, name in enumerate(ROWS):
        y = top + i * row_height
        out.append(
            f'<rect x="{left}" y="{y}" width="{plot_w}" height="{row_height}" '
            f'fill="{"#f4f4f4" if i % 2 == 0 else "#ffffff"}"/>'
        )
        out.append(f'<text x="{left - 8}" y="{y + row_height / 2 + 4:.1f}" text-anchor="end">{name}</text>')

    step = _tick_step(span)
    axis_y = top + row_height * len(ROWS)
    out.append(f'<line x1="{left}" y1="{axis_y}" x2="{left + plot_w}" y2="{axis_y}" stroke="#333"/>')
    for ms in range(0, span + 1, step):
        out.append(f'<line x1="{x(ms):.1f}" y1="{axis_y}" x2="{x(ms):.1f}" y2="{axis_y + 5}" stroke="#333"/>')
        out.append(f'<text x="{x(ms):.1f}" y="{axis_y + 18}" text-anchor="middle">{ms // 1000}</text>')
    out.append(f'<text x="{left + plot_w / 2:.1f}" y="{axis_y + 36}" text-anchor="middle">time [s]</text>')

    for t in sorted(schedule.tasks, key=lambda t: (schedule.starts[t.id], t.job, t.stage)):
        s = schedule.starts[t.id]
        y = top + _row(t.resource) * row_height + 5
        w = x(s + t.duration) - x(s)
        label = f"P{t.part}" if t.part is not None else t.id
        tip = escape(f"{t.id} {STAGE_NAMES[t.stage]} {label}: {s}-{s + t.duration} ms")
        out.append(
            f'<g><title>{tip}</title><rect x="{x(s):.1f}" y="{y}" width="{w:.1f}" '
            f'height="{row_height - 10}" fill="{COLORS[t.stage]}" stroke="#222" stroke-width="0.5"/>'
        )
        if w >= 28:
            out.append(
                f'<text x="{x(s) + w / 2:.1f}" y="{y + (row_height - 10) / 2 + 4:.1f}" '
                f'text-anchor="middle" font-size="10">{escape(label)}</text>'
            )
        out.append("</g>")

    ly = 10
    for k, stage in enumerate((1, 2, 3)):
        lx = left + k * 150
        out.append(f'<rect x="{lx}" y="{ly}" width="12" height="12" fill="{COLORS[stage]}"/>')
        out.append(f'<text x="{lx + 16}" y="{ly + 10}">S{stage} {STAGE_NAMES[stage]}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(schedule: Schedule, path: str | Path) -> None:
    Path(path).write_text(render_svg(schedule), encoding="utf-8")
