"""Command-line entry point (``disassembly-planner``).

Exit codes: 0 success, 2 invalid input, 3 infeasible, 4 scheduler timeout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .corpus import generate_assembly, write_corpus
from .exceptions import PlannerError
from .gantt import write_svg
from .model import load_model, save_model
from .pipeline import (
    compare_init,
    dumps,
    load_config,
    plan_file,
    schedule_from_files,
    with_overrides,
)

EXIT_TIMEOUT = 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="disassembly-planner", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    plan = sub.add_parser("plan", help="run the full pipeline on an assembly file")
    plan.add_argument("model", type=Path)
    plan.add_argument("--config", type=Path)
    plan.add_argument("--seed", type=int, help="overrides the config seed")
    plan.add_argument("--out", type=Path, default=Path("out"))
    plan.add_argument("--population", dest="population_size", type=int)
    plan.add_argument("--generations", type=int)
    plan.add_argument("--no-stage", dest="stage_enabled", action="store_const", const=False)
    plan.add_argument("--time-limit", dest="time_limit_s", type=float)

    init = sub.add_parser("init-compare", help="availability of the two initializers")
    init.add_argument("model", type=Path)
    init.add_argument("--n-genes", type=int, default=100)
    init.add_argument("--seeds", type=int, nargs="+", default=[0])
    init.add_argument("--out", type=Path, help="write the table as JSON here")

    sched = sub.add_parser("schedule-only", help="schedule existing task and motion plans")
    sched.add_argument("task_plan", type=Path)
    sched.add_argument("motion_plan", type=Path)
    sched.add_argument("--config", type=Path)
    sched.add_argument("--time-limit", dest="time_limit_s", type=float)
    sched.add_argument("--out", type=Path, default=Path("out"))

    gen = sub.add_parser("gen-fixture", help="generate procedural assemblies")
    gen.add_argument("--eta", type=int, help="part count of a single model")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", type=Path, required=True, help="file for --eta, else a directory")
    gen.add_argument("--corpus-size", type=int, default=30)
    return p


def _plan(args: argparse.Namespace) -> int:
    config = with_overrides(
        load_config(args.config),
        seed=args.seed,
        population_size=args.population_size,
        generations=args.generations,
        stage_enabled=args.stage_enabled,
        time_limit_s=args.time_limit_s,
    )
    result, written = plan_file(args.model, config, args.out)
    print(
        f"makespan {result.schedule.makespan / 1000:.3f} s, "
        f"{result.task_plan.tool_change_count} tool changes, "
        f"{result.motion_plan.pose_adjust_count} stage turns"
    )
    for path in written:
        print(path)
    return 0 if result.schedule.optimal else EXIT_TIMEOUT


def _init_compare(args: argparse.Namespace) -> int:
    if args.n_genes < 0:
        raise SystemExit("--n-genes must be non-negative")
    table = compare_init(load_model(args.model), args.n_genes, args.seeds)
    for name, row in table.items():
        mean = "n/a" if row["mean"] is None else f"{row['mean']:.3f}"
        print(f"{name:8s} availability {mean}")
    if args.out is not None:
        args.out.write_text(dumps(table), encoding="utf-8")
    return 0


def _schedule_only(args: argparse.Namespace) -> int:
    config = with_overrides(load_config(args.config), time_limit_s=args.time_limit_s)
    _, schedule = schedule_from_files(args.task_plan, args.motion_plan, config)
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "schedule.json").write_text(dumps(schedule.to_dict()), encoding="utf-8")
    write_svg(schedule, args.out / "gantt.svg")
    print(f"makespan {schedule.makespan / 1000:.3f} s")
    return 0 if schedule.optimal else EXIT_TIMEOUT


def _gen_fixture(args: argparse.Namespace) -> int:
    if args.eta is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        save_model(generate_assembly(args.eta, args.seed), args.out)
        print(args.out)
    else:
        for path in write_corpus(args.out, args.corpus_size, args.seed):
            print(path)
    return 0


COMMANDS = {
    "plan": _plan,
    "init-compare": _init_compare,
    "schedule-only": _schedule_only,
    "gen-fixture": _gen_fixture,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except PlannerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
