import itertools
import json

import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from disassembly_planner.ccc import initialize_population
from disassembly_planner.exceptions import NoFacingAngle, ParseError, ValidationError
from disassembly_planner.model import TOOLS, circular_distance, load_model
from disassembly_planner.motion import (
    MotionConfig,
    MotionPlan,
    MotionPlanner,
    allowed_angles,
    can_hold,
    choose_stage_angle,
    facing_camera,
    make_motion_plan,
    plan_stage_angles,
)
from disassembly_planner.tasks import make_task_plan

from helpers import CORPUS, build, part

HOME1 = (0, -300, 150)


def one_arm_plan(parts, arms=None):
    m = build([part(1, "base")] + parts, contact=[(1, p["id"]) for p in parts])
    order = [p["id"] for p in parts][::-1]
    arms = arms or [1] * len(parts)
    return m, make_motion_plan(make_task_plan(order, arms, m), m)


def test_singleton_orientation_at_zero():
    _, plan = one_arm_plan([part(2, com=HOME1, arm1=(0,))])
    (r,) = plan.records
    assert r.stage_angle_deg == 0 and not r.pose_adjust_needed and r.pose_adjust_ms == 0


def test_upward_screw_needs_no_turn():
    m, plan = one_arm_plan([part(2, "screw", HOME1, axis=(0, 0, 1))])
    (r,) = plan.records
    assert r.stage_angle_deg == 0 and r.camera == "top" and not r.pose_adjust_needed
    assert allowed_angles(m.part(2), 1, MotionConfig()) == tuple(float(a) for a in range(0, 360, 45))


def test_sideways_screw_turns_to_side_camera():
    m, plan = one_arm_plan([part(2, "screw", HOME1, axis=(0, 1, 0))])
    (r,) = plan.records
    assert r.stage_angle_deg == 90 and r.camera == "side"
    assert r.pose_adjust_needed and r.pose_adjust_ms == 2000
    assert choose_stage_angle(m.part(2), 1, 0.0, MotionConfig()) == 90


def test_downward_screw_has_no_angle():
    m = build([part(1, "base"), part(2, "screw", (0, 0, 5), axis=(0, 0, -1))], connection=[(1, 2)])
    with pytest.raises(NoFacingAngle):
        allowed_angles(m.part(2), 1, MotionConfig())


def test_travel_time():
    far = (HOME1[0] + 250, HOME1[1], HOME1[2])
    _, plan = one_arm_plan([part(2, com=HOME1), part(3, com=far)])
    assert [r.travel_mm for r in plan.records] == [0.0, 250.0]
    assert [r.duration_ms for r in plan.records] == [4000, 5000]


def test_operation_times():
    _, plan = one_arm_plan([part(2, "screw", HOME1), part(3, com=HOME1, task_kind="suction")])
    assert [r.duration_ms for r in plan.records] == [8000, 3000]


def test_shared_angle_means_no_adjustment():
    _, plan = one_arm_plan([part(2, com=HOME1, arm1=(0, 180)), part(3, com=HOME1, arm1=(0,))])
    assert plan.pose_adjust_count == 0
    assert plan.stage_trajectory == [0.0, 0.0, 0.0]


def test_min_turn_trajectory_looks_ahead():
    # nearest-first would go 0, 90, 180; waiting at 0 saves a turn
    assert plan_stage_angles([(0, 90), (90, 180), (180,)]) == [0.0, 180.0, 180.0]
    # equal turn counts: stay put as long as possible
    assert plan_stage_angles([(0, 180), (0, 90), (90,)]) == [0.0, 0.0, 90.0]
    assert plan_stage_angles([]) == []


def test_fig3_turns(fig3):
    tp = make_task_plan([7, 2, 1, 5, 4, 3], [1, 2, 1, 2, 1, 2], fig3)
    plan = make_motion_plan(tp, fig3)
    assert plan.pose_adjust_count >= 1
    assert all(r.pose_adjust_ms == (2000 if r.pose_adjust_needed else 0) for r in plan.records)
    for r in plan.records:
        if fig3.part(r.part).is_fastener:
            axis = fig3.part(r.part).geometry.fastener_axis
            assert r.camera == facing_camera(axis, r.stage_angle_deg, plan.config) is not None


def check_plan_accounting(plan, model):
    traj = plan.stage_trajectory
    turns = sum(circular_distance(a, b) > 1e-9 for a, b in zip(traj, traj[1:]))
    assert sum(r.pose_adjust_ms for r in plan.records) == 2000 * turns
    for arm in (1, 2):
        tools = [r.tool for r in plan.records if r.arm == arm]
        transitions = sum(a != b for a, b in zip(tools, tools[1:])) + bool(tools)
        assert sum(r.toolchange_before for r in plan.records if r.arm == arm) == transitions
        assert plan.toolchange_ms_per_arm()[arm] == 10000 * transitions
    for r in plan.records:
        assert r.tool in TOOLS and r.tool == model.part(r.part).label.tool


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(CORPUS), st.integers(0, 1000), st.data())
def test_accounting_on_corpus(path, seed, data):
    model = load_model(path)
    (order,) = initialize_population(model, 1, seed)
    arms = data.draw(st.lists(st.sampled_from([1, 2]), min_size=len(order), max_size=len(order)))
    tp = make_task_plan(order, arms, model)
    for hold in (False, True):
        if hold and not can_hold(tp, model, MotionConfig()):
            continue
        check_plan_accounting(make_motion_plan(tp, model, hold_stage=hold), model)


grid = st.sampled_from([0.0, 45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0])
option_lists = st.lists(st.lists(grid, min_size=1, max_size=3), min_size=1, max_size=5)


@settings(max_examples=200, deadline=None)
@given(option_lists, grid)
def test_trajectory_has_fewest_turns(options, start):
    def turns(path):
        return sum(a != b for a, b in zip([start] + list(path), path))

    best = min(turns(p) for p in itertools.product(*[sorted(set(o)) for o in options]))
    got = plan_stage_angles(options, start)
    assert all(a in o for a, o in zip(got, options))
    assert turns(got) == best


def test_held_stage_penalizes_misoriented_parts():
    parts = [part(2, com=HOME1, arm1=(90,)), part(3, com=HOME1, arm1=(0, 90))]
    m = build([part(1, "base")] + parts, contact=[(1, 2), (1, 3)])
    tp = make_task_plan([3, 2], [1, 1], m)
    turning = make_motion_plan(tp, m)
    held = make_motion_plan(tp, m, hold_stage=True)
    disabled = make_motion_plan(tp, m, MotionConfig(stage_enabled=False))
    assert [r.duration_ms for r in turning.records] == [4000, 4000]
    assert turning.stage_trajectory == [0.0, 90.0, 90.0]
    for plan in (held, disabled):
        assert plan.stage_trajectory == [0.0, 0.0, 0.0]
        assert [r.misoriented for r in plan.records] == [True, False]
        assert [r.duration_ms for r in plan.records] == [10000, 4000]
        assert plan.pose_adjust_count == 0


def test_disabled_stage_needs_facing_fasteners():
    m = build([part(1, "base"), part(2, "screw", HOME1, axis=(0, 1, 0))], connection=[(1, 2)])
    tp = make_task_plan([2], [1], m)
    assert not can_hold(tp, m, MotionConfig())
    with pytest.raises(NoFacingAngle):
        make_motion_plan(tp, m, MotionConfig(stage_enabled=False))


def test_config_round_trip():
    cfg = MotionConfig(arm_speed_mm_s=100, stage_enabled=False)
    again = MotionConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    with pytest.raises(ValidationError):
        MotionConfig(arm_speed_mm_s=0)


def test_plan_round_trip(fig3):
    tp = make_task_plan([7, 2, 1, 5, 4, 3], [1, 2, 1, 2, 1, 2], fig3)
    plan = make_motion_plan(tp, fig3)
    assert MotionPlan.from_dict(json.loads(json.dumps(plan.to_dict()))) == plan
    with pytest.raises(ParseError):
        MotionPlan.from_dict({"records": [{"step": 0}]})


def test_estimator(fig3):
    tp = make_task_plan([7, 2, 1, 5, 4, 3], [1, 1, 1, 2, 2, 2], fig3)
    est = MotionPlanner(config={"toolchange_time_ms": 5000})
    assert clone(est).get_params() == est.get_params()
    plan = est.fit(fig3).transform(tp)
    # each arm mounts once and switches once
    assert plan.toolchange_ms_per_arm() == {1: 10000, 2: 10000}
