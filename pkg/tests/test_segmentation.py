import pytest

from pipeflow.backends import CostModelParams, edit_duration, invert_duration
from pipeflow.errors import BadConfig
from pipeflow.scheduler import EDIT, INVERT, TaskId
from pipeflow.segmentation import SegmentPlan, plan_segments, plan_to_tasks, segment_costs


def test_chunk_sizes_and_partition():
    plan = plan_segments(list(range(100)))
    assert [len(s.frames) for s in plan.segments] == [32, 32, 32, 4]
    assert plan.frames() == list(range(100))
    assert [s.id for s in plan.segments] == [0, 1, 2, 3]


def test_keyframe_counts():
    sel = list(range(10))
    assert plan_segments(sel, 10, "sparse").segments[0].keyframes == (0,)
    assert plan_segments(sel, 10, "dense").segments[0].keyframes == (0, 2, 4, 6, 8)
    assert plan_segments(sel, 10, 3).segments[0].keyframes == (0, 3, 6, 9)
    assert plan_segments(sel, 10, "4").segments[0].keyframes == (0, 4, 8)


def test_single_frame_tail_merges():
    plan = plan_segments(list(range(9)), 4)
    assert [len(s.frames) for s in plan.segments] == [4, 5]
    assert plan_segments([0], 4).segments[0].frames == (0,)


def test_overlap_borrows_previous_tail():
    plan = plan_segments([0, 2, 5, 6, 7, 9, 11, 12], 3, "sparse", 2)
    assert plan.segments[0].overlap_frames == ()
    assert plan.segments[1].overlap_frames == (2, 5)
    assert plan.segments[2].frames == (11, 12)
    assert plan.segments[2].overlap_frames == (7, 9)


def test_bad_configs():
    with pytest.raises(BadConfig):
        plan_segments([0, 1], 1)
    with pytest.raises(BadConfig):
        plan_segments([0, 1], 4, overlap=4)
    with pytest.raises(BadConfig):
        plan_segments([0, 1], 4, "weird")
    with pytest.raises(BadConfig):
        plan_segments([0, 1], 4, 0)
    with pytest.raises(BadConfig):
        plan_segments([], 4)


def test_plan_json_round_trip():
    plan = plan_segments(list(range(0, 40, 3)), 4, "dense", 1)
    assert SegmentPlan.from_json(plan.to_json()) == plan
    assert plan.summary()["segment_sizes"] == [4, 4, 4, 2]


def test_plan_to_tasks_edges_and_costs():
    cost = CostModelParams()
    plan = plan_segments(list(range(30)), 10)
    tasks = plan_to_tasks(plan, cost)
    assert len(tasks) == 6
    edges = [(d, t.id) for t in tasks for d in t.deps]
    assert edges == [(TaskId(i, INVERT), TaskId(i, EDIT)) for i in range(3)]
    inv, ed = segment_costs(plan.segments[0], cost)
    assert tasks[0].est_duration == inv == invert_duration(cost, 10)
    assert tasks[1].est_duration == ed == edit_duration(cost, 10, 1)
    # hand computation of the defaults: 1e-9 * 50 * 1024^2 * 64 * 10
    assert inv == pytest.approx(1e-9 * 50 * 1024**2 * 64 * 10, rel=1e-12)
