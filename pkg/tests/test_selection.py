import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pipeflow.errors import BadConfig, SelectionAborted
from pipeflow.frameio import Frame
from pipeflow.motion import MotionMetrics
from pipeflow.selection import (
    SelectionConfig,
    SelectionResult,
    motion_detected,
    select_frames,
    select_from_metrics,
    selection_report,
    skipped_runs_of,
)
from pipeflow.synthetic import make_clip


def mm(t, ssim, mf):
    return MotionMetrics(ssim, mf, (t - 1, t))


def naive_select(metrics, cfg):
    keep = [0]
    for t in range(1, len(metrics) + 1):
        m = metrics[t - 1]
        if m.ssim < cfg.tau_s or m.mean_flow_magnitude > cfg.tau_f or t == len(metrics):
            keep.append(t)
    return keep


def test_thresholds_are_strict():
    cfg = SelectionConfig(0.95, 0.5)
    assert not motion_detected(mm(1, 0.95, 0.5), cfg)
    assert motion_detected(mm(1, 0.949, 0.0), cfg)
    assert motion_detected(mm(1, 1.0, 0.51), cfg)


def test_config_validation():
    for tau_s, tau_f in [(0.0, 0.5), (1.1, 0.5), (0.9, -1.0)]:
        with pytest.raises(BadConfig):
            SelectionConfig(tau_s, tau_f)


def test_static_clip_keeps_endpoints_only():
    video = make_clip("static", frames=10, seed=1)
    res = select_frames(video)
    assert res.selected == (0, 9)
    assert res.skipped_runs == ((0, 9),)
    rep = selection_report(res)
    assert rep.skip_ratio == pytest.approx(0.8)
    assert rep.kept == 2 and rep.skipped == 8


def test_alternating_clip_keeps_everything():
    video = make_clip("alternating", frames=12, seed=2)
    res = select_frames(video)
    assert res.selected == tuple(range(12))
    assert res.skipped_runs == ()
    assert selection_report(res).skip_ratio == 0.0


def test_two_frame_clip():
    res = select_frames(make_clip("static", frames=2, seed=0))
    assert res.selected == (0, 1)
    with pytest.raises(BadConfig):
        select_frames(make_clip("static", frames=1, seed=0))


def test_skipped_runs_example():
    cfg = SelectionConfig()
    metrics = [mm(t, 1.0, 0.0) for t in range(1, 10)]
    metrics[2] = mm(3, 0.5, 0.0)
    res = select_from_metrics(metrics, cfg)
    assert res.selected == (0, 3, 9)
    assert res.skipped_runs == ((0, 3), (3, 9))
    assert skipped_runs_of([0, 1, 2]) == ()


@settings(max_examples=100, deadline=None)
@given(
    values=st.lists(st.tuples(st.floats(0, 1), st.floats(0, 5)), min_size=1, max_size=30),
    tau_s=st.floats(0.01, 1.0),
    tau_f=st.floats(0, 5),
    ds=st.floats(0, 0.5),
    df=st.floats(0, 2),
)
def test_selection_matches_naive_and_is_monotone(values, tau_s, tau_f, ds, df):
    metrics = [mm(t, s, f) for t, (s, f) in enumerate(values, 1)]
    cfg = SelectionConfig(tau_s, tau_f)
    res = select_from_metrics(metrics, cfg)
    assert list(res.selected) == naive_select(metrics, cfg)
    assert res.selected[0] == 0 and res.selected[-1] == len(values)
    stricter = SelectionConfig(min(1.0, tau_s + ds), max(0.0, tau_f - df))
    assert set(res.selected) <= set(select_from_metrics(metrics, stricter).selected)


def test_selection_deterministic_and_parallel_equal():
    video = make_clip("mixed", frames=20, seed=5)
    a = select_frames(video)
    b = select_frames(video, max_workers=4)
    assert a.selected == b.selected
    assert [m.ssim for m in a.metrics] == [m.ssim for m in b.metrics]
    assert a.to_json() == SelectionResult.from_json(a.to_json()).to_json()


def test_unreadable_frame_aborts_with_index():
    frames = list(make_clip("static", frames=5, seed=0))

    class Flaky(list):
        def __getitem__(self, i):
            if i == 3:
                raise OSError("disk gone")
            return super().__getitem__(i)

    with pytest.raises(SelectionAborted) as info:
        select_frames(Flaky(frames))
    assert info.value.index == 3


def test_report_csv_rows():
    res = select_frames(make_clip("static", frames=6, seed=0))
    csv_text = selection_report(res).to_csv()
    lines = csv_text.strip().splitlines()
    assert lines[0] == "t,ssim,mf,selected"
    assert len(lines) == 6
    assert lines[-1].endswith(",1")
