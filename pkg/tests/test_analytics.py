import csv
import json

import pytest

from pipeflow.analytics import SimConfig, build_report, emit_report, report_from_trace_file, scaling_sweep
from pipeflow.errors import BadConfig
from pipeflow.scheduler import queue_stats, run_schedule


def test_scaling_single_worker_is_unity():
    rows = scaling_sweep(SimConfig(segments=8), [1, 2, 4])
    assert rows[0].speedup == 1.0
    assert rows[1].speedup > 1.5
    assert [r.workers for r in rows] == [1, 2, 4]
    with pytest.raises(BadConfig):
        scaling_sweep(SimConfig(), [])


def make_report(cfg):
    tasks, pool = cfg.tasks(), cfg.pool()
    trace = run_schedule(tasks, pool)
    return build_report(trace, tasks, pool, cfg.cost(), {"segments": cfg.segments}), trace


def test_report_fields_and_residual():
    cfg = SimConfig(segments=6, workers=2)
    report, trace = make_report(cfg)
    assert report.makespan == trace.makespan
    assert report.serial_makespan == 120
    assert report.speedup_vs_serial == pytest.approx(120 / trace.makespan)
    assert report.queue["residual"] == pytest.approx(queue_stats(trace).residual)
    assert report.queue["residual_from_samples"] == pytest.approx(0, abs=1e-9)


def test_emit_report_files(tmp_path):
    cfg = SimConfig(segments=5, workers=2)
    report, trace = make_report(cfg)
    report.scaling = [{"workers": 1, "makespan": 100.0, "speedup": 1.0}, {"workers": 2, "makespan": 60.0, "speedup": 1.6}]
    report.borders = {"positions": [3, 6], "mse_per_border": [1.0, 2.0], "ssim_per_border": [0.9, 0.8]}
    files = emit_report(report, tmp_path / "r")
    obj = json.loads(files[0].read_text())
    assert obj["makespan"] == trace.makespan
    assert list(obj) == sorted(obj)
    with open(files[1], newline="") as fh:
        assert len(list(csv.reader(fh))) == 3
    assert files[1].read_bytes().count(b"\r\n") == 3
    with open(files[2], newline="") as fh:
        assert len(list(csv.reader(fh))) == len(trace.queue_samples) + 1
    with open(files[3], newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows == [["position", "mse", "ssim"], ["3", "1.0", "0.9"], ["6", "2.0", "0.8"]]


def test_report_from_trace_file(tmp_path):
    from dataclasses import asdict
    cfg = SimConfig(segments=4, workers=2)
    tasks, pool = cfg.tasks(), cfg.pool()
    trace = run_schedule(tasks, pool)
    path = tmp_path / "trace.json"
    path.write_text(json.dumps({**trace.to_json(), "pool": pool.to_json(),
                                "tasks": [t.to_json() for t in tasks], "config": asdict(cfg)}))
    rep = report_from_trace_file(path, [1, 2])
    assert rep.makespan == trace.makespan
    assert rep.violations == []
    assert [r["workers"] for r in rep.scaling] == [1, 2]
