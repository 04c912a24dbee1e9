"""Run reports, worker-scaling sweeps and their JSON/CSV emission."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

from .backends import CostModelParams
from .errors import BadConfig, WriteError
from .scheduler import (
    EDIT,
    INVERT,
    ResourcePool,
    ScheduleTrace,
    TaskId,
    TaskSpec,
    Worker,
    littles_law_from_samples,
    predict_times,
    queue_stats,
    run_schedule,
    validate_trace,
)


@dataclass(frozen=True)
class SimConfig:
    """Workload and pool shape for cost-model simulations."""

    segments: int = 32
    t1: float = 10
    t2: float = 10
    invert_mem: float = 1
    edit_mem: float = 1
    worker_mem: float = 1
    workers: int = 1
    slots: int = 1
    max_jobs: int | None = None
    mem_threshold: float = 0
    release_interval: float = 0
    dedicated: bool = False

    def __post_init__(self):
        if self.segments < 1:
            raise BadConfig("segments must be >= 1")
        if self.t1 < 0 or self.t2 < 0:
            raise BadConfig("durations must be >= 0")

    def tasks(self) -> list[TaskSpec]:
        out = []
        for i in range(self.segments):
            inv = TaskId(i, INVERT)
            rel = i * self.release_interval
            out.append(TaskSpec(inv, (), self.invert_mem, self.t1, rel))
            out.append(TaskSpec(TaskId(i, EDIT), (inv,), self.edit_mem, self.t2, rel))
        return out

    def pool(self, workers: int | None = None) -> ResourcePool:
        if self.dedicated:
            return ResourcePool((Worker(self.worker_mem, 1, {INVERT}), Worker(self.worker_mem, 1, {EDIT})),
                                self.max_jobs or 2, self.mem_threshold)
        k = self.workers if workers is None else workers
        return ResourcePool.uniform(k, self.worker_mem, self.max_jobs, self.mem_threshold, self.slots)

    def cost(self) -> CostModelParams:
        return CostModelParams(N1=self.segments, N2=self.segments, T1=max(self.t1, 1e-12),
                               T2=max(self.t2, 1e-12), B=self.segments)


@dataclass(frozen=True)
class ScalingRow:
    workers: int
    makespan: float
    speedup: float


def scaling_sweep(base: SimConfig, worker_counts: Sequence[int]) -> list[ScalingRow]:
    """Simulate the same workload on 1 worker and on each count in ``worker_counts``.

    MJ scales with the worker count unless ``base.max_jobs`` pins it.
    """
    if not worker_counts or any(k < 1 for k in worker_counts):
        raise BadConfig("worker_counts must be non-empty and each >= 1")
    tasks = base.tasks()
    reference = run_schedule(tasks, base.pool(1)).makespan
    rows = []
    for k in worker_counts:
        makespan = run_schedule(tasks, base.pool(k)).makespan
        rows.append(ScalingRow(k, makespan, reference / makespan if makespan else 1.0))
    return rows


def utilization(trace: ScheduleTrace, pool: ResourcePool) -> list[dict]:
    busy = {(w, s): 0.0 for w in range(len(pool.workers)) for s in (INVERT, EDIT)}
    for e in trace.events:
        busy[(e.worker, e.task.stage)] += e.end - e.start
    span = trace.makespan or 1.0
    return [
        {"worker": w, "edit": busy[(w, EDIT)] / span, "invert": busy[(w, INVERT)] / span}
        for w in range(len(pool.workers))
    ]


@dataclass
class RunReport:
    config: dict
    makespan: float
    serial_makespan: float
    predicted: dict
    queue: dict
    trace: dict
    selection: dict = field(default_factory=dict)
    plan: dict = field(default_factory=dict)
    borders: dict = field(default_factory=dict)
    utilization: list = field(default_factory=list)
    scaling: list = field(default_factory=list)
    violations: list = field(default_factory=list)

    @property
    def speedup_vs_serial(self) -> float:
        return self.serial_makespan / self.makespan if self.makespan else 1.0

    def to_json(self) -> dict:
        d = asdict(self)
        d["speedup_vs_serial"] = self.speedup_vs_serial
        return d


def build_report(trace: ScheduleTrace, tasks: Sequence[TaskSpec], pool: ResourcePool,
                 cost: CostModelParams, config: dict, **extra) -> RunReport:
    serial = sum(t.est_duration or 0 for t in tasks)
    qs = queue_stats(trace)
    queue = qs.to_json()
    queue["residual_from_samples"] = littles_law_from_samples(trace)
    return RunReport(
        config=config,
        makespan=trace.makespan,
        serial_makespan=serial,
        predicted=predict_times(cost),
        queue=queue,
        trace={**trace.to_json(), "pool": pool.to_json(), "tasks": [t.to_json() for t in tasks]},
        utilization=utilization(trace, pool),
        **extra,
    )


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: RunReport, path: str | os.PathLike) -> list[Path]:
    """Write report.json plus scaling.csv, queue.csv and borders.csv into ``path``."""
    root = Path(path)
    try:
        root.mkdir(parents=True, exist_ok=True)
        files = [root / n for n in ("report.json", "scaling.csv", "queue.csv", "borders.csv")]
        files[0].write_text(json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n")
        _write_csv(files[1], ["workers", "makespan", "speedup"],
                   [[r["workers"], r["makespan"], r["speedup"]] for r in report.scaling])
        _write_csv(files[2], ["time", "queued", "in_flight"],
                   [[s["time"], s["queued"], s["in_flight"]] for s in report.trace["queue_samples"]])
        b = report.borders
        _write_csv(files[3], ["position", "mse", "ssim"],
                   zip(b.get("positions", []), b.get("mse_per_border", []), b.get("ssim_per_border", [])))
    except OSError as exc:
        raise WriteError(f"cannot write report to {root}: {exc}") from exc
    return files


def report_from_trace_file(path: str | os.PathLike, scaling: Sequence[int] = ()) -> RunReport:
    """Rebuild a report from a ``pipeflow simulate`` trace JSON."""
    obj = json.loads(Path(path).read_text())
    trace = ScheduleTrace.from_json(obj)
    tasks = [TaskSpec.from_json(t) for t in obj["tasks"]]
    pool = ResourcePool.from_json(obj["pool"])
    config = obj.get("config", {})
    report = build_report(trace, tasks, pool, SimConfig(**config).cost() if config else _cost_of(tasks),
                          config, violations=[asdict(v) for v in validate_trace(trace, tasks, pool)])
    if scaling and config:
        report.scaling = [asdict(r) for r in scaling_sweep(SimConfig(**config), scaling)]
    return report


def _cost_of(tasks: Sequence[TaskSpec]) -> CostModelParams:
    inv = [t.est_duration for t in tasks if t.id.stage == INVERT]
    ed = [t.est_duration for t in tasks if t.id.stage == EDIT]
    return CostModelParams(N1=len(inv), N2=len(ed), T1=max(inv) or 1e-12, T2=max(ed) or 1e-12, B=len(inv))
