"""Memory-aware, queue-based execution of the two-stage segment task graph.

Tasks enter the queue when they *arrive*: an invert task at its release time,
an edit task the instant its invert completes.  Whenever state changes the
single decision loop scans the queue in priority order (ready edits before
ready inverts, then by segment id) and starts every task for which

* fewer than ``max_jobs`` tasks are running, and
* some worker that accepts the task's stage has a free slot and free memory
  of at least ``max(mem_threshold, task.mem_demand)`` (first fit by worker id).

Memory is reserved at start and released at completion.
"""
from __future__ import annotations

import heapq
import math
import queue
import threading
import time
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import TYPE_CHECKING, Callable, Iterable, NamedTuple, Sequence

from .errors import BadConfig, CycleError, EmptyTrace, PartialTrace, Unschedulable

if TYPE_CHECKING:
    from .backends import CostModelParams

INVERT = "invert"
EDIT = "edit"
STAGES = (INVERT, EDIT)
SIMULATED = "simulated"
REALTIME = "realtime"


class TaskId(NamedTuple):
    segment: int
    stage: str

    def __str__(self) -> str:
        return f"{self.stage}:{self.segment}"

    @classmethod
    def parse(cls, text: str) -> "TaskId":
        stage, _, seg = text.partition(":")
        if stage not in STAGES or not seg:
            raise ValueError(f"bad task id {text!r}")
        return cls(int(seg), stage)


@dataclass(frozen=True)
class TaskSpec:
    id: TaskId
    deps: tuple[TaskId, ...] = ()
    mem_demand: float = 1.0
    est_duration: float | None = None
    release: float = 0

    def to_json(self) -> dict:
        return {
            "deps": [str(d) for d in self.deps],
            "est_duration": self.est_duration,
            "id": str(self.id),
            "mem_demand": self.mem_demand,
            "release": self.release,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TaskSpec":
        return cls(TaskId.parse(obj["id"]), tuple(TaskId.parse(d) for d in obj["deps"]),
                   obj["mem_demand"], obj["est_duration"], obj.get("release", 0))


@dataclass(frozen=True)
class Worker:
    capacity: float
    slots: int = 1
    stages: frozenset = frozenset(STAGES)

    def __post_init__(self):
        if self.capacity <= 0:
            raise BadConfig("worker capacity must be positive")
        if self.slots < 1:
            raise BadConfig("worker needs at least one slot")
        object.__setattr__(self, "stages", frozenset(self.stages))


@dataclass(frozen=True)
class ResourcePool:
    workers: tuple[Worker, ...]
    max_jobs: int
    mem_threshold: float = 0

    def __post_init__(self):
        object.__setattr__(self, "workers", tuple(self.workers))
        if not self.workers:
            raise BadConfig("pool needs at least one worker")
        if self.max_jobs < 1:
            raise BadConfig("max_jobs (MJ) must be >= 1")
        if self.mem_threshold < 0:
            raise BadConfig("mem_threshold (MEM) must be >= 0")

    @classmethod
    def uniform(cls, n: int, capacity: float = 1.0, max_jobs: int | None = None,
                mem_threshold: float = 0, slots: int = 1) -> "ResourcePool":
        return cls(tuple(Worker(capacity, slots) for _ in range(n)),
                   max_jobs if max_jobs is not None else n * slots, mem_threshold)

    @classmethod
    def dedicated(cls, capacity: float = 1.0, mem_threshold: float = 0) -> "ResourcePool":
        """One invert-only and one edit-only worker."""
        return cls((Worker(capacity, 1, {INVERT}), Worker(capacity, 1, {EDIT})), 2, mem_threshold)

    def to_json(self) -> dict:
        return {
            "max_jobs": self.max_jobs,
            "mem_threshold": self.mem_threshold,
            "workers": [
                {"capacity": w.capacity, "slots": w.slots, "stages": sorted(w.stages)} for w in self.workers
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ResourcePool":
        return cls(tuple(Worker(w["capacity"], w.get("slots", 1), frozenset(w.get("stages", STAGES)))
                         for w in obj["workers"]), obj["max_jobs"], obj.get("mem_threshold", 0))


@dataclass(frozen=True)
class TraceEvent:
    task: TaskId
    worker: int
    slot: int
    start: float
    end: float
    mem_at_start: float
    status: str = "ok"

    def to_json(self) -> dict:
        return {
            "end": self.end,
            "mem_at_start": self.mem_at_start,
            "slot": self.slot,
            "start": self.start,
            "status": self.status,
            "task": str(self.task),
            "worker": self.worker,
        }


@dataclass(frozen=True)
class QueueSample:
    time: float
    queued: int
    in_flight: int


@dataclass
class ScheduleTrace:
    events: list[TraceEvent]
    makespan: float
    queue_samples: list[QueueSample]
    arrivals: dict[TaskId, float]
    cancelled: list[TaskId] = field(default_factory=list)
    mode: str = SIMULATED

    def event_for(self, task: TaskId) -> TraceEvent | None:
        for e in self.events:
            if e.task == task:
                return e
        return None

    @property
    def failed(self) -> list[TaskId]:
        return [e.task for e in self.events if e.status != "ok"]

    def to_json(self) -> dict:
        return {
            "arrivals": {str(k): v for k, v in sorted(self.arrivals.items(), key=lambda kv: str(kv[0]))},
            "cancelled": [str(t) for t in self.cancelled],
            "events": [e.to_json() for e in self.events],
            "makespan": self.makespan,
            "mode": self.mode,
            "queue_samples": [{"in_flight": s.in_flight, "queued": s.queued, "time": s.time}
                              for s in self.queue_samples],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ScheduleTrace":
        return cls(
            events=[TraceEvent(TaskId.parse(e["task"]), e["worker"], e.get("slot", 0), e["start"], e["end"],
                               e.get("mem_at_start", 0), e.get("status", "ok")) for e in obj["events"]],
            makespan=obj["makespan"],
            queue_samples=[QueueSample(s["time"], s["queued"], s["in_flight"]) for s in obj["queue_samples"]],
            arrivals={TaskId.parse(k): v for k, v in obj.get("arrivals", {}).items()},
            cancelled=[TaskId.parse(t) for t in obj.get("cancelled", [])],
            mode=obj.get("mode", SIMULATED),
        )


# -- task-graph checks ---------------------------------------------------------

def check_graph(tasks: Sequence[TaskSpec], pool: ResourcePool) -> dict[TaskId, TaskSpec]:
    spec: dict[TaskId, TaskSpec] = {}
    for t in tasks:
        if t.id in spec:
            raise BadConfig(f"duplicate task {t.id}")
        spec[t.id] = t
    indeg = {tid: 0 for tid in spec}
    children = defaultdict(list)
    for t in tasks:
        for d in t.deps:
            if d not in spec:
                raise BadConfig(f"{t.id} depends on unknown task {d}")
            indeg[t.id] += 1
            children[d].append(t.id)
    frontier = [tid for tid, k in indeg.items() if k == 0]
    seen = 0
    while frontier:
        tid = frontier.pop()
        seen += 1
        for c in children[tid]:
            indeg[c] -= 1
            if indeg[c] == 0:
                frontier.append(c)
    if seen != len(spec):
        raise CycleError(f"dependency cycle among {sorted(str(t) for t, k in indeg.items() if k)}")
    for t in tasks:
        need = max(pool.mem_threshold, t.mem_demand)
        if not any(t.id.stage in w.stages and w.capacity >= need for w in pool.workers):
            raise Unschedulable(f"{t.id} needs {need} memory units on a {t.id.stage} worker; none has it")
    return spec


def _priority(tid: TaskId):
    return (0 if tid.stage == EDIT else 1, tid.segment, tid.stage)


class _State:
    """Queue, reservations and bookkeeping owned by the decision loop."""

    def __init__(self, spec: dict[TaskId, TaskSpec], pool: ResourcePool):
        self.spec = spec
        self.pool = pool
        self.waiting_on = {tid: set(t.deps) for tid, t in spec.items()}
        self.children = defaultdict(list)
        for t in spec.values():
            for d in t.deps:
                self.children[d].append(t.id)
        self.free_mem = [w.capacity for w in pool.workers]
        self.free_slots = [list(range(w.slots)) for w in pool.workers]
        self.pending: list = []  # (release, priority, id)
        self.ready: list[TaskId] = []
        self.running: dict[TaskId, tuple] = {}
        self.arrivals: dict[TaskId, float] = {}
        self.events: list[TraceEvent] = []
        self.samples: list[QueueSample] = []
        self.cancelled: list[TaskId] = []
        for tid, t in spec.items():
            if not t.deps:
                heapq.heappush(self.pending, (t.release, _priority(tid), tid))

    def next_release(self) -> float | None:
        return self.pending[0][0] if self.pending else None

    def admit_releases(self, now: float) -> None:
        while self.pending and self.pending[0][0] <= now:
            _, _, tid = heapq.heappop(self.pending)
            self.arrivals[tid] = now
            self.ready.append(tid)

    def dispatch(self, now_fn: Callable[[], float]) -> list[tuple[TaskId, int, int, float, float]]:
        started = []
        blocked = set()
        for tid in sorted(self.ready, key=_priority):
            if len(self.running) >= self.pool.max_jobs:
                break
            t = self.spec[tid]
            key = (tid.stage, t.mem_demand)
            if key in blocked:
                continue
            need = max(self.pool.mem_threshold, t.mem_demand)
            for w, worker in enumerate(self.pool.workers):
                if tid.stage in worker.stages and self.free_slots[w] and self.free_mem[w] >= need:
                    break
            else:
                blocked.add(key)
                continue
            slot = self.free_slots[w].pop(0)
            mem_before = self.free_mem[w]
            self.free_mem[w] -= t.mem_demand
            start = now_fn()
            self.running[tid] = (w, slot, start, mem_before)
            self.ready.remove(tid)
            started.append((tid, w, slot, start, mem_before))
        return started

    def complete(self, tid: TaskId, end: float, ok: bool) -> None:
        w, slot, start, mem_before = self.running.pop(tid)
        self.free_mem[w] += self.spec[tid].mem_demand
        self.free_slots[w].append(slot)
        self.free_slots[w].sort()
        self.events.append(TraceEvent(tid, w, slot, start, end, mem_before, "ok" if ok else "failed"))
        if not ok:
            self._cancel_dependents(tid)
            return
        for c in self.children[tid]:
            deps = self.waiting_on.get(c)
            if deps is None:
                continue
            deps.discard(tid)
            if not deps:
                rel = self.spec[c].release
                if rel > end:
                    heapq.heappush(self.pending, (rel, _priority(c), c))
                else:
                    self.arrivals[c] = end
                    self.ready.append(c)

    def _cancel_dependents(self, tid: TaskId) -> None:
        stack = list(self.children[tid])
        while stack:
            c = stack.pop()
            if self.waiting_on.pop(c, None) is not None:
                self.cancelled.append(c)
                stack.extend(self.children[c])

    def sample(self, now: float) -> None:
        s = QueueSample(now, len(self.ready), len(self.running))
        if self.samples and self.samples[-1].time == now:
            self.samples[-1] = s
        else:
            self.samples.append(s)

    def busy(self) -> bool:
        return bool(self.pending or self.ready or self.running)

    def trace(self, mode: str) -> ScheduleTrace:
        events = sorted(self.events, key=lambda e: (e.start, e.worker, e.slot, str(e.task)))
        makespan = max((e.end for e in events), default=0)
        return ScheduleTrace(events, makespan, list(self.samples), dict(self.arrivals),
                             sorted(self.cancelled, key=_priority), mode)


def _simulate(spec, pool, executor) -> _State:
    st = _State(spec, pool)
    for t in spec.values():
        if t.est_duration is None or t.est_duration < 0 or not math.isfinite(t.est_duration):
            raise BadConfig(f"simulated mode needs a finite est_duration >= 0 for {t.id}")
    completions: list = []  # (end, seq, id, ok)
    seq = 0
    now = st.next_release() if st.pending else 0
    while True:
        while completions and completions[0][0] <= now:
            _, _, tid, ok = heapq.heappop(completions)
            st.complete(tid, now, ok)
        st.admit_releases(now)
        for tid, *_ in st.dispatch(lambda: now):
            ok = True
            if executor is not None:
                try:
                    executor(spec[tid])
                except Exception:
                    ok = False
            end = now + spec[tid].est_duration if ok else now
            heapq.heappush(completions, (end, seq, tid, ok))
            seq += 1
        st.sample(now)
        candidates = [c for c in (completions[0][0] if completions else None, st.next_release()) if c is not None]
        if not candidates:
            break
        now = min(candidates)
    if st.ready:
        raise Unschedulable(f"tasks never admitted: {sorted(str(t) for t in st.ready)}")
    return st


def _realtime(spec, pool, executor, time_scale) -> _State:
    st = _State(spec, pool)
    if executor is None:
        def executor(task):
            time.sleep((task.est_duration or 0) * time_scale)
    done: queue.Queue = queue.Queue()
    t0 = time.perf_counter()
    clock = lambda: time.perf_counter() - t0  # noqa: E731
    lanes = sum(w.slots for w in pool.workers)
    lock = threading.Lock()

    def job(task):
        try:
            executor(task)
            ok = True
        except Exception:
            ok = False
        done.put((task.id, clock(), ok))

    with ThreadPoolExecutor(max_workers=lanes, thread_name_prefix="pipeflow-worker") as workers:
        while True:
            with lock:
                st.admit_releases(clock())
                for tid, *_ in st.dispatch(clock):
                    workers.submit(job, spec[tid])
                st.sample(clock())
                if not st.running and not st.pending:
                    break
                nxt = st.next_release()
            timeout = None if nxt is None else max(0.0, nxt - clock())
            try:
                msg = done.get(timeout=timeout)
            except queue.Empty:
                continue
            with lock:
                while True:
                    st.complete(*msg)
                    try:
                        msg = done.get_nowait()
                    except queue.Empty:
                        break
    if st.ready:
        raise Unschedulable(f"tasks never admitted: {sorted(str(t) for t in st.ready)}")
    return st


def run_schedule(tasks: Sequence[TaskSpec], pool: ResourcePool,
                 executor: Callable[[TaskSpec], object] | None = None,
                 mode: str = SIMULATED, time_scale: float = 1.0) -> ScheduleTrace:
    """Execute ``tasks`` on ``pool`` and return the trace.

    In simulated mode ``executor`` (if any) is invoked synchronously when a
    task starts and time advances by ``est_duration``.  In realtime mode the
    executor runs on a worker thread and timestamps are wall-clock seconds;
    without an executor each task sleeps ``est_duration * time_scale``.
    """
    spec = check_graph(tasks, pool)
    if mode == SIMULATED:
        st = _simulate(spec, pool, executor)
    elif mode == REALTIME:
        st = _realtime(spec, pool, executor, time_scale)
    else:
        raise BadConfig(f"unknown mode {mode!r}")
    trace = st.trace(mode)
    if trace.failed:
        raise PartialTrace(f"failed tasks: {[str(t) for t in trace.failed]}; "
                           f"cancelled: {[str(t) for t in trace.cancelled]}", trace)
    return trace


# -- queueing statistics ---------------------------------------------------------

@dataclass(frozen=True)
class QueueStats:
    lam: float
    W: float
    L: float
    window: tuple[float, float]
    tasks: int

    @property
    def residual(self) -> float:
        return abs(self.L - self.lam * self.W) / self.L if self.L > 0 else 0.0

    def to_json(self) -> dict:
        return {"L": self.L, "W": self.W, "lambda": self.lam, "residual": self.residual,
                "tasks": self.tasks, "window": list(self.window)}


def sojourns(trace: ScheduleTrace) -> list[tuple[float, float]]:
    """(arrival, completion) per executed task."""
    return [(trace.arrivals[e.task], e.end) for e in trace.events if e.task in trace.arrivals]


def queue_stats(trace: ScheduleTrace, window: tuple[float, float] | None = None) -> QueueStats:
    """Little's-law quantities over ``window`` (default: first arrival to last completion).

    lambda counts arrivals inside the window, W averages their time in
    system, and L is the time-average of the in-system count (queued plus
    running) over the window.
    """
    spans = sojourns(trace)
    if not spans:
        raise EmptyTrace("trace has no executed tasks")
    if window is None:
        window = (min(a for a, _ in spans), max(c for _, c in spans))
    lo, hi = window
    if hi <= lo:
        raise EmptyTrace(f"observation window {window} has no length")
    inside = [(a, c) for a, c in spans if lo <= a < hi]
    if not inside:
        raise EmptyTrace("no arrivals inside the observation window")
    area = sum(max(0.0, min(c, hi) - max(a, lo)) for a, c in spans)
    lam = len(inside) / (hi - lo)
    W = sum(c - a for a, c in inside) / len(inside)
    return QueueStats(lam, W, area / (hi - lo), (lo, hi), len(inside))


def littles_law_from_samples(trace: ScheduleTrace) -> float:
    """|L - lambda W| / L with L integrated from the recorded queue samples."""
    samples = trace.queue_samples
    spans = sojourns(trace)
    lo, hi = min(a for a, _ in spans), max(c for _, c in spans)
    area = 0.0
    for s, nxt in zip(samples, samples[1:]):
        a, b = max(s.time, lo), min(nxt.time, hi)
        if b > a:
            area += (s.queued + s.in_flight) * (b - a)
    L = area / (hi - lo)
    lam = len(spans) / (hi - lo)
    W = sum(c - a for a, c in spans) / len(spans)
    return abs(L - lam * W) / L


# -- closed-form predictions -----------------------------------------------------

def predict_times(cost: "CostModelParams", exact: bool = False) -> dict:
    """Serial/asynchronous time predictions.

    ``t_serial_paper`` and ``t_async_paper`` are the multiplicative forms
    N1*N2*T1*T2 and N1*N2*T1*T2/B.  ``t_serial_sum`` is N1*T1 + N2*T2 and
    ``pipeline_bound`` the two-stage flow-shop makespan
    T1 + T2 + (N - 1) * max(T1, T2) with N = N1 segments.

    With ``exact=True`` every value is a ``Fraction`` built from the
    parameters, so identities such as t_async * B == t_serial hold exactly.
    """
    for name in ("N1", "N2", "T1", "T2", "B"):
        if not getattr(cost, name) > 0:
            raise BadConfig(f"{name} must be positive")
    n1, n2, t1, t2, b = (Fraction(getattr(cost, k)) for k in ("N1", "N2", "T1", "T2", "B"))
    serial_paper = n1 * n2 * t1 * t2
    out = {
        "pipeline_bound": t1 + t2 + (n1 - 1) * max(t1, t2),
        "t_async_paper": serial_paper / b,
        "t_serial_paper": serial_paper,
        "t_serial_sum": n1 * t1 + n2 * t2,
    }
    return out if exact else {k: float(v) for k, v in out.items()}


# -- independent trace checker -----------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    tasks: tuple[str, ...]
    time: float
    detail: str = ""


def validate_trace(trace: ScheduleTrace, tasks: Iterable[TaskSpec], pool: ResourcePool) -> list[Violation]:
    spec = {t.id: t for t in tasks}
    out: list[Violation] = []
    by_task: dict[TaskId, list[TraceEvent]] = defaultdict(list)
    good = []
    for e in trace.events:
        if e.task not in spec:
            out.append(Violation("UnknownTask", (str(e.task),), e.start))
            continue
        if not 0 <= e.worker < len(pool.workers) or not 0 <= e.slot < pool.workers[e.worker].slots:
            out.append(Violation("UnknownWorker", (str(e.task),), e.start, f"worker {e.worker} slot {e.slot}"))
            continue
        if e.end < e.start:
            out.append(Violation("NegativeDuration", (str(e.task),), e.start))
        by_task[e.task].append(e)
        good.append(e)

    failed = {e.task for e in good if e.status != "ok"}
    cancelled = set(trace.cancelled)

    def has_failed_ancestor(tid, seen=None):
        seen = seen or set()
        for d in spec[tid].deps:
            if d in failed or (d in cancelled and d not in seen and has_failed_ancestor(d, seen | {d})):
                return True
        return False

    for tid in spec:
        n = len(by_task.get(tid, ()))
        if tid in cancelled:
            if n or not has_failed_ancestor(tid):
                out.append(Violation("ExecutionViolation", (str(tid),), 0, "cancelled without a failed dependency"))
        elif n != 1:
            out.append(Violation("ExecutionViolation", (str(tid),), 0, f"executed {n} times"))

    for e in good:
        t = spec[e.task]
        if e.task.stage not in pool.workers[e.worker].stages:
            out.append(Violation("StageViolation", (str(e.task),), e.start, f"worker {e.worker}"))
        if e.start < t.release:
            out.append(Violation("ReleaseViolation", (str(e.task),), e.start))
        for d in t.deps:
            dev = by_task.get(d)
            if not dev or dev[0].status != "ok" or dev[0].end > e.start:
                out.append(Violation("DependencyViolation", (str(d), str(e.task)), e.start,
                                     f"{e.task} started before {d} completed"))

    lanes = defaultdict(list)
    for e in good:
        lanes[(e.worker, e.slot)].append(e)
    for (w, s), evs in lanes.items():
        evs.sort(key=lambda e: (e.start, e.end))
        for a, b in zip(evs, evs[1:]):
            if b.start < a.end:
                out.append(Violation("OverlapViolation", (str(a.task), str(b.task)), b.start,
                                     f"worker {w} slot {s}"))

    # sweep: releases at time t happen before starts at time t
    points = []
    for i, e in enumerate(good):
        points.append((e.start, 1, i))
        if e.end > e.start:
            points.append((e.end, 0, i))
    points.sort()
    running = 0
    over = False
    committed = [0.0] * len(pool.workers)
    for when, kind, i in points:
        e = good[i]
        demand = spec[e.task].mem_demand
        if kind == 0:
            running -= 1
            committed[e.worker] -= demand
            if running <= pool.max_jobs:
                over = False
            continue
        cap = pool.workers[e.worker].capacity
        free = cap - committed[e.worker]
        if free + 1e-9 < max(pool.mem_threshold, demand):
            out.append(Violation("AdmissionViolation", (str(e.task),), when,
                                 f"free {free} < max(MEM {pool.mem_threshold}, demand {demand})"))
        committed[e.worker] += demand
        running += 1
        if committed[e.worker] > cap + 1e-9:
            out.append(Violation("MemoryViolation", (str(e.task),), when,
                                 f"worker {e.worker} committed {committed[e.worker]} > {cap}"))
        if running > pool.max_jobs and not over:
            over = True
            out.append(Violation("ConcurrencyViolation", (str(e.task),), when,
                                 f"{running} jobs running, MJ = {pool.max_jobs}"))
        if e.end == e.start:
            running -= 1
            committed[e.worker] -= demand
            if running <= pool.max_jobs:
                over = False
    return out
