"""Adaptive motion detection and motion-aware frame selection."""
from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .errors import BadConfig, SelectionAborted
from .frameio import Frame
from .motion import FlowConfig, GrayFrame, MotionMetrics, motion_metrics, to_gray

DEFAULT_TAU_S = 0.95
DEFAULT_TAU_F = 0.5


@dataclass(frozen=True)
class SelectionConfig:
    tau_s: float = DEFAULT_TAU_S
    tau_f: float = DEFAULT_TAU_F

    def __post_init__(self):
        if not 0 < self.tau_s <= 1:
            raise BadConfig(f"tau_s must lie in (0, 1], got {self.tau_s}")
        if self.tau_f < 0:
            raise BadConfig(f"tau_f must be >= 0, got {self.tau_f}")


@dataclass(frozen=True)
class SelectionResult:
    frame_count: int
    selected: tuple[int, ...]
    skipped_runs: tuple[tuple[int, int], ...]
    metrics: tuple[MotionMetrics, ...] = ()
    config: SelectionConfig = field(default_factory=SelectionConfig)

    def to_json(self) -> dict:
        return {
            "config": {"tau_f": self.config.tau_f, "tau_s": self.config.tau_s},
            "frame_count": self.frame_count,
            "metrics": [
                {"mf": m.mean_flow_magnitude, "ssim": m.ssim, "t": m.frame_pair[1]}
                for m in self.metrics
            ],
            "selected": list(self.selected),
            "skipped_runs": [list(r) for r in self.skipped_runs],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SelectionResult":
        cfg = obj.get("config", {})
        return cls(
            frame_count=int(obj.get("frame_count", obj["selected"][-1] + 1)),
            selected=tuple(int(i) for i in obj["selected"]),
            skipped_runs=tuple((int(a), int(b)) for a, b in obj["skipped_runs"]),
            metrics=tuple(
                MotionMetrics(float(m["ssim"]), float(m["mf"]), (int(m["t"]) - 1, int(m["t"])))
                for m in obj.get("metrics", [])
            ),
            config=SelectionConfig(cfg.get("tau_s", DEFAULT_TAU_S), cfg.get("tau_f", DEFAULT_TAU_F)),
        )


def motion_detected(metrics: MotionMetrics, cfg: SelectionConfig) -> bool:
    return metrics.ssim < cfg.tau_s or metrics.mean_flow_magnitude > cfg.tau_f


def skipped_runs_of(selected: Sequence[int]) -> tuple[tuple[int, int], ...]:
    return tuple((a, b) for a, b in zip(selected, selected[1:]) if b - a >= 2)


def select_from_metrics(metrics: Sequence[MotionMetrics], cfg: SelectionConfig) -> SelectionResult:
    """Apply the selection rule to precomputed transition metrics.

    ``metrics[t - 1]`` describes the transition from frame t-1 to frame t.
    """
    n = len(metrics)
    selected = [0]
    for t in range(1, n + 1):
        if motion_detected(metrics[t - 1], cfg) or t == n:
            selected.append(t)
    return SelectionResult(n + 1, tuple(selected), skipped_runs_of(selected), tuple(metrics), cfg)


def transition_metrics(video: Sequence[Frame], flow_cfg: FlowConfig | None = None,
                       max_workers: int = 1) -> list[MotionMetrics]:
    """Metrics for every consecutive pair; gray planes are computed once per frame."""
    n = len(video)

    def gray(i: int) -> GrayFrame:
        try:
            frame = video[i]
        except Exception as exc:
            raise SelectionAborted(i, exc) from exc
        g = to_gray(frame)
        return GrayFrame(g.data, i)

    if max_workers <= 1:
        grays = [gray(i) for i in range(n)]
        return [motion_metrics(grays[t - 1], grays[t], flow_cfg) for t in range(1, n)]
    with ThreadPoolExecutor(max_workers) as pool:
        grays = list(pool.map(gray, range(n)))
        return list(pool.map(lambda t: motion_metrics(grays[t - 1], grays[t], flow_cfg), range(1, n)))


def select_frames(video: Sequence[Frame], cfg: SelectionConfig | None = None,
                  flow_cfg: FlowConfig | None = None, max_workers: int = 1) -> SelectionResult:
    cfg = cfg or SelectionConfig()
    if len(video) < 2:
        raise BadConfig("frame selection needs at least 2 frames")
    return select_from_metrics(transition_metrics(video, flow_cfg, max_workers), cfg)


@dataclass(frozen=True)
class SelectionReport:
    frame_count: int
    kept: int
    skipped: int
    skip_ratio: float
    tau_s: float
    tau_f: float
    rows: tuple[tuple[int, float, float, bool], ...]

    def to_json(self) -> dict:
        return {
            "frame_count": self.frame_count,
            "kept": self.kept,
            "skip_ratio": self.skip_ratio,
            "skipped": self.skipped,
            "tau_f": self.tau_f,
            "tau_s": self.tau_s,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "ssim", "mf", "selected"])
        for t, s, mf, kept in self.rows:
            w.writerow([t, repr(s), repr(mf), int(kept)])
        return buf.getvalue()


def selection_report(result: SelectionResult) -> SelectionReport:
    kept = len(result.selected)
    skipped = result.frame_count - kept
    chosen = set(result.selected)
    rows = tuple(
        (m.frame_pair[1], m.ssim, m.mean_flow_magnitude, m.frame_pair[1] in chosen)
        for m in result.metrics
    )
    return SelectionReport(result.frame_count, kept, skipped, skipped / result.frame_count,
                           result.config.tau_s, result.config.tau_f, rows)
