"""Two-stage executors: a cost-model mock and a deterministic CPU stylization filter.

Both follow the same protocol: ``invert(segment, frames)`` returns an opaque
latent object for that segment, and ``edit(segment, latents, keyframes,
prompt)`` consumes it exactly once and returns the edited frames.
"""
from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol, Sequence

import numpy as np

from .errors import BadConfig, ProtocolError
from .frameio import Frame
from .motion import _downsample, to_gray
from .scheduler import EDIT, INVERT, TaskSpec

if TYPE_CHECKING:
    from .segmentation import Segment, SegmentPlan

STYLES = ("posterize", "invert-colors", "sepia")


@dataclass(frozen=True)
class CostModelParams:
    """Symbols of the analytic cost model.

    T timesteps, n tokens/frame, d token dim, K keyframes/segment, B batch
    count, F frames, N1/N2 invert/edit task counts, T1/T2 their per-task
    durations, unit_cost time per n^2*d operation.
    """

    T: float = 50
    n: float = 1024
    d: float = 64
    K: float = 1
    B: float = 1
    F: float = 1
    N1: float = 1
    N2: float = 1
    T1: float = 1
    T2: float = 1
    unit_cost: float = 1e-9

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not value > 0:
                raise BadConfig(f"cost parameter {name} must be positive, got {value}")


def invert_duration(cost: CostModelParams, frames: int) -> float:
    return cost.unit_cost * cost.T * cost.n ** 2 * cost.d * frames


def edit_duration(cost: CostModelParams, frames: int, keyframes: float | None = None) -> float:
    k = cost.K if keyframes is None else keyframes
    return cost.unit_cost * (k * cost.n ** 2 * cost.d + cost.n ** 2) * frames


class Backend(Protocol):
    name: str

    def invert(self, segment: "Segment", frames: Sequence[Frame]): ...

    def edit(self, segment: "Segment", latents, keyframes: Sequence[int], prompt: str = "") -> list[Frame]: ...


@dataclass
class SegmentLatents:
    segment: int
    frames: dict[int, Frame]
    pyramids: dict[int, list[np.ndarray]] = field(default_factory=dict)


class _LatentLedger:
    """Tracks which latents were issued so each is consumed by exactly one edit."""

    def __init__(self):
        self._issued: dict[int, SegmentLatents] = {}
        self._consumed: set[int] = set()
        self._lock = threading.Lock()

    def issue(self, segment: "Segment", latents: SegmentLatents) -> SegmentLatents:
        with self._lock:
            if segment.id in self._issued or segment.id in self._consumed:
                raise ProtocolError(f"segment {segment.id} inverted twice")
            self._issued[segment.id] = latents
        return latents

    def consume(self, segment: "Segment", latents) -> SegmentLatents:
        with self._lock:
            issued = self._issued.get(segment.id)
            if issued is None or latents is not issued:
                raise ProtocolError(f"edit of segment {segment.id} without its own invert output")
            del self._issued[segment.id]
            self._consumed.add(segment.id)
        return latents


class MockBackend:
    """Pass-through frames with durations from the cost model.

    ``sleep=True`` makes each stage block for its modelled duration times
    ``time_scale`` (realtime runs); otherwise durations are only declared.
    """

    name = "mock"

    def __init__(self, cost: CostModelParams | None = None, sleep: bool = False, time_scale: float = 1.0):
        self.cost = cost or CostModelParams()
        self.sleep = sleep
        self.time_scale = time_scale
        self._ledger = _LatentLedger()

    def invert_duration(self, frames: int) -> float:
        return invert_duration(self.cost, frames)

    def edit_duration(self, frames: int, keyframes: float | None = None) -> float:
        return edit_duration(self.cost, frames, keyframes)

    def invert(self, segment, frames):
        if self.sleep:
            time.sleep(self.invert_duration(len(segment.frames)) * self.time_scale)
        return self._ledger.issue(segment, SegmentLatents(segment.id, {f.index: f for f in frames}))

    def edit(self, segment, latents, keyframes, prompt=""):
        lat = self._ledger.consume(segment, latents)
        if self.sleep:
            guides = len(segment.keyframes) + len(segment.overlap_frames)
            time.sleep(self.edit_duration(len(segment.frames), guides) * self.time_scale)
        return [lat.frames[i].with_index(i, tag=f"{INVERT}+{EDIT}|{prompt}") for i in segment.frames]


def mock_backend(cost: CostModelParams | None = None, **kw) -> MockBackend:
    return MockBackend(cost, **kw)


def _round8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


_SEPIA = np.array([[0.393, 0.769, 0.189],
                   [0.349, 0.686, 0.168],
                   [0.272, 0.534, 0.131]])


class StylizeBackend:
    """Deterministic colour stylization standing in for a diffusion editor.

    The invert stage caches a 3-level blur pyramid per frame.  The edit
    stage derives a tone gain from the coarsest pyramid level of the
    keyframes (plus any overlap frames borrowed from the previous segment),
    styles the keyframes first, then reuses the same gain for the rest.
    ``invert-colors`` ignores the gain so it stays an exact involution.
    """

    TARGET_LUMA = 128.0
    GAIN_RANGE = (0.5, 2.0)

    def __init__(self, style: str = "sepia", levels: int = 4):
        if style not in STYLES:
            raise BadConfig(f"unknown style {style!r}; choose from {STYLES}")
        if levels < 2:
            raise BadConfig("posterize needs at least 2 levels")
        self.style = style
        self.levels = levels
        self.name = f"stylize:{style}"
        self._ledger = _LatentLedger()

    def invert(self, segment, frames):
        pyramids = {}
        for f in frames:
            g = to_gray(f).data
            pyr = [g]
            for _ in range(2):
                if min(pyr[-1].shape) < 2:
                    break
                pyr.append(_downsample(pyr[-1]))
            pyramids[f.index] = pyr
        return self._ledger.issue(segment, SegmentLatents(segment.id, {f.index: f for f in frames}, pyramids))

    def tone_gain(self, lat: SegmentLatents, guides: Sequence[int]) -> float:
        luma = np.mean([lat.pyramids[i][-1].mean() for i in guides])
        return float(np.clip(self.TARGET_LUMA / max(luma, 1.0), *self.GAIN_RANGE))

    def transform(self, frame: Frame, gain: float) -> Frame:
        px = frame.pixels.astype(np.float64)
        if self.style == "invert-colors":
            out = 255 - frame.pixels
        elif self.style == "posterize":
            step = 256.0 / self.levels
            q = np.floor(np.clip(px * gain, 0, 255) / step)
            out = _round8(q * 255.0 / (self.levels - 1))
        else:
            px = np.clip(px * gain, 0, 255)
            out = _round8(px @ _SEPIA.T) if frame.channels == 3 else _round8(px)
        return Frame(out, frame.index, tag=self.name)

    def edit(self, segment, latents, keyframes, prompt=""):
        lat = self._ledger.consume(segment, latents)
        guides = list(keyframes) + list(segment.overlap_frames)
        gain = self.tone_gain(lat, guides)
        done = {i: self.transform(lat.frames[i], gain) for i in keyframes}
        for i in segment.frames:
            if i not in done:
                done[i] = self.transform(lat.frames[i], gain)
        return [done[i].with_index(i, tag=f"{self.name}|{prompt}") for i in segment.frames]


def stylize_backend(style: str = "sepia", **kw) -> StylizeBackend:
    return StylizeBackend(style, **kw)


def make_backend(spec: str, cost: CostModelParams | None = None, **kw):
    """Build a backend from a CLI spec: ``mock`` or ``stylize:<style>``."""
    kind, _, arg = spec.partition(":")
    if kind == "mock":
        return MockBackend(cost, **kw)
    if kind == "stylize":
        return StylizeBackend(arg or "sepia")
    raise BadConfig(f"unknown backend {spec!r}")


class SegmentExecutor:
    """Adapter turning scheduler tasks into backend calls.

    Latents live here between a segment's invert and edit task; outputs are
    collected per segment.  Different segments may run concurrently.
    """

    def __init__(self, backend, plan: "SegmentPlan", video: Sequence[Frame], prompt: str = ""):
        self.backend = backend
        self.segments = {s.id: s for s in plan.segments}
        self.video = video
        self.prompt = prompt
        self.latents: dict[int, object] = {}
        self.outputs: dict[int, list[Frame]] = {}
        self._lock = threading.Lock()

    def __call__(self, task: TaskSpec) -> None:
        seg = self.segments[task.id.segment]
        if task.id.stage == INVERT:
            frames = [self.video[i] for i in dict.fromkeys(seg.overlap_frames + seg.frames)]
            lat = self.backend.invert(seg, frames)
            with self._lock:
                self.latents[seg.id] = lat
        else:
            with self._lock:
                lat = self.latents.pop(seg.id, None)
            out = self.backend.edit(seg, lat, seg.keyframes, self.prompt)
            if len(out) != len(seg.frames):
                raise ProtocolError(f"backend returned {len(out)} frames for a {len(seg.frames)}-frame segment")
            with self._lock:
                self.outputs[seg.id] = out
