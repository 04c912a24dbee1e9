"""Segment planning: chunk the selected frames, sample keyframes, attach border overlap."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Union

from .backends import CostModelParams, edit_duration, invert_duration
from .errors import BadConfig
from .scheduler import EDIT, INVERT, TaskId, TaskSpec
from .selection import SelectionResult

KEYFRAME_STRIDES = {"sparse": 10, "dense": 2}
DEFAULT_SEG_LEN = 32

KeyframeMode = Union[str, int]


def keyframe_stride(mode: KeyframeMode) -> int:
    if isinstance(mode, str):
        if mode in KEYFRAME_STRIDES:
            return KEYFRAME_STRIDES[mode]
        try:
            mode = int(mode)
        except ValueError:
            raise BadConfig(f"keyframe mode must be sparse, dense or a stride, got {mode!r}") from None
    if mode < 1:
        raise BadConfig("keyframe stride must be >= 1")
    return int(mode)


@dataclass(frozen=True)
class Segment:
    id: int
    frames: tuple[int, ...]
    keyframes: tuple[int, ...]
    overlap_frames: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "frames": list(self.frames),
            "id": self.id,
            "keyframes": list(self.keyframes),
            "overlap_frames": list(self.overlap_frames),
        }


@dataclass(frozen=True)
class SegmentPlan:
    segments: tuple[Segment, ...]
    keyframe_mode: KeyframeMode = "sparse"
    overlap: int = 0

    def __len__(self) -> int:
        return len(self.segments)

    def frames(self) -> list[int]:
        return [i for s in self.segments for i in s.frames]

    def to_json(self) -> dict:
        return {
            "keyframe_mode": self.keyframe_mode,
            "overlap": self.overlap,
            "segments": [s.to_json() for s in self.segments],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SegmentPlan":
        segs = tuple(
            Segment(int(s["id"]), tuple(s["frames"]), tuple(s["keyframes"]), tuple(s.get("overlap_frames", ())))
            for s in obj["segments"]
        )
        return cls(segs, obj.get("keyframe_mode", "sparse"), int(obj.get("overlap", 0)))

    def summary(self) -> dict:
        return {
            "keyframe_mode": self.keyframe_mode,
            "keyframes": sum(len(s.keyframes) for s in self.segments),
            "overlap": self.overlap,
            "segment_sizes": [len(s.frames) for s in self.segments],
            "segments": len(self.segments),
        }


def plan_segments(selection: SelectionResult | list[int] | tuple[int, ...], seg_len: int = DEFAULT_SEG_LEN,
                  keyframe_mode: KeyframeMode = "sparse", overlap: int = 0) -> SegmentPlan:
    if seg_len < 2:
        raise BadConfig("seg_len must be >= 2")
    if not 0 <= overlap < seg_len:
        raise BadConfig("overlap must satisfy 0 <= overlap < seg_len")
    stride = keyframe_stride(keyframe_mode)
    selected = list(selection.selected if isinstance(selection, SelectionResult) else selection)
    if not selected:
        raise BadConfig("nothing selected")

    chunks = [selected[i:i + seg_len] for i in range(0, len(selected), seg_len)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())

    segments = []
    for sid, chunk in enumerate(chunks):
        borrowed = tuple(chunks[sid - 1][-overlap:]) if sid > 0 and overlap else ()
        segments.append(Segment(sid, tuple(chunk), tuple(chunk[::stride]), borrowed))
    return SegmentPlan(tuple(segments), keyframe_mode, overlap)


def segment_costs(segment: Segment, cost: CostModelParams) -> tuple[float, float]:
    """(invert, edit) modelled durations; overlap frames count as extra guides."""
    guides = len(segment.keyframes) + len(segment.overlap_frames)
    return (invert_duration(cost, len(segment.frames)),
            edit_duration(cost, len(segment.frames), guides))


def plan_to_tasks(plan: SegmentPlan, cost: CostModelParams | None = None,
                  mem_demand: Mapping[str, float] | None = None) -> list[TaskSpec]:
    cost = cost or CostModelParams()
    mem = {INVERT: 1.0, EDIT: 1.0, **(mem_demand or {})}
    tasks = []
    for seg in plan.segments:
        t_inv, t_edit = segment_costs(seg, cost)
        inv = TaskId(seg.id, INVERT)
        tasks.append(TaskSpec(inv, (), mem[INVERT], t_inv))
        tasks.append(TaskSpec(TaskId(seg.id, EDIT), (inv,), mem[EDIT], t_edit))
    return tasks
