"""Flow-warp frame interpolation for skipped runs and segment borders."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmptyInput, EmptySegment
from .frameio import Frame
from .motion import FlowConfig, estimate_flow, ssim_global, to_gray, warp

OCCLUSION_THRESHOLD = 24.0


@dataclass(frozen=True)
class InterpolationRequest:
    frame_a: Frame
    frame_b: Frame
    count: int

    def __post_init__(self):
        if self.frame_a.shape != self.frame_b.shape:
            raise DimensionMismatch(f"{self.frame_a.shape} vs {self.frame_b.shape}")
        if self.count < 1:
            raise ValueError("count must be >= 1")


def _round8(x: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(x + 0.5), 0, 255).astype(np.uint8)


def interpolate_midpoint(a: Frame, b: Frame, flow_cfg: FlowConfig | None = None,
                         threshold: float = OCCLUSION_THRESHOLD, index: int | None = None) -> Frame:
    """Synthesize the frame halfway between ``a`` and ``b``.

    ``a`` is sampled half a step back along the a->b flow and ``b`` half a
    step back along the b->a flow; the two are averaged.  Pixels where the
    two warps disagree by more than ``threshold`` (any channel) use a plain
    cross-fade of ``a`` and ``b`` instead.
    """
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    out_index = a.index if index is None else index
    if np.array_equal(a.pixels, b.pixels):
        return Frame(a.pixels, out_index)
    pa = a.pixels.astype(np.float64)
    pb = b.pixels.astype(np.float64)
    crossfade = 0.5 * (pa + pb)
    if min(a.height, a.width) < 16:
        return Frame(_round8(crossfade), out_index)
    ga, gb = to_gray(a), to_gray(b)
    fwd = estimate_flow(ga, gb, flow_cfg)
    bwd = estimate_flow(gb, ga, flow_cfg)
    wa = warp(pa, -0.5 * fwd.u, -0.5 * fwd.v)
    wb = warp(pb, -0.5 * bwd.u, -0.5 * bwd.v)
    blend = 0.5 * (wa + wb)
    occluded = (np.abs(wa - wb) > threshold).any(axis=2, keepdims=True)
    return Frame(_round8(np.where(occluded, crossfade, blend)), out_index)


def fill_order(count: int) -> list[tuple[int, int, int]]:
    """(position, left, right) in synthesis order for positions 1..count.

    Each gap is split at the integer nearest its temporal midpoint, ties
    toward the earlier position.
    """
    order = []
    stack = [(0, count + 1)]
    while stack:
        lo, hi = stack.pop(0)
        if hi - lo < 2:
            continue
        mid = (lo + hi) // 2
        order.append((mid, lo, hi))
        stack.append((lo, mid))
        stack.append((mid, hi))
    return order


def interpolate_recursive(req: InterpolationRequest, flow_cfg: FlowConfig | None = None) -> list[Frame]:
    a, b = req.frame_a, req.frame_b
    known = {0: a, req.count + 1: b}
    for pos, lo, hi in fill_order(req.count):
        known[pos] = interpolate_midpoint(known[lo], known[hi], flow_cfg, index=a.index + pos)
    return [known[p] for p in range(1, req.count + 1)]


def smooth_borders(segments: Sequence[Sequence[Frame]], flow_cfg: FlowConfig | None = None) -> list[Frame]:
    """Concatenate segments, replacing each segment's first frame (after the
    first segment) by the midpoint of the border pair."""
    for i, seg in enumerate(segments):
        if not seg:
            raise EmptySegment(f"segment {i} is empty")
    out = [f for seg in segments for f in seg]
    pos = 0
    for prev, nxt in zip(segments, segments[1:]):
        pos += len(prev)
        out[pos] = interpolate_midpoint(prev[-1], nxt[0], flow_cfg, index=nxt[0].index)
    return out


def border_positions(segments: Sequence[Sequence]) -> list[int]:
    """Index (in the concatenation) of each segment's first frame, except the first segment."""
    out, pos = [], 0
    for seg in segments[:-1]:
        pos += len(seg)
        out.append(pos)
    return out


@dataclass(frozen=True)
class BorderMetrics:
    positions: tuple[int, ...]
    mse: tuple[float, ...]
    ssim: tuple[float, ...]

    @property
    def mean_mse(self) -> float:
        return float(np.mean(self.mse)) if self.mse else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else 1.0

    def to_json(self) -> dict:
        return {
            "mean_mse": self.mean_mse,
            "mean_ssim": self.mean_ssim,
            "mse_per_border": list(self.mse),
            "positions": list(self.positions),
            "ssim_per_border": list(self.ssim),
        }


def border_consistency(video: Sequence[Frame], borders: Sequence[int] | None = None,
                       flow_cfg: FlowConfig | None = None) -> BorderMetrics:
    """Warp frame ``p - 1`` onto frame ``p`` with estimated flow and compare.

    ``borders`` lists the positions ``p`` of next-segment first frames;
    default is every consecutive pair.  MSE is over all samples in 8-bit
    units, SSIM is the global SSIM of the luma planes.
    """
    if len(video) < 2:
        raise EmptyInput("border consistency needs at least 2 frames")
    borders = list(range(1, len(video))) if borders is None else list(borders)
    mse, ssim = [], []
    for p in borders:
        prev, nxt = video[p - 1], video[p]
        warped = prev.pixels.astype(np.float64)
        if min(prev.height, prev.width) >= 16 and not np.array_equal(prev.pixels, nxt.pixels):
            flow = estimate_flow(to_gray(nxt), to_gray(prev), flow_cfg)
            warped = warp(warped, flow.u, flow.v)
        warped_frame = Frame(_round8(warped), nxt.index)
        diff = warped_frame.pixels.astype(np.float64) - nxt.pixels.astype(np.float64)
        mse.append(float(np.mean(diff * diff)))
        ssim.append(ssim_global(to_gray(warped_frame), to_gray(nxt)))
    return BorderMetrics(tuple(borders), tuple(mse), tuple(ssim))
