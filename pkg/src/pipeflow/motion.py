"""Per-transition motion metrics: luma, global SSIM, dense flow, mean flow magnitude.

Flow convention throughout: for a flow field ``f`` estimated from ``a`` to ``b``,
``a(x, y) ~= b(x + u(x, y), y + v(x, y))``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import BadConfig, ChannelError, DimensionMismatch, TooSmall
from .frameio import Frame

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
DYNAMIC_RANGE = 255.0
SSIM_C1 = (0.01 * DYNAMIC_RANGE) ** 2
SSIM_C2 = (0.03 * DYNAMIC_RANGE) ** 2
MIN_FLOW_SIZE = 16


@dataclass(frozen=True, eq=False)
class GrayFrame:
    """Full-precision luminance plane, shape (H, W), float64."""

    data: np.ndarray
    index: int = 0

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.size == 0:
            raise DimensionMismatch(f"gray plane must be 2-D and non-empty, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def as_uint8(self) -> np.ndarray:
        """Round half-up to 8-bit storage."""
        return np.clip(np.floor(self.data + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class FlowField:
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, copy=True)
        v = np.array(self.v, dtype=np.float64, copy=True)
        if u.ndim != 2 or u.shape != v.shape:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} must be equal 2-D planes")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValueError("flow contains non-finite entries")
        u.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)

    @classmethod
    def zeros(cls, height: int, width: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass(frozen=True)
class FlowConfig:
    pyramid_levels: int = 3
    window: int = 5
    iterations: int = 4
    # Tikhonov term on the 2x2 normal equations; keeps flat regions at zero flow
    regularization: float = 1e-2
    # residual scale (8-bit units) of the Lorentzian weights that damp occluded pixels
    robust_scale: float = 10.0

    def __post_init__(self):
        if self.pyramid_levels < 1:
            raise BadConfig("pyramid_levels must be >= 1")
        if self.window < 3 or self.window % 2 == 0:
            raise BadConfig("window must be an odd number >= 3")
        if self.iterations < 1:
            raise BadConfig("iterations must be >= 1")
        if self.regularization <= 0:
            raise BadConfig("regularization must be positive")
        if self.robust_scale <= 0:
            raise BadConfig("robust_scale must be positive")


@dataclass(frozen=True)
class MotionMetrics:
    ssim: float
    mean_flow_magnitude: float
    frame_pair: tuple[int, int]


# -- luma and SSIM -------------------------------------------------------------

def to_gray(frame: Frame) -> GrayFrame:
    px = frame.pixels
    if px.ndim != 3 or px.shape[2] not in (1, 3):
        raise ChannelError(f"unsupported channel count {px.shape[-1]}")
    if px.shape[2] == 1:
        return GrayFrame(px[:, :, 0].astype(np.float64), frame.index)
    rgb = px.astype(np.float64)
    r, g, b = LUMA_WEIGHTS
    return GrayFrame(r * rgb[:, :, 0] + g * rgb[:, :, 1] + b * rgb[:, :, 2], frame.index)


def _plane(x) -> np.ndarray:
    return x.data if isinstance(x, GrayFrame) else np.asarray(x, dtype=np.float64)


def ssim_global(a: GrayFrame, b: GrayFrame) -> float:
    """SSIM from whole-image statistics (population variance/covariance)."""
    x, y = _plane(a), _plane(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    if x.size < 2:
        raise DimensionMismatch("SSIM needs at least 2 pixels")
    mx, my = x.mean(), y.mean()
    dx, dy = x - mx, y - my
    vx = np.mean(dx * dx)
    vy = np.mean(dy * dy)
    cov = np.mean(dx * dy)
    num = (2 * mx * my + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2)
    return float(num / den)


def mean_flow_magnitude(flow: FlowField) -> float:
    return float(np.mean(np.sqrt(flow.u ** 2 + flow.v ** 2)))


# -- image helpers ---------------------------------------------------------------

def box_sum(img: np.ndarray, size: int) -> np.ndarray:
    """Sum over a size x size window centred on each pixel, replicate-edge."""
    r = size // 2
    p = np.pad(img, r, mode="edge")
    c = np.cumsum(np.cumsum(p, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    h, w = img.shape
    return c[size:size + h, size:size + w] - c[:h, size:size + w] - c[size:size + h, :w] + c[:h, :w]


def _convolve_sep(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    r = len(kernel) // 2
    p = np.pad(img, r, mode="edge")
    h, w = img.shape
    tmp = sum(k * p[:, i:i + w] for i, k in enumerate(kernel))
    return sum(k * tmp[i:i + h, :] for i, k in enumerate(kernel))


_BINOMIAL5 = np.array([1, 4, 6, 4, 1], dtype=np.float64) / 16.0


def _downsample(img: np.ndarray) -> np.ndarray:
    return _convolve_sep(img, _BINOMIAL5)[::2, ::2]


def bilinear_sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample ``img`` at real coordinates; coordinates are clamped (replicate edge).

    Integer coordinates return the stored samples exactly.
    """
    h, w = img.shape[:2]
    xs = np.clip(xs, 0, w - 1)
    ys = np.clip(ys, 0, h - 1)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def warp(img: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Backward warp: ``out(x, y) = img(x + u, y + v)``."""
    h, w = img.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample(img, xs + u, ys + v)


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(img, 1, mode="edge")
    gx = 0.5 * (p[1:-1, 2:] - p[1:-1, :-2])
    gy = 0.5 * (p[2:, 1:-1] - p[:-2, 1:-1])
    return gx, gy


def _upsample_flow(u: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return 2.0 * bilinear_sample(u, (xs + 0.5) / 2 - 0.5, (ys + 0.5) / 2 - 0.5)


# -- flow --------------------------------------------------------------------------

def _check_pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    x, y = _plane(a), _plane(b)
    if x.shape != y.shape:
        raise DimensionMismatch(f"{x.shape} vs {y.shape}")
    return x, y


def _refine(i0: np.ndarray, i1: np.ndarray, u: np.ndarray, v: np.ndarray, cfg: FlowConfig):
    g0x, g0y = _gradients(i0)
    for _ in range(cfg.iterations):
        i1w = warp(i1, u, v)
        g1x, g1y = _gradients(i1w)
        ix = 0.5 * (g0x + g1x)
        iy = 0.5 * (g0y + g1y)
        it = i1w - i0
        wt = 1.0 / (1.0 + (it / cfg.robust_scale) ** 2)
        sxx = box_sum(wt * ix * ix, cfg.window) + cfg.regularization
        syy = box_sum(wt * iy * iy, cfg.window) + cfg.regularization
        sxy = box_sum(wt * ix * iy, cfg.window)
        sxt = box_sum(wt * ix * it, cfg.window)
        syt = box_sum(wt * iy * it, cfg.window)
        det = sxx * syy - sxy * sxy
        u = box_sum(u + (sxy * syt - syy * sxt) / det, 3) / 9.0
        v = box_sum(v + (sxy * sxt - sxx * syt) / det, 3) / 9.0
    return u, v


def estimate_flow(a: GrayFrame, b: GrayFrame, cfg: FlowConfig | None = None) -> FlowField:
    """Dense coarse-to-fine gradient-based flow from ``a`` to ``b``.

    Each pyramid level solves windowed, residual-weighted least-squares
    brightness-constancy updates on ``b`` warped by the current estimate,
    smoothing the field after every update; the result is upsampled (x2) to
    seed the next finer level.
    """
    cfg = cfg or FlowConfig()
    x, y = _check_pair(a, b)
    if min(x.shape) < MIN_FLOW_SIZE:
        raise TooSmall(f"flow needs frames of at least {MIN_FLOW_SIZE}x{MIN_FLOW_SIZE}, got {x.shape[::-1]}")

    pyr0, pyr1 = [x], [y]
    for _ in range(cfg.pyramid_levels - 1):
        if min(pyr0[-1].shape) < 2 * cfg.window:
            break
        pyr0.append(_downsample(pyr0[-1]))
        pyr1.append(_downsample(pyr1[-1]))

    u = np.zeros_like(pyr0[-1])
    v = np.zeros_like(pyr0[-1])
    for level in range(len(pyr0) - 1, -1, -1):
        i0, i1 = pyr0[level], pyr1[level]
        if u.shape != i0.shape:
            u = _upsample_flow(u, i0.shape)
            v = _upsample_flow(v, i0.shape)
        u, v = _refine(i0, i1, u, v, cfg)
    return FlowField(u, v)


def flow_oracle_blockmatch(a: GrayFrame, b: GrayFrame, radius: int = 7, block: int = 9) -> FlowField:
    """Exhaustive integer block matching (sum of absolute differences).

    Ties go to the smaller displacement length, then to the lexicographically
    smaller (u, v).
    """
    if radius < 1:
        raise BadConfig("radius must be >= 1")
    if block < 1 or block % 2 == 0:
        raise BadConfig("block must be odd and positive")
    x, y = _check_pair(a, b)
    h, w = x.shape
    r = radius
    yp = np.pad(y, r, mode="edge")
    candidates = sorted(
        ((du, dv) for du in range(-r, r + 1) for dv in range(-r, r + 1)),
        key=lambda d: (d[0] * d[0] + d[1] * d[1], d[0], d[1]),
    )
    best = np.full((h, w), np.inf)
    bu = np.zeros((h, w))
    bv = np.zeros((h, w))
    for du, dv in candidates:
        shifted = yp[r + dv:r + dv + h, r + du:r + du + w]
        cost = box_sum(np.abs(x - shifted), block)
        better = cost < best
        best[better] = cost[better]
        bu[better] = du
        bv[better] = dv
    return FlowField(bu, bv)


def motion_metrics(a: GrayFrame, b: GrayFrame, cfg: FlowConfig | None = None) -> MotionMetrics:
    flow = estimate_flow(a, b, cfg)
    return MotionMetrics(ssim_global(a, b), mean_flow_magnitude(flow), (a.index, b.index))


# -- debug serialization ---------------------------------------------------------

def flow_to_bytes(flow: FlowField) -> bytes:
    head = struct.pack("<II", flow.width, flow.height)
    return head + flow.u.astype("<f4").tobytes() + flow.v.astype("<f4").tobytes()


def flow_from_bytes(buf: bytes) -> FlowField:
    w, h = struct.unpack_from("<II", buf)
    n = w * h
    if len(buf) != 8 + 8 * n:
        raise ValueError(f"flow blob has {len(buf)} bytes, expected {8 + 8 * n}")
    u = np.frombuffer(buf, "<f4", n, 8).reshape(h, w)
    v = np.frombuffer(buf, "<f4", n, 8 + 4 * n).reshape(h, w)
    return FlowField(u.astype(np.float64), v.astype(np.float64))
