"""Deterministic synthetic clips used by tests, the acceptance suite and ``gen-synthetic``."""
from __future__ import annotations

import numpy as np

from .errors import BadConfig
from .frameio import Frame

KINDS = ("static", "translate", "alternating", "mixed")


def random_texture(height: int, width: int, rng: np.random.Generator,
                   smoothness: float = 2.0, lo: float = 30.0, hi: float = 225.0) -> np.ndarray:
    """Band-limited periodic noise in [lo, hi].

    Built in the Fourier domain, so ``np.roll`` of the result is an exact
    translation of the underlying signal.
    """
    noise = rng.standard_normal((height, width))
    fy = np.fft.fftfreq(height)[:, None]
    fx = np.fft.fftfreq(width)[None, :]
    gain = np.exp(-2 * (np.pi * smoothness) ** 2 * (fx ** 2 + fy ** 2))
    tex = np.real(np.fft.ifft2(np.fft.fft2(noise) * gain))
    tex -= tex.min()
    tex /= max(tex.max(), 1e-12)
    return lo + (hi - lo) * tex


def shift(img: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out(x + dx, y + dy) = img(x, y)`` with wrap-around."""
    return np.roll(img, (dy, dx), axis=(0, 1))


def _to_frame(plane: np.ndarray, index: int, channels: int) -> Frame:
    q = np.clip(np.floor(plane + 0.5), 0, 255).astype(np.uint8)
    if channels == 3:
        # tinted copy per channel so colour transforms have something to act on
        q = np.stack([q, np.clip(q.astype(int) - 20, 0, 255), np.clip(q.astype(int) + 15, 0, 255)], axis=2)
    return Frame(q.astype(np.uint8), index)


def make_clip(kind: str = "mixed", frames: int = 60, width: int = 64, height: int = 64,
              seed: int = 0, channels: int = 3, speed: int = 1) -> list[Frame]:
    """Return a synthetic clip.

    static       one textured frame repeated
    translate    texture moving ``speed`` px/frame to the right
    alternating  black / white frames
    mixed        first third static, then translating with a slow brightness ramp
    """
    if kind not in KINDS:
        raise BadConfig(f"unknown clip kind {kind!r}; choose from {KINDS}")
    if frames < 1:
        raise BadConfig("frames must be >= 1")
    rng = np.random.default_rng(seed)
    tex = random_texture(height, width, rng)
    out = []
    still = frames // 3
    for i in range(frames):
        if kind == "static":
            plane = tex
        elif kind == "translate":
            plane = shift(tex, speed * i, 0)
        elif kind == "alternating":
            plane = np.full((height, width), 255.0 if i % 2 else 0.0)
        else:
            moved = max(0, i - still)
            plane = np.clip(shift(tex, speed * moved, 0) + 0.75 * moved, 0, 255)
        out.append(_to_frame(plane, i, channels))
    return out
