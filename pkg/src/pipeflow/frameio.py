"""Image-sequence storage: binary PPM/PGM frames plus a ``manifest.json`` sidecar.

Layout of a sequence directory::

    manifest.json        {"frame_count", "width", "height", "fps_num", "fps_den", "pattern"}
    frame_000000.ppm     P6 for RGB, P5 (``.pgm``) for grayscale
    frame_000001.ppm
    ...
"""
from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    BadConfig,
    CorruptSequence,
    DecodeError,
    DimensionMismatch,
    EmptyInput,
    ManifestMissing,
    WriteError,
)

MANIFEST_NAME = "manifest.json"
MAX_DIM = 8192
_WHITESPACE = b" \t\n\r\v\f"


@dataclass(frozen=True, eq=False)
class Frame:
    """One immutable 8-bit frame, stored as an (H, W, C) uint8 array."""

    pixels: np.ndarray
    index: int = 0
    tag: str = field(default="", compare=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionMismatch(f"expected HxW, HxWx1 or HxWx3 samples, got shape {arr.shape}")
        if arr.shape[0] <= 0 or arr.shape[1] <= 0:
            raise DimensionMismatch("frame width and height must be positive")
        if arr.shape[0] > MAX_DIM or arr.shape[1] > MAX_DIM:
            raise DimensionMismatch(f"frame {arr.shape[1]}x{arr.shape[0]} exceeds {MAX_DIM}x{MAX_DIM}")
        if arr.dtype != np.uint8:
            if np.issubdtype(arr.dtype, np.integer) and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("integer samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.channels)

    @property
    def data(self) -> bytes:
        return self.pixels.tobytes()

    def with_index(self, index: int, tag: str | None = None) -> "Frame":
        return Frame(self.pixels, index, self.tag if tag is None else tag)

    def __eq__(self, other):
        if not isinstance(other, Frame):
            return NotImplemented
        return self.index == other.index and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


@dataclass(frozen=True)
class VideoManifest:
    frame_count: int
    width: int
    height: int
    fps: Fraction = Fraction(25)
    pattern: str = "frame_{:06}.ppm"

    def __post_init__(self):
        if self.frame_count < 1:
            raise BadConfig("frame_count must be >= 1")
        if Fraction(self.fps) <= 0:
            raise BadConfig("fps must be positive")
        if not (0 < self.width <= MAX_DIM and 0 < self.height <= MAX_DIM):
            raise BadConfig(f"unsupported dimensions {self.width}x{self.height}")

    def filename(self, index: int) -> str:
        return self.pattern.format(index)

    def to_json(self) -> dict:
        fps = Fraction(self.fps)
        return {
            "fps_den": fps.denominator,
            "fps_num": fps.numerator,
            "frame_count": self.frame_count,
            "height": self.height,
            "pattern": self.pattern,
            "width": self.width,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "VideoManifest":
        try:
            return cls(
                frame_count=int(obj["frame_count"]),
                width=int(obj["width"]),
                height=int(obj["height"]),
                fps=Fraction(int(obj["fps_num"]), int(obj["fps_den"])),
                pattern=str(obj["pattern"]),
            )
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise CorruptSequence(f"malformed manifest: {exc}") from exc


# -- PPM / PGM ---------------------------------------------------------------

def encode_pnm(frame: Frame) -> bytes:
    magic = b"P6" if frame.channels == 3 else b"P5"
    header = b"%s\n%d %d\n255\n" % (magic, frame.width, frame.height)
    return header + frame.data


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments
    n = len(buf)
    while pos < n:
        if buf[pos] in _WHITESPACE:
            pos += 1
        elif buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and buf[pos] not in _WHITESPACE and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise DecodeError("truncated header")
    return buf[start:pos], pos


def decode_pnm(buf: bytes, index: int = 0) -> Frame:
    magic = buf[:2]
    if magic == b"P6":
        channels = 3
    elif magic == b"P5":
        channels = 1
    else:
        raise DecodeError(f"unsupported magic {magic!r}")
    pos = 2
    fields = []
    try:
        for _ in range(3):
            tok, pos = _read_token(buf, pos)
            fields.append(int(tok))
    except ValueError as exc:
        raise DecodeError(f"bad header field: {exc}") from exc
    width, height, maxval = fields
    if maxval != 255:
        raise DecodeError(f"only maxval 255 is supported, got {maxval}")
    if not (0 < width <= MAX_DIM and 0 < height <= MAX_DIM):
        raise DecodeError(f"unsupported dimensions {width}x{height}")
    if pos >= len(buf) or buf[pos] not in _WHITESPACE:
        raise DecodeError("missing whitespace after maxval")
    pos += 1
    size = width * height * channels
    payload = buf[pos:pos + size]
    if len(payload) != size:
        raise DecodeError(f"payload has {len(payload)} bytes, expected {size}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return Frame(pixels, index)


def read_frame(path: str | os.PathLike, index: int = 0) -> Frame:
    with open(path, "rb") as fh:
        return decode_pnm(fh.read(), index)


def write_frame(frame: Frame, path: str | os.PathLike) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(encode_pnm(frame))
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


# -- sequences ---------------------------------------------------------------

def _pattern_regex(pattern: str) -> re.Pattern:
    head, sep, tail = pattern.partition("{")
    if not sep:
        raise CorruptSequence(f"pattern {pattern!r} has no index field")
    tail = tail.split("}", 1)[1]
    return re.compile(re.escape(head) + r"\d+" + re.escape(tail) + r"\Z")


class FrameSequence(Sequence[Frame]):
    """Lazy, read-only accessor over a sequence directory.

    Frames are decoded on each access; the object holds no mutable state
    after construction, so it may be shared between threads.
    """

    def __init__(self, root: Path, manifest: VideoManifest):
        self.root = root
        self.manifest = manifest

    def __len__(self) -> int:
        return self.manifest.frame_count

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        frame = read_frame(self.root / self.manifest.filename(i), i)
        if (frame.width, frame.height) != (self.manifest.width, self.manifest.height):
            raise CorruptSequence(
                f"frame {i} is {frame.width}x{frame.height}, manifest says "
                f"{self.manifest.width}x{self.manifest.height}"
            )
        return frame

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self[i]


def load_sequence(dir_path: str | os.PathLike) -> FrameSequence:
    root = Path(dir_path)
    mpath = root / MANIFEST_NAME
    if not mpath.is_file():
        raise ManifestMissing(f"no {MANIFEST_NAME} in {root}")
    try:
        obj = json.loads(mpath.read_text())
    except (OSError, ValueError) as exc:
        raise CorruptSequence(f"unreadable manifest: {exc}") from exc
    manifest = VideoManifest.from_json(obj)
    rx = _pattern_regex(manifest.pattern)
    on_disk = sum(1 for p in root.iterdir() if rx.match(p.name))
    missing = [i for i in range(manifest.frame_count) if not (root / manifest.filename(i)).is_file()]
    if missing or on_disk != manifest.frame_count:
        raise CorruptSequence(
            f"manifest declares {manifest.frame_count} frames, found {on_disk} "
            f"(missing indices: {missing[:5]})"
        )
    return FrameSequence(root, manifest)


def write_sequence(frames: Iterable[Frame], dir_path: str | os.PathLike,
                   fps: Fraction | int | str = 25) -> VideoManifest:
    frames = list(frames)
    if not frames:
        raise EmptyInput("cannot write an empty frame sequence")
    first = frames[0]
    for f in frames:
        if f.shape != first.shape:
            raise DimensionMismatch(f"frame {f.index} is {f.shape}, expected {first.shape}")
    if [f.index for f in frames] != list(range(len(frames))):
        raise BadConfig("frame indices must be contiguous from 0")
    ext = "ppm" if first.channels == 3 else "pgm"
    manifest = VideoManifest(len(frames), first.width, first.height, Fraction(fps), f"frame_{{:06}}.{ext}")
    root = Path(dir_path)
    try:
        root.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise WriteError(f"cannot create {root}: {exc}") from exc
    for f in frames:
        write_frame(f, root / manifest.filename(f.index))
    try:
        (root / MANIFEST_NAME).write_text(json.dumps(manifest.to_json(), sort_keys=True, indent=2) + "\n")
    except OSError as exc:
        raise WriteError(f"cannot write manifest: {exc}") from exc
    return manifest
