"""Raw luma video ingestion and CTU partitioning.

Three input containers are understood: YUV4MPEG2 (4:2:0 only), headerless
planar YUV 4:2:0 and directories of binary PGM (P5) images.  Only the luma
plane is retained.
"""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

FORMATS = ("y4m", "raw-yuv420-luma", "pgm-sequence")
CTU_SIZES = (16, 32, 64)


class MediaError(ValueError):
    """Raised for unreadable or inconsistent input media."""


@dataclass(frozen=True)
class LumaFrame:
    """An immutable 8-bit luma plane, stored as a read-only (height, width) array."""

    samples: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.samples)
        if arr.ndim != 2:
            raise MediaError(f"luma plane must be 2-D, got shape {arr.shape}")
        h, w = arr.shape
        if w < 16 or h < 16:
            raise MediaError(f"frame {w}x{h} is smaller than 16x16")
        if arr.dtype != np.uint8:
            if arr.min() < 0 or arr.max() > 255:
                raise MediaError("luma samples must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def height(self) -> int:
        return self.samples.shape[0]

    @property
    def dims(self) -> tuple[int, int]:
        return self.width, self.height

    def region(self, rect) -> np.ndarray:
        x0, y0, w, h = rect
        return self.samples[y0:y0 + h, x0:x0 + w]

    def tobytes(self) -> bytes:
        return self.samples.tobytes()


@dataclass(frozen=True)
class CtuGrid:
    width: int
    height: int
    ctu_size: int
    rects: tuple = field(repr=False)

    @property
    def pixel_counts(self) -> list[int]:
        return [w * h for (_, _, w, h) in self.rects]

    @property
    def cols(self) -> int:
        return -(-self.width // self.ctu_size)

    @property
    def rows(self) -> int:
        return -(-self.height // self.ctu_size)

    def __len__(self) -> int:
        return len(self.rects)

    def __iter__(self):
        return iter(self.rects)


def partition(frame_dims: tuple[int, int], ctu_size: int = 64) -> CtuGrid:
    """Tile a ``(width, height)`` frame into CTUs in raster order.

    Right and bottom boundary CTUs are truncated to the frame.
    """
    if ctu_size not in CTU_SIZES:
        raise ValueError(f"ctu_size must be one of {CTU_SIZES}, got {ctu_size}")
    width, height = frame_dims
    if width < 1 or height < 1:
        raise ValueError(f"invalid frame dimensions {frame_dims}")
    rects = []
    for y0 in range(0, height, ctu_size):
        for x0 in range(0, width, ctu_size):
            rects.append((x0, y0, min(ctu_size, width - x0), min(ctu_size, height - y0)))
    return CtuGrid(width, height, ctu_size, tuple(rects))


# --------------------------------------------------------------------------
# readers

def _finish(frames: list[LumaFrame], frame_count: int | None, source) -> list[LumaFrame]:
    if not frames:
        raise MediaError(f"{source}: zero frames")
    if frame_count is not None and len(frames) < frame_count:
        log.warning("%s: requested %d frames, only %d available", source, frame_count, len(frames))
    return frames


def _read_y4m(path: Path, frame_count, width=None, height=None) -> list[LumaFrame]:
    data = path.read_bytes()
    nl = data.find(b"\n")
    if nl < 0 or not data.startswith(b"YUV4MPEG2"):
        raise MediaError(f"{path}: malformed header (missing YUV4MPEG2 signature)")
    fields = data[:nl].decode("ascii", "replace").split()[1:]
    params = {f[0]: f[1:] for f in fields if f}
    try:
        w, h = int(params["W"]), int(params["H"])
    except (KeyError, ValueError):
        raise MediaError(f"{path}: malformed header (W/H missing)") from None
    if (width is not None and width != w) or (height is not None and height != h):
        raise MediaError(f"{path}: malformed header (W{w} H{h} differs from declared {width}x{height})")
    colorspace = params.get("C", "420")
    if not colorspace.startswith("420"):
        raise MediaError(f"{path}: malformed header (unsupported colorspace C{colorspace})")
    luma = w * h
    frame_bytes = luma + 2 * ((w + 1) // 2) * ((h + 1) // 2)
    frames = []
    pos = nl + 1
    while pos < len(data) and (frame_count is None or len(frames) < frame_count):
        if not data.startswith(b"FRAME", pos):
            raise MediaError(f"{path}: malformed header (expected FRAME marker at byte {pos})")
        eol = data.find(b"\n", pos)
        if eol < 0:
            raise MediaError(f"{path}: truncated payload")
        start = eol + 1
        if start + frame_bytes > len(data):
            raise MediaError(f"{path}: truncated payload in frame {len(frames)}")
        plane = np.frombuffer(data, np.uint8, luma, start).reshape(h, w)
        frames.append(LumaFrame(plane.copy()))
        pos = start + frame_bytes
    return _finish(frames, frame_count, path)


def _read_raw(path: Path, frame_count, width, height) -> list[LumaFrame]:
    if width is None or height is None:
        raise MediaError(f"{path}: raw input requires width and height")
    luma = width * height
    frame_bytes = luma + 2 * ((width + 1) // 2) * ((height + 1) // 2)
    data = path.read_bytes()
    if len(data) % frame_bytes:
        raise MediaError(
            f"{path}: truncated payload ({len(data)} bytes is not a multiple of the "
            f"{frame_bytes}-byte {width}x{height} 4:2:0 frame)")
    n = len(data) // frame_bytes
    if frame_count is not None:
        n = min(n, frame_count)
    frames = [LumaFrame(np.frombuffer(data, np.uint8, luma, i * frame_bytes).reshape(height, width).copy())
              for i in range(n)]
    return _finish(frames, frame_count, path)


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        m = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)").match(data, pos)
        if m is None:
            raise MediaError(f"{path}: malformed header")
        tokens.append(m.group(2))
        pos = m.end()
    if tokens[0] != b"P5":
        raise MediaError(f"{path}: malformed header (only binary P5 PGM is supported)")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise MediaError(f"{path}: malformed header") from None
    if maxval > 255:
        raise MediaError(f"{path}: malformed header (only 8-bit PGM is supported)")
    pos += 1  # single whitespace after maxval
    if len(data) - pos < w * h:
        raise MediaError(f"{path}: truncated payload")
    return np.frombuffer(data, np.uint8, w * h, pos).reshape(h, w).copy()


def _read_pgm_dir(path: Path, frame_count, width=None, height=None) -> list[LumaFrame]:
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".pgm")
    if frame_count is not None:
        files = files[:frame_count]
    frames = []
    for f in files:
        plane = read_pgm(f)
        if (width is not None and plane.shape[1] != width) or (height is not None and plane.shape[0] != height):
            raise MediaError(f"{f}: malformed header (dimensions {plane.shape[1]}x{plane.shape[0]})")
        if frames and plane.shape != frames[0].samples.shape:
            raise MediaError(f"{f}: frame dimensions differ from the first frame")
        frames.append(LumaFrame(plane))
    return _finish(frames, frame_count, path)


def load_sequence(path, format: str, frame_count: int | None = None,
                  width: int | None = None, height: int | None = None) -> list[LumaFrame]:
    """Load up to ``frame_count`` luma frames.

    Args:
        path: file (y4m, raw) or directory (pgm-sequence).
        format: one of ``FORMATS``.
        frame_count: maximum number of frames; ``None`` reads everything.
        width, height: required for raw input; checked against the header
            otherwise.

    Raises:
        MediaError: malformed header, truncated payload or zero frames.
        FileNotFoundError: ``path`` does not exist.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input not found: {path}")
    if frame_count is not None and frame_count < 1:
        raise ValueError("frame_count must be positive")
    readers = {"y4m": _read_y4m, "raw-yuv420-luma": _read_raw, "pgm-sequence": _read_pgm_dir}
    try:
        reader = readers[format]
    except KeyError:
        raise ValueError(f"unknown format {format!r}; expected one of {FORMATS}") from None
    return reader(path, frame_count, width, height)


# --------------------------------------------------------------------------
# writers

def write_raw_luma(path, frames: Iterable[LumaFrame]) -> None:
    """Concatenate luma planes with no chroma and no header."""
    with open(path, "wb") as fh:
        for f in frames:
            fh.write(f.tobytes())


def write_y4m(path, frames: Sequence[LumaFrame], fps: str = "30:1") -> None:
    """Write 4:2:0 YUV4MPEG2 with neutral (128) chroma."""
    w, h = frames[0].dims
    chroma = bytes([128]) * (2 * ((w + 1) // 2) * ((h + 1) // 2))
    with open(path, "wb") as fh:
        fh.write(f"YUV4MPEG2 W{w} H{h} F{fps} Ip A1:1 C420\n".encode("ascii"))
        for f in frames:
            fh.write(b"FRAME\n")
            fh.write(f.tobytes())
            fh.write(chroma)


def write_raw_yuv420(path, frames: Iterable[LumaFrame]) -> None:
    with open(path, "wb") as fh:
        for f in frames:
            w, h = f.dims
            fh.write(f.tobytes())
            fh.write(bytes([128]) * (2 * ((w + 1) // 2) * ((h + 1) // 2)))


def write_pgm_sequence(directory, frames: Iterable[LumaFrame], prefix: str = "f") -> list[Path]:
    directory = Path(directory)
    os.makedirs(directory, exist_ok=True)
    out = []
    for i, f in enumerate(frames):
        p = directory / f"{prefix}{i:03d}.pgm"
        with open(p, "wb") as fh:
            fh.write(f"P5\n{f.width} {f.height}\n255\n".encode("ascii"))
            fh.write(f.tobytes())
        out.append(p)
    return out
