"""Deterministic short test sequences built from bundled stock photographs.

Each sequence is a slow pan across a greyscale image with mild seeded sensor
noise, so collocated CTUs of neighbouring frames share content the way a
camera pan does.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .media_io import LumaFrame

# whole-pixel pan vectors (px/frame); fractional ones make the interpolation
# blur, and hence the rate, cycle from frame to frame
SOURCES = {
    "astronaut": ("astronaut", (1, 1)),
    "camera": ("camera", (1, 0)),
    "coffee": ("coffee", (2, 0)),
    "rocket": ("rocket", (1, 1)),
    "chelsea": ("chelsea", (0, 1)),
    "brick": ("brick", (1, 0)),
}
DEFAULT_NAMES = ("astronaut", "camera", "coffee", "rocket", "chelsea")


def _image(name: str) -> np.ndarray:
    from skimage import data

    img = getattr(data, name)().astype(np.float64)
    if img.ndim == 3:
        img = img[..., :3] @ np.array([0.299, 0.587, 0.114])
    return img


def pan_sequence(name: str, frames: int = 16, width: int = 416, height: int = 240,
                 noise_sigma: float = 1.0, seed: int = 0) -> list[LumaFrame]:
    """``frames`` crops of ``width x height`` sliding along the image's pan vector."""
    key, (vx, vy) = SOURCES[name]
    img = _image(key)
    need_h, need_w = height + vy * (frames - 1), width + vx * (frames - 1)
    ih, iw = img.shape
    if ih < need_h or iw < need_w:
        img = ndimage.zoom(img, max(need_h / ih, need_w / iw) * 1.02, order=3)
    # the crop path bounces back at the edge for very long sequences
    span_x, span_y = img.shape[1] - width, img.shape[0] - height
    rng = np.random.default_rng(seed + sum(map(ord, name)))
    out = []
    for j in range(frames):
        x0, y0 = _bounce(vx * j, span_x), _bounce(vy * j, span_y)
        plane = img[y0:y0 + height, x0:x0 + width]
        if noise_sigma > 0:
            plane = plane + rng.normal(0.0, noise_sigma, plane.shape)
        out.append(LumaFrame(np.clip(np.rint(plane), 0, 255).astype(np.uint8)))
    return out


def _bounce(pos: int, span: int) -> int:
    if span <= 0:
        return 0
    pos %= 2 * span
    return pos if pos <= span else 2 * span - pos


def default_corpus(frames: int = 16, width: int = 416, height: int = 240,
                   names=DEFAULT_NAMES) -> dict[str, list[LumaFrame]]:
    return {n: pan_sequence(n, frames, width, height) for n in names}


def flat_sequence(frames: int = 4, width: int = 64, height: int = 64, level: int = 128) -> list[LumaFrame]:
    return [LumaFrame(np.full((height, width), level, np.uint8)) for _ in range(frames)]


def split_texture_frame(width: int = 128, height: int = 64, seed: int = 3) -> LumaFrame:
    """Left half flat grey, right half strong random texture."""
    rng = np.random.default_rng(seed)
    plane = np.full((height, width), 120.0)
    plane[:, width // 2:] = 128 + 40 * ndimage.gaussian_filter(rng.normal(size=(height, width // 2)), 1.0) * 3
    return LumaFrame(np.clip(np.rint(plane), 0, 255).astype(np.uint8))
