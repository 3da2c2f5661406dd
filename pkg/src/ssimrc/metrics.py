"""Quality and complexity measures on luma planes.

All functions accept either :class:`~ssimrc.media_io.LumaFrame` objects or
plain 2-D arrays.  Rectangles are ``(x0, y0, w, h)`` tuples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

C1 = (0.01 * 255) ** 2
C2 = (0.03 * 255) ** 2
WINDOW = 11
SIGMA = 1.5
PSNR_CAP = 99.99

# incremented on every ssim_map evaluation; schemes read it to prove the
# mode-decision loop never touches SSIM
ssim_evaluations = 0


@dataclass(frozen=True)
class SsimMap:
    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class DistortionRecord:
    d_ssim: float
    d_mse: float
    satd: float
    pixel_count: int


def _plane(x) -> np.ndarray:
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def gaussian_window(size: int = WINDOW, sigma: float = SIGMA) -> np.ndarray:
    """Normalised 1-D Gaussian taps; the 2-D window is its outer product."""
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r * r) / (2 * sigma * sigma))
    return g / g.sum()


def _blur(a: np.ndarray, taps: np.ndarray) -> np.ndarray:
    # 'reflect' in scipy is the symmetric (edge sample repeated) extension
    a = ndimage.correlate1d(a, taps, axis=0, mode="reflect")
    return ndimage.correlate1d(a, taps, axis=1, mode="reflect")


def ssim_map(x, y) -> SsimMap:
    """Per-pixel SSIM of ``y`` against ``x`` with an 11x11, sigma=1.5 Gaussian window."""
    global ssim_evaluations
    ssim_evaluations += 1
    a, b = _plane(x), _plane(y)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    taps = gaussian_window()
    mu_a, mu_b = _blur(a, taps), _blur(b, taps)
    # second moments are shift invariant; centring on 128 halves the
    # magnitude of the cancelling terms
    sa, sb = a - 128.0, b - 128.0
    ma, mb = mu_a - 128.0, mu_b - 128.0
    var_a = _blur(sa * sa, taps) - ma * ma
    var_b = _blur(sb * sb, taps) - mb * mb
    cov = _blur(sa * sb, taps) - ma * mb
    lum = (2 * mu_a * mu_b + C1) / (mu_a * mu_a + mu_b * mu_b + C1)
    cs = (2 * cov + C2) / (var_a + var_b + C2)
    return SsimMap(lum * cs)


def d_ssim_unit(smap: SsimMap | np.ndarray, region) -> float:
    """``1 - mean(SSIM)`` over ``region``."""
    values = getattr(smap, "values", smap)
    x0, y0, w, h = region
    if w <= 0 or h <= 0:
        raise ValueError("empty region")
    if x0 < 0 or y0 < 0 or x0 + w > values.shape[1] or y0 + h > values.shape[0]:
        raise ValueError(f"region {region} outside {values.shape[1]}x{values.shape[0]} map")
    return float(1.0 - values[y0:y0 + h, x0:x0 + w].mean())


def frame_d_ssim_from_ctus(records, m_frame: int) -> float:
    """Pixel-count weighted mean of per-CTU SSIM distortions."""
    total = sum(r.pixel_count for r in records)
    if total != m_frame:
        raise ValueError(f"pixel counts sum to {total}, frame has {m_frame}")
    return math.fsum(r.d_ssim * r.pixel_count for r in records) / m_frame


def mse_unit(x, y, region=None) -> float:
    a, b = _plane(x), _plane(y)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    if region is not None:
        x0, y0, w, h = region
        if w <= 0 or h <= 0:
            raise ValueError("empty region")
        a = a[y0:y0 + h, x0:x0 + w]
        b = b[y0:y0 + h, x0:x0 + w]
    d = a - b
    return float(np.mean(d * d))


def psnr(d_mse: float) -> float:
    """PSNR in dB for 8-bit data; zero error maps to ``PSNR_CAP``."""
    if d_mse <= 0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * math.log10(255.0 ** 2 / d_mse))


def hadamard_matrix(n: int = 8) -> np.ndarray:
    """Unnormalised +-1 Sylvester Hadamard matrix of order ``n``."""
    h = np.ones((1, 1))
    while h.shape[0] < n:
        h = np.block([[h, h], [h, -h]])
    return h


_H8 = hadamard_matrix(8)


def satd_ctu(x, region=None) -> float:
    """Sum of absolute 8x8 Hadamard coefficients excluding each sub-block DC.

    Edge sub-blocks that do not fill 8x8 are zero padded before transforming.
    """
    a = _plane(x)
    if region is not None:
        x0, y0, w, h = region
        a = a[y0:y0 + h, x0:x0 + w]
    h, w = a.shape
    ph, pw = -(-h // 8) * 8, -(-w // 8) * 8
    if (ph, pw) != (h, w):
        a = np.pad(a, ((0, ph - h), (0, pw - w)))
    blocks = a.reshape(ph // 8, 8, pw // 8, 8).transpose(0, 2, 1, 3)
    coeffs = np.einsum("ij,abjk,lk->abil", _H8, blocks, _H8)
    mag = np.abs(coeffs)
    return float(mag.sum() - mag[:, :, 0, 0].sum())


def variance_unit(x, region=None) -> float:
    a = _plane(x)
    if region is not None:
        x0, y0, w, h = region
        a = a[y0:y0 + h, x0:x0 + w]
    return float(a.var())
