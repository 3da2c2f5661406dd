"""Frame-level SSIM-optimal bit allocation across CTUs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import HyperbolicRdParams, LinearDdParams

BPP_MIN, BPP_MAX = 0.005, 8.0
LAMBDA_LO, LAMBDA_HI = 1e-6, 1e4
MIN_CTU_BITS = 16
LAMBDA_NEW_MIN, LAMBDA_NEW_MAX = 1e-4, 1e6


@dataclass(frozen=True)
class AllocationResult:
    lambda_ssim_star: float
    per_ctu_bpp: tuple
    per_ctu_bits: tuple
    achieved_total: float
    target: float
    iterations: int
    clamped: bool = False

    @property
    def relative_error(self) -> float:
        return abs(self.achieved_total - self.target) / self.target


def _arrays(models):
    alpha = np.array([m.alpha for m in models], dtype=np.float64)
    beta = np.array([m.beta for m in models], dtype=np.float64)
    return alpha, beta


def bpp_at_lambda(alpha, beta, lam, bpp_min=BPP_MIN, bpp_max=BPP_MAX):
    """Per-CTU bpp whose marginal SSIM gain equals ``lam``, clamped."""
    with np.errstate(over="ignore", divide="ignore"):
        bpp = (lam / (-alpha * beta)) ** (1.0 / (beta - 1.0))
    return np.clip(bpp, bpp_min, bpp_max)


def total_bits(alpha, beta, m, lam, bpp_min=BPP_MIN, bpp_max=BPP_MAX) -> float:
    # math.fsum keeps the reduction order independent of vector layout
    return math.fsum(m * bpp_at_lambda(alpha, beta, lam, bpp_min, bpp_max))


def solve_frame_allocation(models, pixel_counts, r_c: float, *, rel_tol: float = 1e-10,
                           max_iter: int = 100, lambda_lo: float = LAMBDA_LO,
                           lambda_hi: float = LAMBDA_HI, bpp_min: float = BPP_MIN,
                           bpp_max: float = BPP_MAX) -> AllocationResult:
    """Find the single multiplier whose CTU allocations sum to ``r_c`` bits.

    Total bits decrease monotonically in the multiplier, so the root is
    bracketed between ``lambda_lo`` and ``lambda_hi`` and bisected in the log
    domain until the relative bit error is below ``rel_tol`` or ``max_iter``
    halvings have been spent.  An unreachable target is clamped to the
    nearer bracket end and flagged.
    """
    if len(models) != len(pixel_counts) or not models:
        raise ValueError("need one model per CTU")
    if r_c < len(models) * MIN_CTU_BITS:
        raise ValueError(f"budget {r_c} below {MIN_CTU_BITS} bits per CTU")
    alpha, beta = _arrays(models)
    m = np.asarray(pixel_counts, dtype=np.float64)

    def bits(lam):
        return total_bits(alpha, beta, m, lam, bpp_min, bpp_max)

    def result(lam, it, clamped=False):
        bpp = bpp_at_lambda(alpha, beta, lam, bpp_min, bpp_max)
        per_bits = m * bpp
        return AllocationResult(lam, tuple(bpp.tolist()), tuple(per_bits.tolist()),
                                math.fsum(per_bits), float(r_c), it, clamped)

    if bits(lambda_lo) < r_c:
        return result(lambda_lo, 0, True)
    if bits(lambda_hi) > r_c:
        return result(lambda_hi, 0, True)
    lo, hi = math.log(lambda_lo), math.log(lambda_hi)
    lam = math.exp(0.5 * (lo + hi))
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        lam = math.exp(mid)
        got = bits(lam)
        if abs(got - r_c) <= rel_tol * r_c:
            break
        if got > r_c:
            lo = mid
        else:
            hi = mid
    return result(lam, it)


def equal_bpp_allocation(pixel_counts, r_c: float) -> tuple[list[float], list[float]]:
    """Uniform bits-per-pixel split used by the MSE anchor."""
    m_frame = sum(pixel_counts)
    bpp = r_c / m_frame
    return [bpp] * len(pixel_counts), [bpp * m for m in pixel_counts]


def map_lambda(lambda_ssim: float, satd: float, dd: LinearDdParams | None,
               fallback_ratio: float | None = None) -> float:
    """Squared-error multiplier equivalent to ``lambda_ssim`` under the local D-D model.

    ``fallback_ratio`` (theta / satd averaged over the frame) is used when
    this CTU's own ratio is undefined.
    """
    if satd > 0 and dd is not None and dd.theta > 0:
        lam = satd / dd.theta * lambda_ssim
    elif fallback_ratio is not None and fallback_ratio > 0:
        lam = lambda_ssim / fallback_ratio
    else:
        lam = lambda_ssim
    return min(LAMBDA_NEW_MAX, max(LAMBDA_NEW_MIN, lam))


def lambda_ssim_from(lambda_mse: float, satd: float, theta: float) -> float:
    """Inverse of :func:`map_lambda` without clamping."""
    return theta / satd * lambda_mse
