"""Analytical rate/distortion/multiplier models and their fit statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SLOPE_MIN, SLOPE_MAX = -3.0, -0.01
YEO_EPS = 1.0


def clamp(v: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, v))


@dataclass(frozen=True)
class HyperbolicRdParams:
    """``D_ssim = alpha * bpp ** beta``."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not SLOPE_MIN <= self.beta <= SLOPE_MAX:
            raise ValueError(f"beta {self.beta} outside [{SLOPE_MIN}, {SLOPE_MAX}]")


@dataclass(frozen=True)
class RLambdaMseParams:
    """``lambda_mse = c * bpp ** k``."""

    c: float
    k: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not SLOPE_MIN <= self.k <= SLOPE_MAX:
            raise ValueError(f"k {self.k} outside [{SLOPE_MIN}, {SLOPE_MAX}]")


@dataclass(frozen=True)
class LinearDdParams:
    """``D_ssim = theta * D_mse / satd + eta``."""

    theta: float
    eta: float

    def __post_init__(self):
        if not math.isfinite(self.theta) or not math.isfinite(self.eta):
            raise ValueError("linear model parameters must be finite")


class DegenerateComplexity(ValueError):
    """SATD is zero while the distortion is not, so the D-D ratio is undefined."""


def hyperbolic_d(params: HyperbolicRdParams, bpp: float) -> float:
    if bpp <= 0:
        raise ValueError("bpp must be positive")
    return params.alpha * bpp ** params.beta


def lambda_from_bpp(params: HyperbolicRdParams, bpp: float) -> float:
    """Negative slope of the hyperbolic curve at ``bpp``."""
    if bpp <= 0:
        raise ValueError("bpp must be positive")
    return -params.alpha * params.beta * bpp ** (params.beta - 1.0)


def bpp_from_lambda(params: HyperbolicRdParams, lambda_ssim: float) -> float:
    if lambda_ssim <= 0:
        raise ValueError("lambda must be positive")
    return (lambda_ssim / (-params.alpha * params.beta)) ** (1.0 / (params.beta - 1.0))


def lambda_mse_from_bpp(params: RLambdaMseParams, bpp: float) -> float:
    if bpp <= 0:
        raise ValueError("bpp must be positive")
    return params.c * bpp ** params.k


def yeo_predict(d_mse: float, sigma2: float, eps: float = YEO_EPS) -> float:
    """Variance-normalised excess ``1/SSIM - 1`` predicted from MSE."""
    if d_mse < 0 or sigma2 < 0:
        raise ValueError("d_mse and sigma2 must be non-negative")
    return d_mse / (2.0 * sigma2 + eps)


def linear_predict(theta: float, eta: float, d_mse: float, satd: float) -> float:
    if d_mse < 0:
        raise ValueError("d_mse must be non-negative")
    if satd <= 0:
        if d_mse == 0:
            return eta
        raise DegenerateComplexity("satd is zero with non-zero distortion")
    return theta * d_mse / satd + eta


def dd_predict(model: str, d_mse: float, *, sigma2: float | None = None, satd: float | None = None,
               params: LinearDdParams | tuple[float, float] | None = None, eps: float = YEO_EPS) -> float:
    """Predicted SSIM distortion from MSE under one of the three D-D models.

    ``model`` is ``"yeo"`` (needs ``sigma2``), ``"global"`` or ``"local"``
    (both need ``satd`` and ``params``; global passes the corpus-wide pair).
    """
    if model == "yeo":
        return yeo_predict(d_mse, sigma2, eps)
    if model in ("global", "local"):
        theta, eta = (params.theta, params.eta) if isinstance(params, LinearDdParams) else params
        return linear_predict(theta, eta, d_mse, satd)
    raise ValueError(f"unknown D-D model {model!r}")


def ssim_excess(d_ssim: float) -> float:
    """``1/SSIM - 1`` for a unit with distortion ``1 - SSIM``."""
    return 1.0 / (1.0 - d_ssim) - 1.0


def pcc(xs, ys) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.shape != y.shape or x.size < 3:
        raise ValueError("pcc needs two equal-length samples of at least 3 points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance")
    return float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))


@dataclass(frozen=True)
class HyperbolicFit:
    alpha: float
    beta: float
    correlation: float
    n_points: int

    @property
    def params(self) -> HyperbolicRdParams:
        """The fit as controller state, exponent clamped to the valid range."""
        return HyperbolicRdParams(self.alpha, clamp(self.beta, SLOPE_MIN, SLOPE_MAX))


def fit_hyperbolic(points) -> HyperbolicFit:
    """Least-squares line through ``(log bpp, log D)``.

    Points with non-positive coordinates are dropped.  The reported
    correlation is between observed and fitted D in the linear domain
    (``nan`` when it is undefined, e.g. a constant fit).
    """
    pts = [(b, d) for b, d in points if b > 0 and d > 0]
    if len(pts) < 2:
        raise ValueError("need at least two positive (bpp, D) points")
    lb = np.log([p[0] for p in pts])
    ld = np.log([p[1] for p in pts])
    if np.ptp(lb) == 0:
        raise ValueError("all points share the same bpp")
    beta, log_alpha = np.polyfit(lb, ld, 1)
    alpha = math.exp(log_alpha)
    predicted = alpha * np.exp(beta * lb)
    try:
        corr = pcc(np.exp(ld), predicted) if len(pts) >= 3 else 1.0
    except ValueError:
        corr = float("nan")
    return HyperbolicFit(alpha, float(beta), corr, len(pts))


def fit_hyperbolic_4pt(points) -> HyperbolicFit:
    return fit_hyperbolic(points)


def prediction_error(actual: float, predicted: float) -> float:
    """Relative error ``|actual - predicted| / actual``; ``nan`` when actual is 0."""
    if actual < 0:
        raise ValueError("actual distortion must be non-negative")
    if actual == 0:
        return float("nan")
    return abs(actual - predicted) / actual


def fit_linear(xs, ys) -> tuple[float, float]:
    """Ordinary least squares ``y = slope * x + intercept``."""
    slope, intercept = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    return float(slope), float(intercept)
