"""Online parameter estimation for the per-CTU models."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

from .allocation import lambda_ssim_from
from .models import (SLOPE_MAX, SLOPE_MIN, HyperbolicRdParams, LinearDdParams,
                     RLambdaMseParams, clamp)

C_MIN, C_MAX = 1e-3, 1e4
ALPHA_MIN, ALPHA_MAX = 1e-8, 1e3
THETA_MIN = 1e-6


@dataclass(frozen=True)
class UpdateRates:
    delta_c: float = 0.1
    delta_k: float = 0.05
    delta_alpha: float = 0.1
    delta_beta: float = 0.05
    delta_theta: float = 0.01
    delta_eta: float = 0.01


@dataclass(frozen=True)
class InitialParams:
    alpha: float = 0.1
    beta: float = -1.0
    # median within-CTU slope of the fixed-QP operating points of the toy
    # codec; (10, -1) overshot the first managed frame by far more than 50%
    c: float = 8.4
    k: float = -2.25


def update_r_lambda_regression(params: RLambdaMseParams, lambda_mse_used: float, bpp_actual: float,
                               delta_c: float = 0.1, delta_k: float = 0.05) -> RLambdaMseParams:
    """One log-domain regression step of the rate-multiplier model."""
    if bpp_actual <= 0 or lambda_mse_used <= 0:
        raise ValueError("lambda and bpp must be positive")
    log_bpp = math.log(bpp_actual)
    # log of the ratio, so a sample lying on the curve gives exactly zero
    resid = math.log(lambda_mse_used / (params.c * bpp_actual ** params.k))
    c = params.c + delta_c * resid * params.c
    k = params.k + delta_k * resid * log_bpp
    return RLambdaMseParams(clamp(c, C_MIN, C_MAX), clamp(k, SLOPE_MIN, SLOPE_MAX))


def update_rd_ssim_regression(params: HyperbolicRdParams, d_ssim_actual: float, bpp_actual: float,
                              delta_alpha: float = 0.1, delta_beta: float = 0.05) -> HyperbolicRdParams:
    """Same regression step applied to the hyperbolic SSIM model.

    Non-positive observed distortion carries no log residual; the
    parameters are returned unchanged.
    """
    if bpp_actual <= 0:
        raise ValueError("bpp must be positive")
    if d_ssim_actual <= 0:
        return params
    log_bpp = math.log(bpp_actual)
    resid = math.log(d_ssim_actual / (params.alpha * bpp_actual ** params.beta))
    alpha = params.alpha + delta_alpha * resid * params.alpha
    beta = params.beta + delta_beta * resid * log_bpp
    return HyperbolicRdParams(clamp(alpha, ALPHA_MIN, ALPHA_MAX), clamp(beta, SLOPE_MIN, SLOPE_MAX))


def joint_solve_raw(d_ssim: float, bpp: float, lambda_ssim: float) -> tuple[float, float]:
    """Unclamped ``(alpha, beta)`` through ``(bpp, d_ssim)`` with slope ``-lambda_ssim``."""
    beta = -lambda_ssim * bpp / d_ssim
    return d_ssim / bpp ** beta, beta


def joint_solve_ssim(d_ssim: float, bpp: float, lambda_ssim: float,
                     previous: HyperbolicRdParams | None = None) -> HyperbolicRdParams:
    """Hyperbolic parameters matching one observed (bpp, D, lambda) triple.

    If the exponent has to be clamped, alpha is recomputed so the curve
    still interpolates the observation.
    """
    if d_ssim <= 0 or bpp <= 0 or lambda_ssim <= 0:
        if previous is None:
            raise ValueError("joint solve needs positive inputs")
        return previous
    _, beta = joint_solve_raw(d_ssim, bpp, lambda_ssim)
    beta = clamp(beta, SLOPE_MIN, SLOPE_MAX)
    alpha = d_ssim / bpp ** beta
    return HyperbolicRdParams(clamp(alpha, ALPHA_MIN, ALPHA_MAX), beta)


def joint_solve(d_ssim_actual: float, bpp_actual: float, lambda_mse_new_used: float, satd: float,
                theta: float, previous: HyperbolicRdParams | None = None) -> HyperbolicRdParams:
    """Joint solve from the squared-error multiplier actually used in RDO."""
    if satd <= 0 or theta <= 0:
        if previous is None:
            raise ValueError("satd and theta must be positive")
        return previous
    return joint_solve_ssim(d_ssim_actual, bpp_actual,
                            lambda_ssim_from(lambda_mse_new_used, satd, theta), previous)


def update_linear_dd_lms(params: LinearDdParams, d_ssim_actual: float, d_mse_actual: float, satd: float,
                         delta_theta: float = 0.01, delta_eta: float = 0.01) -> LinearDdParams:
    """Least-mean-square step of the per-CTU SATD-normalised linear model."""
    if satd <= 0:
        raise ValueError("satd must be positive")
    err = d_ssim_actual - (params.theta * d_mse_actual / satd + params.eta)
    theta = params.theta + delta_theta * err * d_mse_actual
    eta = params.eta + delta_eta * err
    return LinearDdParams(max(theta, THETA_MIN), eta)


@dataclass
class CtuState:
    rd: HyperbolicRdParams
    rl: RLambdaMseParams
    dd: LinearDdParams
    satd: float = 0.0

    def snapshot(self) -> dict:
        return {"alpha": self.rd.alpha, "beta": self.rd.beta, "c": self.rl.c, "k": self.rl.k,
                "theta": self.dd.theta, "eta": self.dd.eta, "satd": self.satd}


@dataclass
class CtuParamStore:
    ctus: list[CtuState]
    rates: UpdateRates = field(default_factory=UpdateRates)

    def __len__(self) -> int:
        return len(self.ctus)

    def __getitem__(self, i: int) -> CtuState:
        return self.ctus[i]

    def theta_ratio(self) -> float | None:
        """Frame-average theta / satd over CTUs where it is defined."""
        vals = [s.dd.theta / s.satd for s in self.ctus if s.satd > 0 and s.dd.theta > 0]
        return math.fsum(vals) / len(vals) if vals else None

    def to_json(self) -> dict:
        return {"rates": asdict(self.rates), "ctus": [s.snapshot() for s in self.ctus]}


@dataclass(frozen=True)
class BootstrapSample:
    bits: int
    pixel_count: int
    d_ssim: float
    d_mse: float
    satd: float
    lambda_mse: float

    @property
    def bpp(self) -> float:
        return self.bits / self.pixel_count


def init_params(samples, rates: UpdateRates = UpdateRates(),
                initial: InitialParams = InitialParams()) -> CtuParamStore:
    """Build per-CTU state from the bootstrap frame.

    The D-D slope starts at ``satd * D_ssim / D_mse`` (frame average where
    that is undefined) with zero intercept.  The hyperbolic model starts at
    the defaults and is refined by one joint solve using the bootstrap
    multiplier mapped through the initial slope.
    """
    ratios = [s.d_ssim / s.d_mse for s in samples if s.d_mse > 0 and s.satd > 0 and s.d_ssim > 0]
    mean_ratio = math.fsum(ratios) / len(ratios) if ratios else 1.0
    default_rd = HyperbolicRdParams(initial.alpha, initial.beta)
    ctus = []
    for s in samples:
        if s.d_mse > 0 and s.d_ssim > 0 and s.satd > 0:
            theta = s.satd * s.d_ssim / s.d_mse
        else:
            theta = s.satd * mean_ratio if s.satd > 0 else THETA_MIN
        dd = LinearDdParams(max(theta, THETA_MIN), 0.0)
        rd = default_rd
        if s.satd > 0 and s.lambda_mse > 0:
            rd = joint_solve(s.d_ssim, s.bpp, s.lambda_mse, s.satd, dd.theta, previous=default_rd)
        rl = RLambdaMseParams(initial.c, initial.k)
        if s.bits > 0 and s.lambda_mse > 0:
            # pin the rate curve to the bootstrap point, keeping the default slope
            rl = RLambdaMseParams(clamp(s.lambda_mse / s.bpp ** initial.k, C_MIN, C_MAX), initial.k)
        ctus.append(CtuState(rd, rl, dd, s.satd))
    return CtuParamStore(ctus, rates)
