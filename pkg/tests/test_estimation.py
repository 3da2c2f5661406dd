import math

import numpy as np
import pytest

from ssimrc.allocation import lambda_ssim_from, map_lambda
from ssimrc.estimation import (BootstrapSample, InitialParams, init_params, joint_solve, joint_solve_ssim,
                               update_linear_dd_lms, update_r_lambda_regression, update_rd_ssim_regression)
from ssimrc.models import HyperbolicRdParams, LinearDdParams, RLambdaMseParams, prediction_error


def test_r_lambda_fixed_point_and_step():
    p = RLambdaMseParams(7.0, -1.3)
    assert update_r_lambda_regression(p, 7.0 * 0.6 ** -1.3, 0.6) == p
    q = update_r_lambda_regression(RLambdaMseParams(10, -1), 10 * math.e, 1.0)
    assert abs(q.c - 11) < 1e-12 and q.k == -1


def test_rd_regression_fixed_point_and_step():
    p = HyperbolicRdParams(0.03, -1.2)
    assert update_rd_ssim_regression(p, 0.03 * 0.4 ** -1.2, 0.4) == p
    q = update_rd_ssim_regression(HyperbolicRdParams(0.04, -1), 0.04 * math.e, 1.0)
    assert abs(q.alpha - 0.044) < 1e-15 and q.beta == -1
    assert update_rd_ssim_regression(p, 0.0, 0.4) is p


def regress(update, start, truth, iters):
    grid = np.linspace(0.1, 2.0, 20)
    p = start
    for i in range(iters):
        b = float(grid[i % len(grid)])
        p = update(p, truth(b), b)
    return p


def test_r_lambda_convergence():
    cs, ks = 6.0, -1.5
    p = regress(update_r_lambda_regression, RLambdaMseParams(10, -1), lambda b: cs * b ** ks, 200)
    assert abs(p.c - cs) / cs < 0.05 and abs(p.k - ks) / abs(ks) < 0.05


def test_rd_regression_convergence():
    a, b_ = 0.05, -1.3
    p = regress(update_rd_ssim_regression, HyperbolicRdParams(0.1, -1), lambda b: a * b ** b_, 200)
    assert abs(p.alpha - a) / a < 0.05 and abs(p.beta - b_) / abs(b_) < 0.05


def test_joint_solve_example():
    p = joint_solve_ssim(0.02, 0.5, 0.04)
    assert abs(p.beta + 1) < 1e-15 and abs(p.alpha - 0.01) < 1e-15
    assert abs(p.alpha * 0.5 ** p.beta - 0.02) < 1e-15
    assert abs(-p.alpha * p.beta * 0.5 ** (p.beta - 1) - 0.04) < 1e-15


def test_joint_solve_clamp_recomputes_alpha():
    # raw beta = -0.5 * 0.2 / 0.01 = -5
    p = joint_solve_ssim(0.01, 0.2, 0.5)
    assert p.beta == -3.0
    assert math.isclose(p.alpha * 0.2 ** -3, 0.01, rel_tol=1e-14)


def test_joint_solve_fallbacks():
    prev = HyperbolicRdParams(0.1, -1)
    assert joint_solve_ssim(0.0, 0.5, 0.1, prev) is prev
    assert joint_solve(0.01, 0.5, 1.0, 0.0, 100.0, prev) is prev
    with pytest.raises(ValueError):
        joint_solve_ssim(-1, 0.5, 0.1)


def test_joint_solve_mapped_equivalence():
    rng = np.random.default_rng(3)
    for _ in range(200):
        s, theta = rng.uniform(100, 1e5), rng.uniform(1, 1e3)
        lam_ssim = rng.uniform(1e-3, 1)
        lam_new = map_lambda(lam_ssim, s, LinearDdParams(theta, 0))
        d, b = rng.uniform(1e-3, 0.2), rng.uniform(0.05, 3)
        assert joint_solve(d, b, lam_new, s, theta) == joint_solve_ssim(d, b, lambda_ssim_from(lam_new, s, theta))


def test_lms_fixed_point_and_step():
    p = LinearDdParams(300.0, 0.002)
    d_mse, s = 40.0, 15000.0
    assert update_linear_dd_lms(p, 300 * d_mse / s + 0.002, d_mse, s) == p
    q = update_linear_dd_lms(LinearDdParams(0, 0), 0.02, 50, 20000)
    assert abs(q.theta - 0.01) < 1e-15 and abs(q.eta - 0.0002) < 1e-15
    with pytest.raises(ValueError):
        update_linear_dd_lms(p, 0.01, 1, 0)


def lms_stream(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.001, 0.02, n)
    s = rng.uniform(5000, 30000, n)
    return x * s, s


def test_lms_convergence():
    theta_t, eta_t = 2.0, 0.002
    d_mse, s = lms_stream(0, 100)
    d = theta_t * d_mse / s + eta_t
    p = LinearDdParams(max(s[0] * d[0] / d_mse[0], 1e-6), 0.0)
    for i in range(100):
        p = update_linear_dd_lms(p, d[i], d_mse[i], s[i])
    d_mse2, s2 = lms_stream(1, 200)
    actual = theta_t * d_mse2 / s2 + eta_t
    errs = [prediction_error(a, p.theta * m / q + p.eta) for a, m, q in zip(actual, d_mse2, s2)]
    assert np.median(errs) < 0.05


def test_init_params():
    st = init_params([BootstrapSample(4096, 4096, 0.02, 1.0, 20000, 10.0)])
    assert st[0].dd.theta == 400 and st[0].dd.eta == 0
    # lossless CTU gets the frame-average ratio
    st = init_params([BootstrapSample(4096, 4096, 0.02, 1.0, 20000, 10.0),
                      BootstrapSample(8000, 4096, 0.0, 0.0, 10000, 10.0)])
    assert math.isclose(st[1].dd.theta, 10000 * 0.02 / 1.0)
    # the rate curve passes through the bootstrap point
    rl = st[0].rl
    assert math.isclose(rl.c * 1.0 ** rl.k, 10.0)
    assert rl.k == InitialParams().k


def test_store_json_and_ratio():
    st = init_params([BootstrapSample(4096, 4096, 0.02, 1.0, 20000, 10.0),
                      BootstrapSample(4096, 4096, 0.02, 2.0, 0.0, 10.0)])
    assert math.isclose(st.theta_ratio(), 400 / 20000)
    j = st.to_json()
    assert len(j["ctus"]) == 2 and j["rates"]["delta_c"] == 0.1
