import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ssimrc import metrics
from ssimrc.metrics import (C1, DistortionRecord, d_ssim_unit, frame_d_ssim_from_ctus, hadamard_matrix,
                            mse_unit, psnr, satd_ctu, ssim_map)
from ssimrc.media_io import partition

from .conftest import textured
from .oracles import scalar_ssim_map


def test_identity_map_is_one():
    x = textured(40, 40)
    assert np.all(ssim_map(x, x).values == 1.0)


def test_black_vs_white():
    x = np.zeros((20, 20))
    y = np.full((20, 20), 255.0)
    v = ssim_map(x, y).values
    assert np.allclose(v, C1 / (255 ** 2 + C1), rtol=0, atol=1e-15)
    assert abs(v[0, 0] - 9.9990e-5) < 1e-8


def test_offset_pattern_matches_scalar_oracle():
    x = textured(16, 16, seed=2).astype(float)
    y = np.clip(x + 10, 0, 255)
    assert np.max(np.abs(ssim_map(x, y).values - scalar_ssim_map(x, y))) < 1e-12


def test_symmetry():
    x, y = textured(32, 48, seed=1), textured(32, 48, seed=2)
    assert np.array_equal(ssim_map(x, y).values, ssim_map(y, x).values)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        ssim_map(np.zeros((16, 16)), np.zeros((16, 17)))


def test_counter_increments():
    before = metrics.ssim_evaluations
    ssim_map(np.zeros((16, 16)), np.zeros((16, 16)))
    assert metrics.ssim_evaluations == before + 1


def test_d_ssim_unit_examples():
    assert d_ssim_unit(np.ones((8, 8)), (0, 0, 8, 8)) == 0
    assert abs(d_ssim_unit(np.full((64, 64), 0.9), (0, 0, 64, 64)) - 0.1) < 1e-12
    m = np.array([[1.0, 0.8], [0.6, 0.6]])
    assert abs(d_ssim_unit(m, (0, 0, 2, 2)) - 0.25) < 1e-15
    with pytest.raises(ValueError):
        d_ssim_unit(m, (0, 0, 0, 2))
    with pytest.raises(ValueError):
        d_ssim_unit(m, (1, 1, 2, 2))


def test_frame_aggregation_examples():
    assert frame_d_ssim_from_ctus([DistortionRecord(0.07, 1, 1, 100)], 100) == 0.07
    r = [DistortionRecord(0.02, 0, 0, 4096), DistortionRecord(0.04, 0, 0, 4096)]
    assert abs(frame_d_ssim_from_ctus(r, 8192) - 0.03) < 1e-15
    r = [DistortionRecord(0.03, 0, 0, 4096), DistortionRecord(0.06, 0, 0, 2048)]
    assert abs(frame_d_ssim_from_ctus(r, 6144) - 0.04) < 1e-15
    with pytest.raises(ValueError):
        frame_d_ssim_from_ctus(r, 6000)


@pytest.mark.parametrize("size", [16, 32, 64])
def test_aggregation_consistency(size):
    x, y = textured(100, 130, seed=3), textured(100, 130, seed=4)
    sm = ssim_map(x, y)
    g = partition((130, 100), size)
    recs = [DistortionRecord(d_ssim_unit(sm, r), 0, 0, r[2] * r[3]) for r in g]
    assert abs(frame_d_ssim_from_ctus(recs, 13000) - d_ssim_unit(sm, (0, 0, 130, 100))) < 1e-12


def test_mse_psnr():
    x = textured(16, 16)
    assert mse_unit(x, x) == 0 and psnr(0.0) == 99.99
    y = x.astype(float) + 5
    assert mse_unit(x, y, (0, 0, 8, 8)) == 25
    assert abs(psnr(65.025) - 30.0) < 1e-12
    with pytest.raises(ValueError):
        mse_unit(x, np.zeros((16, 15)))


def test_hadamard_orthogonal():
    h = hadamard_matrix(8)
    assert np.array_equal(h @ h.T, 8 * np.eye(8))


def test_satd_examples():
    assert satd_ctu(np.full((64, 64), 77.0)) == 0
    assert satd_ctu(np.zeros((24, 24))) == 0
    a = np.zeros((8, 8))
    a[0, 0] = 9
    assert satd_ctu(a) == 63 * 9


def brute_satd(a):
    h = hadamard_matrix(8)
    total = 0.0
    ph, pw = -(-a.shape[0] // 8) * 8, -(-a.shape[1] // 8) * 8
    p = np.zeros((ph, pw))
    p[:a.shape[0], :a.shape[1]] = a
    for by in range(0, ph, 8):
        for bx in range(0, pw, 8):
            c = h @ p[by:by + 8, bx:bx + 8] @ h.T
            total += np.abs(c).sum() - abs(c[0, 0])
    return total


def test_satd_brute_force_with_partial_blocks():
    a = textured(21, 30, seed=9).astype(float)
    assert math.isclose(satd_ctu(a), brute_satd(a), rel_tol=1e-12)
    big = textured(64, 64, seed=8)
    assert math.isclose(satd_ctu(big, (8, 0, 20, 13)), brute_satd(big[0:13, 8:28].astype(float)), rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (16, 16), elements=st.floats(0, 200)), st.floats(0, 50), st.floats(0, 4))
def test_satd_shift_and_scale(a, c, k):
    s = satd_ctu(a)
    assert math.isclose(satd_ctu(a + c), s, rel_tol=1e-9, abs_tol=1e-6)
    assert math.isclose(satd_ctu(k * a), k * s, rel_tol=1e-9, abs_tol=1e-6)
