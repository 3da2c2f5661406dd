import math

import numpy as np
import pytest

from ssimrc.evaluation import (BdError, DdSample, RdCurvePoint, bd_metric, bits_error, build_report,
                               ctu_bits_errors, dd_model_report, dd_pcc_row, emit_report, global_dd_fit,
                               hyperbolic_fit_correlations, rd_point)
from ssimrc.experiment import run_corpus
from ssimrc.corpus import pan_sequence
from ssimrc.runlog import read_run

from .oracles import trapezoid_bd_quality, trapezoid_bd_rate

RATES = np.array([1000.0, 2000.0, 4000.0, 8000.0])


def curve(rates, quals):
    return [RdCurvePoint(r, q) for r, q in zip(rates, quals)]


def test_bd_identity():
    q = [0.90, 0.93, 0.95, 0.97]
    assert bd_metric(curve(RATES, q), curve(RATES, q)) == 0
    assert bd_metric(curve(RATES, q), curve(RATES, q), "bd-quality") == 0


def test_bd_rate_shift():
    q = [0.90, 0.93, 0.95, 0.97]
    assert abs(bd_metric(curve(RATES, q), curve(RATES * 1.1, q)) - 10.0) < 1e-6


@pytest.mark.parametrize("k", [0.5, 1.0, 2.0])
def test_bd_against_quadrature(k):
    q_a = 1 - 0.3 * RATES ** -0.25
    r_b = RATES * np.array([0.9, 1.05, 1.2, 1.3])
    q_b = 1 - 0.3 * r_b ** -0.25 + 0.002 * k
    got = bd_metric(curve(RATES, q_a), curve(r_b, q_b))
    want = trapezoid_bd_rate(RATES, q_a, r_b, q_b)
    assert abs(got - want) <= 1e-4 * abs(want)
    got = bd_metric(curve(RATES, q_a), curve(r_b, q_b), "bd-quality")
    want = trapezoid_bd_quality(RATES, q_a, r_b, q_b)
    assert abs(got - want) <= 1e-4 * abs(want)


def test_bd_errors():
    q = [0.90, 0.93, 0.95, 0.97]
    with pytest.raises(BdError, match="overlap"):
        bd_metric(curve(RATES, q), curve(RATES, [0.1, 0.2, 0.3, 0.4]))
    with pytest.raises(BdError, match="4"):
        bd_metric(curve(RATES[:3], q[:3]), curve(RATES, q))
    with pytest.raises(ValueError):
        bd_metric(curve(RATES, q), curve(RATES, q), "bd-foo")


def test_bits_error():
    assert bits_error(1000, 1000) == 0
    assert abs(bits_error(1000, 1200) - 0.2) < 1e-15
    with pytest.raises(ValueError):
        bits_error(0, 5)


def sample(d_ssim, d_mse, satd, theta=None, eta=None, sigma2=50.0):
    return DdSample(1, d_ssim, d_mse, satd, sigma2, theta, eta)


def test_dd_report_exact_local():
    ss = [sample(300 * m / s + 0.001, m, s, 300, 0.001) for m, s in [(10, 1e4), (20, 2e4), (5, 3e3)]]
    r = dd_model_report(ss)
    assert r["p_local"] < 1e-12 and r["n"] == 3


def test_dd_report_single_ctu():
    s = sample(0.02, 40.0, 1e4, 400, 0.0, sigma2=100)
    r = dd_model_report([s], global_params=(5.0, 0.0))
    assert math.isclose(r["p_local"], abs(0.02 - 400 * 40 / 1e4) / 0.02)
    assert math.isclose(r["p_global"], 0.0, abs_tol=1e-15)
    excess = 1 / 0.98 - 1
    assert math.isclose(r["p_yeo"], abs(excess - 40 / 201) / excess)


def test_dd_pcc_degenerate_and_global_fit():
    ss = [sample(0.01, 0.5, 0.0) for _ in range(5)]
    row = dd_pcc_row(ss)
    assert row["degenerate"] and row["pcc_satd"] is None
    assert global_dd_fit(ss) is None
    ss = [sample(2 * m / s + 0.01, m, s) for m, s in [(1, 10), (2, 10), (3, 5)]]
    th, eta = global_dd_fit(ss)
    assert abs(th - 2) < 1e-9 and abs(eta - 0.01) < 1e-9


@pytest.fixture(scope="module")
def small_runs():
    seqs = {"astronaut": pan_sequence("astronaut", 5, 128, 64), "camera": pan_sequence("camera", 5, 128, 64)}
    return run_corpus(seqs)


def test_fanout_and_points(small_runs):
    assert len(small_runs) == 2 * 4 * 5
    anchor = [r for r in small_runs if r.scheme == "anchor" and r.fixed_qp and r.corpus == "camera"]
    assert [r.budget for r in anchor] == ["qp22", "qp27", "qp32", "qp37"]
    p = rd_point(anchor[0].frames)
    assert p.bitrate == sum(f["actual_bits"] for f in anchor[0].frames) / 5
    assert ctu_bits_errors(anchor[0].frames) == []


def test_fit_correlations(small_runs):
    fixed = [r for r in small_runs if r.scheme == "anchor" and r.fixed_qp and r.corpus == "camera"]
    cors = hyperbolic_fit_correlations(fixed)
    assert cors and all(-1 <= c <= 1 for c in cors)


def test_report_tables(small_runs, tmp_path):
    rep = emit_report(small_runs, tmp_path / "a", figures=True)
    rows = {(r["corpus"], r["scheme"]): r for r in rep["schemes"]}
    assert rows[("camera", "sosr")]["bdbr_ssim"] is not None
    assert rows[("camera", "anchor")]["bdbr_ssim"] is not None
    assert ("ALL", "sosr") in rows
    for f in ("report.csv", "runs.csv", "dd.csv", "report.json", "rd_camera.png", "dd_camera.png"):
        assert (tmp_path / "a" / f).exists()
    emit_report(list(reversed(small_runs)), tmp_path / "b", figures=True)
    for f in ("report.csv", "runs.csv", "dd.csv", "report.json", "rd_camera.png"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_report_single_run_na(small_runs, tmp_path):
    emit_report(small_runs[:1], tmp_path, figures=False)
    line = (tmp_path / "report.csv").read_text().splitlines()[1]
    assert "n/a" in line


def test_report_from_archived_logs(small_runs, tmp_path):
    from ssimrc.runlog import write_run

    paths = [write_run(tmp_path / "logs" / f"{r.stem}.jsonl", r) for r in small_runs]
    emit_report(small_runs, tmp_path / "live", figures=False)
    emit_report([read_run(p) for p in paths], tmp_path / "archived", figures=False)
    for f in ("report.csv", "runs.csv", "dd.csv", "report.json"):
        assert (tmp_path / "live" / f).read_bytes() == (tmp_path / "archived" / f).read_bytes()


def test_report_rejects_duplicates(small_runs):
    with pytest.raises(ValueError):
        build_report([small_runs[0], small_runs[0]])
