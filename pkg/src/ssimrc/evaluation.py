"""Comparison statistics over run logs and the report writer."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial

from .models import (YEO_EPS, fit_hyperbolic, fit_linear, linear_predict, pcc, prediction_error,
                     ssim_excess, yeo_predict)
from .runlog import RunLog, dumps

NA = "n/a"


class BdError(ValueError):
    pass


@dataclass(frozen=True)
class RdCurvePoint:
    bitrate: float
    quality: float


def _curve(points, name):
    pts = [p if isinstance(p, RdCurvePoint) else RdCurvePoint(*p) for p in points]
    if len(pts) < 4:
        raise BdError(f"curve {name} has {len(pts)} points, need at least 4")
    rate = np.array([p.bitrate for p in pts], dtype=np.float64)
    qual = np.array([p.quality for p in pts], dtype=np.float64)
    if np.any(rate <= 0) or not np.all(np.isfinite(rate)):
        raise BdError(f"curve {name} has non-positive bitrates")
    if len(set(rate.tolist())) != len(rate):
        raise BdError(f"curve {name} has repeated bitrates")
    if not np.all(np.isfinite(qual)) or len(set(qual.tolist())) != len(qual):
        raise BdError(f"curve {name} needs distinct finite quality values")
    return np.log10(rate), qual


def _mean_over(p: Polynomial, lo: float, hi: float) -> float:
    P = p.integ()
    return float((P(hi) - P(lo)) / (hi - lo))


def bd_metric(curve_a, curve_b, mode: str = "bd-rate") -> float:
    """Bjontegaard delta of curve B against reference curve A.

    ``bd-rate`` fits log10(rate) as a cubic in quality and returns the mean
    rate change in percent over the shared quality interval.  ``bd-quality``
    fits quality as a cubic in log10(rate) and returns the mean quality
    difference over the shared rate interval.
    """
    lr_a, q_a = _curve(curve_a, "A")
    lr_b, q_b = _curve(curve_b, "B")
    if mode == "bd-rate":
        lo, hi = max(q_a.min(), q_b.min()), min(q_a.max(), q_b.max())
        if not hi > lo:
            raise BdError(f"quality ranges do not overlap: A [{q_a.min():.6g}, {q_a.max():.6g}], "
                          f"B [{q_b.min():.6g}, {q_b.max():.6g}]")
        pa, pb = Polynomial.fit(q_a, lr_a, 3), Polynomial.fit(q_b, lr_b, 3)
        return (10.0 ** (_mean_over(pb, lo, hi) - _mean_over(pa, lo, hi)) - 1.0) * 100.0
    if mode == "bd-quality":
        lo, hi = max(lr_a.min(), lr_b.min()), min(lr_a.max(), lr_b.max())
        if not hi > lo:
            raise BdError(f"log-rate ranges do not overlap: A [{lr_a.min():.6g}, {lr_a.max():.6g}], "
                          f"B [{lr_b.min():.6g}, {lr_b.max():.6g}]")
        pa, pb = Polynomial.fit(lr_a, q_a, 3), Polynomial.fit(lr_b, q_b, 3)
        return _mean_over(pb, lo, hi) - _mean_over(pa, lo, hi)
    raise ValueError(f"unknown BD mode {mode!r}")


def bits_error(allocated: float, actual: float) -> float:
    if not allocated > 0:
        raise ValueError("allocated bits must be positive")
    return abs(allocated - actual) / allocated


def _frames(run):
    frames = run.frames if isinstance(run, RunLog) else run
    return [f.to_json() if hasattr(f, "to_json") else f for f in frames]


def ctu_bits_errors(frames) -> list[float]:
    """Per-CTU bits errors of every managed (non-bootstrap) frame."""
    return [bits_error(c["allocated_bits"], c["bits"])
            for f in _frames(frames) if not f["bootstrap"] for c in f["ctus"]
            if c["allocated_bits"]]


def mean_or_none(xs):
    xs = [x for x in xs if x is not None and math.isfinite(x)]
    return math.fsum(xs) / len(xs) if xs else None


def rd_point(frames, quality: str = "ssim") -> RdCurvePoint:
    """Mean bits/frame and mean quality, over managed frames when there are any."""
    fr = _frames(frames)
    use = [f for f in fr if not f["bootstrap"]] or fr
    return RdCurvePoint(math.fsum(f["actual_bits"] for f in use) / len(use),
                        math.fsum(f[quality] for f in use) / len(use))


# -- D-D analysis

@dataclass(frozen=True)
class DdSample:
    frame: int
    d_ssim: float
    d_mse: float
    satd: float
    sigma2: float
    theta: float | None
    eta: float | None


def dd_samples(frames, skip_first: bool = True) -> list[DdSample]:
    """Per-CTU actual values with the local model state used for that frame.

    The first frame is skipped by default: the local model is initialised
    from it, so its prediction there is exact by construction.
    """
    out = []
    for f in _frames(frames):
        if skip_first and f["index"] == 0:
            continue
        for c in f["ctus"]:
            p = c.get("params") or {}
            out.append(DdSample(f["index"], c["d_ssim"], c["d_mse"], c["satd"], c["sigma2"],
                                p.get("theta"), p.get("eta")))
    return out


def dd_pcc_row(samples, eps: float = YEO_EPS) -> dict:
    """PCC of D_ssim against raw, variance-normalised and SATD-normalised D_mse."""
    live = [s for s in samples if s.satd > 0]
    row = {"n": len(samples), "degenerate": not live}
    d = [s.d_ssim for s in samples]
    for key, xs, ys in (("pcc_mse", [s.d_mse for s in samples], d),
                        ("pcc_yeo", [s.d_mse / (2 * s.sigma2 + eps) for s in samples], d),
                        ("pcc_satd", [s.d_mse / s.satd for s in live], [s.d_ssim for s in live])):
        try:
            row[key] = pcc(xs, ys)
        except ValueError:
            row[key] = None
    return row


def global_dd_fit(samples) -> tuple[float, float] | None:
    live = [s for s in samples if s.satd > 0]
    if len(live) < 2:
        return None
    xs = [s.d_mse / s.satd for s in live]
    if max(xs) == min(xs):
        return None
    return fit_linear(xs, [s.d_ssim for s in live])


def dd_model_report(samples, global_params: tuple[float, float] | None = None,
                    eps: float = YEO_EPS) -> dict:
    """Mean relative prediction error of the three D-D models.

    Yeo's model predicts ``1/SSIM - 1`` and is scored against that quantity;
    the linear models predict ``D_ssim`` directly.  CTUs with zero actual
    distortion or zero SATD carry no defined error and are left out.
    """
    if global_params is None:
        global_params = global_dd_fit(samples)
    p_yeo, p_glob, p_loc = [], [], []
    for s in samples:
        if s.d_ssim <= 0 or s.satd <= 0:
            continue
        p_yeo.append(prediction_error(ssim_excess(s.d_ssim), yeo_predict(s.d_mse, s.sigma2, eps)))
        if global_params is not None:
            p_glob.append(prediction_error(s.d_ssim, linear_predict(*global_params, s.d_mse, s.satd)))
        if s.theta is not None:
            p_loc.append(prediction_error(s.d_ssim, linear_predict(s.theta, s.eta, s.d_mse, s.satd)))
    return {"n": len(p_yeo), "p_yeo": mean_or_none(p_yeo), "p_global": mean_or_none(p_glob),
            "p_local": mean_or_none(p_loc)}


def hyperbolic_fit_correlations(runs) -> list[float]:
    """Per-CTU correlation of a hyperbolic fit through one point per run.

    ``runs`` are fixed-QP encodes of the same frames; CTU (frame, i) gets
    one (bpp, D_ssim) point from each.  CTUs with a lossless point are
    skipped, as are fits whose correlation is undefined.
    """
    by_key = defaultdict(list)
    for run in runs:
        for f in _frames(run):
            for c in f["ctus"]:
                by_key[(f["index"], c["i"])].append((c["bpp"], c["d_ssim"]))
    out = []
    n = len(runs)
    for key in sorted(by_key):
        pts = by_key[key]
        if len(pts) != n or any(d <= 0 for _, d in pts) or len({b for b, _ in pts}) < len(pts):
            continue
        r = fit_hyperbolic(pts).correlation
        if math.isfinite(r):
            out.append(r)
    return out


# -- report

SCHEME_ORDER = ("anchor", "somr", "somr-plus", "sosr")
REPORT_FIELDS = ("corpus", "scheme", "budgets", "bdbr_ssim", "bd_ssim", "bdbr_psnr", "bd_psnr",
                 "mean_bits_error", "p_yeo", "p_global", "p_local", "pcc_mse", "pcc_yeo", "pcc_satd",
                 "fit_corr_median")
RUN_FIELDS = ("corpus", "scheme", "budget", "frames", "mean_bits", "mean_ssim", "mean_psnr",
              "mean_bits_error", "clamped_frames")
ALL = "ALL"


def _key(run: RunLog):
    b = run.budget
    return (run.corpus, SCHEME_ORDER.index(run.scheme) if run.scheme in SCHEME_ORDER else 99,
            run.scheme, 0 if b.startswith("qp") else 1, int(b[2:]) if b.startswith("qp") else int(b))


def _bd(ref_runs, runs, quality, mode):
    try:
        return bd_metric([rd_point(r, quality) for r in ref_runs],
                         [rd_point(r, quality) for r in runs], mode)
    except BdError:
        return None


def _fmt(v):
    if v is None:
        return NA
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else NA
    return str(v)


def _csv(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([_fmt(r.get(k)) for k in fields])
    return buf.getvalue()


def build_report(runs) -> dict:
    """All report tables as plain data (no file I/O)."""
    runs = sorted(runs, key=_key)
    seen = set()
    for r in runs:
        if r.stem in seen:
            raise ValueError(f"run {r.stem} given twice")
        seen.add(r.stem)
    by_corpus = defaultdict(list)
    for r in runs:
        by_corpus[r.corpus].append(r)

    run_rows = []
    for r in runs:
        p = rd_point(r, "ssim")
        errs = ctu_bits_errors(r)
        run_rows.append({"corpus": r.corpus, "scheme": r.scheme, "budget": r.budget,
                         "frames": len(r.frames), "mean_bits": p.bitrate, "mean_ssim": p.quality,
                         "mean_psnr": rd_point(r, "psnr").quality, "mean_bits_error": mean_or_none(errs),
                         "clamped_frames": sum(bool(f["allocation_clamped"]) for f in _frames(r))})

    rows, dd_rows = [], []
    pooled_err = defaultdict(list)
    pooled_dd = []
    pooled_fit = []
    bd_by_scheme = defaultdict(lambda: defaultdict(list))
    for corpus in sorted(by_corpus):
        cr = by_corpus[corpus]
        fixed = [r for r in cr if r.scheme == "anchor" and r.fixed_qp]
        ref = [r for r in cr if r.scheme == "anchor" and not r.fixed_qp]
        if len(ref) < 4:
            ref = fixed
        samples = [s for r in fixed for s in dd_samples(r)]
        pooled_dd.extend(samples)
        dd = {**dd_pcc_row(samples), **dd_model_report(samples)} if samples else {}
        fits = hyperbolic_fit_correlations(fixed) if len(fixed) >= 3 else []
        pooled_fit.extend(fits)
        fit_med = statistics.median(fits) if fits else None
        if samples:
            dd_rows.append({"corpus": corpus, **dd, "fit_corr_median": fit_med, "fit_ctus": len(fits)})
        schemes = sorted({r.scheme for r in cr}, key=lambda s: SCHEME_ORDER.index(s))
        for scheme in schemes:
            sr = [r for r in cr if r.scheme == scheme and not (scheme == "anchor" and r.fixed_qp)]
            if not sr:
                sr = [r for r in cr if r.scheme == scheme]
            errs = [e for r in sr for e in ctu_bits_errors(r)]
            pooled_err[scheme].extend(errs)
            row = {"corpus": corpus, "scheme": scheme, "budgets": len(sr),
                   "mean_bits_error": mean_or_none(errs),
                   "pcc_mse": dd.get("pcc_mse"), "pcc_yeo": dd.get("pcc_yeo"), "pcc_satd": dd.get("pcc_satd"),
                   "p_yeo": dd.get("p_yeo"), "p_global": dd.get("p_global"), "p_local": dd.get("p_local"),
                   "fit_corr_median": fit_med}
            comparable = len(ref) >= 4 and len(sr) >= 4
            for col, q, mode in (("bdbr_ssim", "ssim", "bd-rate"), ("bd_ssim", "ssim", "bd-quality"),
                                 ("bdbr_psnr", "psnr", "bd-rate"), ("bd_psnr", "psnr", "bd-quality")):
                row[col] = _bd(ref, sr, q, mode) if comparable else None
                if row[col] is not None:
                    bd_by_scheme[scheme][col].append(row[col])
            rows.append(row)

    if len(by_corpus) > 1:
        dd_all = {**dd_pcc_row(pooled_dd), **dd_model_report(pooled_dd)} if pooled_dd else {}
        per_seq_pcc = {k: mean_or_none([r.get(k) for r in dd_rows]) for k in ("pcc_mse", "pcc_yeo", "pcc_satd")}
        for scheme in sorted(pooled_err, key=lambda s: SCHEME_ORDER.index(s)):
            row = {"corpus": ALL, "scheme": scheme,
                   "budgets": sum(r["budgets"] for r in rows if r["scheme"] == scheme),
                   "mean_bits_error": mean_or_none(pooled_err[scheme]),
                   "p_yeo": dd_all.get("p_yeo"), "p_global": dd_all.get("p_global"),
                   "p_local": dd_all.get("p_local"), **per_seq_pcc,
                   "fit_corr_median": statistics.median(pooled_fit) if pooled_fit else None}
            for col in ("bdbr_ssim", "bd_ssim", "bdbr_psnr", "bd_psnr"):
                vals = bd_by_scheme[scheme][col]
                row[col] = statistics.median(vals) if vals else None
            rows.append(row)
        if pooled_dd:
            dd_rows.append({"corpus": ALL, **dd_all, "fit_corr_median": row["fit_corr_median"],
                            "fit_ctus": len(pooled_fit)})
    return {"schemes": rows, "runs": run_rows, "dd": dd_rows}


DD_FIELDS = ("corpus", "n", "degenerate", "pcc_mse", "pcc_yeo", "pcc_satd", "p_yeo", "p_global", "p_local",
             "fit_corr_median", "fit_ctus")


def emit_report(runs, out_dir, figures: bool = True) -> dict:
    """Write report.csv, runs.csv, dd.csv and report.json (plus figures) to ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = build_report(runs)
    (out / "report.csv").write_text(_csv(rep["schemes"], REPORT_FIELDS), encoding="utf-8")
    (out / "runs.csv").write_text(_csv(rep["runs"], RUN_FIELDS), encoding="utf-8")
    (out / "dd.csv").write_text(_csv(rep["dd"], DD_FIELDS), encoding="utf-8")
    doc = {"schemes": [{k: r.get(k) for k in REPORT_FIELDS} for r in rep["schemes"]],
           "runs": [{k: r.get(k) for k in RUN_FIELDS} for r in rep["runs"]],
           "dd": [{k: r.get(k) for k in DD_FIELDS} for r in rep["dd"]]}
    (out / "report.json").write_text(json.dumps(json.loads(dumps(doc)), indent=1) + "\n", encoding="utf-8")
    if figures:
        from .plotting import render_figures
        render_figures(sorted(runs, key=_key), out)
    return rep
