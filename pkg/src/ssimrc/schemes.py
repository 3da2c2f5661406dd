"""End-to-end frame-sequence encoders for the four rate-control schemes.

``anchor``
    MSE rate control with an equal bits-per-pixel split (or fixed QP when no
    budget is given).
``somr``
    SSIM-optimal allocation, MSE mode decision, regression updates.
``somr-plus``
    As ``somr`` but the SSIM model is re-solved from the mapped multiplier.
``sosr``
    SSIM-optimal allocation driving SSIM-equivalent mode decision through
    the mapped multiplier, with joint-solve and LMS updates.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics
from .allocation import (BPP_MAX, BPP_MIN, LAMBDA_HI, LAMBDA_LO, MIN_CTU_BITS, equal_bpp_allocation,
                         lambda_ssim_from, map_lambda, solve_frame_allocation)
from .codec import (MODE_SPAN, TRANSFORM_SIZES, CodingMode, CostSpec, CtuTransform, EncodeOutcome,
                    hm_lambda, mode_set_for_frame, select_mode)
from .estimation import (BootstrapSample, CtuParamStore, InitialParams, UpdateRates, init_params,
                         joint_solve, joint_solve_ssim, update_linear_dd_lms, update_r_lambda_regression,
                         update_rd_ssim_regression)
from .media_io import LumaFrame, partition
from .models import lambda_mse_from_bpp

SCHEMES = ("anchor", "somr", "somr-plus", "sosr")


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str
    budget: float | None = None
    qp: int = 27
    ctu_size: int = 64
    mode_span: tuple = MODE_SPAN
    threads: int = 1
    freeze_params: bool = False
    rates: UpdateRates = field(default_factory=UpdateRates)
    initial: InitialParams = field(default_factory=InitialParams)
    bpp_min: float = BPP_MIN
    bpp_max: float = BPP_MAX
    lambda_lo: float = LAMBDA_LO
    lambda_hi: float = LAMBDA_HI
    alloc_rel_tol: float = 1e-10
    alloc_max_iter: int = 100

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.budget is None and self.scheme != "anchor":
            raise ValueError(f"scheme {self.scheme} needs a per-frame bit budget")
        if self.budget is not None and self.budget <= 0:
            raise ValueError("budget must be positive")

    @property
    def fixed_qp(self) -> bool:
        return self.budget is None

    def to_json(self) -> dict:
        """Everything that can change the output; ``threads`` cannot, so it is left out."""
        d = asdict(self)
        d.pop("threads")
        d["mode_span"] = list(self.mode_span)
        return d


@dataclass
class FrameLog:
    index: int
    scheme: str
    bootstrap: bool
    target_bits: float | None
    allocated_total: float | None
    actual_bits: int
    lambda_ssim_star: float | None
    allocation_clamped: bool
    d_ssim: float
    d_ssim_direct: float
    d_mse: float
    ssim: float
    psnr: float
    ssim_evals_in_rdo: int
    ctus: list

    def to_json(self) -> dict:
        return asdict(self)


class OutcomeCache:
    """Memo of per-mode (bits, d_mse) and source statistics keyed by frame content.

    Mode outcomes do not depend on the multiplier, so every run over the
    same frames can share them.
    """

    def __init__(self):
        self._modes: dict = {}
        self._stats: dict = {}

    @staticmethod
    def key(frame: LumaFrame) -> bytes:
        return hashlib.blake2b(frame.samples.tobytes(), digest_size=16).digest() + \
            np.asarray(frame.samples.shape, dtype=np.int32).tobytes()

    def candidates(self, fkey, index: int, ctu: np.ndarray, mode_set) -> list[EncodeOutcome]:
        out = []
        transforms = {}
        m = ctu.shape[0] * ctu.shape[1]
        for mode in mode_set:
            k = (fkey, index, mode.qp, mode.transform_size)
            hit = self._modes.get(k)
            if hit is None:
                tr = transforms.get(mode.transform_size)
                if tr is None:
                    tr = transforms[mode.transform_size] = CtuTransform(ctu, mode.transform_size)
                o = tr.encode(mode, keep=False)
                hit = self._modes[k] = (o.bits, o.d_mse)
            out.append(EncodeOutcome(mode, hit[0], hit[1], m))
        return out

    def source_stats(self, fkey, index: int, ctu: np.ndarray) -> tuple[float, float]:
        k = (fkey, index)
        hit = self._stats.get(k)
        if hit is None:
            hit = self._stats[k] = (metrics.satd_ctu(ctu), metrics.variance_unit(ctu))
        return hit


def _bootstrap_modes(qp: int) -> list[CodingMode]:
    return [CodingMode(qp, t) for t in TRANSFORM_SIZES]


class _Run:
    def __init__(self, frames, config: SchemeConfig, cache: OutcomeCache | None):
        if not frames:
            raise ValueError("no frames to encode")
        self.frames = frames
        self.cfg = config
        self.cache = cache if cache is not None else OutcomeCache()
        self.grid = partition(frames[0].dims, config.ctu_size)
        self.m = self.grid.pixel_counts
        self.m_frame = sum(self.m)
        self.store: CtuParamStore | None = None
        self.pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def close(self):
        if self.pool is not None:
            self.pool.shutdown()

    def _map(self, fn, items):
        if self.pool is None:
            return [fn(x) for x in items]
        return list(self.pool.map(fn, items))

    # -- step 2: per-CTU mode decision
    def _encode_ctus(self, frame: LumaFrame, fkey, mode_set, costs):
        def work(i):
            ctu = frame.region(self.grid.rects[i])
            cands = self.cache.candidates(fkey, i, ctu, mode_set)
            best = select_mode(cands, costs[i])
            chosen = CtuTransform(ctu, cands[best].mode.transform_size).encode(cands[best].mode)
            return cands, best, chosen
        return self._map(work, range(len(self.grid)))

    def run(self) -> list[FrameLog]:
        logs = []
        try:
            for j, frame in enumerate(self.frames):
                logs.append(self._frame(j, frame))
        finally:
            self.close()
        return logs

    def _frame(self, j: int, frame: LumaFrame) -> FrameLog:
        cfg = self.cfg
        fkey = self.cache.key(frame)
        n = len(self.grid)
        stats = [self.cache.source_stats(fkey, i, frame.region(r)) for i, r in enumerate(self.grid.rects)]
        satd = [s[0] for s in stats]
        bootstrap = j == 0 or cfg.fixed_qp

        target = None
        alloc_bits = [None] * n
        lam_star = None
        clamped = False
        lam_ssim = [None] * n
        if bootstrap:
            mode_set = _bootstrap_modes(cfg.qp)
            lam_mse = [hm_lambda(cfg.qp)] * n
            costs = [CostSpec("mse-cost", lam_mse[0])] * n
        else:
            mode_set = mode_set_for_frame(cfg.qp, cfg.mode_span)
            target = float(cfg.budget)
            if target < n * MIN_CTU_BITS:
                target, clamped = float(n * MIN_CTU_BITS), True
            if cfg.scheme == "anchor":
                bpp, alloc_bits = equal_bpp_allocation(self.m, target)
                if bpp[0] < cfg.bpp_min:
                    clamped = True
            else:
                res = solve_frame_allocation([s.rd for s in self.store.ctus], self.m, target,
                                             rel_tol=cfg.alloc_rel_tol, max_iter=cfg.alloc_max_iter,
                                             lambda_lo=cfg.lambda_lo, lambda_hi=cfg.lambda_hi,
                                             bpp_min=cfg.bpp_min, bpp_max=cfg.bpp_max)
                bpp, alloc_bits = list(res.per_ctu_bpp), list(res.per_ctu_bits)
                lam_star, clamped = res.lambda_ssim_star, clamped or res.clamped
            if cfg.scheme == "sosr":
                ratio = self._theta_ratio(satd)
                lam_mse = [map_lambda(lam_star, satd[i], self.store[i].dd if satd[i] > 0 else None, ratio)
                           for i in range(n)]
                lam_ssim = [lam_star] * n
                costs = [CostSpec("mapped-ssim-cost", lam) for lam in lam_mse]
            else:
                lam_mse = [lambda_mse_from_bpp(self.store[i].rl, max(bpp[i], cfg.bpp_min)) for i in range(n)]
                costs = [CostSpec("mse-cost", lam) for lam in lam_mse]

        before = metrics.ssim_evaluations
        coded = self._encode_ctus(frame, fkey, mode_set, costs)
        ssim_in_rdo = metrics.ssim_evaluations - before

        # step 3: one SSIM map for the whole reconstructed frame
        recon = np.empty_like(frame.samples)
        for (x0, y0, w, h), (_, _, chosen) in zip(self.grid.rects, coded):
            recon[y0:y0 + h, x0:x0 + w] = chosen.recon
        smap = metrics.ssim_map(frame, recon)
        records = []
        ctu_logs = []
        for i, rect in enumerate(self.grid.rects):
            cands, best, chosen = coded[i]
            d_ssim = metrics.d_ssim_unit(smap, rect)
            records.append(metrics.DistortionRecord(d_ssim, chosen.d_mse, satd[i], self.m[i]))
            ctu_logs.append({
                "i": i, "rect": list(rect), "pixels": self.m[i],
                "allocated_bits": alloc_bits[i], "bits": chosen.bits, "bpp": chosen.bpp,
                "d_mse": chosen.d_mse, "d_ssim": d_ssim, "satd": satd[i], "sigma2": stats[i][1],
                "lambda_mse": lam_mse[i], "lambda_ssim": lam_ssim[i],
                "mode": chosen.mode.label(), "cost": costs[i].cost(chosen.d_mse, chosen.bits, self.m[i]),
                "mode_costs": [[c.mode.label(), c.bits, c.d_mse, costs[i].cost(c.d_mse, c.bits, c.pixel_count)]
                               for c in cands],
                "params": None,
            })

        if self.store is None:
            samples = [BootstrapSample(coded[i][2].bits, self.m[i], r.d_ssim, r.d_mse, satd[i], lam_mse[i])
                       for i, r in enumerate(records)]
            self.store = init_params(samples, cfg.rates, cfg.initial)
            for i in range(n):
                ctu_logs[i]["params"] = self.store[i].snapshot()
            self._update(records, coded, lam_mse, satd, bootstrap_only=True)
        else:
            for i in range(n):
                ctu_logs[i]["params"] = self.store[i].snapshot()
            if not cfg.freeze_params:
                self._update(records, coded, lam_mse, satd, bootstrap_only=bootstrap)

        actual = sum(c[2].bits for c in coded)
        d_frame = metrics.frame_d_ssim_from_ctus(records, self.m_frame)
        frame_mse = metrics.mse_unit(frame, recon)
        return FrameLog(
            index=j, scheme=cfg.scheme, bootstrap=bootstrap, target_bits=target,
            allocated_total=(math.fsum(alloc_bits) if target is not None else None),
            actual_bits=actual, lambda_ssim_star=lam_star, allocation_clamped=clamped,
            d_ssim=d_frame, d_ssim_direct=1.0 - smap.mean(), d_mse=frame_mse, ssim=1.0 - d_frame,
            psnr=metrics.psnr(frame_mse), ssim_evals_in_rdo=ssim_in_rdo, ctus=ctu_logs)

    def _theta_ratio(self, satd):
        vals = [self.store[i].dd.theta / satd[i] for i in range(len(satd))
                if satd[i] > 0 and self.store[i].dd.theta > 0]
        return math.fsum(vals) / len(vals) if vals else None

    def _update(self, records, coded, lam_mse, satd, bootstrap_only: bool):
        cfg, rates = self.cfg, self.cfg.rates
        for i, rec in enumerate(records):
            st = self.store[i]
            bpp = coded[i][2].bpp
            theta_used = st.dd.theta
            st.rl = update_r_lambda_regression(st.rl, lam_mse[i], bpp, rates.delta_c, rates.delta_k)
            if not bootstrap_only:
                if cfg.scheme == "somr":
                    st.rd = update_rd_ssim_regression(st.rd, rec.d_ssim, bpp, rates.delta_alpha, rates.delta_beta)
                elif cfg.scheme == "somr-plus" and satd[i] > 0:
                    st.rd = joint_solve_ssim(rec.d_ssim, bpp, lambda_ssim_from(lam_mse[i], satd[i], theta_used),
                                             previous=st.rd)
                elif cfg.scheme == "sosr" and satd[i] > 0:
                    st.rd = joint_solve(rec.d_ssim, bpp, lam_mse[i], satd[i], theta_used, previous=st.rd)
            if satd[i] > 0:
                st.dd = update_linear_dd_lms(st.dd, rec.d_ssim, rec.d_mse, satd[i],
                                             rates.delta_theta, rates.delta_eta)
            st.satd = satd[i]


def run_scheme(frames, config: SchemeConfig, cache: OutcomeCache | None = None) -> list[FrameLog]:
    return _Run(frames, config, cache).run()


def run_anchor(frames, config: SchemeConfig, cache=None) -> list[FrameLog]:
    return run_scheme(frames, _as(config, "anchor"), cache)


def run_somr(frames, config: SchemeConfig, cache=None) -> list[FrameLog]:
    return run_scheme(frames, _as(config, "somr"), cache)


def run_somr_plus(frames, config: SchemeConfig, cache=None) -> list[FrameLog]:
    return run_scheme(frames, _as(config, "somr-plus"), cache)


def run_sosr(frames, config: SchemeConfig, cache=None) -> list[FrameLog]:
    return run_scheme(frames, _as(config, "sosr"), cache)


def _as(config: SchemeConfig, scheme: str) -> SchemeConfig:
    return config if config.scheme == scheme else replace(config, scheme=scheme)


def run_summary(logs: list[FrameLog]) -> dict:
    managed = [f for f in logs if not f.bootstrap]
    errs = [abs(c["allocated_bits"] - c["bits"]) / c["allocated_bits"]
            for f in managed for c in f.ctus if c["allocated_bits"]]
    n = len(logs)
    return {
        "frames": n,
        "mean_bits": math.fsum(f.actual_bits for f in logs) / n,
        "mean_bits_managed": (math.fsum(f.actual_bits for f in managed) / len(managed)) if managed else None,
        "mean_ssim": math.fsum(f.ssim for f in logs) / n,
        "mean_psnr": math.fsum(f.psnr for f in logs) / n,
        "mean_bits_error": (math.fsum(errs) / len(errs)) if errs else None,
        "clamped_frames": sum(f.allocation_clamped for f in logs),
        "ssim_evals_in_rdo": sum(f.ssim_evals_in_rdo for f in logs),
    }
