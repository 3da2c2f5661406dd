"""Command-line entry point: encode, report, analyze-dd, make-corpus."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import corpus as corpus_mod
from .allocation import MIN_CTU_BITS
from .estimation import InitialParams, UpdateRates
from .evaluation import dd_model_report, dd_pcc_row, dd_samples, emit_report
from .experiment import anchor_budget, encode_run
from .media_io import FORMATS, MediaError, load_sequence, partition, write_y4m
from .runlog import RunLog, RunLogError, read_run, write_run
from .schemes import SCHEMES, OutcomeCache, SchemeConfig

log = logging.getLogger("ssimrc")

# tunables settable from a config file or --set; the value is the default
TUNABLES = {
    "frames": None, "ctu_size": 64, "qp": 27, "threads": 1, "format": "y4m", "width": None, "height": None,
    "mode_span": "-6,-4,-2,0,2,4,6", "bpp_min": 0.005, "bpp_max": 8.0, "lambda_lo": 1e-6, "lambda_hi": 1e4,
    "alloc_rel_tol": 1e-10, "alloc_max_iter": 100,
    **{f.name: f.default for f in fields(UpdateRates)},
    **{f"init_{f.name}": f.default for f in fields(InitialParams)},
}
_INT = {"frames", "ctu_size", "qp", "threads", "width", "height", "alloc_max_iter"}
_STR = {"format", "mode_span"}


class CliError(Exception):
    pass


def _convert(key: str, value):
    if value is None or key not in TUNABLES:
        return value
    try:
        if key in _INT:
            return int(value)
        if key in _STR:
            return str(value)
        return float(value)
    except ValueError:
        raise CliError(f"bad value for {key}: {value!r}") from None


def read_config_file(path) -> dict:
    out = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise CliError(f"cannot read config file {path}: {e.strerror}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{no}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        k = k.replace("-", "_")
        if k not in TUNABLES:
            raise CliError(f"{path}:{no}: unknown key {k!r}")
        out[k] = _convert(k, v)
    return out


def effective_config(args) -> dict:
    """Defaults, then RC_THREADS, then the config file, then explicit flags."""
    cfg = dict(TUNABLES)
    env = os.environ.get("RC_THREADS")
    if env:
        cfg["threads"] = _convert("threads", env)
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        k = k.strip().replace("-", "_")
        if k not in TUNABLES:
            raise CliError(f"unknown tunable {k!r}")
        cfg[k] = _convert(k, v.strip())
    for k in TUNABLES:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg["threads"] < 1:
        raise CliError("threads must be at least 1")
    return cfg


def scheme_config(cfg: dict, scheme: str, budget=None, qp=None) -> SchemeConfig:
    span = tuple(int(s) for s in str(cfg["mode_span"]).split(","))
    return SchemeConfig(
        scheme=scheme, budget=budget, qp=cfg["qp"] if qp is None else qp, ctu_size=cfg["ctu_size"],
        mode_span=span, threads=cfg["threads"],
        rates=UpdateRates(**{f.name: cfg[f.name] for f in fields(UpdateRates)}),
        initial=InitialParams(**{f.name: cfg[f"init_{f.name}"] for f in fields(InitialParams)}),
        bpp_min=cfg["bpp_min"], bpp_max=cfg["bpp_max"], lambda_lo=cfg["lambda_lo"], lambda_hi=cfg["lambda_hi"],
        alloc_rel_tol=cfg["alloc_rel_tol"], alloc_max_iter=cfg["alloc_max_iter"])


def _echo(cfg: dict, extra: dict):
    for k, v in {**extra, **cfg}.items():
        print(f"{k}={v}")


def _logged(extra: dict, cfg: dict) -> dict:
    # thread count and output dir are echoed but kept out of logs, which must
    # match across thread counts and locations
    return {k: v for k, v in {**extra, **cfg}.items() if k not in ("threads", "out")}


def _qps(text: str) -> list[int]:
    text = text.strip()
    if text.startswith("qp="):
        text = text[3:]
    try:
        qps = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"bad QP list {text!r}; expected e.g. qp=22,27,32,37") from None
    if not qps:
        raise CliError("empty QP list")
    return qps


def _load(cfg: dict, path: str):
    if not Path(path).exists():
        raise CliError(f"input not found: {path}")
    try:
        return load_sequence(path, cfg["format"], cfg["frames"], cfg["width"], cfg["height"])
    except MediaError as e:
        raise CliError(f"invalid input {path}: {e}") from None


def _schemes(text: str) -> list[str]:
    names = list(SCHEMES) if text == "all" else [s.strip() for s in text.split(",")]
    for s in names:
        if s not in SCHEMES:
            raise CliError(f"unknown scheme {s!r}; expected one of {', '.join(SCHEMES)} or all")
    return names


def cmd_encode(args) -> int:
    cfg = effective_config(args)
    frames = _load(cfg, args.input)
    name = args.name or Path(args.input).stem
    schemes = _schemes(args.scheme)
    n_ctus = len(partition(frames[0].dims, cfg["ctu_size"]))
    out = Path(args.out)
    extra = {"input": args.input, "name": name, "scheme": args.scheme, "budget": args.budget,
             "budget_from_anchor": args.budget_from_anchor, "out": str(out)}
    _echo(cfg, extra)
    cache = OutcomeCache()
    runs: list[RunLog] = []

    def run(config):
        if config.budget is not None and config.budget < n_ctus * MIN_CTU_BITS:
            raise CliError(f"infeasible budget {config.budget:g} bits/frame: "
                           f"need at least {n_ctus * MIN_CTU_BITS} for {n_ctus} CTUs")
        r = encode_run(name, frames, config, cache)
        r.config["run"] = _logged(extra, cfg)
        runs.append(r)
        return r

    if args.budget_from_anchor:
        for qp in _qps(args.budget_from_anchor):
            fixed = encode_run(name, frames, scheme_config(cfg, "anchor", None, qp), cache)
            if args.keep_anchor or args.scheme == "all":
                fixed.config["run"] = _logged(extra, cfg)
                runs.append(fixed)
            budget = anchor_budget(fixed)
            for s in schemes:
                run(scheme_config(cfg, s, budget, qp))
    elif args.budget:
        budgets = [float(b) for part in args.budget for b in part.split(",") if b.strip()]
        for b in budgets:
            for s in schemes:
                run(scheme_config(cfg, s, b))
    else:
        if schemes != ["anchor"]:
            raise CliError("rate-controlled schemes need --budget or --budget-from-anchor")
        run(scheme_config(cfg, "anchor"))

    for r in runs:
        p = write_run(out / f"{r.stem}.jsonl", r)
        print(f"wrote {p} mean bits/frame {r.summary['mean_bits']:.1f}", file=sys.stderr)
    return 0


def _log_paths(items) -> list[Path]:
    paths = []
    for item in items:
        p = Path(item)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.jsonl")))
        elif p.exists():
            paths.append(p)
        else:
            raise CliError(f"log not found: {item}")
    if not paths:
        raise CliError("no run logs given")
    return paths


def cmd_report(args) -> int:
    runs = [read_run(p) for p in _log_paths(args.logs)]
    emit_report(runs, args.out, figures=not args.no_figures)
    print(f"wrote report for {len(runs)} runs to {args.out}", file=sys.stderr)
    return 0


def cmd_analyze_dd(args) -> int:
    cfg = effective_config(args)
    frames = _load(cfg, args.input)
    name = args.name or Path(args.input).stem
    qps = _qps(args.qps)
    _echo(cfg, {"input": args.input, "name": name, "qps": ",".join(map(str, qps)), "out": args.out})
    cache = OutcomeCache()
    samples = []
    for qp in qps:
        r = encode_run(name, frames, scheme_config(cfg, "anchor", None, qp), cache)
        samples += dd_samples(r)
    pccs = dd_pcc_row(samples)
    errs = dd_model_report(samples)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def cell(v):
        return "n/a" if v is None else repr(v)

    flag = "true" if pccs["degenerate"] else "false"
    lines = ["corpus,variant,pcc,n,degenerate"]
    for variant in ("mse", "yeo", "satd"):
        lines.append(f"{name},{variant},{cell(pccs['pcc_' + variant])},{pccs['n']},{flag}")
    (out / "dd_pcc.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "dd_error.csv").write_text(
        "corpus,n,p_yeo,p_global,p_local,degenerate\n"
        f"{name},{errs['n']},{cell(errs['p_yeo'])},{cell(errs['p_global'])},{cell(errs['p_local'])},{flag}\n",
        encoding="utf-8")
    sys.stdout.write((out / "dd_pcc.csv").read_text() + (out / "dd_error.csv").read_text())
    if args.assert_trends:
        if pccs["degenerate"] or pccs["pcc_satd"] is None or pccs["pcc_mse"] is None:
            print("trend check failed: degenerate input", file=sys.stderr)
            return 1
        if not pccs["pcc_satd"] > pccs["pcc_mse"]:
            print(f"trend check failed: PCC(D_SSIM, D_MSE/S) = {pccs['pcc_satd']:.4f} is not above "
                  f"PCC(D_SSIM, D_MSE) = {pccs['pcc_mse']:.4f}", file=sys.stderr)
            return 1
    return 0


def cmd_make_corpus(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = args.names.split(",") if args.names else list(corpus_mod.DEFAULT_NAMES)
    for n in names:
        if n not in corpus_mod.SOURCES:
            raise CliError(f"unknown corpus source {n!r}; known: {', '.join(sorted(corpus_mod.SOURCES))}")
        frames = corpus_mod.pan_sequence(n, args.frames, args.width, args.height)
        write_y4m(out / f"{n}.y4m", frames)
        print(f"wrote {out / f'{n}.y4m'}", file=sys.stderr)
    return 0


def _add_tunables(p: argparse.ArgumentParser):
    p.add_argument("--config", help="key=value file; explicit flags override it")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any tunable")
    p.add_argument("--format", choices=FORMATS, default=None)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--height", type=int, default=None)
    p.add_argument("--frames", type=int, default=None)
    p.add_argument("--ctu-size", dest="ctu_size", type=int, choices=(16, 32, 64), default=None)
    p.add_argument("--threads", type=int, default=None, help="default: $RC_THREADS or 1")
    p.add_argument("--qp", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssimrc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    e = sub.add_parser("encode", help="encode a sequence with one or more schemes")
    e.add_argument("--input", required=True)
    e.add_argument("--name", help="corpus name used in log file names (default: input stem)")
    e.add_argument("--scheme", default="anchor", help="scheme, comma list, or all")
    e.add_argument("--budget", action="append", help="bits per frame (repeatable or comma list)")
    e.add_argument("--budget-from-anchor", dest="budget_from_anchor", metavar="qp=Q1,Q2,...")
    e.add_argument("--keep-anchor", action="store_true", help="also write the fixed-QP anchor logs")
    e.add_argument("--out", default="runs")
    _add_tunables(e)
    e.set_defaults(fn=cmd_encode)

    r = sub.add_parser("report", help="build report tables from run logs")
    r.add_argument("logs", nargs="+", help="log files or directories of them")
    r.add_argument("--out", default="report")
    r.add_argument("--no-figures", action="store_true")
    r.set_defaults(fn=cmd_report)

    d = sub.add_parser("analyze-dd", help="fixed-QP D-D correlation and model error tables")
    d.add_argument("--input", required=True)
    d.add_argument("--name")
    d.add_argument("--qps", default="22,27,32,37")
    d.add_argument("--out", default="dd")
    d.add_argument("--assert-trends", action="store_true")
    _add_tunables(d)
    d.set_defaults(fn=cmd_analyze_dd)

    m = sub.add_parser("make-corpus", help="write the synthetic pan sequences as y4m")
    m.add_argument("--out", default="corpus")
    m.add_argument("--frames", type=int, default=64)
    m.add_argument("--width", type=int, default=416)
    m.add_argument("--height", type=int, default=240)
    m.add_argument("--names", help="comma list of sources")
    m.set_defaults(fn=cmd_make_corpus)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (CliError, RunLogError, MediaError, FileNotFoundError, ValueError) as e:
        print(f"ssimrc: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
