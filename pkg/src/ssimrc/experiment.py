"""Budget fan-out: fixed-QP anchor encodes set the targets for rate-controlled runs."""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

from .runlog import RunLog, budget_label, write_run
from .schemes import SCHEMES, OutcomeCache, SchemeConfig, run_scheme, run_summary

ANCHOR_QPS = (22, 27, 32, 37)


def encode_run(corpus: str, frames, config: SchemeConfig, cache: OutcomeCache | None = None) -> RunLog:
    logs = run_scheme(frames, config, cache)
    return RunLog(corpus, config.scheme, budget_label(config.budget, config.qp), config.to_json(),
                  [f.to_json() for f in logs], run_summary(logs))


def anchor_budget(run: RunLog) -> float:
    """Mean achieved bits per frame of a finished run."""
    return sum(f["actual_bits"] for f in run.frames) / len(run.frames)


def run_corpus(sequences: dict, base: SchemeConfig | None = None, qps=ANCHOR_QPS, schemes=SCHEMES,
               out_dir=None) -> list[RunLog]:
    """Fixed-QP anchor at each QP, then every scheme at the anchor's achieved rate.

    Managed runs use the same QP for their bootstrap frame and mode-set
    centre as the anchor encode their budget came from.
    """
    base = base or SchemeConfig("anchor")
    runs = []
    for name in sorted(sequences):
        frames = sequences[name]
        cache = OutcomeCache()
        for qp in qps:
            fixed = encode_run(name, frames, replace(base, scheme="anchor", budget=None, qp=qp), cache)
            runs.append(fixed)
            budget = anchor_budget(fixed)
            for scheme in schemes:
                runs.append(encode_run(name, frames, replace(base, scheme=scheme, budget=budget, qp=qp), cache))
    if out_dir is not None:
        for r in runs:
            write_run(Path(out_dir) / f"{r.stem}.jsonl", r)
    return runs
