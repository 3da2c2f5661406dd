"""JSON-lines run logs: one config line, one line per frame, one summary line."""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

_NAME = re.compile(r"^(?P<corpus>.+)_(?P<scheme>anchor|somr|somr-plus|sosr)_(?P<budget>qp\d+|\d+)$")


class RunLogError(ValueError):
    pass


@dataclass
class RunLog:
    corpus: str
    scheme: str
    budget: str
    config: dict
    frames: list
    summary: dict = field(default_factory=dict)

    @property
    def fixed_qp(self) -> bool:
        return self.budget.startswith("qp")

    @property
    def stem(self) -> str:
        return f"{self.corpus}_{self.scheme}_{self.budget}"


def budget_label(budget: float | None, qp: int) -> str:
    """``qpNN`` for fixed-QP runs, integer bits per frame otherwise."""
    return f"qp{qp:02d}" if budget is None else str(int(round(budget)))


def _clean(v):
    # json cannot carry nan/inf; they become null
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def dumps(obj) -> str:
    return json.dumps(_clean(obj), separators=(",", ":"), allow_nan=False)


def write_run(path, run: RunLog) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [dumps({"type": "config", "corpus": run.corpus, "scheme": run.scheme,
                    "budget": run.budget, "config": run.config})]
    lines += [dumps({"type": "frame", **f}) for f in run.frames]
    lines.append(dumps({"type": "summary", **run.summary}))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_run(path) -> RunLog:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise RunLogError(f"{path}: unreadable log ({e.strerror})") from e
    head = None
    frames, summary = [], {}
    for no, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            kind = rec.pop("type")
        except (json.JSONDecodeError, AttributeError, KeyError, TypeError) as e:
            raise RunLogError(f"{path}:{no}: corrupt log line ({e})") from None
        if kind == "config":
            head = rec
        elif kind == "frame":
            frames.append(rec)
        elif kind == "summary":
            summary = rec
        else:
            raise RunLogError(f"{path}:{no}: unknown record type {kind!r}")
    if head is None:
        raise RunLogError(f"{path}:1: missing config line")
    try:
        return RunLog(head["corpus"], head["scheme"], head["budget"], head["config"], frames, summary)
    except KeyError as e:
        raise RunLogError(f"{path}:1: config line lacks {e}") from None


def parse_stem(stem: str) -> tuple[str, str, str]:
    m = _NAME.match(stem)
    if not m:
        raise RunLogError(f"log name {stem!r} is not <corpus>_<scheme>_<budget>")
    return m["corpus"], m["scheme"], m["budget"]
