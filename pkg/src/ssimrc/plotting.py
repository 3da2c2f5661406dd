"""Report figures: R-D curves per corpus and D-D scatter plots."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

from matplotlib.figure import Figure

from .evaluation import SCHEME_ORDER, dd_samples, rd_point

STYLE = {"anchor": ("k", "o"), "somr": ("tab:blue", "s"), "somr-plus": ("tab:green", "^"),
         "sosr": ("tab:red", "D")}


def _save(fig: Figure, path: Path):
    # no timestamps in the file so reruns give the same bytes
    fig.savefig(path, dpi=100, metadata={"Software": None})


def rd_figure(corpus: str, runs) -> Figure:
    fig = Figure(figsize=(5.5, 4))
    ax = fig.add_subplot()
    groups = defaultdict(list)
    for r in runs:
        groups["anchor (fixed QP)" if r.fixed_qp else r.scheme].append(r)
    for label in sorted(groups, key=lambda s: (SCHEME_ORDER.index(s.split()[0]), s)):
        pts = sorted((p.bitrate, p.quality) for p in map(rd_point, groups[label]))
        colour, marker = STYLE[label.split()[0]]
        ax.plot([b / 1000 for b, _ in pts], [q for _, q in pts], marker=marker, color=colour,
                ls="--" if "fixed" in label else "-", label=label, ms=4)
    ax.set_xlabel("kbit / frame")
    ax.set_ylabel("mean SSIM")
    ax.set_title(corpus)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


def dd_figure(corpus: str, fixed_runs) -> Figure:
    fig = Figure(figsize=(9, 3.6))
    ax1, ax2 = fig.subplots(1, 2)
    for r in fixed_runs:
        s = [x for x in dd_samples(r) if x.satd > 0]
        ax1.scatter([x.d_mse for x in s], [x.d_ssim for x in s], s=3, alpha=0.4, label=r.budget)
        ax2.scatter([x.d_mse / x.satd for x in s], [x.d_ssim for x in s], s=3, alpha=0.4, label=r.budget)
    ax1.set_xlabel("D_MSE")
    ax2.set_xlabel("D_MSE / SATD")
    for ax in (ax1, ax2):
        ax.set_ylabel("D_SSIM")
        ax.grid(alpha=0.3)
    ax2.legend(fontsize=7, markerscale=3)
    fig.suptitle(corpus)
    fig.tight_layout()
    return fig


def render_figures(runs, out_dir) -> list[Path]:
    out = Path(out_dir)
    by_corpus = defaultdict(list)
    for r in runs:
        by_corpus[r.corpus].append(r)
    written = []
    for corpus in sorted(by_corpus):
        cr = by_corpus[corpus]
        p = out / f"rd_{corpus}.png"
        _save(rd_figure(corpus, cr), p)
        written.append(p)
        fixed = [r for r in cr if r.scheme == "anchor" and r.fixed_qp]
        if fixed:
            p = out / f"dd_{corpus}.png"
            _save(dd_figure(corpus, fixed), p)
            written.append(p)
    return written
