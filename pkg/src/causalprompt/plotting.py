"""Figures written next to the delimited reports (Agg backend, PNG files)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def comparison_figure(rows: Sequence, path: str | Path) -> Path:
    """Grouped bars of attributable count and causal consistency per model."""
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3.2))
        x = np.arange(len(rows))
        w = 0.38
        names = [r.model for r in rows]
        ax1.bar(x - w / 2, [r.direct_ac for r in rows], w, label="direct", color="0.65")
        ax1.bar(x + w / 2, [r.causal_ac for r in rows], w, label="causal", color="tab:blue")
        ax1.set_ylabel("attributable count")
        ax2.bar(x - w / 2, [r.direct_ccs for r in rows], w, color="0.65")
        ax2.bar(x + w / 2, [r.causal_ccs for r in rows], w, color="tab:blue")
        ax2.set_ylabel("CCS")
        ax2.set_ylim(0, 1)
        for ax in (ax1, ax2):
            ax.set_xticks(x, names, rotation=20)
        ax1.legend(frameon=False)
        return _save(fig, path)


def latency_figure(rows: Sequence, path: str | Path) -> Path:
    """Sequential vs proactive end-to-end latency with the reduction annotated."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.2))
        x = np.arange(len(rows))
        w = 0.38
        ax.bar(x - w / 2, [r.sequential for r in rows], w, label="sequential", color="0.65")
        ax.bar(x + w / 2, [r.parallel for r in rows], w, label="proactive", color="tab:green")
        for i, r in enumerate(rows):
            ax.annotate(f"-{r.speedup_pct:.1f}%", (i + w / 2, r.parallel), ha="center", va="bottom", fontsize=7)
        ax.set_xticks(x, [r.model for r in rows], rotation=20)
        ax.set_ylabel("seconds")
        ax.legend(frameon=False)
        return _save(fig, path)


def trace_figure(traces: Sequence, path: str | Path) -> Path:
    """Gantt chart of schedule traces, one lane per trace."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(7, 0.9 + 0.7 * len(traces)))
        for lane, tr in enumerate(traces):
            y = len(traces) - 1 - lane
            ax.broken_barh([(0, tr.t_parse)], (y - 0.3, 0.6), color="0.75")
            if tr.t_causal:
                ax.broken_barh([(tr.t_parse, tr.t_causal)], (y - 0.3, 0.6), color="tab:orange")
            n = max(1, len(tr.per_query))
            for j, q in enumerate(tr.per_query):
                ax.broken_barh([(q.dispatch, q.complete - q.dispatch)], (y - 0.3 + 0.6 * j / n, 0.6 / n), color="tab:purple")
            ax.broken_barh([(tr.t_gen_start, tr.t_gen_end - tr.t_gen_start)], (y - 0.3, 0.6), color="tab:green", alpha=0.6)
        ax.set_yticks(range(len(traces)), [t.mode for t in reversed(traces)])
        ax.set_xlabel("seconds")
        return _save(fig, path)


def margin_figure(rows: Sequence, path: str | Path) -> Path:
    """Robust-risk margin per SCM instance, split by spurious dependence."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3))
        seeds = np.array([r.seed for r in rows])
        margins = np.array([r.margin for r in rows])
        spur = np.array([r.spurious for r in rows], dtype=bool)
        ax.scatter(seeds[spur], margins[spur], s=10, label="spurious S in X", color="tab:red")
        ax.scatter(seeds[~spur], margins[~spur], s=10, label="no spurious S", color="0.5")
        ax.axhline(0, lw=0.8, color="k")
        ax.set_xlabel("seed")
        ax.set_ylabel("risk(X) - risk(R)")
        ax.legend(frameon=False)
        return _save(fig, path)
