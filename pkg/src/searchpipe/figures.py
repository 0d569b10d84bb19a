"""Score figures rendered to PNG files (headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .scoring import ScoreReport  # noqa: E402

__all__ = ["save_figures"]

_TASKS = (("e2e", "End-to-end"), ("requery", "Requery"), ("rerank", "Rerank"),
          ("summarize", "Summ."), ("final", "Final"))


def _task_figure(report: ScoreReport, path: Path) -> None:
    labels = [label for _, label in _TASKS]
    scopes = (("Avg", "avg", "#4878cf"), ("News", "news", "#ee854a"),
              ("Knowledge", "knowledge", "#6acc65"))
    x = np.arange(len(labels))
    width = 0.26
    fig, ax = plt.subplots(figsize=(7.2, 4.0))
    for offset, (name, attr, color) in enumerate(scopes):
        values = [getattr(report.tasks[key], attr) for key, _ in _TASKS]
        ax.bar(x + (offset - 1) * width, values, width, label=name,
               color=color)
    ax.set_xticks(x, labels)
    ax.set_ylim(0, 100)
    ax.set_ylabel("score")
    ax.set_title("Step-wise scores")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _subfield_figure(report: ScoreReport, path: Path) -> None:
    abbrevs = list(report.subfields)
    e2e = [report.subfields[a].e2e for a in abbrevs]
    final = [report.subfields[a].final for a in abbrevs]
    x = np.arange(len(abbrevs))
    width = 0.38
    fig, ax = plt.subplots(figsize=(max(6.0, 0.7 * len(abbrevs) + 2), 4.0))
    ax.bar(x - width / 2, e2e, width, label="S_e2e", color="#4878cf")
    ax.bar(x + width / 2, final, width, label="S_final", color="#d65f5f")
    ax.set_xticks(x, abbrevs)
    ax.set_ylim(0, 100)
    ax.set_ylabel("score")
    ax.set_title("Per-subfield scores")
    ax.legend(loc="upper right", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_figures(report: ScoreReport, out_dir: Path | str) -> list[Path]:
    """Render the score bar charts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    path = out_dir / "task_scores.png"
    _task_figure(report, path)
    written.append(path)
    if report.subfields:
        path = out_dir / "subfield_scores.png"
        _subfield_figure(report, path)
        written.append(path)
    return written
