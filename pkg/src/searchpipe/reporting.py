"""Report rendering: canonical JSON, an aligned text table, and CSV files."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .metrics import display_round
from .model import dumps_canonical
from .scoring import TASK_KEYS, ScoreReport

__all__ = ["emit_report", "write_csvs"]

_TASK_LABELS = (
    ("End-to-end", "e2e"),
    ("Requery", "requery"),
    ("Rerank", "rerank"),
    ("Summarization", "summarize"),
    ("Final", "final"),
)


def _fmt(value: float) -> str:
    return f"{display_round(value, 1):.1f}"


def _table(report: ScoreReport) -> str:
    lines = []
    scope = (f"{report.n_queries} queries "
             f"({report.n_news} news, {report.n_knowledge} knowledge)")
    if report.run_id:
        lines.append(f"Run {report.run_id}: {scope}")
    else:
        lines.append(f"Scores: {scope}")
    lines.append("")
    lines.append(f"{'Task':<14}{'Avg':>8}{'News':>8}{'Know.':>8}")
    for label, key in _TASK_LABELS:
        s = report.tasks[key]
        lines.append(f"{label:<14}{_fmt(s.avg):>8}{_fmt(s.news):>8}"
                     f"{_fmt(s.knowledge):>8}")
    if report.subfields:
        lines.append("")
        lines.append(f"{'Subfield':<10}{'n':>4}{'S_e2e':>8}{'S_final':>9}")
        for abbrev, s in report.subfields.items():
            lines.append(f"{abbrev:<10}{s.n:>4}{_fmt(s.e2e):>8}"
                         f"{_fmt(s.final):>9}")
    if report.warnings:
        lines.append("")
        lines.append(f"{len(report.warnings)} coverage warning(s):")
        lines.extend(f"  - {w}" for w in report.warnings)
    return "\n".join(lines) + "\n"


def emit_report(report: ScoreReport, format: str = "json") -> bytes:
    """Serialize a report: ``json`` is stable-keyed and round-trip safe,
    ``table`` mirrors the published result tables (one-decimal display)."""
    if format == "json":
        return dumps_canonical(report.to_dict())
    if format == "table":
        return _table(report).encode("utf-8")
    raise ValueError(f"unknown report format {format!r}")


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def write_csvs(report: ScoreReport, out_dir: Path | str) -> list[Path]:
    """Write scores.csv, subfields.csv, and per_query.csv (full precision)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    rows = [["task", "avg", "news", "knowledge"]]
    for _, key in _TASK_LABELS:
        s = report.tasks[key]
        rows.append([key, repr(s.avg), repr(s.news), repr(s.knowledge)])
    path = out_dir / "scores.csv"
    path.write_text(_csv(rows), encoding="utf-8")
    written.append(path)

    rows = [["subfield", "n", "s_e2e", "s_final"]]
    for abbrev, s in report.subfields.items():
        rows.append([abbrev, s.n, repr(s.e2e), repr(s.final)])
    path = out_dir / "subfields.csv"
    path.write_text(_csv(rows), encoding="utf-8")
    written.append(path)

    rows = [["query_id", *TASK_KEYS, "final"]]
    for qid, s in report.per_query.items():
        rows.append([qid, repr(s.e2e), repr(s.requery), repr(s.rerank),
                     repr(s.summarize), repr(s.final)])
    path = out_dir / "per_query.csv"
    path.write_text(_csv(rows), encoding="utf-8")
    written.append(path)

    return written
