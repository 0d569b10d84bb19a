"""Dataset loading, validation, the knowledge-cutoff filter, and the
error-label sidecar loader."""

from __future__ import annotations

import json
import logging
from datetime import date
from pathlib import Path

from .errors import DatasetError
from .model import (Area, E2EErrorKind, ErrorLabel, QueryRecord,
                    RequeryErrorKind, Subfield, SummarizationErrorKind,
                    record_from_doc, validate_query_record)

log = logging.getLogger(__name__)

__all__ = ["load_dataset", "apply_cutoff_filter", "load_error_labels"]


def load_dataset(path: Path | str) -> list[QueryRecord]:
    """Load every query listed in a dataset manifest.

    ``path`` is the manifest file or a directory containing ``manifest.json``;
    query files and image paths resolve relative to the manifest's directory.
    Any problem fails the whole load, with every parse error, duplicate id,
    and record violation listed, not just the first.
    """
    path = Path(path)
    manifest_path = path / "manifest.json" if path.is_dir() else path
    if not manifest_path.is_file():
        raise DatasetError(f"no dataset manifest at {manifest_path}")
    base_dir = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DatasetError(f"unreadable manifest {manifest_path}: {exc}")
    entries = manifest.get("queries") if isinstance(manifest, dict) else None
    if not isinstance(entries, list):
        raise DatasetError(f'{manifest_path}: expected a "queries" list')

    problems: list[str] = []
    records: list[QueryRecord] = []
    seen: dict[str, str] = {}
    for rel in entries:
        qpath = base_dir / rel
        try:
            doc = json.loads(qpath.read_text(encoding="utf-8"))
            record = record_from_doc(doc, base_dir)
        except FileNotFoundError as exc:
            problems.append(f"{rel}: missing file ({exc.filename})")
            continue
        except (ValueError, KeyError, TypeError) as exc:
            problems.append(f"{rel}: unreadable record ({exc})")
            continue
        if record.id in seen:
            problems.append(f"duplicate query id {record.id!r} in "
                            f"{seen[record.id]} and {rel}")
            continue
        seen[record.id] = str(rel)
        for violation in validate_query_record(record):
            problems.append(f"{rel}: [{violation.code}] {violation.message}")
        records.append(record)

    if problems:
        raise DatasetError(
            f"dataset {manifest_path} has {len(problems)} problem(s)",
            problems=problems)
    return records


def apply_cutoff_filter(records: list[QueryRecord],
                        cutoff: date) -> list[QueryRecord]:
    """Drop News queries a model could answer from training data alone:
    those with a timestamp on or before its knowledge cutoff.

    Knowledge-area queries are timeless and always kept. False-premise
    queries have no timestamp (the premise never happened), so they are kept
    with a warning.
    """
    kept: list[QueryRecord] = []
    for record in records:
        if record.area is Area.KNOWLEDGE:
            kept.append(record)
        elif record.subfield is Subfield.FALSE_PREMISE:
            log.warning("query %s: false-premise record has no timestamp; "
                        "kept regardless of cutoff %s", record.id, cutoff)
            kept.append(record)
        elif record.timestamp is not None and record.timestamp <= cutoff:
            continue
        else:
            kept.append(record)
    return kept


def load_error_labels(path: Path | str) -> dict[str, ErrorLabel]:
    """Read a sidecar file of manual failure labels, ``{query_id: {...}}``.

    Labels are produced by human (or model-assisted) review outside this
    package; this is ingestion only.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DatasetError(f"no error-label file at {path}")
    except ValueError as exc:
        raise DatasetError(f"unreadable error-label file {path}: {exc}")
    if not isinstance(doc, dict):
        raise DatasetError(f"{path}: expected an object keyed by query id")
    labels: dict[str, ErrorLabel] = {}
    problems: list[str] = []
    for query_id, entry in doc.items():
        try:
            labels[query_id] = ErrorLabel(
                e2e=E2EErrorKind(entry["e2e"]) if entry.get("e2e") else None,
                requery_kind=(RequeryErrorKind(entry["requery_kind"])
                              if entry.get("requery_kind") else None),
                summarization_kind=(
                    SummarizationErrorKind(entry["summarization_kind"])
                    if entry.get("summarization_kind") else None),
            )
        except (ValueError, TypeError, AttributeError) as exc:
            problems.append(f"{query_id}: {exc}")
    if problems:
        raise DatasetError(f"{path} has {len(problems)} bad label(s)",
                           problems=problems)
    return labels
