"""Run-directory persistence: ``<results root>/<run_id>/`` holds a manifest,
one output document per query, and (after scoring) the report."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .errors import DatasetError
from .model import PipelineConfig, dumps_canonical

__all__ = ["RunManifest", "RunStore", "results_root", "new_run_id"]

_RESERVED = {"manifest.json", "report.json"}


def results_root(override: Path | str | None = None) -> Path:
    """The directory runs live under: explicit arg, $RESULTS_DIR, or ./results."""
    return Path(override or os.environ.get("RESULTS_DIR") or "results")


def new_run_id(now: datetime | None = None) -> str:
    now = now or datetime.now(timezone.utc)
    return now.strftime("run-%Y%m%d-%H%M%S")


@dataclass(frozen=True)
class RunManifest:
    """What a run was: dataset, endpoint, config snapshot, tasks executed."""

    run_id: str
    dataset_path: str
    endpoint_name: str
    config: PipelineConfig
    tasks: tuple[str, ...] = ()
    created_at: str = field(
        default_factory=lambda: datetime.now(timezone.utc).isoformat())

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "dataset_path": self.dataset_path,
            "endpoint_name": self.endpoint_name,
            "config": self.config.to_dict(),
            "tasks": list(self.tasks),
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> RunManifest:
        return cls(run_id=doc["run_id"],
                   dataset_path=doc["dataset_path"],
                   endpoint_name=doc["endpoint_name"],
                   config=PipelineConfig.from_dict(doc["config"]),
                   tasks=tuple(doc.get("tasks", ())),
                   created_at=doc["created_at"])


class RunStore:
    """Reader/writer for the run layout.

    Repeated runs into the same run id merge at the task level, so the four
    evaluation tasks can be executed one `run` invocation at a time.
    """

    def __init__(self, root: Path | str | None = None):
        self.root = results_root(root)

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "manifest.json").is_file()

    def _write(self, path: Path, doc: Any) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dumps_canonical(doc))

    def save_manifest(self, manifest: RunManifest) -> None:
        """Write the manifest, merging task kinds with any earlier run."""
        path = self.run_dir(manifest.run_id) / "manifest.json"
        tasks = list(manifest.tasks)
        if path.is_file():
            old = RunManifest.from_dict(json.loads(path.read_text()))
            tasks = list(old.tasks) + [t for t in tasks if t not in old.tasks]
            manifest = RunManifest(
                run_id=manifest.run_id, dataset_path=manifest.dataset_path,
                endpoint_name=manifest.endpoint_name, config=manifest.config,
                tasks=tuple(tasks), created_at=old.created_at)
        else:
            manifest = RunManifest(
                run_id=manifest.run_id, dataset_path=manifest.dataset_path,
                endpoint_name=manifest.endpoint_name, config=manifest.config,
                tasks=tuple(tasks), created_at=manifest.created_at)
        self._write(path, manifest.to_dict())

    def load_manifest(self, run_id: str) -> RunManifest:
        path = self.run_dir(run_id) / "manifest.json"
        if not path.is_file():
            raise DatasetError(f"unknown run {run_id!r}: no manifest at {path}")
        return RunManifest.from_dict(json.loads(path.read_text()))

    def save_query_output(self, run_id: str, query_id: str,
                          updates: dict[str, Any]) -> None:
        """Merge ``updates`` into the query's document.

        The ``tasks`` key merges per task kind; other keys (like ``ttc``)
        replace wholesale.
        """
        path = self.run_dir(run_id) / f"{query_id}.json"
        doc: dict[str, Any] = {"query_id": query_id, "tasks": {}}
        if path.is_file():
            doc = json.loads(path.read_text())
        for key, value in updates.items():
            if key == "tasks":
                doc.setdefault("tasks", {}).update(value)
            else:
                doc[key] = value
        self._write(path, doc)

    def load_query_outputs(self, run_id: str) -> dict[str, dict[str, Any]]:
        run_dir = self.run_dir(run_id)
        if not run_dir.is_dir():
            raise DatasetError(f"unknown run {run_id!r}: no directory {run_dir}")
        outputs: dict[str, dict[str, Any]] = {}
        for path in sorted(run_dir.glob("*.json")):
            if path.name in _RESERVED:
                continue
            doc = json.loads(path.read_text())
            outputs[doc["query_id"]] = doc
        return outputs

    def save_report(self, run_id: str, report_doc: dict[str, Any]) -> Path:
        path = self.run_dir(run_id) / "report.json"
        self._write(path, report_doc)
        return path

    def load_report(self, run_id: str) -> dict[str, Any]:
        path = self.run_dir(run_id) / "report.json"
        if not path.is_file():
            raise DatasetError(
                f"run {run_id!r} has no report yet; run the score command first")
        return json.loads(path.read_text())
