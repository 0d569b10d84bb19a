"""Content-addressed fixture store for hermetic record/replay runs.

Every network-facing operation is keyed by a SHA-256 digest of its name and
canonicalized arguments.  In ``record`` mode live responses are written to the
store before being returned; in ``replay`` mode responses come exclusively
from the store and a missing entry is a hard error.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import FixtureMissError

__all__ = ["FixtureMode", "FixtureStore", "fixture_key"]


class FixtureMode(str, Enum):
    LIVE = "live"
    RECORD = "record"
    REPLAY = "replay"


def fixture_key(operation: str, args: dict[str, Any]) -> str:
    """Stable key for one operation call.

    The digest covers the operation name and a compact, key-sorted JSON
    rendering of the arguments, so the same call maps to the same file on
    every platform.  Provider identity is deliberately not part of the key:
    a fixture recorded against one backend replays against any other.
    """
    doc = {"op": operation, "args": args}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class FixtureStore:
    """Directory of recorded responses, ``<root>/<op>/<key>.<ext>``.

    Writes go through a temp file in the destination directory followed by
    an atomic rename, so concurrent recorders never expose partial files.
    """

    def __init__(self, root: Path | str):
        self.root = Path(root)

    def path_for(self, operation: str, key: str, ext: str) -> Path:
        return self.root / operation / f"{key}.{ext}"

    def exists(self, operation: str, key: str, ext: str) -> bool:
        return self.path_for(operation, key, ext).is_file()

    # -- raw payloads ------------------------------------------------------

    def save_bytes(self, operation: str, key: str, data: bytes,
                   ext: str = "bin") -> Path:
        path = self.path_for(operation, key, ext)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path

    def load_bytes(self, operation: str, key: str, ext: str = "bin") -> bytes:
        path = self.path_for(operation, key, ext)
        if not path.is_file():
            raise FixtureMissError(operation, key)
        return path.read_bytes()

    # -- JSON payloads -----------------------------------------------------

    def save_json(self, operation: str, key: str, doc: Any) -> Path:
        blob = json.dumps(doc, sort_keys=True, indent=2,
                          ensure_ascii=False) + "\n"
        return self.save_bytes(operation, key, blob.encode("utf-8"), ext="json")

    def load_json(self, operation: str, key: str) -> Any:
        return json.loads(self.load_bytes(operation, key, ext="json"))
