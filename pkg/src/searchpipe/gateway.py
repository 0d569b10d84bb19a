"""Model backends: the remote chat-with-images endpoint and local stubs.

A backend is anything with ``complete(bundle, meta) -> str``. The HTTP
backend speaks the common chat-completion wire shape (one user message with
interleaved text and base64 image parts). Stubs make runs hermetic: the
scripted stub replays canned responses keyed by (query, stage, attempt) and
the oracle stub emits ground truth, pinning the pipeline's best case.
"""

from __future__ import annotations

import base64
import json
import os
import re
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol, runtime_checkable

import requests

from .errors import CapabilityError, PreconditionError, TransportError
from .model import ImageAsset, QueryRecord, Stage, WebsiteLabel
from .prompts import PromptBundle

__all__ = [
    "ModelEndpoint", "CallMeta", "ModelBackend", "HttpBackend",
    "ScriptedStub", "OracleStub", "parse_rerank_choice", "postprocess_answer",
]


@dataclass(frozen=True)
class ModelEndpoint:
    """Connection details for one remote model."""

    name: str
    base_url: str = ""
    api_key: str = ""
    model: str = ""
    max_images: int = 16
    max_context_hint: int = 128_000

    @classmethod
    def from_env(cls, name: str = "default") -> ModelEndpoint:
        return cls(name=name,
                   base_url=os.environ.get("LMM_API_BASE", ""),
                   api_key=os.environ.get("LMM_API_KEY", ""),
                   model=os.environ.get("LMM_MODEL", ""))


@dataclass(frozen=True)
class CallMeta:
    """Identifies one completion call so stubs can vary per attempt."""

    query_id: str
    stage: Stage
    attempt: int = 0
    temperature: float = 0.0


@runtime_checkable
class ModelBackend(Protocol):
    def complete(self, bundle: PromptBundle, meta: CallMeta) -> str:
        """Return the model's raw text for one prompt."""
        ...


def _image_part(image: ImageAsset) -> dict:
    media = "image/jpeg" if image.data[:2] == b"\xff\xd8" else "image/png"
    payload = base64.b64encode(image.data).decode("ascii")
    return {"type": "image_url",
            "image_url": {"url": f"data:{media};base64,{payload}"}}


class HttpBackend:
    """Chat-completion client: POST {base_url}/chat/completions."""

    def __init__(self, endpoint: ModelEndpoint, *, timeout: float = 120.0,
                 max_in_flight: int = 2,
                 session: requests.Session | None = None):
        if not endpoint.base_url:
            raise PreconditionError(
                "endpoint has no base URL; set LMM_API_BASE or use a stub")
        self.endpoint = endpoint
        self.timeout = timeout
        self._session = session or requests.Session()
        self._gate = threading.Semaphore(max_in_flight)

    def complete(self, bundle: PromptBundle, meta: CallMeta) -> str:
        images = bundle.images()
        if len(images) > self.endpoint.max_images:
            raise CapabilityError(
                f"prompt carries {len(images)} images but endpoint "
                f"{self.endpoint.name!r} accepts at most "
                f"{self.endpoint.max_images}")
        parts: list[dict] = []
        for segment in bundle.segments:
            if segment.text is not None:
                parts.append({"type": "text", "text": segment.text})
            else:
                parts.append(_image_part(segment.image))
        body = {
            "model": self.endpoint.model,
            "messages": [{"role": "user", "content": parts}],
            "temperature": meta.temperature,
        }
        headers = {"Content-Type": "application/json"}
        if self.endpoint.api_key:
            headers["Authorization"] = f"Bearer {self.endpoint.api_key}"
        url = self.endpoint.base_url.rstrip("/") + "/chat/completions"
        try:
            with self._gate:
                resp = self._session.post(url, json=body, headers=headers,
                                          timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"completion request failed: {exc}",
                                 url=url) from exc
        if resp.status_code >= 400:
            raise TransportError(
                f"completion endpoint returned HTTP {resp.status_code}",
                status=resp.status_code, url=url)
        try:
            doc = resp.json()
            return doc["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportError(
                f"malformed completion response: {exc}", url=url) from exc


class ScriptedStub:
    """Canned responses from a mapping file.

    Script shape: ``{query_id: {stage: response}}`` where ``response`` is a
    string (same text for every attempt) or a list indexed by attempt
    (attempts past the end reuse the last entry, so fixed scripts stay valid
    when sampling counts grow).
    """

    def __init__(self, script: dict):
        self.script = script

    @classmethod
    def from_file(cls, path: Path | str) -> ScriptedStub:
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def complete(self, bundle: PromptBundle, meta: CallMeta) -> str:
        try:
            entry = self.script[meta.query_id][meta.stage.value]
        except KeyError:
            raise PreconditionError(
                f"stub script has no response for query {meta.query_id!r} "
                f"stage {meta.stage.value!r}") from None
        if isinstance(entry, str):
            return entry
        if not entry:
            raise PreconditionError(
                f"stub script entry for query {meta.query_id!r} stage "
                f"{meta.stage.value!r} is an empty list")
        return entry[min(meta.attempt, len(entry) - 1)]


class OracleStub:
    """Emits ground truth at every stage.

    Requery returns ``gt_requery``, rerank points at the first website the
    annotators labeled valid, summarize returns ``gt_answer``. Assumes the
    search fixtures list websites in annotation order.
    """

    def __init__(self, records: Iterable[QueryRecord]):
        self._records = {r.id: r for r in records}

    def complete(self, bundle: PromptBundle, meta: CallMeta) -> str:
        try:
            record = self._records[meta.query_id]
        except KeyError:
            raise PreconditionError(
                f"oracle stub knows no query {meta.query_id!r}") from None
        if meta.stage is Stage.REQUERY:
            return record.gt_requery
        if meta.stage is Stage.RERANK:
            for i, site in enumerate(record.websites, start=1):
                if site.label is WebsiteLabel.VALID:
                    return f"<Website {i}>"
            raise PreconditionError(
                f"query {record.id!r} has no valid-labeled website")
        return record.gt_answer


_CHOICE = re.compile(r"<\s*website\s+(\d+)\s*>", re.IGNORECASE)


def parse_rerank_choice(raw: str, k: int) -> int | None:
    """First bracketed website index in ``raw``, or None if unparseable.

    Tolerates case and whitespace variation and surrounding prose. The first
    bracketed index decides: if it lies outside [1, k] the output counts as
    unparseable even when a later index would be in range.
    """
    match = _CHOICE.search(raw or "")
    if match is None:
        return None
    index = int(match.group(1))
    if 1 <= index <= k:
        return index
    return None


_ANSWER_LABEL = re.compile(r"^answer\s*:\s*", re.IGNORECASE)
_QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"),
                ("‘", "’"))


def postprocess_answer(raw: str) -> str:
    """Light cleanup only: trim whitespace, drop one surrounding quote pair,
    drop a leading "Answer:" label. Anything else passes through unchanged."""
    text = raw.strip()
    while True:
        before = text
        for left, right in _QUOTE_PAIRS:
            if len(text) >= 2 and text.startswith(left) and text.endswith(right):
                text = text[1:-1].strip()
        text = _ANSWER_LABEL.sub("", text).strip()
        if text == before:
            return text
