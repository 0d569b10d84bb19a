"""Core domain types: dataset records, pipeline configuration, transcripts.

All types are immutable after construction and safe to share across workers.
Dataset records serialize to one JSON document per query (snake_case keys,
images referenced by relative path); ``dumps_canonical`` defines the canonical
byte form used for round-trip checks.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass
from datetime import date
from enum import Enum
from pathlib import Path
from typing import Any

from PIL import Image


class ImageKind(str, Enum):
    QUERY_IMAGE = "query_image"
    IMAGE_SEARCH_SCREENSHOT = "image_search_screenshot"
    TOP_SECTION_SCREENSHOT = "top_section_screenshot"
    FULLPAGE_RAW = "fullpage_raw"
    FULLPAGE_SEGMENT = "fullpage_segment"


class WebsiteLabel(str, Enum):
    VALID = "valid"
    UNSURE = "unsure"
    INVALID = "invalid"


class Area(str, Enum):
    NEWS = "news"
    KNOWLEDGE = "knowledge"


class Subfield(str, Enum):
    TRADITIONAL_SPORTS = "traditional_sports"
    E_SPORTS = "e_sports"
    ENTERTAINMENT = "entertainment"
    GENERAL_NEWS = "general_news"
    PAPER = "paper"
    TECHNOLOGY = "technology"
    FINANCE = "finance"
    FALSE_PREMISE = "false_premise"
    ARTS = "arts"
    ARCHITECTURE = "architecture"
    ASTRONOMY = "astronomy"
    ANIME = "anime"
    AUTO = "auto"
    FASHION = "fashion"


SUBFIELD_ABBREV = {
    Subfield.TRADITIONAL_SPORTS: "SPO",
    Subfield.E_SPORTS: "ESP",
    Subfield.ENTERTAINMENT: "ENT",
    Subfield.GENERAL_NEWS: "GEN",
    Subfield.PAPER: "PAP",
    Subfield.TECHNOLOGY: "TEC",
    Subfield.FINANCE: "FIN",
    Subfield.FALSE_PREMISE: "FAL",
    Subfield.ARTS: "ART",
    Subfield.ARCHITECTURE: "ARC",
    Subfield.ASTRONOMY: "AST",
    Subfield.ANIME: "ANI",
    Subfield.AUTO: "AUT",
    Subfield.FASHION: "FAS",
}

AREA_SUBFIELDS = {
    Area.NEWS: frozenset({
        Subfield.TRADITIONAL_SPORTS, Subfield.E_SPORTS, Subfield.ENTERTAINMENT,
        Subfield.GENERAL_NEWS, Subfield.PAPER, Subfield.TECHNOLOGY,
        Subfield.FINANCE, Subfield.FALSE_PREMISE,
    }),
    Area.KNOWLEDGE: frozenset({
        Subfield.ARTS, Subfield.ARCHITECTURE, Subfield.ASTRONOMY,
        Subfield.ANIME, Subfield.AUTO, Subfield.FASHION,
    }),
}

FALSE_PREMISE_ANSWER = "invalid question"


@dataclass(frozen=True)
class ImageAsset:
    """A decoded image payload (PNG or JPEG) plus its role in the pipeline."""

    id: str
    data: bytes
    width: int
    height: int
    kind: ImageKind
    source_path: str | None = None  # relative path as listed in the dataset file

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"image {self.id!r} has degenerate size "
                             f"{self.width}x{self.height}")

    @classmethod
    def from_bytes(cls, data: bytes, kind: ImageKind, *,
                   id: str | None = None, source_path: str | None = None) -> ImageAsset:
        with Image.open(io.BytesIO(data)) as im:
            width, height = im.size
        if id is None:
            id = hashlib.sha256(data).hexdigest()[:16]
        return cls(id=id, data=data, width=width, height=height,
                   kind=kind, source_path=source_path)

    @classmethod
    def from_file(cls, path: Path | str, kind: ImageKind, *,
                  id: str | None = None, source_path: str | None = None) -> ImageAsset:
        data = Path(path).read_bytes()
        return cls.from_bytes(data, kind, id=id, source_path=source_path)

    def open(self) -> Image.Image:
        return Image.open(io.BytesIO(self.data))


@dataclass(frozen=True)
class WebsiteAnnotation:
    """One retrieved website with its annotator label."""

    url: str
    title: str
    snippet: str
    top_screenshot: ImageAsset | None
    label: WebsiteLabel


@dataclass(frozen=True)
class BriefResult:
    """Rerank-stage input for one website: title, snippet, top-section shot."""

    rank: int  # 1-based
    url: str
    title: str
    snippet: str
    top_screenshot: ImageAsset


@dataclass(frozen=True)
class FullWebsiteContent:
    """Summarization-stage input: retrieved text plus full-page segments."""

    url: str
    title: str
    snippet: str
    retrieved_text: str
    fullpage_segments: tuple[ImageAsset, ...]


@dataclass(frozen=True)
class SummarizationTarget:
    """The pre-selected website (by index) and its frozen full content."""

    index: int
    content: FullWebsiteContent


@dataclass(frozen=True)
class QueryRecord:
    """One benchmark query with its ground truth and annotated websites."""

    id: str
    area: Area
    subfield: Subfield
    question: str
    gt_requery: str
    gt_answer: str
    websites: tuple[WebsiteAnnotation, ...]
    summarization_website: SummarizationTarget | None = None
    query_image: ImageAsset | None = None
    image_search_screenshot: ImageAsset | None = None
    timestamp: date | None = None


class ResizeMode(str, Enum):
    LOW_RES = "low_res"
    ANY_RES = "any_res"


@dataclass(frozen=True)
class PipelineConfig:
    """Tunable pipeline constants; defaults mirror the reference setup."""

    k_websites: int = 8
    token_budget: int = 2000
    top_section_size: tuple[int, int] = (1024, 1024)
    fullpage_width: int = 512
    segment_height: int = 512
    max_segments: int = 10
    resize_mode: ResizeMode = ResizeMode.LOW_RES
    slim_threshold: float = 5.0  # mean gradient magnitude, 0..255
    min_blank_band: int = 16     # pixels
    model_max_edge: int = 1024   # low_res target for the vision encoder
    temperature: float = 0.0
    ttc_temperature: float = 0.7

    def __post_init__(self):
        numeric = {
            "k_websites": self.k_websites,
            "token_budget": self.token_budget,
            "fullpage_width": self.fullpage_width,
            "segment_height": self.segment_height,
            "max_segments": self.max_segments,
            "min_blank_band": self.min_blank_band,
            "model_max_edge": self.model_max_edge,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if not 0 <= self.slim_threshold <= 255:
            raise ValueError("slim_threshold must be in [0, 255]")
        if self.top_section_size[0] <= 0 or self.top_section_size[1] <= 0:
            raise ValueError("top_section_size must be positive")

    def to_dict(self) -> dict[str, Any]:
        return {
            "k_websites": self.k_websites,
            "token_budget": self.token_budget,
            "top_section_size": list(self.top_section_size),
            "fullpage_width": self.fullpage_width,
            "segment_height": self.segment_height,
            "max_segments": self.max_segments,
            "resize_mode": self.resize_mode.value,
            "slim_threshold": self.slim_threshold,
            "min_blank_band": self.min_blank_band,
            "model_max_edge": self.model_max_edge,
            "temperature": self.temperature,
            "ttc_temperature": self.ttc_temperature,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> PipelineConfig:
        kwargs = dict(doc)
        if "top_section_size" in kwargs:
            kwargs["top_section_size"] = tuple(kwargs["top_section_size"])
        if "resize_mode" in kwargs:
            kwargs["resize_mode"] = ResizeMode(kwargs["resize_mode"])
        return cls(**kwargs)


class Stage(str, Enum):
    REQUERY = "requery"
    RERANK = "rerank"
    SUMMARIZE = "summarize"


STAGE_ORDER = (Stage.REQUERY, Stage.RERANK, Stage.SUMMARIZE)


@dataclass(frozen=True)
class StageRecord:
    """One pipeline stage as executed: prompt, raw model output, parsed value."""

    stage: Stage
    prompt: tuple[dict[str, str], ...]  # [{"text": ...} | {"image": asset id}]
    raw_output: str
    parsed: str | int | None
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class SessionTranscript:
    """Full record of one end-to-end run over a single query."""

    query_id: str
    stages: tuple[StageRecord, ...]
    final_answer: str
    rerank_fallback: bool = False

    def __post_init__(self):
        seen = [s.stage for s in self.stages]
        expected = [st for st in STAGE_ORDER if st in seen]
        if seen != expected:
            raise ValueError(f"stages out of pipeline order: {seen}")

    def to_dict(self, *, include_timings: bool = True) -> dict[str, Any]:
        stages = []
        for rec in self.stages:
            doc: dict[str, Any] = {
                "stage": rec.stage.value,
                "prompt": list(rec.prompt),
                "raw_output": rec.raw_output,
                "parsed": rec.parsed,
            }
            if include_timings:
                doc["wall_time_s"] = rec.wall_time_s
            stages.append(doc)
        return {
            "query_id": self.query_id,
            "stages": stages,
            "final_answer": self.final_answer,
            "rerank_fallback": self.rerank_fallback,
        }

    def canonical_bytes(self) -> bytes:
        """Deterministic serialization (timings excluded) for replay checks."""
        return dumps_canonical(self.to_dict(include_timings=False))

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> SessionTranscript:
        stages = tuple(
            StageRecord(
                stage=Stage(s["stage"]),
                prompt=tuple(s["prompt"]),
                raw_output=s["raw_output"],
                parsed=s["parsed"],
                wall_time_s=s.get("wall_time_s", 0.0),
            )
            for s in doc["stages"]
        )
        return cls(query_id=doc["query_id"], stages=stages,
                   final_answer=doc["final_answer"],
                   rerank_fallback=doc.get("rerank_fallback", False))


class E2EErrorKind(str, Enum):
    REQUERY = "requery"
    RERANK = "rerank"
    SUMMARIZATION = "summarization"
    INFORMAL = "informal"


class RequeryErrorKind(str, Enum):
    LACKING_SPECIFICITY = "lacking_specificity"
    INEFFICIENT_QUERY = "inefficient_query"
    EXCLUDING_IMAGE_SEARCH = "excluding_image_search"
    NO_CHANGE = "no_change"
    IRRELEVANT = "irrelevant"


class SummarizationErrorKind(str, Enum):
    TEXT_REASONING = "text_reasoning"
    IMAGE_TEXT_AGGREGATION = "image_text_aggregation"
    IMAGE_REASONING = "image_reasoning"
    HALLUCINATION = "hallucination"
    INFORMAL = "informal"


@dataclass(frozen=True)
class ErrorLabel:
    """Manually assigned failure labels for one query (at most one per task)."""

    e2e: E2EErrorKind | None = None
    requery_kind: RequeryErrorKind | None = None
    summarization_kind: SummarizationErrorKind | None = None


@dataclass(frozen=True)
class Violation:
    """One dataset-record invariant violation."""

    code: str
    message: str


def validate_query_record(record: QueryRecord) -> list[Violation]:
    """Check every record invariant; returns all violations, never raises."""
    out: list[Violation] = []

    if record.subfield not in AREA_SUBFIELDS[record.area]:
        out.append(Violation(
            "subfield_area_mismatch",
            f"subfield {record.subfield.value!r} does not belong to area "
            f"{record.area.value!r}"))

    if record.query_image is not None and record.image_search_screenshot is None:
        out.append(Violation(
            "query_image_without_search_screenshot",
            "query image present but image-search screenshot missing"))

    if not any(w.label is WebsiteLabel.VALID for w in record.websites):
        out.append(Violation(
            "missing_valid_website",
            "no website is labeled valid"))

    for i, site in enumerate(record.websites):
        if not site.url:
            out.append(Violation("empty_website_url",
                                 f"website #{i + 1} has an empty url"))

    if record.subfield is Subfield.FALSE_PREMISE:
        if record.timestamp is not None:
            out.append(Violation(
                "false_premise_timestamp_present",
                "false-premise records carry no timestamp"))
        if record.gt_answer != FALSE_PREMISE_ANSWER:
            out.append(Violation(
                "false_premise_answer_mismatch",
                f"false-premise answer must be {FALSE_PREMISE_ANSWER!r}, "
                f"got {record.gt_answer!r}"))
    elif record.area is Area.NEWS and record.timestamp is None:
        out.append(Violation(
            "missing_timestamp",
            "news records (other than false premise) require a timestamp"))

    if record.summarization_website is not None:
        idx = record.summarization_website.index
        if not 0 <= idx < len(record.websites):
            out.append(Violation(
                "summarization_index_out_of_range",
                f"summarization website index {idx} outside "
                f"[0, {len(record.websites)})"))

    return out


def dumps_canonical(doc: Any) -> bytes:
    """Canonical JSON byte form: sorted keys, two-space indent, one newline."""
    return (json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False)
            + "\n").encode("utf-8")


def _image_to_doc(asset: ImageAsset | None) -> dict[str, str] | None:
    if asset is None:
        return None
    if asset.source_path is None:
        raise ValueError(f"image {asset.id!r} has no dataset path to serialize")
    return {"id": asset.id, "path": asset.source_path, "kind": asset.kind.value}


def _image_from_doc(doc: dict[str, str] | None, base_dir: Path) -> ImageAsset | None:
    if doc is None:
        return None
    return ImageAsset.from_file(base_dir / doc["path"], ImageKind(doc["kind"]),
                                id=doc["id"], source_path=doc["path"])


def record_to_doc(record: QueryRecord) -> dict[str, Any]:
    """QueryRecord -> plain JSON document (inverse of ``record_from_doc``)."""
    doc: dict[str, Any] = {
        "id": record.id,
        "area": record.area.value,
        "subfield": record.subfield.value,
        "question": record.question,
        "query_image": _image_to_doc(record.query_image),
        "image_search_screenshot": _image_to_doc(record.image_search_screenshot),
        "timestamp": record.timestamp.isoformat() if record.timestamp else None,
        "gt_requery": record.gt_requery,
        "gt_answer": record.gt_answer,
        "websites": [
            {
                "url": w.url,
                "title": w.title,
                "snippet": w.snippet,
                "label": w.label.value,
                "top_screenshot": _image_to_doc(w.top_screenshot),
            }
            for w in record.websites
        ],
    }
    if record.summarization_website is None:
        doc["summarization_website"] = None
    else:
        content = record.summarization_website.content
        doc["summarization_website"] = {
            "index": record.summarization_website.index,
            "content": {
                "url": content.url,
                "title": content.title,
                "snippet": content.snippet,
                "retrieved_text": content.retrieved_text,
                "fullpage_segments": [
                    _image_to_doc(seg) for seg in content.fullpage_segments
                ],
            },
        }
    return doc


def record_from_doc(doc: dict[str, Any], base_dir: Path) -> QueryRecord:
    """Parse one query document; image paths resolve relative to ``base_dir``."""
    websites = tuple(
        WebsiteAnnotation(
            url=w["url"],
            title=w["title"],
            snippet=w["snippet"],
            top_screenshot=_image_from_doc(w.get("top_screenshot"), base_dir),
            label=WebsiteLabel(w["label"]),
        )
        for w in doc["websites"]
    )
    target = None
    if doc.get("summarization_website") is not None:
        tdoc = doc["summarization_website"]
        cdoc = tdoc["content"]
        target = SummarizationTarget(
            index=tdoc["index"],
            content=FullWebsiteContent(
                url=cdoc["url"],
                title=cdoc["title"],
                snippet=cdoc["snippet"],
                retrieved_text=cdoc["retrieved_text"],
                fullpage_segments=tuple(
                    _image_from_doc(seg, base_dir)
                    for seg in cdoc["fullpage_segments"]
                ),
            ),
        )
    ts = doc.get("timestamp")
    return QueryRecord(
        id=doc["id"],
        area=Area(doc["area"]),
        subfield=Subfield(doc["subfield"]),
        question=doc["question"],
        query_image=_image_from_doc(doc.get("query_image"), base_dir),
        image_search_screenshot=_image_from_doc(
            doc.get("image_search_screenshot"), base_dir),
        timestamp=date.fromisoformat(ts) if ts else None,
        gt_requery=doc["gt_requery"],
        gt_answer=doc["gt_answer"],
        websites=websites,
        summarization_website=target,
    )
