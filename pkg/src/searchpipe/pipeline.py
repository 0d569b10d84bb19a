"""Orchestration: the three-stage session, the four evaluation tasks, and
the best-of-N test-time-compute mode."""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any

from .errors import DatasetError, PreconditionError, StageError, TransportError
from .gateway import CallMeta, ModelBackend, parse_rerank_choice, postprocess_answer
from .metrics import answer_score, requery_score
from .model import (BriefResult, PipelineConfig, QueryRecord, SessionTranscript,
                    Stage, StageRecord)
from .prompts import (PromptBundle, build_requery_prompt, build_rerank_prompt,
                      build_summarize_prompt)
from .webio import WebClient

__all__ = ["TaskKind", "TaskResult", "TtcConfig", "TtcCandidate", "TtcResult",
           "run_end_to_end", "run_task", "run_ttc"]


class TaskKind(str, Enum):
    END_TO_END = "end_to_end"
    REQUERY_ONLY = "requery_only"
    RERANK_ONLY = "rerank_only"
    SUMMARIZE_ONLY = "summarize_only"


@dataclass(frozen=True)
class TtcConfig:
    """Sampling counts for test-time compute: ``n_rerank * n_answer``
    end-to-end candidates are produced (25 in the default setup)."""

    n_requery: int = 5
    n_rerank: int = 5
    n_answer: int = 5

    def __post_init__(self):
        for name in ("n_requery", "n_rerank", "n_answer"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def total_candidates(self) -> int:
        return self.n_rerank * self.n_answer


def _prompt_doc(bundle: PromptBundle) -> tuple[dict[str, str], ...]:
    return tuple(
        {"text": seg.text} if seg.text is not None else {"image": seg.image.id}
        for seg in bundle.segments)


def _complete(backend: ModelBackend, bundle: PromptBundle, meta: CallMeta,
              stage: Stage) -> str:
    try:
        return backend.complete(bundle, meta)
    except TransportError as exc:
        raise StageError(stage.value, exc) from exc


def _annotation_briefs(record: QueryRecord) -> list[BriefResult]:
    briefs = []
    for rank, site in enumerate(record.websites, start=1):
        if site.top_screenshot is None:
            raise DatasetError(
                f"query {record.id}: website {rank} has no top-section "
                "screenshot; the rerank task needs one per website")
        briefs.append(BriefResult(rank=rank, url=site.url, title=site.title,
                                  snippet=site.snippet,
                                  top_screenshot=site.top_screenshot))
    return briefs


def run_end_to_end(record: QueryRecord, backend: ModelBackend,
                   client: WebClient,
                   config: PipelineConfig | None = None) -> SessionTranscript:
    """Execute requery → search → rerank → summarize for one query.

    An unparseable rerank output falls back to the rank-1 result and sets
    ``rerank_fallback`` on the transcript rather than aborting.
    """
    cfg = config or client.config
    stages: list[StageRecord] = []

    t0 = time.perf_counter()
    bundle = build_requery_prompt(record, cfg)
    raw = _complete(backend, bundle,
                    CallMeta(record.id, Stage.REQUERY,
                             temperature=cfg.temperature), Stage.REQUERY)
    requery = raw.strip()
    stages.append(StageRecord(Stage.REQUERY, _prompt_doc(bundle), raw,
                              requery, time.perf_counter() - t0))

    t0 = time.perf_counter()
    try:
        briefs = client.text_search(requery, cfg.k_websites)
    except TransportError as exc:
        raise StageError(Stage.RERANK.value, exc) from exc
    if not briefs:
        raise StageError(Stage.RERANK.value, PreconditionError(
            f"search returned no results for requery {requery!r}"))
    # the provider may return fewer than K; the prompt declares what it got
    rerank_cfg = (cfg if len(briefs) == cfg.k_websites
                  else replace(cfg, k_websites=len(briefs)))
    bundle = build_rerank_prompt(record, briefs, rerank_cfg)
    raw = _complete(backend, bundle,
                    CallMeta(record.id, Stage.RERANK,
                             temperature=cfg.temperature), Stage.RERANK)
    choice = parse_rerank_choice(raw, len(briefs))
    fallback = choice is None
    selected = briefs[(choice or 1) - 1]
    stages.append(StageRecord(Stage.RERANK, _prompt_doc(bundle), raw, choice,
                              time.perf_counter() - t0))

    t0 = time.perf_counter()
    content = client.build_full_content(selected.url, selected.title,
                                        selected.snippet, requery, cfg)
    bundle = build_summarize_prompt(record, content, cfg)
    raw = _complete(backend, bundle,
                    CallMeta(record.id, Stage.SUMMARIZE,
                             temperature=cfg.temperature), Stage.SUMMARIZE)
    answer = postprocess_answer(raw)
    stages.append(StageRecord(Stage.SUMMARIZE, _prompt_doc(bundle), raw,
                              answer, time.perf_counter() - t0))

    return SessionTranscript(query_id=record.id, stages=tuple(stages),
                             final_answer=answer, rerank_fallback=fallback)


@dataclass(frozen=True)
class TaskResult:
    """Output of one evaluation task on one query."""

    query_id: str
    kind: TaskKind
    output: str | int | None
    raw_output: str
    transcript: SessionTranscript | None = None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "query_id": self.query_id,
            "kind": self.kind.value,
            "output": self.output,
            "raw_output": self.raw_output,
        }
        if self.transcript is not None:
            doc["transcript"] = self.transcript.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TaskResult:
        transcript = None
        if "transcript" in doc:
            transcript = SessionTranscript.from_dict(doc["transcript"])
        return cls(query_id=doc["query_id"], kind=TaskKind(doc["kind"]),
                   output=doc["output"], raw_output=doc["raw_output"],
                   transcript=transcript)


def run_task(kind: TaskKind, record: QueryRecord, backend: ModelBackend,
             client: WebClient | None = None,
             config: PipelineConfig | None = None) -> TaskResult:
    """Run one evaluation task.

    Only the end-to-end task touches the network layer; the step-wise tasks
    consume the ground-truth inputs carried by the record itself.
    """
    if kind is TaskKind.END_TO_END:
        if client is None:
            raise PreconditionError("end_to_end task needs a web client")
        transcript = run_end_to_end(record, backend, client, config)
        return TaskResult(record.id, kind, transcript.final_answer,
                          transcript.stages[-1].raw_output,
                          transcript=transcript)

    cfg = config or (client.config if client is not None else PipelineConfig())
    if kind is TaskKind.REQUERY_ONLY:
        bundle = build_requery_prompt(record, cfg)
        raw = _complete(backend, bundle,
                        CallMeta(record.id, Stage.REQUERY,
                                 temperature=cfg.temperature), Stage.REQUERY)
        return TaskResult(record.id, kind, raw.strip(), raw)

    if kind is TaskKind.RERANK_ONLY:
        if not record.websites:
            raise DatasetError(
                f"query {record.id}: no annotated websites for rerank task")
        briefs = _annotation_briefs(record)
        rerank_cfg = (cfg if len(briefs) == cfg.k_websites
                      else replace(cfg, k_websites=len(briefs)))
        bundle = build_rerank_prompt(record, briefs, rerank_cfg)
        raw = _complete(backend, bundle,
                        CallMeta(record.id, Stage.RERANK,
                                 temperature=cfg.temperature), Stage.RERANK)
        choice = parse_rerank_choice(raw, len(briefs))
        return TaskResult(record.id, kind, choice, raw)

    if kind is TaskKind.SUMMARIZE_ONLY:
        if record.summarization_website is None:
            raise DatasetError(
                f"query {record.id}: no pre-selected summarization website")
        content = record.summarization_website.content
        bundle = build_summarize_prompt(record, content, cfg)
        raw = _complete(backend, bundle,
                        CallMeta(record.id, Stage.SUMMARIZE,
                                 temperature=cfg.temperature), Stage.SUMMARIZE)
        return TaskResult(record.id, kind, postprocess_answer(raw), raw)

    raise PreconditionError(f"unknown task kind: {kind!r}")


@dataclass(frozen=True)
class TtcCandidate:
    """One end-to-end candidate: rerank attempt × answer attempt."""

    rerank_attempt: int
    answer_attempt: int
    url: str
    choice: int | None
    answer: str
    score: float

    def to_dict(self) -> dict[str, Any]:
        return {"rerank_attempt": self.rerank_attempt,
                "answer_attempt": self.answer_attempt,
                "url": self.url, "choice": self.choice,
                "answer": self.answer, "score": self.score}

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TtcCandidate:
        return cls(**doc)


@dataclass(frozen=True)
class TtcResult:
    """Best-of-N outcome for one query plus all sampled candidates."""

    query_id: str
    requery_attempts: tuple[str, ...]
    requery_scores: tuple[float, ...]
    selected_requery: str
    candidates: tuple[TtcCandidate, ...]
    best_index: int
    best_transcript: SessionTranscript

    @property
    def best_score(self) -> float:
        return self.candidates[self.best_index].score

    def to_dict(self) -> dict[str, Any]:
        return {
            "query_id": self.query_id,
            "requery_attempts": list(self.requery_attempts),
            "requery_scores": list(self.requery_scores),
            "selected_requery": self.selected_requery,
            "candidates": [c.to_dict() for c in self.candidates],
            "best_index": self.best_index,
            "best_transcript": self.best_transcript.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> TtcResult:
        return cls(
            query_id=doc["query_id"],
            requery_attempts=tuple(doc["requery_attempts"]),
            requery_scores=tuple(doc["requery_scores"]),
            selected_requery=doc["selected_requery"],
            candidates=tuple(TtcCandidate.from_dict(c)
                             for c in doc["candidates"]),
            best_index=doc["best_index"],
            best_transcript=SessionTranscript.from_dict(
                doc["best_transcript"]),
        )


def run_ttc(record: QueryRecord, backend: ModelBackend, client: WebClient,
            config: PipelineConfig | None = None,
            ttc: TtcConfig | None = None) -> TtcResult:
    """Best-of-N sampling: n_requery requeries (keep the one scoring highest
    against the ground-truth requery), n_rerank website choices, n_answer
    answers per choice; every candidate is scored by answer F1 and the
    maximum wins.

    The requery selection consults gt_requery, so this mode is an
    oracle-assisted upper bound, not a deployable strategy. Duplicate website
    choices skip content re-extraction but still contribute their own answer
    samples, keeping the candidate count at exactly ``n_rerank * n_answer``.
    """
    cfg = config or client.config
    ttc = ttc or TtcConfig()
    temp = cfg.ttc_temperature

    req_bundle = build_requery_prompt(record, cfg)
    attempts: list[str] = []
    scores: list[float] = []
    for i in range(ttc.n_requery):
        raw = _complete(backend, req_bundle,
                        CallMeta(record.id, Stage.REQUERY, attempt=i,
                                 temperature=temp), Stage.REQUERY)
        attempts.append(raw.strip())
        scores.append(requery_score(attempts[-1], record.gt_requery))
    best_req = max(range(ttc.n_requery), key=lambda i: (scores[i], -i))
    selected_requery = attempts[best_req]

    try:
        briefs = client.text_search(selected_requery, cfg.k_websites)
    except TransportError as exc:
        raise StageError(Stage.RERANK.value, exc) from exc
    if not briefs:
        raise StageError(Stage.RERANK.value, PreconditionError(
            f"search returned no results for requery {selected_requery!r}"))
    rerank_cfg = (cfg if len(briefs) == cfg.k_websites
                  else replace(cfg, k_websites=len(briefs)))
    rer_bundle = build_rerank_prompt(record, briefs, rerank_cfg)

    choices: list[tuple[str, int | None]] = []
    for i in range(ttc.n_rerank):
        raw = _complete(backend, rer_bundle,
                        CallMeta(record.id, Stage.RERANK, attempt=i,
                                 temperature=temp), Stage.RERANK)
        choices.append((raw, parse_rerank_choice(raw, len(briefs))))

    content_cache: dict[str, object] = {}
    sum_bundles: dict[str, PromptBundle] = {}
    candidates: list[TtcCandidate] = []
    sum_raws: list[str] = []
    for i, (_, choice) in enumerate(choices):
        selected = briefs[(choice or 1) - 1]
        if selected.url not in content_cache:
            content = client.build_full_content(
                selected.url, selected.title, selected.snippet,
                selected_requery, cfg)
            content_cache[selected.url] = content
            sum_bundles[selected.url] = build_summarize_prompt(
                record, content, cfg)
        bundle = sum_bundles[selected.url]
        for j in range(ttc.n_answer):
            attempt = i * ttc.n_answer + j
            raw = _complete(backend, bundle,
                            CallMeta(record.id, Stage.SUMMARIZE,
                                     attempt=attempt, temperature=temp),
                            Stage.SUMMARIZE)
            answer = postprocess_answer(raw)
            candidates.append(TtcCandidate(
                rerank_attempt=i, answer_attempt=attempt, url=selected.url,
                choice=choice, answer=answer,
                score=answer_score(answer, record.gt_answer)))
            sum_raws.append(raw)

    best = max(range(len(candidates)),
               key=lambda n: (candidates[n].score, -n))
    winner = candidates[best]
    win_rer_raw, win_choice = choices[winner.rerank_attempt]
    transcript = SessionTranscript(
        query_id=record.id,
        stages=(
            StageRecord(Stage.REQUERY, _prompt_doc(req_bundle),
                        attempts[best_req], selected_requery),
            StageRecord(Stage.RERANK, _prompt_doc(rer_bundle),
                        win_rer_raw, win_choice),
            StageRecord(Stage.SUMMARIZE, _prompt_doc(sum_bundles[winner.url]),
                        sum_raws[best], winner.answer),
        ),
        final_answer=winner.answer,
        rerank_fallback=win_choice is None,
    )
    return TtcResult(query_id=record.id,
                     requery_attempts=tuple(attempts),
                     requery_scores=tuple(scores),
                     selected_requery=selected_requery,
                     candidates=tuple(candidates),
                     best_index=best,
                     best_transcript=transcript)
