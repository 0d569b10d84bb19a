"""Turn stored run outputs into the step-wise score report.

All scores are reported on the 0..100 scale. The composite final score uses
the fixed weights (0.75 answer, 0.05 requery, 0.1 rerank, 0.1 summarization)
and is composed from aggregate component means, the same way the published
result tables compose their Avg column; a per-query final is also emitted.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from statistics import fmean
from typing import Any, Mapping, Sequence

from .errors import DatasetError
from .metrics import answer_score, final_score, requery_score, rerank_score
from .model import (SUBFIELD_ABBREV, Area, ErrorLabel, QueryRecord, Subfield)

__all__ = ["TaskScores", "QueryScores", "SubfieldScores", "ScoreReport",
           "score_run"]

TASK_KEYS = ("e2e", "requery", "rerank", "summarize")


@dataclass(frozen=True)
class TaskScores:
    """One component's mean score overall and per area."""

    avg: float
    news: float
    knowledge: float

    def to_dict(self) -> dict[str, float]:
        return {"avg": self.avg, "news": self.news,
                "knowledge": self.knowledge}


@dataclass(frozen=True)
class QueryScores:
    e2e: float
    requery: float
    rerank: float
    summarize: float
    final: float

    def to_dict(self) -> dict[str, float]:
        return {"e2e": self.e2e, "requery": self.requery,
                "rerank": self.rerank, "summarize": self.summarize,
                "final": self.final}


@dataclass(frozen=True)
class SubfieldScores:
    """Per-subfield breakdown.

    Both the answer score and the composite are emitted because published
    per-subfield tables do not state which of the two they show.
    """

    n: int
    e2e: float
    final: float

    def to_dict(self) -> dict[str, float | int]:
        return {"n": self.n, "s_e2e": self.e2e, "s_final": self.final}


@dataclass(frozen=True)
class ScoreReport:
    run_id: str | None
    n_queries: int
    n_news: int
    n_knowledge: int
    tasks: dict[str, TaskScores]            # e2e/requery/rerank/summarize/final
    per_query: dict[str, QueryScores]
    subfields: dict[str, SubfieldScores]    # keyed by subfield abbreviation
    warnings: tuple[str, ...] = ()
    error_label_counts: dict[str, dict[str, int]] | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "n_queries": self.n_queries,
            "n_news": self.n_news,
            "n_knowledge": self.n_knowledge,
            "tasks": {k: v.to_dict() for k, v in self.tasks.items()},
            "per_query": {k: v.to_dict() for k, v in self.per_query.items()},
            "subfields": {k: v.to_dict() for k, v in self.subfields.items()},
            "warnings": list(self.warnings),
            "error_label_counts": self.error_label_counts,
        }

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> ScoreReport:
        return cls(
            run_id=doc["run_id"],
            n_queries=doc["n_queries"],
            n_news=doc["n_news"],
            n_knowledge=doc["n_knowledge"],
            tasks={k: TaskScores(**v) for k, v in doc["tasks"].items()},
            per_query={k: QueryScores(**v)
                       for k, v in doc["per_query"].items()},
            subfields={k: SubfieldScores(n=v["n"], e2e=v["s_e2e"],
                                         final=v["s_final"])
                       for k, v in doc["subfields"].items()},
            warnings=tuple(doc.get("warnings", ())),
            error_label_counts=doc.get("error_label_counts"),
        )


def _query_scores(record: QueryRecord, doc: Mapping[str, Any],
                  warnings: list[str]) -> QueryScores:
    tasks = doc.get("tasks", {})

    ttc = doc.get("ttc")
    if ttc and ttc.get("candidates"):
        # best-of-N: the end-to-end score is the best candidate's F1
        e2e = max(answer_score(c["answer"], record.gt_answer)
                  for c in ttc["candidates"])
    elif "end_to_end" in tasks:
        e2e = answer_score(str(tasks["end_to_end"]["output"] or ""),
                           record.gt_answer)
    else:
        e2e = 0.0
        warnings.append(f"{record.id}: no end-to-end output; scored 0")

    if "requery_only" in tasks:
        requery = requery_score(str(tasks["requery_only"]["output"] or ""),
                                record.gt_requery)
    else:
        requery = 0.0
        warnings.append(f"{record.id}: no requery output; scored 0")

    if "rerank_only" in tasks:
        choice = tasks["rerank_only"]["output"]
        rerank = rerank_score(choice if isinstance(choice, int) else None,
                              record.websites)
    else:
        rerank = 0.0
        warnings.append(f"{record.id}: no rerank output; scored 0")

    if "summarize_only" in tasks:
        summarize = answer_score(str(tasks["summarize_only"]["output"] or ""),
                                 record.gt_answer)
    else:
        summarize = 0.0
        warnings.append(f"{record.id}: no summarization output; scored 0")

    e2e, requery, rerank, summarize = (100.0 * e2e, 100.0 * requery,
                                       100.0 * rerank, 100.0 * summarize)
    return QueryScores(e2e=e2e, requery=requery, rerank=rerank,
                       summarize=summarize,
                       final=final_score(e2e, requery, rerank, summarize))


def _aggregate(per_query: Mapping[str, QueryScores],
               ids: Sequence[str]) -> dict[str, float]:
    means = {}
    for key in TASK_KEYS:
        values = [getattr(per_query[qid], key) for qid in ids]
        means[key] = fmean(values) if values else 0.0
    means["final"] = final_score(means["e2e"], means["requery"],
                                 means["rerank"], means["summarize"])
    return means


def _label_counts(error_labels: Mapping[str, ErrorLabel],
                  known_ids: set[str]) -> dict[str, dict[str, int]]:
    e2e: Counter = Counter()
    requery: Counter = Counter()
    summarization: Counter = Counter()
    for qid, label in error_labels.items():
        if qid not in known_ids:
            continue
        if label.e2e is not None:
            e2e[label.e2e.value] += 1
        if label.requery_kind is not None:
            requery[label.requery_kind.value] += 1
        if label.summarization_kind is not None:
            summarization[label.summarization_kind.value] += 1
    return {"e2e": dict(sorted(e2e.items())),
            "requery": dict(sorted(requery.items())),
            "summarization": dict(sorted(summarization.items()))}


def score_run(outputs: Mapping[str, Mapping[str, Any]],
              records: Sequence[QueryRecord], *,
              run_id: str | None = None,
              error_labels: Mapping[str, ErrorLabel] | None = None) -> ScoreReport:
    """Score stored outputs against their records.

    ``outputs`` maps query id to the run's per-query document. A missing
    task output scores 0 for that task and adds a coverage warning; an
    output for an unknown query is an error.
    """
    by_id = {r.id: r for r in records}
    unknown = sorted(set(outputs) - set(by_id))
    if unknown:
        raise DatasetError(
            f"outputs reference unknown query ids: {', '.join(unknown)}")

    warnings: list[str] = []
    per_query: dict[str, QueryScores] = {}
    for record in records:
        per_query[record.id] = _query_scores(record, outputs.get(record.id, {}),
                                             warnings)

    all_ids = [r.id for r in records]
    news_ids = [r.id for r in records if r.area is Area.NEWS]
    know_ids = [r.id for r in records if r.area is Area.KNOWLEDGE]
    overall = _aggregate(per_query, all_ids)
    news = _aggregate(per_query, news_ids)
    know = _aggregate(per_query, know_ids)
    tasks = {
        key: TaskScores(avg=overall[key], news=news[key], knowledge=know[key])
        for key in (*TASK_KEYS, "final")
    }

    subfields: dict[str, SubfieldScores] = {}
    for subfield in Subfield:
        ids = [r.id for r in records if r.subfield is subfield]
        if not ids:
            continue
        means = _aggregate(per_query, ids)
        subfields[SUBFIELD_ABBREV[subfield]] = SubfieldScores(
            n=len(ids), e2e=means["e2e"], final=means["final"])

    counts = None
    if error_labels is not None:
        counts = _label_counts(error_labels, set(by_id))

    return ScoreReport(run_id=run_id, n_queries=len(records),
                       n_news=len(news_ids), n_knowledge=len(know_ids),
                       tasks=tasks, per_query=per_query, subfields=subfields,
                       warnings=tuple(warnings), error_label_counts=counts)
