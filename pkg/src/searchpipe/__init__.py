"""Multimodal search pipeline (requery, rerank, summarize) with a step-wise
evaluation harness, runnable live or hermetically from recorded fixtures."""

from .errors import (CapabilityError, DatasetError, FixtureMissError,
                     PreconditionError, RetrievalError, SearchPipeError,
                     StageError, TransportError)
from .fixtures import FixtureMode, FixtureStore, fixture_key
from .gateway import (CallMeta, HttpBackend, ModelBackend, ModelEndpoint,
                      OracleStub, ScriptedStub, parse_rerank_choice,
                      postprocess_answer)
from .metrics import (answer_score, bleu1, display_round, f1_score,
                      final_score, normalize_tokens, requery_score,
                      rerank_score, rouge_l)
from .model import (Area, BriefResult, FullWebsiteContent, ImageAsset,
                    ImageKind, PipelineConfig, QueryRecord, ResizeMode,
                    SessionTranscript, Stage, StageRecord, Subfield,
                    SummarizationTarget, WebsiteAnnotation, WebsiteLabel,
                    validate_query_record)
from .pipeline import (TaskKind, TaskResult, TtcConfig, TtcResult,
                       run_end_to_end, run_task, run_ttc)
from .scoring import ScoreReport, score_run
from .webio import WebClient, extract_text

__version__ = "0.1.0"

__all__ = [
    "Area", "BriefResult", "CallMeta", "CapabilityError", "DatasetError",
    "FixtureMissError", "FixtureMode", "FixtureStore", "FullWebsiteContent",
    "HttpBackend", "ImageAsset", "ImageKind", "ModelBackend", "ModelEndpoint",
    "OracleStub", "PipelineConfig", "PreconditionError", "QueryRecord",
    "ResizeMode", "RetrievalError", "ScoreReport", "ScriptedStub",
    "SearchPipeError", "SessionTranscript", "Stage", "StageError",
    "StageRecord", "Subfield", "SummarizationTarget", "TaskKind",
    "TaskResult", "TransportError", "TtcConfig", "TtcResult", "WebClient",
    "WebsiteAnnotation", "WebsiteLabel", "answer_score", "bleu1",
    "display_round", "extract_text", "f1_score", "final_score",
    "fixture_key", "normalize_tokens", "parse_rerank_choice",
    "postprocess_answer", "requery_score", "rerank_score", "rouge_l",
    "run_end_to_end", "run_task", "run_ttc", "score_run",
    "validate_query_record", "__version__",
]
