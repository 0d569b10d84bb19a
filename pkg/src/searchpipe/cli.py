"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 validation failure (bad dataset,
missing run, missing fixtures), 3 transport failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import date
from pathlib import Path

from .dataset import apply_cutoff_filter, load_dataset, load_error_labels
from .errors import (CapabilityError, DatasetError, FixtureMissError,
                     PreconditionError, SearchPipeError, StageError,
                     TransportError)
from .figures import save_figures
from .fixtures import FixtureMode, FixtureStore
from .gateway import HttpBackend, ModelEndpoint, OracleStub, ScriptedStub
from .imaging import slim_screenshot
from .model import ImageAsset, ImageKind, PipelineConfig, QueryRecord
from .pipeline import TaskKind, TtcConfig, run_task, run_ttc
from .reporting import emit_report, write_csvs
from .runs import RunManifest, RunStore, new_run_id
from .scoring import ScoreReport, score_run
from .webio import HttpRenderer, WebClient, make_provider

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_TRANSPORT = 3

_TASK_BY_NAME = {
    "e2e": TaskKind.END_TO_END,
    "requery": TaskKind.REQUERY_ONLY,
    "rerank": TaskKind.RERANK_ONLY,
    "summarize": TaskKind.SUMMARIZE_ONLY,
}


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this contract reserves 2 for
    # validation failures, so remap to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dataset", required=True,
                   help="dataset manifest file or directory")
    p.add_argument("--endpoint", default="default",
                   help="endpoint name; credentials come from LMM_* env vars")
    p.add_argument("--mode", choices=[m.value for m in FixtureMode],
                   default=None,
                   help="fixture mode (default: $FIXTURE_MODE or replay)")
    p.add_argument("--fixture-dir", default=None,
                   help="fixture store root (default: $FIXTURE_DIR)")
    p.add_argument("--run-id", default=None,
                   help="run directory name (default: timestamp-based)")
    p.add_argument("--results-dir", default=None,
                   help="results root (default: $RESULTS_DIR or ./results)")
    p.add_argument("--stub", default=None, metavar="SCRIPT",
                   help="answer from a scripted stub file instead of a model")
    p.add_argument("--oracle", action="store_true",
                   help="answer with ground truth (pipeline self-check)")
    p.add_argument("--cutoff", default=None, metavar="YYYY-MM-DD",
                   help="drop News queries on or before this date")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="searchpipe",
                     description="Multimodal search pipeline and its "
                                 "step-wise evaluation harness.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute one evaluation task over a dataset")
    p.add_argument("task", choices=sorted(_TASK_BY_NAME),
                   help="which task to run")
    _add_run_options(p)

    p = sub.add_parser("ttc", help="best-of-N test-time-compute end-to-end runs")
    p.add_argument("--n", default="5,5,5", metavar="REQ,RER,ANS",
                   help="sampling counts n_requery,n_rerank,n_answer")
    _add_run_options(p)

    p = sub.add_parser("score", help="score a stored run and write its report")
    p.add_argument("--run-id", required=True)
    p.add_argument("--dataset", default=None,
                   help="override the dataset recorded in the run manifest")
    p.add_argument("--results-dir", default=None)
    p.add_argument("--error-labels", default=None, metavar="FILE",
                   help="sidecar file of manual failure labels to tally")

    p = sub.add_parser("report", help="render a scored run (also writes CSVs "
                                      "and figures into the run directory)")
    p.add_argument("--run-id", required=True)
    p.add_argument("--format", choices=("json", "table"), default="table")
    p.add_argument("--results-dir", default=None)

    p = sub.add_parser("slim-screenshot",
                       help="remove blank bands from a screenshot PNG")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("--min-band", type=int, default=16)

    p = sub.add_parser("validate-dataset", help="check a dataset and exit")
    p.add_argument("path")

    return parser


def _make_backend(args, records: list[QueryRecord]):
    if args.oracle and args.stub:
        raise PreconditionError("--oracle and --stub are mutually exclusive")
    if args.oracle:
        return OracleStub(records)
    if args.stub:
        try:
            return ScriptedStub.from_file(args.stub)
        except OSError as exc:
            raise PreconditionError(f"cannot read stub script: {exc}")
        except ValueError as exc:
            raise PreconditionError(f"bad stub script {args.stub}: {exc}")
    return HttpBackend(ModelEndpoint.from_env(args.endpoint))


def _make_client(args, config: PipelineConfig) -> WebClient:
    mode = FixtureMode(args.mode or os.environ.get("FIXTURE_MODE") or "replay")
    store = None
    if mode is not FixtureMode.LIVE:
        fixture_dir = args.fixture_dir or os.environ.get("FIXTURE_DIR")
        if not fixture_dir:
            raise PreconditionError(
                f"{mode.value} mode needs --fixture-dir or FIXTURE_DIR")
        store = FixtureStore(fixture_dir)
    provider = None
    renderer = None
    if mode is not FixtureMode.REPLAY:
        provider = make_provider(os.environ.get("SEARCH_PROVIDER",
                                                "duckduckgo"))
        endpoint = os.environ.get("RENDERER_ENDPOINT")
        if endpoint:
            renderer = HttpRenderer(endpoint)
    return WebClient(config, mode=mode, store=store, provider=provider,
                     renderer=renderer)


def _load_records(args) -> list[QueryRecord]:
    records = load_dataset(args.dataset)
    if args.cutoff:
        try:
            cutoff = date.fromisoformat(args.cutoff)
        except ValueError:
            raise PreconditionError(f"bad --cutoff date: {args.cutoff!r}")
        records = apply_cutoff_filter(records, cutoff)
    return records


def _cmd_run(args) -> int:
    records = _load_records(args)
    kind = _TASK_BY_NAME[args.task]
    backend = _make_backend(args, records)
    config = PipelineConfig()
    client = _make_client(args, config) if kind is TaskKind.END_TO_END else None
    run_id = args.run_id or new_run_id()
    store = RunStore(args.results_dir)
    for record in records:
        result = run_task(kind, record, backend, client, config)
        store.save_query_output(run_id, record.id,
                                {"tasks": {kind.value: result.to_dict()}})
    store.save_manifest(RunManifest(
        run_id=run_id, dataset_path=str(args.dataset),
        endpoint_name=args.endpoint, config=config, tasks=(kind.value,)))
    print(f"{run_id}: task {kind.value} over {len(records)} queries "
          f"-> {store.run_dir(run_id)}")
    return EXIT_OK


def _cmd_ttc(args) -> int:
    try:
        parts = [int(x) for x in args.n.split(",")]
        if len(parts) != 3:
            raise ValueError("expected three comma-separated counts")
        ttc = TtcConfig(*parts)
    except (ValueError, TypeError) as exc:
        raise PreconditionError(f"bad --n value {args.n!r}: {exc}")
    records = _load_records(args)
    backend = _make_backend(args, records)
    config = PipelineConfig()
    client = _make_client(args, config)
    run_id = args.run_id or new_run_id()
    store = RunStore(args.results_dir)
    for record in records:
        result = run_ttc(record, backend, client, config, ttc)
        store.save_query_output(run_id, record.id,
                                {"ttc": result.to_dict()})
    store.save_manifest(RunManifest(
        run_id=run_id, dataset_path=str(args.dataset),
        endpoint_name=args.endpoint, config=config, tasks=("ttc",)))
    print(f"{run_id}: ttc ({ttc.n_requery},{ttc.n_rerank},{ttc.n_answer}) "
          f"over {len(records)} queries -> {store.run_dir(run_id)}")
    return EXIT_OK


def _cmd_score(args) -> int:
    store = RunStore(args.results_dir)
    manifest = store.load_manifest(args.run_id)
    records = load_dataset(args.dataset or manifest.dataset_path)
    outputs = store.load_query_outputs(args.run_id)
    labels = (load_error_labels(args.error_labels)
              if args.error_labels else None)
    report = score_run(outputs, records, run_id=args.run_id,
                       error_labels=labels)
    path = store.save_report(args.run_id, report.to_dict())
    sys.stdout.write(emit_report(report, "table").decode("utf-8"))
    print(f"report written to {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_report(args) -> int:
    store = RunStore(args.results_dir)
    report = ScoreReport.from_dict(store.load_report(args.run_id))
    out_dir = store.run_dir(args.run_id)
    files = write_csvs(report, out_dir) + save_figures(report, out_dir)
    sys.stdout.write(emit_report(report, args.format).decode("utf-8"))
    print("wrote " + ", ".join(str(f) for f in files), file=sys.stderr)
    return EXIT_OK


def _cmd_slim(args) -> int:
    try:
        asset = ImageAsset.from_file(args.input, ImageKind.FULLPAGE_RAW)
    except OSError as exc:
        raise PreconditionError(f"cannot read image {args.input}: {exc}")
    slimmed = slim_screenshot(asset, threshold=args.threshold,
                              min_band=args.min_band)
    Path(args.output).write_bytes(slimmed.data)
    print(f"{asset.width}x{asset.height} -> "
          f"{slimmed.width}x{slimmed.height} ({args.output})")
    return EXIT_OK


def _cmd_validate(args) -> int:
    records = load_dataset(args.path)
    print(f"{len(records)} record(s) valid")
    return EXIT_OK


_HANDLERS = {
    "run": _cmd_run,
    "ttc": _cmd_ttc,
    "score": _cmd_score,
    "report": _cmd_report,
    "slim-screenshot": _cmd_slim,
    "validate-dataset": _cmd_validate,
}


def _exit_code(exc: SearchPipeError) -> int:
    if isinstance(exc, StageError) and isinstance(exc.cause, SearchPipeError):
        return _exit_code(exc.cause)
    if isinstance(exc, TransportError):
        return EXIT_TRANSPORT
    if isinstance(exc, (PreconditionError, CapabilityError)):
        return EXIT_USAGE
    if isinstance(exc, (DatasetError, FixtureMissError)):
        return EXIT_VALIDATION
    return EXIT_VALIDATION


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _HANDLERS[args.command](args)
    except SearchPipeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc, DatasetError):
            for problem in exc.problems:
                print(f"  - {problem}", file=sys.stderr)
        return _exit_code(exc)


def entrypoint() -> None:
    logging.basicConfig(level=logging.WARNING)
    sys.exit(main())
