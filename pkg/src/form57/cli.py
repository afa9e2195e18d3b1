"""Command line entry points for the extraction pipeline.

Subcommands:

    transcribe  form image -> T_final.json + G_final.json
    extract     articles + schema + grouping -> one form file per article
    link        articles + records CSV -> linkage.json
    evaluate    forms + linkage + crosswalk -> report.json + text tables
    serve       HTTP service over a state directory

Every file-emitting command writes a manifest.json next to its outputs with
the run id, the config snapshot, prompt digests, attempt counts, and the list
of files written, so a run can be audited or reproduced later.

Exit codes: 0 success, 1 failure, 2 usage error, 3 partial success (some
articles failed but others completed).
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluation as ev
from . import kie
from .gateway import GatewayError
from .linkage import ArticleCues, build_linkage_report, load_fra_csv
from .prompt_store import digest_all
from .qa import ArticleDoc, BatchingMode, PopulatedForm, list_article_ids, populate_form
from .runconfig import ConfigError, load_config, resolve_backend
from .schema import (
    GroupingAssignment,
    SchemaFormatError,
    SchemaVariant,
    dumps_document,
    parse_schema,
)

log = logging.getLogger("form57")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PARTIAL = 3


@dataclass
class RunManifest:
    command: str
    config: dict
    backend_spec: str | None
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex)
    created: str = field(
        default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat()
    )
    duration_seconds: float = 0.0
    prompt_digests: dict = field(default_factory=dict)
    attempts: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    status: str = "ok"
    failing_phase: str | None = None
    errors: list = field(default_factory=list)

    def save(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        payload = {
            "run_id": self.run_id,
            "command": self.command,
            "created": self.created,
            "duration_seconds": self.duration_seconds,
            "config": self.config,
            "backend_spec": self.backend_spec,
            "prompt_digests": self.prompt_digests,
            "attempts": self.attempts,
            "outputs": sorted(self.outputs),
            "status": self.status,
            "failing_phase": self.failing_phase,
            "errors": self.errors,
        }
        path.write_text(dumps_document(payload), encoding="utf-8")
        return path


def _write(out_dir: Path, name: str, text: str, manifest: RunManifest) -> Path:
    path = out_dir / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    manifest.outputs.append(str(path.relative_to(out_dir)))
    return path


def _load_config_arg(args) -> dict:
    return load_config(args.config) if args.config else {}


def cmd_transcribe(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_config_arg(args)
    manifest = RunManifest(
        command="transcribe",
        config=config,
        backend_spec=args.backend or config.get("backend"),
        prompt_digests=digest_all(args.prompts_dir),
    )
    started = time.monotonic()
    try:
        image_path = Path(args.image)
        if not image_path.is_file():
            log.error("image not found: %s", image_path)
            return EXIT_FAILURE
        image = kie.DocumentImage(data=image_path.read_bytes())
        backend = resolve_backend(config, Path(args.config).parent if args.config else Path.cwd(), args.backend)
        cfg = kie.KiePipelineConfig(
            n_samples=args.n_samples,
            max_validation_retries=args.max_retries,
            schema_variant=SchemaVariant(args.variant),
            max_concurrency=args.workers,
            prompts_dir=args.prompts_dir,
        )
        result = kie.run_kie(backend, image, cfg)
    except kie.ValidationRetriesExhausted as exc:
        manifest.status = "failed"
        manifest.failing_phase = exc.phase
        manifest.errors.append(str(exc))
        manifest.duration_seconds = time.monotonic() - started
        manifest.save(out_dir)
        log.error("pipeline failed: %s", exc)
        return EXIT_FAILURE
    except (GatewayError, ConfigError, SchemaFormatError, OSError, ValueError) as exc:
        manifest.status = "failed"
        manifest.errors.append(str(exc))
        manifest.duration_seconds = time.monotonic() - started
        manifest.save(out_dir)
        log.error("pipeline failed: %s", exc)
        return EXIT_FAILURE
    _write(out_dir, "T_final.json", dumps_document(result.t_final.payload), manifest)
    _write(
        out_dir,
        "G_final.json",
        dumps_document(result.g_final.assignment.to_payload()),
        manifest,
    )
    telemetry = result.telemetry
    manifest.attempts = {
        "transcription_samples": list(telemetry.transcription_sample_attempts),
        "transcription_merge": telemetry.transcription_merge_attempts,
        "grouping_samples": list(telemetry.grouping_sample_attempts),
        "grouping_merge": telemetry.grouping_merge_attempts,
        "gateway_calls": telemetry.gateway_calls,
    }
    manifest.duration_seconds = time.monotonic() - started
    manifest.save(out_dir)
    log.info("wrote %s and %s", out_dir / "T_final.json", out_dir / "G_final.json")
    return EXIT_OK


def cmd_extract(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    config = _load_config_arg(args)
    manifest = RunManifest(
        command="extract",
        config=config,
        backend_spec=args.backend or config.get("backend"),
        prompt_digests=digest_all(args.prompts_dir),
    )
    started = time.monotonic()
    try:
        schema = parse_schema(json.loads(Path(args.schema).read_text(encoding="utf-8")))
        mode = BatchingMode(args.mode)
        grouping = None
        if args.grouping:
            grouping = GroupingAssignment.from_payload(
                json.loads(Path(args.grouping).read_text(encoding="utf-8"))
            )
        elif mode is BatchingMode.GROUP:
            log.error("--mode group needs --grouping")
            return EXIT_USAGE
        backend = resolve_backend(config, Path(args.config).parent if args.config else Path.cwd(), args.backend)
        article_ids = list_article_ids(args.articles)
        if not article_ids:
            log.error("no articles found in %s", args.articles)
            return EXIT_FAILURE
    except (ConfigError, SchemaFormatError, OSError, ValueError) as exc:
        log.error("extract failed: %s", exc)
        return EXIT_FAILURE

    failures: list[str] = []

    def one(article_id: str) -> tuple[str, PopulatedForm | None, str]:
        try:
            article = ArticleDoc.load(args.articles, article_id)
            form, telemetry = populate_form(
                backend, article, schema, grouping, mode=mode, prompts_dir=args.prompts_dir
            )
            return article_id, form, f"calls={telemetry.calls}"
        except (GatewayError, OSError, ValueError) as exc:
            return article_id, None, str(exc)

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(one, article_ids))
    else:
        results = [one(article_id) for article_id in article_ids]

    calls_by_article = {}
    for article_id, form, note in results:
        if form is None:
            log.warning("article %s skipped: %s", article_id, note)
            failures.append(article_id)
            manifest.errors.append(f"{article_id}: {note}")
            continue
        _write(out_dir, f"{article_id}.form.json", dumps_document(form.to_payload()), manifest)
        calls_by_article[article_id] = note

    manifest.attempts = {"articles": calls_by_article}
    manifest.duration_seconds = time.monotonic() - started
    if failures and calls_by_article:
        manifest.status = "partial"
        manifest.save(out_dir)
        return EXIT_PARTIAL
    if failures:
        manifest.status = "failed"
        manifest.save(out_dir)
        return EXIT_FAILURE
    manifest.save(out_dir)
    return EXIT_OK


def cmd_link(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="link", config={}, backend_spec=None)
    started = time.monotonic()
    try:
        records = load_fra_csv(args.records)
    except (OSError, ValueError) as exc:
        log.error("link failed: %s", exc)
        return EXIT_FAILURE
    cues = []
    skipped = []
    for article_id in list_article_ids(args.articles):
        article = ArticleDoc.load(args.articles, article_id)
        try:
            cues.append(ArticleCues.from_meta(article_id, article.meta))
        except (KeyError, ValueError) as exc:
            log.warning("article %s skipped: missing cue %s", article_id, exc)
            skipped.append(article_id)
            manifest.errors.append(f"{article_id}: missing cue {exc}")
    report = build_linkage_report(cues, records)
    _write(out_dir, "linkage.json", dumps_document(report.to_payload()), manifest)
    manifest.attempts = {
        "articles": len(cues),
        "records": len(records),
        "matched": len(report.matched),
        "ambiguous": len(report.ambiguous),
        "unmatched": len(report.unmatched),
    }
    manifest.duration_seconds = time.monotonic() - started
    if skipped and cues:
        manifest.status = "partial"
        manifest.save(out_dir)
        return EXIT_PARTIAL
    if skipped:
        manifest.status = "failed"
        manifest.save(out_dir)
        return EXIT_FAILURE
    manifest.save(out_dir)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(command="evaluate", config={}, backend_spec=None)
    started = time.monotonic()
    try:
        schema = parse_schema(json.loads(Path(args.schema).read_text(encoding="utf-8")))
        crosswalk = ev.load_crosswalk(args.crosswalk)
        linkage = json.loads(Path(args.linkage).read_text(encoding="utf-8"))
        records = {r.record_id: r for r in load_fra_csv(args.records)}
    except (OSError, ValueError) as exc:
        log.error("evaluate failed: %s", exc)
        return EXIT_FAILURE
    matched = linkage.get("matched", {})
    form_paths = sorted(Path(args.forms).glob("*.form.json"))
    if not form_paths:
        log.error("no form files in %s", args.forms)
        return EXIT_FAILURE
    reports = []
    per_article = {}
    for path in form_paths:
        form = PopulatedForm.from_payload(json.loads(path.read_text(encoding="utf-8")))
        record = records.get(matched.get(form.article_id, ""))
        annotation = (
            ev.AnswerabilityAnnotation.load(args.annotations, form.article_id)
            if args.annotations
            else None
        )
        report = ev.compute_report(form, record, annotation, crosswalk, schema)
        reports.append(report)
        payload = report.to_payload()
        per_article[form.article_id] = payload
    aggregate = ev.aggregate_reports(reports, schema)
    report_payload = {
        "aggregate": aggregate.to_payload(),
        "per_article": {aid: per_article[aid] for aid in sorted(per_article)},
    }
    _write(out_dir, "report.json", dumps_document(report_payload), manifest)
    summary = ev.render_summary_table([(args.label, aggregate)])
    by_type = ev.render_answer_type_table(aggregate)
    _write(out_dir, "report.txt", summary + "\n" + by_type, manifest)
    sys.stdout.write(summary + "\n" + by_type)
    manifest.attempts = {"articles": len(reports)}
    manifest.duration_seconds = time.monotonic() - started
    manifest.save(out_dir)
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.state, ui_dir=args.ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="form57", description="Form extraction pipeline over news articles."
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transcribe", help="extract schema and grouping from a form image")
    p.add_argument("--image", required=True, help="form image file")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--backend", help="live or scripted:<tape path>")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--n-samples", type=int, default=5)
    p.add_argument("--max-retries", type=int, default=5)
    p.add_argument("--variant", choices=[v.value for v in SchemaVariant], default="human_centric")
    p.add_argument("--workers", type=int, default=0, help="0 means one per sample")
    p.add_argument("--prompts-dir", help="override directory for prompt templates")
    p.set_defaults(func=cmd_transcribe)

    p = sub.add_parser("extract", help="populate forms from articles")
    p.add_argument("--articles", required=True, help="directory of {id}.txt articles")
    p.add_argument("--schema", required=True, help="schema JSON (final transcription)")
    p.add_argument("--grouping", help="grouping JSON (needed for --mode group)")
    p.add_argument("--mode", choices=[m.value for m in BatchingMode], default="group")
    p.add_argument("--config", help="run config JSON")
    p.add_argument("--backend", help="live or scripted:<tape path>")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--workers", type=int, default=1, help="articles processed in parallel")
    p.add_argument("--prompts-dir", help="override directory for prompt templates")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("link", help="match articles to incident records")
    p.add_argument("--articles", required=True, help="directory of articles with metadata")
    p.add_argument("--records", required=True, help="incident records CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_link)

    p = sub.add_parser("evaluate", help="score populated forms against linked records")
    p.add_argument("--forms", required=True, help="directory of {id}.form.json files")
    p.add_argument("--linkage", required=True, help="linkage.json from the link step")
    p.add_argument("--records", required=True, help="incident records CSV")
    p.add_argument("--crosswalk", required=True, help="answer key to CSV column map")
    p.add_argument("--schema", required=True, help="schema JSON (final transcription)")
    p.add_argument("--annotations", help="directory of answerability annotations")
    p.add_argument("--label", default="QA", help="row label for the summary table")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("serve", help="serve the review API over a state directory")
    p.add_argument("--state", required=True, help="state directory of artifacts")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="directory of dashboard files to serve at /")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
