"""HTTP service over a state directory of pipeline artifacts.

The state directory is the single source of truth; every request reads the
artifacts fresh, so external edits show up without a restart. Layout:

    schema.json                      final transcription (field definitions)
    grouping.json                    final grouping of field ids
    articles/{id}.txt                article body
    articles/{id}.meta.json          article metadata (dates, cues)
    forms/{id}.form.json             populated form per article
    linkage.json                     article-to-record linkage report
    records.csv                      incident records (ground truth source)
    crosswalk.json                   answer key to CSV column mapping
    annotations/{id}.answerable.json human answerability annotations
    config.json                      backend selection for group reruns

Writes (group reruns, annotation edits) are serialized per incident and land
atomically via a temp file and rename. A rerun re-executes extraction for one
group's fields only and never touches the rest of the stored form.
"""

from __future__ import annotations

import json
import os
import tempfile
import threading
from pathlib import Path
from typing import Callable

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .evaluation import (
    AnswerabilityAnnotation,
    aggregate_reports,
    compute_report,
    load_crosswalk,
)
from .gateway import Backend, GatewayError
from .linkage import FraRecord, load_fra_csv
from .qa import ArticleDoc, BatchingMode, PopulatedForm, populate_form
from .runconfig import load_config, resolve_backend
from .schema import FormSchema, GroupingAssignment, dumps_document, parse_schema


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class AnswerEntry(BaseModel):
    type: str
    value: str | None = None
    raw_model_text: str = ""


class VerdictEntry(BaseModel):
    key: str
    verdict: str
    rule_applied: str
    answerable: bool
    has_ground_truth: bool
    gold: str | None = None
    pred_text: str = ""
    article_id: str = ""


class IncidentSummary(BaseModel):
    article_id: str
    matched_record_id: str | None = None
    linkage_decision: str | None = None
    has_form: bool
    n_answers: int = 0
    n_unknown: int = 0


class IncidentDetail(BaseModel):
    article_id: str
    matched_record_id: str | None = None
    linkage_decision: str | None = None
    day_offset: int | None = None
    form: dict[str, AnswerEntry] | None = None
    verdicts: list[VerdictEntry] = Field(default_factory=list)
    grouping_used: dict[str, list[str]] | None = None
    answerable: list[str] | None = None


class RerunResponse(BaseModel):
    article_id: str
    group: str
    answers: dict[str, AnswerEntry]


class AnnotationsPut(BaseModel):
    answerable: list[str]


class AnnotationsResponse(BaseModel):
    article_id: str
    answerable: list[str]


class SchemaResponse(BaseModel):
    fields: list
    grouping: dict[str, list[str]] | None = None


class ReportResponse(BaseModel):
    aggregate: dict | None = None
    per_article: dict[str, dict] = Field(default_factory=dict)


class ServiceState:
    """Paths into one state directory plus per-incident write locks."""

    def __init__(self, state_dir: str | Path) -> None:
        self.root = Path(state_dir)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, article_id: str) -> threading.Lock:
        with self._locks_guard:
            if article_id not in self._locks:
                self._locks[article_id] = threading.Lock()
            return self._locks[article_id]

    # -- readers ------------------------------------------------------------

    def load_schema(self) -> FormSchema:
        path = self.root / "schema.json"
        if not path.is_file():
            raise ApiError(500, "state_incomplete", "state dir has no schema.json")
        return parse_schema(json.loads(path.read_text(encoding="utf-8")))

    def schema_payload(self) -> list:
        return json.loads((self.root / "schema.json").read_text(encoding="utf-8"))

    def load_grouping(self) -> GroupingAssignment | None:
        path = self.root / "grouping.json"
        if not path.is_file():
            return None
        return GroupingAssignment.from_payload(
            json.loads(path.read_text(encoding="utf-8"))
        )

    def article_ids(self) -> list[str]:
        articles = self.root / "articles"
        if not articles.is_dir():
            return []
        return sorted(p.stem for p in articles.glob("*.txt"))

    def load_article(self, article_id: str) -> ArticleDoc:
        try:
            return ArticleDoc.load(self.root / "articles", article_id)
        except FileNotFoundError:
            raise ApiError(404, "unknown_incident", f"no article {article_id!r}") from None

    def form_path(self, article_id: str) -> Path:
        return self.root / "forms" / f"{article_id}.form.json"

    def load_form(self, article_id: str) -> PopulatedForm | None:
        path = self.form_path(article_id)
        if not path.is_file():
            return None
        return PopulatedForm.from_payload(json.loads(path.read_text(encoding="utf-8")))

    def store_form(self, form: PopulatedForm) -> None:
        path = self.form_path(form.article_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                handle.write(dumps_document(form.to_payload()))
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def linkage(self) -> dict:
        path = self.root / "linkage.json"
        if not path.is_file():
            return {"matched": {}, "ambiguous": [], "unmatched": [], "candidates": {}}
        return json.loads(path.read_text(encoding="utf-8"))

    def records_by_id(self) -> dict[str, FraRecord]:
        path = self.root / "records.csv"
        if not path.is_file():
            return {}
        return {record.record_id: record for record in load_fra_csv(path)}

    def crosswalk(self) -> dict:
        path = self.root / "crosswalk.json"
        if not path.is_file():
            return {}
        return load_crosswalk(path)

    def annotation(self, article_id: str) -> AnswerabilityAnnotation | None:
        annotations = self.root / "annotations"
        if not annotations.is_dir():
            return None
        return AnswerabilityAnnotation.load(annotations, article_id)

    def store_annotation(self, annotation: AnswerabilityAnnotation) -> None:
        target = self.root / "annotations"
        target.mkdir(parents=True, exist_ok=True)
        annotation.save(target)

    def rerun_backend(self) -> Backend:
        config_path = self.root / "config.json"
        if not config_path.is_file():
            raise ApiError(
                502, "gateway_unconfigured", "state dir has no config.json for reruns"
            )
        config = load_config(config_path)
        return resolve_backend(config, self.root)


def _answer_entries(form: PopulatedForm, keys=None) -> dict[str, AnswerEntry]:
    payload = form.to_payload()["answers"]
    wanted = set(keys) if keys is not None else None
    return {
        key: AnswerEntry(**entry)
        for key, entry in payload.items()
        if wanted is None or key in wanted
    }


def create_app(
    state_dir: str | Path,
    gateway_factory: Callable[[ServiceState], Backend] | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service over one state directory.

    ``gateway_factory`` overrides how rerun backends are built; tests inject
    scripted or blocking backends through it. ``ui_dir`` optionally mounts a
    directory of static dashboard files at the root path.
    """
    state = ServiceState(state_dir)
    app = FastAPI(title="form57 review service", version="0.1.0")

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError) -> JSONResponse:
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": exc.message}
        )

    def _load_incident_detail(article_id: str) -> IncidentDetail:
        if article_id not in state.article_ids():
            raise ApiError(404, "unknown_incident", f"no article {article_id!r}")
        linkage = state.linkage()
        matched = linkage.get("matched", {})
        record_id = matched.get(article_id)
        decision = _decision_for(article_id, linkage)
        day_offset = None
        for candidate in linkage.get("candidates", {}).get(article_id, []):
            if candidate.get("record_id") == record_id:
                day_offset = candidate.get("day_offset")
                break
        form = state.load_form(article_id)
        verdicts: list[VerdictEntry] = []
        if form is not None:
            schema = state.load_schema()
            records = state.records_by_id()
            record = records.get(record_id) if record_id else None
            report = compute_report(
                form,
                record,
                state.annotation(article_id),
                state.crosswalk(),
                schema,
            )
            verdicts = [VerdictEntry(**v.to_payload()) for v in report.verdicts]
        grouping = state.load_grouping()
        annotation = state.annotation(article_id)
        return IncidentDetail(
            article_id=article_id,
            matched_record_id=record_id,
            linkage_decision=decision,
            day_offset=day_offset,
            form=_answer_entries(form) if form is not None else None,
            verdicts=verdicts,
            grouping_used=grouping.to_payload() if grouping is not None else None,
            answerable=sorted(annotation.answerable) if annotation is not None else None,
        )

    @app.get("/api/v1/incidents", response_model=list[IncidentSummary])
    def list_incidents() -> list[IncidentSummary]:
        linkage = state.linkage()
        matched = linkage.get("matched", {})
        summaries = []
        for article_id in state.article_ids():
            form = state.load_form(article_id)
            n_answers = len(form.answers) if form is not None else 0
            n_unknown = (
                sum(1 for a in form.answers.values() if not a.attempted)
                if form is not None
                else 0
            )
            summaries.append(
                IncidentSummary(
                    article_id=article_id,
                    matched_record_id=matched.get(article_id),
                    linkage_decision=_decision_for(article_id, linkage),
                    has_form=form is not None,
                    n_answers=n_answers,
                    n_unknown=n_unknown,
                )
            )
        return summaries

    @app.get("/api/v1/incidents/{article_id}", response_model=IncidentDetail)
    def get_incident(article_id: str) -> IncidentDetail:
        return _load_incident_detail(article_id)

    @app.post(
        "/api/v1/incidents/{article_id}/groups/{group}/rerun",
        response_model=RerunResponse,
    )
    def rerun_group(article_id: str, group: str) -> RerunResponse:
        if article_id not in state.article_ids():
            raise ApiError(404, "unknown_incident", f"no article {article_id!r}")
        grouping = state.load_grouping()
        if grouping is None or group not in grouping.groups:
            raise ApiError(404, "unknown_group", f"no group {group!r}")
        form = state.load_form(article_id)
        if form is None:
            raise ApiError(404, "no_form", f"article {article_id!r} has no form yet")
        lock = state.lock_for(article_id)
        if not lock.acquire(blocking=False):
            raise ApiError(
                409, "rerun_in_flight", f"a rerun is already running for {article_id!r}"
            )
        try:
            schema = state.load_schema()
            article = state.load_article(article_id)
            backend = (
                gateway_factory(state) if gateway_factory is not None else state.rerun_backend()
            )
            partial_grouping = GroupingAssignment(
                groups={group: grouping.groups[group]}
            )
            try:
                partial, _telemetry = populate_form(
                    backend,
                    article,
                    _restrict_schema(schema, grouping.groups[group]),
                    partial_grouping,
                    mode=BatchingMode.GROUP,
                )
            except GatewayError as exc:
                raise ApiError(502, "gateway_fault", str(exc)) from exc
            except ValueError as exc:
                raise ApiError(502, "gateway_bad_reply", str(exc)) from exc
            merged = dict(form.answers)
            merged.update(partial.answers)
            updated = PopulatedForm(article_id=article_id, answers=merged)
            state.store_form(updated)
            return RerunResponse(
                article_id=article_id,
                group=group,
                answers=_answer_entries(updated, keys=partial.answers),
            )
        finally:
            lock.release()

    @app.put("/api/v1/incidents/{article_id}/annotations", response_model=AnnotationsResponse)
    def put_annotations(article_id: str, body: AnnotationsPut) -> AnnotationsResponse:
        if article_id not in state.article_ids():
            raise ApiError(404, "unknown_incident", f"no article {article_id!r}")
        schema = state.load_schema()
        known = {key for key, _, _ in schema.answer_keys()}
        stray = sorted(set(body.answerable) - known)
        if stray:
            raise ApiError(422, "unknown_keys", f"keys not in schema: {stray}")
        lock = state.lock_for(article_id)
        with lock:
            annotation = AnswerabilityAnnotation(
                article_id=article_id, answerable=frozenset(body.answerable)
            )
            state.store_annotation(annotation)
        return AnnotationsResponse(
            article_id=article_id, answerable=sorted(annotation.answerable)
        )

    @app.get("/api/v1/schema", response_model=SchemaResponse)
    def get_schema() -> SchemaResponse:
        if not (state.root / "schema.json").is_file():
            raise ApiError(404, "no_schema", "state dir has no schema.json")
        grouping = state.load_grouping()
        return SchemaResponse(
            fields=state.schema_payload(),
            grouping=grouping.to_payload() if grouping is not None else None,
        )

    @app.get("/api/v1/report", response_model=ReportResponse)
    def get_report() -> ReportResponse:
        schema = state.load_schema()
        linkage = state.linkage()
        matched = linkage.get("matched", {})
        records = state.records_by_id()
        crosswalk = state.crosswalk()
        reports = []
        per_article = {}
        for article_id in state.article_ids():
            form = state.load_form(article_id)
            if form is None:
                continue
            record = records.get(matched.get(article_id, ""))
            report = compute_report(
                form, record, state.annotation(article_id), crosswalk, schema
            )
            reports.append(report)
            payload = report.to_payload()
            payload.pop("verdicts")
            per_article[article_id] = payload
        if not reports:
            return ReportResponse(aggregate=None, per_article={})
        aggregate = aggregate_reports(reports, schema).to_payload()
        aggregate.pop("verdicts")
        return ReportResponse(aggregate=aggregate, per_article=per_article)

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        # mounted last so the /api/v1 routes keep precedence
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def _decision_for(article_id: str, linkage: dict) -> str | None:
    if article_id in linkage.get("matched", {}):
        return "matched"
    if article_id in linkage.get("ambiguous", []):
        return "ambiguous"
    if article_id in linkage.get("unmatched", []):
        return "unmatched"
    return None


def _restrict_schema(schema: FormSchema, field_ids) -> FormSchema:
    return FormSchema(
        fields={fid: schema.fields[fid] for fid in field_ids if fid in schema.fields}
    )
