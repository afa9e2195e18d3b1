"""Schema extraction pipeline: sample, validate, and merge model outputs.

The pipeline turns a form image into two artifacts. First it asks the model
for several independent transcriptions of the form, validates each against
the strict layout rules, and merges the valid samples into a single final
transcription. It then repeats the same sample-validate-merge loop to
partition the transcribed fields into semantically related groups.

Every model call that produces an invalid document is retried with the same
inputs, up to a configured attempt budget per call site. Attempt counts are
recorded in :class:`KieTelemetry` so callers can audit exactly how many
gateway calls a run consumed.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

from .gateway import (
    Backend,
    ImagePart,
    ModelRequest,
    RetryPolicy,
    TextPart,
    complete_with_retry,
)
from .prompt_store import load_template, load_text
from .schema import (
    FormSchema,
    GroupingAssignment,
    SchemaVariant,
    ValidationIssue,
    ValidationResult,
    dumps_document,
    parse_schema,
    validate_groups_format,
    validate_transcription_format,
)

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)

_TRANSCRIPTION_TOKENS = 16384
_GROUPING_TOKENS = 4096


class SchemaMismatch(ValueError):
    """Raised when two transcriptions do not describe the same field ids."""


@dataclass(frozen=True)
class DocumentImage:
    """A page image handed to the model alongside each pipeline prompt."""

    data: bytes
    media_type: str = "image/png"

    def as_part(self) -> ImagePart:
        return ImagePart(data=self.data, media_type=self.media_type)


@dataclass(frozen=True)
class Transcription:
    """A validated transcription document plus where it came from."""

    payload: list
    variant: SchemaVariant
    provenance: str
    attempts_used: int

    def to_schema(self) -> FormSchema:
        return parse_schema(self.payload, self.variant)


@dataclass(frozen=True)
class GroupingSample:
    """A validated grouping of field ids plus where it came from."""

    assignment: GroupingAssignment
    provenance: str
    attempts_used: int


@dataclass(frozen=True)
class KiePipelineConfig:
    n_samples: int = 5
    max_validation_retries: int = 5
    sampling_temperature: float = 0.7
    merge_temperature: float = 0.0
    schema_variant: SchemaVariant = SchemaVariant.HUMAN_CENTRIC
    max_concurrency: int = 0
    retry_policy: RetryPolicy = RetryPolicy()
    prompts_dir: str | None = None

    def __post_init__(self) -> None:
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.max_validation_retries < 1:
            raise ValueError("max_validation_retries must be at least 1")
        if self.max_concurrency < 0:
            raise ValueError("max_concurrency must not be negative")

    @property
    def workers(self) -> int:
        return self.max_concurrency or self.n_samples


@dataclass(frozen=True)
class KieTelemetry:
    """Attempt counts per call site; one entry per sample, one per merge."""

    transcription_sample_attempts: tuple[int, ...]
    transcription_merge_attempts: int
    grouping_sample_attempts: tuple[int, ...] = ()
    grouping_merge_attempts: int = 0

    @property
    def gateway_calls(self) -> int:
        return (
            sum(self.transcription_sample_attempts)
            + self.transcription_merge_attempts
            + sum(self.grouping_sample_attempts)
            + self.grouping_merge_attempts
        )


@dataclass(frozen=True)
class KieRunResult:
    t_final: Transcription
    g_final: GroupingSample
    telemetry: KieTelemetry

    def schema(self) -> FormSchema:
        return self.t_final.to_schema()

    def grouping(self) -> GroupingAssignment:
        return self.g_final.assignment


class ValidationRetriesExhausted(RuntimeError):
    """A call site never produced a document that passed validation."""

    def __init__(
        self,
        phase: str,
        sample_index: int | None,
        attempts: int,
        last_result: ValidationResult,
        t_final: Transcription | None = None,
    ) -> None:
        where = phase if sample_index is None else f"{phase}[{sample_index}]"
        super().__init__(
            f"{where}: no valid document after {attempts} attempts; "
            f"last failure: {last_result.summary()}"
        )
        self.phase = phase
        self.sample_index = sample_index
        self.attempts = attempts
        self.last_result = last_result
        self.t_final = t_final


def extract_json(text: str):
    """Parse a model reply as JSON, tolerating a markdown code fence."""
    try:
        return json.loads(text)
    except ValueError:
        pass
    match = _FENCE_RE.search(text)
    if match is None:
        return None
    try:
        return json.loads(match.group(1))
    except ValueError:
        return None


def _feedback(result: ValidationResult) -> str:
    lines = "\n".join(f"- {issue.path}: {issue.reason}" for issue in result.issues[:10])
    return (
        "\n\nYour previous response failed validation:\n"
        f"{lines}\n"
        "Respond again with corrected JSON only."
    )


def _call_until_valid(
    backend: Backend,
    build_request: Callable[[ValidationResult | None], ModelRequest],
    validate: Callable[[object], ValidationResult],
    cfg: KiePipelineConfig,
    phase: str,
    sample_index: int | None,
    t_final: Transcription | None = None,
) -> tuple[object, int]:
    """Run one call site until its document validates; return (doc, attempts)."""
    last_result: ValidationResult | None = None
    for attempt in range(1, cfg.max_validation_retries + 1):
        request = build_request(last_result)
        response = complete_with_retry(backend, request, cfg.retry_policy)
        doc = extract_json(response.text)
        if doc is None:
            last_result = ValidationResult(
                issues=(ValidationIssue(path="$", reason="response is not valid JSON"),)
            )
        else:
            last_result = validate(doc)
            if last_result.ok:
                return doc, attempt
    raise ValidationRetriesExhausted(
        phase, sample_index, cfg.max_validation_retries, last_result, t_final
    )


def _layout_spec(cfg: KiePipelineConfig) -> str:
    name = (
        "layout_human_centric"
        if cfg.schema_variant is SchemaVariant.HUMAN_CENTRIC
        else "layout_naive"
    )
    return load_text(name, cfg.prompts_dir).strip()


def _numbered_blocks(payloads: list) -> str:
    blocks = []
    for i, payload in enumerate(payloads, start=1):
        blocks.append(f"Candidate {i}:\n{dumps_document(payload).rstrip()}")
    return "\n\n".join(blocks)


def generate_transcription_samples(
    backend: Backend, image: DocumentImage, cfg: KiePipelineConfig
) -> list[Transcription]:
    """Sample ``cfg.n_samples`` independent transcriptions of the form image."""
    system = load_text("system", cfg.prompts_dir).strip()
    base_text = load_template("transcribe", cfg.prompts_dir).substitute(
        layout_spec=_layout_spec(cfg)
    )

    def build_request(last_result: ValidationResult | None) -> ModelRequest:
        text = base_text if last_result is None else base_text + _feedback(last_result)
        return ModelRequest(
            system_prompt=system,
            user_parts=(TextPart(text), image.as_part()),
            temperature=cfg.sampling_temperature,
            max_output_tokens=_TRANSCRIPTION_TOKENS,
            role="transcriber",
        )

    def sample(index: int) -> Transcription:
        doc, attempts = _call_until_valid(
            backend,
            build_request,
            lambda doc: validate_transcription_format(doc, cfg.schema_variant),
            cfg,
            phase="transcription_sample",
            sample_index=index,
        )
        return Transcription(
            payload=doc,
            variant=cfg.schema_variant,
            provenance=f"sample:{index}",
            attempts_used=attempts,
        )

    return _run_samples(sample, cfg)


def merge_transcriptions(
    backend: Backend,
    image: DocumentImage,
    samples: list[Transcription],
    cfg: KiePipelineConfig,
) -> Transcription:
    """Consolidate transcription samples into one final transcription."""
    if not samples:
        raise ValueError("merge_transcriptions needs at least one sample")
    system = load_text("system", cfg.prompts_dir).strip()
    base_text = load_template("merge_transcriptions", cfg.prompts_dir).substitute(
        n=len(samples),
        samples=_numbered_blocks([s.payload for s in samples]),
        layout_spec=_layout_spec(cfg),
    )

    def build_request(last_result: ValidationResult | None) -> ModelRequest:
        text = base_text if last_result is None else base_text + _feedback(last_result)
        return ModelRequest(
            system_prompt=system,
            user_parts=(TextPart(text), image.as_part()),
            temperature=cfg.merge_temperature,
            max_output_tokens=_TRANSCRIPTION_TOKENS,
            role="merger",
        )

    doc, attempts = _call_until_valid(
        backend,
        build_request,
        lambda doc: validate_transcription_format(doc, cfg.schema_variant),
        cfg,
        phase="transcription_merge",
        sample_index=None,
    )
    return Transcription(
        payload=doc,
        variant=cfg.schema_variant,
        provenance="merged",
        attempts_used=attempts,
    )


def generate_grouping_samples(
    backend: Backend,
    image: DocumentImage,
    t_final: Transcription,
    cfg: KiePipelineConfig,
) -> list[GroupingSample]:
    """Sample ``cfg.n_samples`` independent groupings of the final fields."""
    schema = t_final.to_schema()
    system = load_text("system", cfg.prompts_dir).strip()
    base_text = load_template("grouping", cfg.prompts_dir).substitute(
        transcription=dumps_document(t_final.payload).rstrip()
    )

    def build_request(last_result: ValidationResult | None) -> ModelRequest:
        text = base_text if last_result is None else base_text + _feedback(last_result)
        return ModelRequest(
            system_prompt=system,
            user_parts=(TextPart(text), image.as_part()),
            temperature=cfg.sampling_temperature,
            max_output_tokens=_GROUPING_TOKENS,
            role="grouper",
        )

    def sample(index: int) -> GroupingSample:
        doc, attempts = _call_until_valid(
            backend,
            build_request,
            lambda doc: validate_groups_format(doc, schema),
            cfg,
            phase="grouping_sample",
            sample_index=index,
            t_final=t_final,
        )
        return GroupingSample(
            assignment=GroupingAssignment.from_payload(doc),
            provenance=f"sample:{index}",
            attempts_used=attempts,
        )

    return _run_samples(sample, cfg)


def merge_groupings(
    backend: Backend,
    image: DocumentImage,
    t_final: Transcription,
    samples: list[GroupingSample],
    cfg: KiePipelineConfig,
) -> GroupingSample:
    """Consolidate grouping samples into one final grouping."""
    if not samples:
        raise ValueError("merge_groupings needs at least one sample")
    schema = t_final.to_schema()
    system = load_text("system", cfg.prompts_dir).strip()
    base_text = load_template("merge_groups", cfg.prompts_dir).substitute(
        n=len(samples),
        transcription=dumps_document(t_final.payload).rstrip(),
        samples=_numbered_blocks([s.assignment.to_payload() for s in samples]),
    )

    def build_request(last_result: ValidationResult | None) -> ModelRequest:
        text = base_text if last_result is None else base_text + _feedback(last_result)
        return ModelRequest(
            system_prompt=system,
            user_parts=(TextPart(text), image.as_part()),
            temperature=cfg.merge_temperature,
            max_output_tokens=_GROUPING_TOKENS,
            role="merger",
        )

    doc, attempts = _call_until_valid(
        backend,
        build_request,
        lambda doc: validate_groups_format(doc, schema),
        cfg,
        phase="grouping_merge",
        sample_index=None,
        t_final=t_final,
    )
    return GroupingSample(
        assignment=GroupingAssignment.from_payload(doc),
        provenance="merged",
        attempts_used=attempts,
    )


def _run_samples(sample: Callable[[int], object], cfg: KiePipelineConfig) -> list:
    indices = range(1, cfg.n_samples + 1)
    if cfg.workers <= 1:
        return [sample(i) for i in indices]
    with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
        futures = [pool.submit(sample, i) for i in indices]
        return [f.result() for f in futures]


def run_kie(
    backend: Backend, image: DocumentImage, cfg: KiePipelineConfig | None = None
) -> KieRunResult:
    """Run the full sample-merge pipeline for transcription, then grouping."""
    cfg = cfg or KiePipelineConfig()
    t_samples = generate_transcription_samples(backend, image, cfg)
    t_final = merge_transcriptions(backend, image, t_samples, cfg)
    g_samples = generate_grouping_samples(backend, image, t_final, cfg)
    g_final = merge_groupings(backend, image, t_final, g_samples, cfg)
    telemetry = KieTelemetry(
        transcription_sample_attempts=tuple(s.attempts_used for s in t_samples),
        transcription_merge_attempts=t_final.attempts_used,
        grouping_sample_attempts=tuple(s.attempts_used for s in g_samples),
        grouping_merge_attempts=g_final.attempts_used,
    )
    return KieRunResult(t_final=t_final, g_final=g_final, telemetry=telemetry)


@dataclass(frozen=True)
class KieErrorReport:
    """Fields with at least one wrongly transcribed value, counted once each."""

    errors: int
    erroneous_field_ids: frozenset[str]
    total_fields: int

    @property
    def error_rate(self) -> float:
        if self.total_fields == 0:
            return 0.0
        return self.errors / self.total_fields


def _norm_ws(text: str) -> str:
    return " ".join(text.split())


def _field_fingerprint(schema: FormSchema, field_id: str) -> tuple:
    entry = schema.fields[field_id]
    places = []
    for name in sorted(entry.answer_places):
        place = entry.answer_places[name]
        choices = tuple(
            sorted((code.casefold(), _norm_ws(label)) for code, label in place.choices.items())
        )
        places.append((_norm_ws(name), place.answer_type.value, choices))
    return (_norm_ws(entry.name), tuple(places))


def count_kie_errors(predicted: FormSchema, gold: FormSchema) -> KieErrorReport:
    """Count gold fields whose predicted transcription differs in any value.

    Raises :class:`SchemaMismatch` when the two schemas do not cover the same
    field ids, since per-field comparison is undefined in that case.
    """
    pred_ids = set(predicted.field_ids)
    gold_ids = set(gold.field_ids)
    if pred_ids != gold_ids:
        missing = sorted(gold_ids - pred_ids)
        extra = sorted(pred_ids - gold_ids)
        raise SchemaMismatch(
            f"field ids differ; missing from prediction: {missing}, unexpected: {extra}"
        )
    wrong = frozenset(
        fid
        for fid in gold_ids
        if _field_fingerprint(predicted, fid) != _field_fingerprint(gold, fid)
    )
    return KieErrorReport(
        errors=len(wrong), erroneous_field_ids=wrong, total_fields=len(gold_ids)
    )
