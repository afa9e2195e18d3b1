"""Question answering over news articles against an extracted form schema.

Given a final transcription and grouping, this module asks the model to fill
the form from an article. Questions can be batched one field per call, all
fields in one call, or one group per call. Every batch is exactly one gateway
call; a reply that fails structural checks aborts the run rather than being
retried, so call counts stay auditable.

Answers the model cannot support from the article use the literal string
"Unknown". Values that fail to parse under their field's answer type are also
recorded as unknown, with the raw reply text preserved for later judging.
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from enum import Enum
from pathlib import Path
from typing import Union

from .gateway import Backend, ModelRequest, RetryPolicy, TextPart, complete_with_retry
from .kie import extract_json
from .prompt_store import load_template, load_text
from .schema import (
    AnswerPlace,
    AnswerType,
    FormField,
    FormSchema,
    GroupingAssignment,
    answer_key,
    resolve_answer_key,
)

_QA_TOKENS = 8192

UNKNOWN_TOKEN = "Unknown"

_CLOCK_RE = re.compile(
    r"^\s*(\d{1,2}):(\d{2})\s*(?:([AaPp])\.?\s*[Mm]\.?)?\s*$"
)
_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


class AnswerFormatError(ValueError):
    """A model reply broke the answer object contract for its batch."""


@dataclass(frozen=True)
class ArticleDoc:
    """A news article plus its sidecar metadata."""

    article_id: str
    body: str
    meta: dict = field(default_factory=dict)

    @property
    def published_date(self) -> _dt.date | None:
        raw = self.meta.get("published_date")
        if raw is None:
            return None
        return _dt.date.fromisoformat(raw)

    @property
    def state(self) -> str | None:
        return self.meta.get("state")

    @classmethod
    def load(cls, articles_dir: str | Path, article_id: str) -> "ArticleDoc":
        root = Path(articles_dir)
        body = (root / f"{article_id}.txt").read_text(encoding="utf-8")
        meta_path = root / f"{article_id}.meta.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.is_file() else {}
        return cls(article_id=article_id, body=body, meta=meta)


def list_article_ids(articles_dir: str | Path) -> list[str]:
    root = Path(articles_dir)
    return sorted(p.stem for p in root.glob("*.txt"))


@dataclass(frozen=True)
class TextValue:
    text: str


@dataclass(frozen=True)
class DigitValue:
    value: Decimal


@dataclass(frozen=True)
class ChoiceValue:
    code: str


@dataclass(frozen=True)
class Unknown:
    pass


AnswerValue = Union[TextValue, DigitValue, ChoiceValue, Unknown]


@dataclass(frozen=True)
class FieldAnswer:
    field_id: str
    answer_place: str
    value: AnswerValue
    raw_model_text: str

    @property
    def key(self) -> str:
        return answer_key(self.field_id, self.answer_place)

    @property
    def attempted(self) -> bool:
        return not isinstance(self.value, Unknown)


@dataclass(frozen=True)
class PopulatedForm:
    """All answers for one article, keyed by field id / answer place."""

    article_id: str
    answers: dict[str, FieldAnswer]

    def to_payload(self) -> dict:
        out: dict = {"article_id": self.article_id, "answers": {}}
        for key in sorted(self.answers):
            ans = self.answers[key]
            value = ans.value
            if isinstance(value, TextValue):
                entry = {"type": "text", "value": value.text}
            elif isinstance(value, DigitValue):
                entry = {"type": "digit", "value": str(value.value)}
            elif isinstance(value, ChoiceValue):
                entry = {"type": "choice", "value": value.code}
            else:
                entry = {"type": "unknown", "value": None}
            entry["raw_model_text"] = ans.raw_model_text
            out["answers"][key] = entry
        return out

    @classmethod
    def from_payload(cls, payload: dict) -> "PopulatedForm":
        answers: dict[str, FieldAnswer] = {}
        for key, entry in payload["answers"].items():
            field_id, _, place = key.partition("/")
            kind = entry["type"]
            if kind == "text":
                value: AnswerValue = TextValue(entry["value"])
            elif kind == "digit":
                value = DigitValue(Decimal(entry["value"]))
            elif kind == "choice":
                value = ChoiceValue(entry["value"])
            elif kind == "unknown":
                value = Unknown()
            else:
                raise ValueError(f"unknown answer entry type: {kind!r}")
            answers[key] = FieldAnswer(
                field_id=field_id,
                answer_place=place,
                value=value,
                raw_model_text=entry.get("raw_model_text", ""),
            )
        return cls(article_id=payload["article_id"], answers=answers)


class BatchingMode(str, Enum):
    SINGLE = "single"
    ALL = "all"
    GROUP = "group"


@dataclass(frozen=True)
class QaTelemetry:
    mode: BatchingMode
    batches: tuple[tuple[str, ...], ...]

    @property
    def calls(self) -> int:
        return len(self.batches)


def parse_clock(text: str) -> int | None:
    """Parse a time of day into minutes since midnight, or None."""
    match = _CLOCK_RE.match(text)
    if match is None:
        return _clock_from_number(text)
    hour, minute = int(match.group(1)), int(match.group(2))
    meridiem = match.group(3)
    if minute > 59:
        return None
    if meridiem is not None:
        if not 1 <= hour <= 12:
            return None
        hour = hour % 12
        if meridiem.lower() == "p":
            hour += 12
    elif hour > 23:
        return None
    return hour * 60 + minute


def _clock_from_number(text: str) -> int | None:
    """Read bare numerics as clock values: "1430" or "14" or "2 PM"."""
    match = re.match(r"^\s*(\d{1,4})\s*(?:([AaPp])\.?\s*[Mm]\.?)?\s*$", text)
    if match is None:
        return None
    num = int(match.group(1))
    meridiem = match.group(2)
    if meridiem is not None:
        if not 1 <= num <= 12:
            return None
        hour = num % 12
        if meridiem.lower() == "p":
            hour += 12
        return hour * 60
    if num <= 23:
        return num * 60
    hour, minute = divmod(num, 100)
    if hour > 23 or minute > 59:
        return None
    return hour * 60 + minute


def parse_number(text: str) -> Decimal | None:
    """First decimal number in the text, commas stripped, or None."""
    match = _NUMBER_RE.search(text.replace(",", ""))
    if match is None:
        return None
    try:
        return Decimal(match.group(0))
    except InvalidOperation:
        return None


def _parse_digit(text: str) -> Decimal | None:
    if _CLOCK_RE.match(text) is not None:
        minutes = parse_clock(text)
        if minutes is None:
            return None
        hour, minute = divmod(minutes, 60)
        return Decimal(hour * 100 + minute)
    return parse_number(text)


def _match_choice(place: AnswerPlace, text: str) -> str | None:
    wanted = text.strip().casefold()
    for code in place.choices:
        if code.casefold() == wanted:
            return code
    for code, label in place.choices.items():
        if label.strip().casefold() == wanted:
            return code
    return None


def _is_unknown_scalar(value) -> bool:
    if value is None:
        return True
    return isinstance(value, str) and value.strip().casefold() in ("", UNKNOWN_TOKEN.casefold())


def _coerce_value(raw, place: AnswerPlace) -> tuple[AnswerValue, str]:
    """Map one raw JSON value onto the answer place's type."""
    if isinstance(raw, dict):
        for unwrap in ("value", "answer"):
            if unwrap in raw:
                raw = raw[unwrap]
                break
        else:
            return Unknown(), json.dumps(raw, ensure_ascii=False)
    if isinstance(raw, (dict, list)):
        return Unknown(), json.dumps(raw, ensure_ascii=False)
    if isinstance(raw, bool):
        raw = str(raw)
    if _is_unknown_scalar(raw):
        text = "" if raw is None else str(raw)
        return Unknown(), text
    if isinstance(raw, (int, float)):
        text = json.dumps(raw)
    else:
        text = str(raw)
    if place.answer_type is AnswerType.CHOICE:
        code = _match_choice(place, text)
        if code is None:
            return Unknown(), text
        return ChoiceValue(code), text
    if place.answer_type is AnswerType.DIGIT:
        number = _parse_digit(text)
        if number is None:
            return Unknown(), text
        return DigitValue(number), text
    return TextValue(text.strip()), text


def _question_line(key: str, form_field: FormField, place: AnswerPlace) -> str:
    head = f"[{key}] {form_field.name}"
    if len(form_field.answer_places) > 1 or place.name != "value":
        head += f", answer place: {place.name}"
    if place.answer_type is AnswerType.CHOICE:
        codes = "; ".join(f"{code} = {label}" for code, label in place.choices.items())
        return f"{head} (choose one code: {codes})"
    if place.answer_type is AnswerType.DIGIT:
        return f"{head} (numeric)"
    return f"{head} (free text)"


def build_qa_prompt(
    article: ArticleDoc,
    schema: FormSchema,
    keys: list[str],
    prompts_dir: str | Path | None = None,
) -> str:
    """Render the QA prompt for one batch of answer keys."""
    lines = []
    for key in keys:
        form_field, place = resolve_answer_key(schema, key)
        lines.append(_question_line(key, form_field, place))
    return load_template("qa", prompts_dir).substitute(
        article=article.body.strip(), questions="\n".join(lines)
    )


def parse_answers(
    text: str, schema: FormSchema, keys: list[str]
) -> dict[str, FieldAnswer]:
    """Parse one batch reply; every requested key must appear, nothing else."""
    doc = extract_json(text)
    if not isinstance(doc, dict):
        raise AnswerFormatError("reply is not a JSON object")
    requested = set(keys)
    present = set(doc)
    missing = sorted(requested - present)
    extra = sorted(present - requested)
    if missing or extra:
        raise AnswerFormatError(
            f"answer keys mismatch; missing: {missing}, unexpected: {extra}"
        )
    answers: dict[str, FieldAnswer] = {}
    for key in keys:
        form_field, place = resolve_answer_key(schema, key)
        value, raw_text = _coerce_value(doc[key], place)
        answers[key] = FieldAnswer(
            field_id=form_field.field_id,
            answer_place=place.name,
            value=value,
            raw_model_text=raw_text,
        )
    return answers


def _batches_for_mode(
    schema: FormSchema, grouping: GroupingAssignment | None, mode: BatchingMode
) -> list[list[str]]:
    by_field: dict[str, list[str]] = {}
    for key, form_field, _ in schema.answer_keys():
        by_field.setdefault(form_field.field_id, []).append(key)
    if mode is BatchingMode.SINGLE:
        return [by_field[fid] for fid in schema.field_ids]
    if mode is BatchingMode.ALL:
        return [[key for fid in schema.field_ids for key in by_field[fid]]]
    if grouping is None:
        raise ValueError("group mode needs a grouping assignment")
    batches = []
    for group_name in grouping.groups:
        keys = [key for fid in grouping.groups[group_name] for key in by_field[fid]]
        batches.append(keys)
    return batches


def populate_form(
    backend: Backend,
    article: ArticleDoc,
    schema: FormSchema,
    grouping: GroupingAssignment | None = None,
    mode: BatchingMode = BatchingMode.GROUP,
    retry_policy: RetryPolicy | None = None,
    prompts_dir: str | Path | None = None,
) -> tuple[PopulatedForm, QaTelemetry]:
    """Fill the whole form for one article; one gateway call per batch."""
    policy = retry_policy or RetryPolicy()
    system = load_text("system", prompts_dir).strip()
    batches = _batches_for_mode(schema, grouping, mode)
    answers: dict[str, FieldAnswer] = {}
    for keys in batches:
        prompt = build_qa_prompt(article, schema, keys, prompts_dir)
        request = ModelRequest(
            system_prompt=system,
            user_parts=(TextPart(prompt),),
            temperature=0.0,
            max_output_tokens=_QA_TOKENS,
            role="qa",
        )
        response = complete_with_retry(backend, request, policy)
        answers.update(parse_answers(response.text, schema, keys))
    form = PopulatedForm(article_id=article.article_id, answers=answers)
    telemetry = QaTelemetry(mode=mode, batches=tuple(tuple(b) for b in batches))
    return form, telemetry
