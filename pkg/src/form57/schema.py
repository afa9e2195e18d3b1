"""Typed model of Form 57 and its two JSON layouts.

A schema document is a JSON array of field objects, one per form field, in
document order.  Two layouts exist:

* ``naive`` -- each field is ``{"name", "answer_type", "choices"}``; the
  whole field is treated as a single writable area.
* ``human_centric`` -- each field is ``{"name", "answer_places"}`` where
  ``answer_places`` maps each writable/markable area of the field (e.g. the
  "Time" box and the "AM/PM" checkbox) to ``{"answer_type", "choices"}``.

Field identifiers are not stored separately: a field's ``name`` starts with
the printed entry number ("6. Time of Accident/Incident") and the identifier
("6") is parsed from that prefix.

Validation is strict: unknown keys, missing keys, wrong value kinds and
choice sets inconsistent with the answer type are all rejected.  The format
validators report failures as data (`ValidationResult`) so retry loops can
consume them; the parsing entry points raise `SchemaFormatError` instead.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterator


class SchemaVariant(str, Enum):
    NAIVE = "naive"
    HUMAN_CENTRIC = "human_centric"


class AnswerType(str, Enum):
    TEXT = "text"
    DIGIT = "digit"
    CHOICE = "choice"


# Single implicit answer place used when loading naive-layout documents.
NAIVE_PLACE_NAME = "value"

_FIELD_ID_RE = re.compile(r"^(\d+[A-Za-z]?)\.\s*\S")


class SchemaFormatError(ValueError):
    """A document does not conform to the requested schema layout."""

    def __init__(self, path: str, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path
        self.reason = reason


@dataclass(frozen=True)
class ValidationIssue:
    path: str
    reason: str


@dataclass(frozen=True)
class ValidationResult:
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def summary(self, limit: int = 5) -> str:
        if self.ok:
            return "pass"
        lines = [f"{i.path}: {i.reason}" for i in self.issues[:limit]]
        if len(self.issues) > limit:
            lines.append(f"... and {len(self.issues) - limit} more")
        return "; ".join(lines)


@dataclass(frozen=True)
class AnswerPlace:
    """One writable or markable area within a field."""

    name: str
    answer_type: AnswerType
    choices: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("answer place name must be non-empty")
        if self.answer_type is AnswerType.CHOICE:
            if not self.choices:
                raise ValueError(f"{self.name}: choice place requires a non-empty choice set")
            for code, label in self.choices.items():
                if not code or not label:
                    raise ValueError(f"{self.name}: choice codes and labels must be non-empty")
        elif self.choices:
            raise ValueError(f"{self.name}: {self.answer_type.value} place must have no choices")


@dataclass(frozen=True)
class FormField:
    field_id: str
    name: str
    answer_places: dict[str, AnswerPlace]

    def __post_init__(self) -> None:
        if not self.answer_places:
            raise ValueError(f"field {self.field_id!r} must have at least one answer place")
        for place_name, place in self.answer_places.items():
            if place_name != place.name:
                raise ValueError(f"field {self.field_id!r}: answer place key/name mismatch")


@dataclass(frozen=True)
class FormSchema:
    fields: dict[str, FormField]

    @property
    def field_count(self) -> int:
        return len(self.fields)

    @property
    def field_ids(self) -> tuple[str, ...]:
        return tuple(self.fields)

    def answer_keys(self) -> Iterator[tuple[str, FormField, AnswerPlace]]:
        """Yield (key, field, place) for every answer place, in document order."""
        for f in self.fields.values():
            for place in f.answer_places.values():
                yield answer_key(f.field_id, place.name), f, place


@dataclass(frozen=True)
class GroupingAssignment:
    """Partition of the schema's field identifiers into named semantic groups."""

    groups: dict[str, tuple[str, ...]]

    def field_ids(self) -> set[str]:
        return {fid for members in self.groups.values() for fid in members}

    def group_of(self, field_id: str) -> str:
        for name, members in self.groups.items():
            if field_id in members:
                return name
        raise KeyError(field_id)

    def to_payload(self) -> dict[str, list[str]]:
        return {name: list(members) for name, members in self.groups.items()}

    @classmethod
    def from_payload(cls, payload: dict[str, list[str]]) -> "GroupingAssignment":
        return cls(groups={name: tuple(members) for name, members in payload.items()})


def answer_key(field_id: str, place_name: str) -> str:
    """Canonical flat key for one answer place: ``"<field_id>/<place name>"``.

    "/" inside a place name is mapped to "-" so the separator stays unambiguous
    ("6" + "AM/PM" -> "6/AM-PM").
    """
    return f"{field_id}/{place_name.replace('/', '-')}"


def resolve_answer_key(schema: FormSchema, key: str) -> tuple[FormField, AnswerPlace]:
    """Map a flat key back to its (field, place). Raises KeyError if unknown."""
    field_id, sep, mangled = key.partition("/")
    if not sep or field_id not in schema.fields:
        raise KeyError(key)
    f = schema.fields[field_id]
    for place in f.answer_places.values():
        if place.name.replace("/", "-") == mangled:
            return f, place
    raise KeyError(key)


def parse_field_id(name: str) -> str | None:
    """Entry number parsed from a field name's prefix ("6. Time of ..." -> "6")."""
    m = _FIELD_ID_RE.match(name.strip())
    return m.group(1) if m else None


# ---------------------------------------------------------------------------
# Structural checking

def _check_choices(raw: Any, path: str, answer_type: str | None, issues: list[ValidationIssue]) -> None:
    if raw is None:
        if answer_type == "choice":
            issues.append(ValidationIssue(path, "choice answer requires a 'choices' map"))
        return
    if not isinstance(raw, dict):
        issues.append(ValidationIssue(f"{path}.choices", "must be an object mapping code to label"))
        return
    if answer_type == "choice" and not raw:
        issues.append(ValidationIssue(f"{path}.choices", "choice set must be non-empty"))
    if answer_type in ("text", "digit") and raw:
        issues.append(ValidationIssue(f"{path}.choices", f"{answer_type} answer must have an empty choice set"))
    for code, label in raw.items():
        if not isinstance(code, str) or not code.strip():
            issues.append(ValidationIssue(f"{path}.choices", "choice codes must be non-empty strings"))
        if not isinstance(label, str) or not label.strip():
            issues.append(ValidationIssue(f"{path}.choices[{code!r}]", "choice labels must be non-empty strings"))


def _check_answer_spec(raw: dict, path: str, issues: list[ValidationIssue], allowed: set[str]) -> None:
    extra = set(raw) - allowed
    if extra:
        issues.append(ValidationIssue(path, f"unexpected keys: {sorted(extra)}"))
    answer_type = raw.get("answer_type")
    if "answer_type" not in raw:
        issues.append(ValidationIssue(path, "missing 'answer_type'"))
    elif answer_type not in ("text", "digit", "choice"):
        issues.append(ValidationIssue(f"{path}.answer_type", f"must be one of text/digit/choice, got {answer_type!r}"))
        answer_type = None
    _check_choices(raw.get("choices"), path, answer_type if isinstance(answer_type, str) else None, issues)


def _check_field_name(raw: Any, path: str, seen_ids: dict[str, str], issues: list[ValidationIssue]) -> None:
    if not isinstance(raw, str) or not raw.strip():
        issues.append(ValidationIssue(f"{path}.name", "must be a non-empty string"))
        return
    fid = parse_field_id(raw)
    if fid is None:
        issues.append(ValidationIssue(f"{path}.name", f"must start with an entry-number prefix like '6.', got {raw!r}"))
    elif fid in seen_ids:
        issues.append(ValidationIssue(f"{path}.name", f"duplicate field id {fid!r} (also used by {seen_ids[fid]!r})"))
    else:
        seen_ids[fid] = raw


def check_transcription(doc: Any, variant: SchemaVariant) -> list[ValidationIssue]:
    """Strict structural check of a schema-shaped document. Returns all issues."""
    issues: list[ValidationIssue] = []
    if not isinstance(doc, list):
        return [ValidationIssue("$", f"document must be a JSON array of fields, got {type(doc).__name__}")]
    seen_ids: dict[str, str] = {}
    for i, entry in enumerate(doc):
        path = f"$[{i}]"
        if not isinstance(entry, dict):
            issues.append(ValidationIssue(path, "field entry must be an object"))
            continue
        if "name" not in entry:
            issues.append(ValidationIssue(path, "missing 'name'"))
        else:
            _check_field_name(entry["name"], path, seen_ids, issues)
        if variant is SchemaVariant.NAIVE:
            _check_answer_spec(entry, path, issues, allowed={"name", "answer_type", "choices"})
        else:
            extra = set(entry) - {"name", "answer_places"}
            if extra:
                issues.append(ValidationIssue(path, f"unexpected keys: {sorted(extra)}"))
            places = entry.get("answer_places")
            if not isinstance(places, dict) or not places:
                issues.append(ValidationIssue(f"{path}.answer_places", "must be a non-empty object"))
                continue
            for place_name, spec in places.items():
                ppath = f"{path}.answer_places.{place_name}"
                if not isinstance(place_name, str) or not place_name.strip():
                    issues.append(ValidationIssue(f"{path}.answer_places", "answer place names must be non-empty strings"))
                if not isinstance(spec, dict):
                    issues.append(ValidationIssue(ppath, "answer place must be an object"))
                    continue
                _check_answer_spec(spec, ppath, issues, allowed={"answer_type", "choices"})
    return issues


def validate_transcription_format(doc: Any, variant: SchemaVariant = SchemaVariant.HUMAN_CENTRIC) -> ValidationResult:
    """Pass iff ``doc`` strictly conforms to the layout's structural rules."""
    return ValidationResult(issues=tuple(check_transcription(doc, variant)))


def validate_groups_format(doc: Any, schema: FormSchema) -> ValidationResult:
    """Pass iff ``doc`` is a partition of exactly the schema's field ids into named groups."""
    issues: list[ValidationIssue] = []
    if not isinstance(doc, dict):
        return ValidationResult((ValidationIssue("$", f"grouping must be a JSON object, got {type(doc).__name__}"),))
    assigned: dict[str, str] = {}
    for group_name, members in doc.items():
        path = f"$.{group_name}"
        if not isinstance(group_name, str) or not group_name.strip():
            issues.append(ValidationIssue("$", "group names must be non-empty strings"))
        if not isinstance(members, list) or not members:
            issues.append(ValidationIssue(path, "group must be a non-empty array of field ids"))
            continue
        for fid in members:
            if not isinstance(fid, str):
                issues.append(ValidationIssue(path, f"field ids must be strings, got {fid!r}"))
                continue
            if fid in assigned:
                issues.append(ValidationIssue(path, f"field {fid!r} already assigned to group {assigned[fid]!r}"))
            assigned[fid] = group_name
            if fid not in schema.fields:
                issues.append(ValidationIssue(path, f"unknown field id {fid!r}"))
    missing = [fid for fid in schema.fields if fid not in assigned]
    if missing:
        issues.append(ValidationIssue("$", f"fields not assigned to any group: {missing}"))
    return ValidationResult(issues=tuple(issues))


# ---------------------------------------------------------------------------
# Parse / serialize

def parse_schema(doc: Any, variant: SchemaVariant = SchemaVariant.HUMAN_CENTRIC) -> FormSchema:
    """Build a FormSchema from a parsed JSON document.

    Naive-layout fields are loaded as one implicit answer place named
    ``"value"``.  Raises SchemaFormatError on the first structural violation.
    """
    issues = check_transcription(doc, variant)
    if issues:
        raise SchemaFormatError(issues[0].path, issues[0].reason)
    fields: dict[str, FormField] = {}
    for entry in doc:
        name = entry["name"].strip()
        fid = parse_field_id(name)
        assert fid is not None
        if variant is SchemaVariant.NAIVE:
            places = {
                NAIVE_PLACE_NAME: AnswerPlace(
                    name=NAIVE_PLACE_NAME,
                    answer_type=AnswerType(entry["answer_type"]),
                    choices=dict(entry.get("choices") or {}),
                )
            }
        else:
            places = {
                place_name: AnswerPlace(
                    name=place_name,
                    answer_type=AnswerType(spec["answer_type"]),
                    choices=dict(spec.get("choices") or {}),
                )
                for place_name, spec in entry["answer_places"].items()
            }
        fields[fid] = FormField(field_id=fid, name=name, answer_places=places)
    return FormSchema(fields=fields)


def serialize_schema(schema: FormSchema, variant: SchemaVariant = SchemaVariant.HUMAN_CENTRIC) -> list[dict]:
    """JSON-ready document for ``schema``; re-parses to an equal schema.

    The naive layout can only express fields with the single implicit answer
    place, so serializing anything else to it raises SchemaFormatError.
    """
    doc: list[dict] = []
    for f in schema.fields.values():
        if variant is SchemaVariant.NAIVE:
            if list(f.answer_places) != [NAIVE_PLACE_NAME]:
                raise SchemaFormatError(
                    f"$.{f.field_id}",
                    f"field has answer places {list(f.answer_places)}; the naive layout "
                    f"only represents a single implicit {NAIVE_PLACE_NAME!r} place",
                )
            place = f.answer_places[NAIVE_PLACE_NAME]
            entry: dict[str, Any] = {"name": f.name, "answer_type": place.answer_type.value}
            if place.choices:
                entry["choices"] = dict(place.choices)
        else:
            entry = {"name": f.name, "answer_places": {}}
            for place in f.answer_places.values():
                spec: dict[str, Any] = {"answer_type": place.answer_type.value}
                if place.choices:
                    spec["choices"] = dict(place.choices)
                entry["answer_places"][place.name] = spec
        doc.append(entry)
    return doc


def dumps_schema(schema: FormSchema, variant: SchemaVariant = SchemaVariant.HUMAN_CENTRIC) -> str:
    """Canonical UTF-8 text form; byte-stable for golden comparisons."""
    return dumps_document(serialize_schema(schema, variant))


def dumps_document(doc: Any) -> str:
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
