"""Scoring populated forms against ground truth from linked incident records.

Ground truth is drawn through a crosswalk file that maps answer keys (or
whole field ids) to CSV columns, with optional value translation tables for
choice fields and optional time or speed semantics for digit fields.

Judging rules per answer type:

- choice: code equality after case normalization; a gold value may be either
  a code or a choice label.
- digit with time semantics: both sides parsed as clock times; match when
  they are at most 60 minutes apart on minutes-of-day, with no wraparound
  across midnight.
- digit with speed semantics: match when at most 10 apart.
- other digits: exact numeric equality.
- text: a judge model's yes/no when a judge gateway is configured, else an
  offline normalizer (case-fold, strip punctuation, token-set overlap >= 0.8).

A prediction of Unknown is never judged; it is recorded as NotAttempted.
Accuracy is Match / (Match + Mismatch), so it excludes NotAttempted and
NoGroundTruth keys; a second figure that counts an Unknown on an answerable
key with ground truth as an error is reported alongside. Coverage is the
fraction of answerable keys attempted. Degenerate denominators report 0.0
with the matching ``*_defined`` flag set to False.
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from decimal import Decimal
from enum import Enum
from pathlib import Path

from .gateway import Backend, ModelRequest, RetryPolicy, TextPart, complete_with_retry
from .kie import extract_json
from .prompt_store import load_template, load_text
from .qa import (
    ChoiceValue,
    DigitValue,
    FieldAnswer,
    PopulatedForm,
    TextValue,
    parse_clock,
    parse_number,
)
from .linkage import FraRecord
from .schema import AnswerPlace, AnswerType, FormSchema, resolve_answer_key

TIME_TOLERANCE_MINUTES = 60
SPEED_TOLERANCE = 10
TEXT_OVERLAP_THRESHOLD = 0.8

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_JUDGE_TOKENS = 256


class Verdict(str, Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    NOT_ATTEMPTED = "NotAttempted"
    NO_GROUND_TRUTH = "NoGroundTruth"


class Rule(str, Enum):
    EXACT_CHOICE = "ExactChoice"
    DIGIT_TOLERANCE = "DigitTolerance"
    TIME_TOLERANCE = "TimeTolerance"
    FUZZY_TEXT = "FuzzyText"
    UNKNOWN_SKIP = "UnknownSkip"


@dataclass(frozen=True)
class JudgeVerdict:
    key: str
    verdict: Verdict
    rule_applied: Rule
    answerable: bool
    has_ground_truth: bool
    gold: str | None = None
    pred_text: str = ""
    article_id: str = ""

    def to_payload(self) -> dict:
        return {
            "key": self.key,
            "verdict": self.verdict.value,
            "rule_applied": self.rule_applied.value,
            "answerable": self.answerable,
            "has_ground_truth": self.has_ground_truth,
            "gold": self.gold,
            "pred_text": self.pred_text,
            "article_id": self.article_id,
        }


@dataclass(frozen=True)
class AnswerabilityAnnotation:
    """Which answer keys a human judged answerable from the article text."""

    article_id: str
    answerable: frozenset

    @classmethod
    def load(cls, annotations_dir: str | Path, article_id: str) -> "AnswerabilityAnnotation | None":
        path = Path(annotations_dir) / f"{article_id}.answerable.json"
        if not path.is_file():
            return None
        keys = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(keys, list) or not all(isinstance(k, str) for k in keys):
            raise ValueError(f"{path}: expected a JSON list of answer keys")
        return cls(article_id=article_id, answerable=frozenset(keys))

    def save(self, annotations_dir: str | Path) -> Path:
        path = Path(annotations_dir) / f"{self.article_id}.answerable.json"
        path.write_text(
            json.dumps(sorted(self.answerable), indent=2) + "\n", encoding="utf-8"
        )
        return path


@dataclass(frozen=True)
class CrosswalkEntry:
    """How one answer key maps onto the incident CSV."""

    column: str
    semantics: str | None = None
    value_map: dict = field(default_factory=dict)


def load_crosswalk(path: str | Path) -> dict[str, CrosswalkEntry]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: expected a JSON object keyed by answer key")
    crosswalk: dict[str, CrosswalkEntry] = {}
    for key, raw in doc.items():
        if not isinstance(raw, dict) or "column" not in raw:
            raise ValueError(f"{path}: entry {key!r} needs a 'column'")
        semantics = raw.get("semantics")
        if semantics not in (None, "time", "speed"):
            raise ValueError(f"{path}: entry {key!r} has unknown semantics {semantics!r}")
        crosswalk[key] = CrosswalkEntry(
            column=raw["column"],
            semantics=semantics,
            value_map=raw.get("value_map", {}),
        )
    return crosswalk


def crosswalk_entry(
    crosswalk: dict[str, CrosswalkEntry], key: str
) -> CrosswalkEntry | None:
    """Look up an answer key, falling back to its bare field id."""
    if key in crosswalk:
        return crosswalk[key]
    field_id, _, _ = key.partition("/")
    return crosswalk.get(field_id)


def gold_for(
    record: FraRecord | None, key: str, crosswalk: dict[str, CrosswalkEntry]
) -> tuple[str | None, str | None]:
    """Return (gold value, semantics) for one answer key, or (None, ...)."""
    entry = crosswalk_entry(crosswalk, key)
    if entry is None or record is None:
        return None, None
    value = (record.raw.get(entry.column) or "").strip()
    if not value:
        return None, entry.semantics
    if entry.value_map:
        folded = value.casefold()
        for raw_key, code in entry.value_map.items():
            if raw_key.casefold() == folded:
                return code, entry.semantics
    return value, entry.semantics


def _tokens(text: str) -> frozenset:
    return frozenset(_TOKEN_RE.findall(text.casefold()))


def text_overlap(a: str, b: str) -> float:
    ta, tb = _tokens(a), _tokens(b)
    if not ta or not tb:
        return 1.0 if ta == tb else 0.0
    return len(ta & tb) / max(len(ta), len(tb))


def _gold_choice_code(place: AnswerPlace, gold: str) -> str | None:
    wanted = gold.strip().casefold()
    for code in place.choices:
        if code.casefold() == wanted:
            return code
    for code, label in place.choices.items():
        if label.strip().casefold() == wanted:
            return code
    return None


def _pred_minutes(pred: FieldAnswer) -> int | None:
    minutes = parse_clock(pred.raw_model_text)
    if minutes is not None:
        return minutes
    if isinstance(pred.value, DigitValue) and pred.value.value == int(pred.value.value):
        return parse_clock(str(int(pred.value.value)))
    return None


def _rule_for(place: AnswerPlace, semantics: str | None) -> Rule:
    if place.answer_type is AnswerType.CHOICE:
        return Rule.EXACT_CHOICE
    if place.answer_type is AnswerType.DIGIT:
        return Rule.TIME_TOLERANCE if semantics == "time" else Rule.DIGIT_TOLERANCE
    return Rule.FUZZY_TEXT


def _judge_text_offline(pred_text: str, gold: str) -> Verdict:
    if text_overlap(pred_text, gold) >= TEXT_OVERLAP_THRESHOLD:
        return Verdict.MATCH
    return Verdict.MISMATCH


def _judge_text_model(
    judge_gateway: Backend,
    question: str,
    pred_text: str,
    gold: str,
    prompts_dir: str | Path | None,
    retry_policy: RetryPolicy,
) -> Verdict | None:
    prompt = load_template("judge", prompts_dir).substitute(
        question=question, gold=gold, pred=pred_text
    )
    request = ModelRequest(
        system_prompt=load_text("system", prompts_dir).strip(),
        user_parts=(TextPart(prompt),),
        temperature=0.0,
        max_output_tokens=_JUDGE_TOKENS,
        role="judge",
    )
    response = complete_with_retry(judge_gateway, request, retry_policy)
    doc = extract_json(response.text)
    if isinstance(doc, dict) and isinstance(doc.get("match"), bool):
        return Verdict.MATCH if doc["match"] else Verdict.MISMATCH
    return None


def judge_field(
    pred: FieldAnswer,
    gold: str | None,
    place: AnswerPlace,
    judge_gateway: Backend | None = None,
    *,
    semantics: str | None = None,
    answerable: bool = True,
    article_id: str = "",
    question: str = "",
    prompts_dir: str | Path | None = None,
    retry_policy: RetryPolicy | None = None,
) -> JudgeVerdict:
    """Judge one predicted answer against its ground-truth value."""
    key = pred.key
    if not pred.attempted:
        return JudgeVerdict(
            key=key,
            verdict=Verdict.NOT_ATTEMPTED,
            rule_applied=Rule.UNKNOWN_SKIP,
            answerable=answerable,
            has_ground_truth=gold is not None,
            gold=gold,
            pred_text=pred.raw_model_text,
            article_id=article_id,
        )
    rule = _rule_for(place, semantics)
    base = JudgeVerdict(
        key=key,
        verdict=Verdict.NO_GROUND_TRUTH,
        rule_applied=rule,
        answerable=answerable,
        has_ground_truth=False,
        gold=gold,
        pred_text=pred.raw_model_text,
        article_id=article_id,
    )
    if gold is None:
        return base

    if rule is Rule.EXACT_CHOICE:
        gold_code = _gold_choice_code(place, gold)
        if gold_code is None:
            return base
        if isinstance(pred.value, ChoiceValue):
            pred_code = pred.value.code
        else:
            pred_code = _gold_choice_code(place, pred.raw_model_text)
        verdict = (
            Verdict.MATCH
            if pred_code is not None and pred_code.casefold() == gold_code.casefold()
            else Verdict.MISMATCH
        )
        return replace(base, verdict=verdict, has_ground_truth=True)

    if rule is Rule.TIME_TOLERANCE:
        gold_minutes = parse_clock(gold)
        if gold_minutes is None:
            return base
        pred_minutes = _pred_minutes(pred)
        verdict = (
            Verdict.MATCH
            if pred_minutes is not None
            and abs(pred_minutes - gold_minutes) <= TIME_TOLERANCE_MINUTES
            else Verdict.MISMATCH
        )
        return replace(base, verdict=verdict, has_ground_truth=True)

    if rule is Rule.DIGIT_TOLERANCE:
        gold_number = parse_number(gold)
        if gold_number is None:
            return base
        if isinstance(pred.value, DigitValue):
            pred_number = pred.value.value
        else:
            pred_number = parse_number(pred.raw_model_text)
        tolerance = Decimal(SPEED_TOLERANCE) if semantics == "speed" else Decimal(0)
        verdict = (
            Verdict.MATCH
            if pred_number is not None and abs(pred_number - gold_number) <= tolerance
            else Verdict.MISMATCH
        )
        return replace(base, verdict=verdict, has_ground_truth=True)

    pred_text = pred.value.text if isinstance(pred.value, TextValue) else pred.raw_model_text
    # identical strings need no judge; keeps scripted judge tapes minimal
    if " ".join(pred_text.casefold().split()) == " ".join(gold.casefold().split()):
        return replace(base, verdict=Verdict.MATCH, has_ground_truth=True)
    verdict = None
    if judge_gateway is not None:
        verdict = _judge_text_model(
            judge_gateway,
            question or key,
            pred_text,
            gold,
            prompts_dir,
            retry_policy or RetryPolicy(),
        )
    if verdict is None:
        verdict = _judge_text_offline(pred_text, gold)
    return replace(base, verdict=verdict, has_ground_truth=True)


@dataclass(frozen=True)
class MetricBucket:
    """Verdict counts plus the derived accuracy and coverage figures."""

    matches: int = 0
    mismatches: int = 0
    not_attempted: int = 0
    no_ground_truth: int = 0
    unknown_errors: int = 0
    n_answerable: int = 0
    n_attempted: int = 0

    def __add__(self, other: "MetricBucket") -> "MetricBucket":
        return MetricBucket(
            matches=self.matches + other.matches,
            mismatches=self.mismatches + other.mismatches,
            not_attempted=self.not_attempted + other.not_attempted,
            no_ground_truth=self.no_ground_truth + other.no_ground_truth,
            unknown_errors=self.unknown_errors + other.unknown_errors,
            n_answerable=self.n_answerable + other.n_answerable,
            n_attempted=self.n_attempted + other.n_attempted,
        )

    @property
    def accuracy_defined(self) -> bool:
        return self.matches + self.mismatches > 0

    @property
    def accuracy(self) -> float:
        judged = self.matches + self.mismatches
        return self.matches / judged if judged else 0.0

    @property
    def accuracy_counting_unknown_defined(self) -> bool:
        return self.matches + self.mismatches + self.unknown_errors > 0

    @property
    def accuracy_counting_unknown(self) -> float:
        judged = self.matches + self.mismatches + self.unknown_errors
        return self.matches / judged if judged else 0.0

    @property
    def coverage_defined(self) -> bool:
        return self.n_answerable > 0

    @property
    def coverage(self) -> float:
        return self.n_attempted / self.n_answerable if self.n_answerable else 0.0

    def to_payload(self) -> dict:
        return {
            "matches": self.matches,
            "mismatches": self.mismatches,
            "not_attempted": self.not_attempted,
            "no_ground_truth": self.no_ground_truth,
            "unknown_errors": self.unknown_errors,
            "n_answerable": self.n_answerable,
            "n_attempted": self.n_attempted,
            "accuracy": self.accuracy,
            "accuracy_defined": self.accuracy_defined,
            "accuracy_counting_unknown": self.accuracy_counting_unknown,
            "accuracy_counting_unknown_defined": self.accuracy_counting_unknown_defined,
            "coverage": self.coverage,
            "coverage_defined": self.coverage_defined,
        }


ANSWER_TYPE_BUCKETS = {
    AnswerType.CHOICE: "SingleChoice",
    AnswerType.DIGIT: "Digit",
    AnswerType.TEXT: "FreeText",
}

BUCKET_DISPLAY_NAMES = {
    "SingleChoice": "Single choice",
    "Digit": "Digit",
    "FreeText": "Free text",
}


@dataclass(frozen=True)
class EvalReport:
    article_id: str
    overall: MetricBucket
    by_answer_type: dict
    by_field: dict
    verdicts: tuple
    n_articles: int = 1

    @property
    def accuracy(self) -> float:
        return self.overall.accuracy

    @property
    def coverage(self) -> float:
        return self.overall.coverage

    @property
    def n_answerable(self) -> int:
        return self.overall.n_answerable

    @property
    def n_attempted(self) -> int:
        return self.overall.n_attempted

    def to_payload(self) -> dict:
        return {
            "article_id": self.article_id,
            "n_articles": self.n_articles,
            "overall": self.overall.to_payload(),
            "by_answer_type": {
                name: self.by_answer_type[name].accuracy
                for name in sorted(self.by_answer_type)
            },
            "by_field": {
                fid: self.by_field[fid].accuracy for fid in sorted(self.by_field)
            },
            "verdicts": [v.to_payload() for v in self.verdicts],
        }


def _bucket_for_verdict(v: JudgeVerdict) -> MetricBucket:
    counted_unknown_error = (
        v.verdict is Verdict.NOT_ATTEMPTED and v.answerable and v.has_ground_truth
    )
    return MetricBucket(
        matches=1 if v.verdict is Verdict.MATCH else 0,
        mismatches=1 if v.verdict is Verdict.MISMATCH else 0,
        not_attempted=1 if v.verdict is Verdict.NOT_ATTEMPTED else 0,
        no_ground_truth=1 if v.verdict is Verdict.NO_GROUND_TRUTH else 0,
        unknown_errors=1 if counted_unknown_error else 0,
        n_answerable=1 if v.answerable else 0,
        n_attempted=1 if v.answerable and v.verdict is not Verdict.NOT_ATTEMPTED else 0,
    )


def _assemble(
    article_id: str,
    verdicts: list[JudgeVerdict],
    type_of_key: dict,
    n_articles: int = 1,
) -> EvalReport:
    overall = MetricBucket()
    by_type: dict[str, MetricBucket] = {}
    by_field: dict[str, MetricBucket] = {}
    for v in verdicts:
        bucket = _bucket_for_verdict(v)
        overall = overall + bucket
        type_name = type_of_key[(v.article_id, v.key)]
        by_type[type_name] = by_type.get(type_name, MetricBucket()) + bucket
        field_id, _, _ = v.key.partition("/")
        by_field[field_id] = by_field.get(field_id, MetricBucket()) + bucket
    return EvalReport(
        article_id=article_id,
        overall=overall,
        by_answer_type=by_type,
        by_field=by_field,
        verdicts=tuple(verdicts),
        n_articles=n_articles,
    )


def compute_report(
    form: PopulatedForm,
    gold_record: FraRecord | None,
    annotation: AnswerabilityAnnotation | None,
    crosswalk: dict[str, CrosswalkEntry],
    schema: FormSchema,
    judge_gateway: Backend | None = None,
    prompts_dir: str | Path | None = None,
    judge_concurrency: int = 1,
) -> EvalReport:
    """Judge every answer in one populated form and tally the metrics.

    Without an annotation, having ground truth stands in for answerability:
    every key the gold record answers counts as answerable, so coverage is
    measured against the gold-backed keys only.
    """
    if annotation is not None:
        stray = sorted(set(annotation.answerable) - set(form.answers))
        if stray:
            raise ValueError(f"annotation keys not in form: {stray}")

    keys = sorted(form.answers, key=_key_sort)
    jobs = []
    for key in keys:
        pred = form.answers[key]
        form_field, place = resolve_answer_key(schema, key)
        gold, semantics = gold_for(gold_record, key, crosswalk)
        answerable = (
            key in annotation.answerable if annotation is not None else gold is not None
        )
        jobs.append((key, pred, place, gold, semantics, answerable, form_field.name))

    def run(job) -> JudgeVerdict:
        key, pred, place, gold, semantics, answerable, question = job
        return judge_field(
            pred,
            gold,
            place,
            judge_gateway,
            semantics=semantics,
            answerable=answerable,
            article_id=form.article_id,
            question=question,
            prompts_dir=prompts_dir,
        )

    if judge_gateway is not None and judge_concurrency > 1:
        with ThreadPoolExecutor(max_workers=judge_concurrency) as pool:
            verdicts = list(pool.map(run, jobs))
    else:
        verdicts = [run(job) for job in jobs]

    type_of_key = {
        (form.article_id, key): ANSWER_TYPE_BUCKETS[
            resolve_answer_key(schema, key)[1].answer_type
        ]
        for key in keys
    }
    return _assemble(form.article_id, verdicts, type_of_key)


def _key_sort(key: str):
    field_id, _, place = key.partition("/")
    match = re.match(r"^(\d+)([A-Za-z]?)$", field_id)
    if match is None:
        return (1, 0, field_id, place)
    return (0, int(match.group(1)), match.group(2), place)


def aggregate_reports(reports: list[EvalReport], schema: FormSchema) -> EvalReport:
    """Micro-average reports by pooling all their verdicts."""
    if not reports:
        raise ValueError("aggregate_reports needs at least one report")
    verdicts: list[JudgeVerdict] = []
    type_of_key: dict = {}
    n_articles = 0
    for report in reports:
        n_articles += report.n_articles
        for v in report.verdicts:
            verdicts.append(v)
            _, place = resolve_answer_key(schema, v.key)
            type_of_key[(v.article_id, v.key)] = ANSWER_TYPE_BUCKETS[place.answer_type]
    return _assemble("aggregate", verdicts, type_of_key, n_articles=n_articles)


def _fmt(value: float, defined: bool) -> str:
    return f"{value:.3f}" if defined else "n/a"


def render_summary_table(rows: list[tuple[str, EvalReport]]) -> str:
    """Plain-text table: one row per pipeline variant, accuracy and coverage."""
    width = max([len("Pipeline")] + [len(name) for name, _ in rows]) + 2
    lines = [f"{'Pipeline':<{width}}{'Accuracy':>10}{'Coverage':>10}"]
    for name, report in rows:
        acc = _fmt(report.overall.accuracy, report.overall.accuracy_defined)
        cov = _fmt(report.overall.coverage, report.overall.coverage_defined)
        lines.append(f"{name:<{width}}{acc:>10}{cov:>10}")
    return "\n".join(lines) + "\n"


def render_answer_type_table(report: EvalReport) -> str:
    """Plain-text table: accuracy per answer type category."""
    lines = [f"{'Answer type':<16}{'Accuracy':>10}"]
    for name in ("SingleChoice", "Digit", "FreeText"):
        bucket = report.by_answer_type.get(name, MetricBucket())
        acc = _fmt(bucket.accuracy, bucket.accuracy_defined)
        lines.append(f"{BUCKET_DISPLAY_NAMES[name]:<16}{acc:>10}")
    return "\n".join(lines) + "\n"
