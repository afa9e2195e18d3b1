"""Matching news articles to incident records from a government CSV extract.

A record is a candidate for an article when the incident happened between
zero and seven days before the article ran, the states agree, and at least
one spatial key (county, city, or highway) agrees after normalization. When
a record has no city of its own, the article's city is compared against the
record's county instead, since small towns are often filed under the county.

Candidates are then ranked by a soft score: the fraction of corroborating
cues (person sex, person age within two years, killed count, injured count,
highway) that agree, counting only cues present on both sides. Ties on both
soft score and day offset leave the article ambiguous rather than guessing.
"""

from __future__ import annotations

import csv
import datetime as _dt
import logging
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

log = logging.getLogger(__name__)

MATCH_WINDOW_DAYS = 7
AGE_TOLERANCE_YEARS = 2

_PUNCT_RE = re.compile(r"[^a-z0-9 ]+")


class CsvFormatError(ValueError):
    """The CSV is missing mandatory columns or has no header at all."""


REQUIRED_COLUMNS = ("record_id", "date", "state", "county", "city", "killed", "injured")
OPTIONAL_COLUMNS = ("time", "highway", "user_sex", "user_age")


def normalize_place(text: str) -> str:
    """Case, whitespace, and punctuation insensitive form of a place name."""
    lowered = text.casefold()
    stripped = _PUNCT_RE.sub(" ", lowered)
    return " ".join(stripped.split())


@dataclass(frozen=True)
class FraRecord:
    record_id: str
    date: _dt.date
    state: str
    county: str
    city: str
    killed: int
    injured: int
    time: str | None = None
    highway: str | None = None
    user_sex: str | None = None
    user_age: int | None = None
    raw: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ArticleCues:
    """What the matcher knows about an article's incident."""

    article_id: str
    event_date: _dt.date
    state: str | None = None
    county: str | None = None
    city: str | None = None
    highway: str | None = None
    user_sex: str | None = None
    user_age: int | None = None
    killed: int | None = None
    injured: int | None = None

    @classmethod
    def from_meta(cls, article_id: str, meta: dict) -> "ArticleCues":
        def _int(name: str) -> int | None:
            value = meta.get(name)
            return None if value is None else int(value)

        return cls(
            article_id=article_id,
            event_date=_dt.date.fromisoformat(meta["published_date"]),
            state=meta.get("state"),
            county=meta.get("county"),
            city=meta.get("city"),
            highway=meta.get("highway"),
            user_sex=meta.get("user_sex"),
            user_age=_int("user_age"),
            killed=_int("killed"),
            injured=_int("injured"),
        )


class MatchDecision(str, Enum):
    MATCHED = "matched"
    AMBIGUOUS = "ambiguous"
    UNMATCHED = "unmatched"


@dataclass(frozen=True)
class MatchCandidate:
    article_id: str
    record_id: str
    day_offset: int
    spatial_matches: tuple[str, ...]
    soft_score: float
    soft_cues_used: int


@dataclass(frozen=True)
class MatchResult:
    article_id: str
    decision: MatchDecision
    best: MatchCandidate | None
    candidates: tuple[MatchCandidate, ...]


@dataclass(frozen=True)
class LinkageReport:
    matched: dict
    ambiguous: tuple[str, ...]
    unmatched: tuple[str, ...]
    results: tuple[MatchResult, ...]

    def to_payload(self) -> dict:
        return {
            "matched": {aid: self.matched[aid] for aid in sorted(self.matched)},
            "ambiguous": sorted(self.ambiguous),
            "unmatched": sorted(self.unmatched),
            "candidates": {
                result.article_id: [
                    {
                        "record_id": c.record_id,
                        "day_offset": c.day_offset,
                        "spatial_matches": list(c.spatial_matches),
                        "soft_score": c.soft_score,
                        "soft_cues_used": c.soft_cues_used,
                    }
                    for c in result.candidates
                ]
                for result in self.results
            },
        }


def _parse_date(text: str) -> _dt.date:
    text = text.strip()
    try:
        return _dt.date.fromisoformat(text)
    except ValueError:
        return _dt.datetime.strptime(text, "%m/%d/%Y").date()


def load_fra_csv(path: str | Path) -> list[FraRecord]:
    """Load incident records, skipping malformed rows with a warning each."""
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames
        if header is None:
            raise CsvFormatError(f"{path}: empty file, no header row")
        missing = [col for col in REQUIRED_COLUMNS if col not in header]
        if missing:
            raise CsvFormatError(f"{path}: missing required columns: {missing}")
        records: list[FraRecord] = []
        seen: set[str] = set()
        for line_no, row in enumerate(reader, start=2):
            try:
                record = _parse_row(row)
            except (ValueError, KeyError) as exc:
                log.warning("%s line %d: skipping row: %s", path, line_no, exc)
                continue
            if record.record_id in seen:
                log.warning(
                    "%s line %d: skipping duplicate record_id %r",
                    path,
                    line_no,
                    record.record_id,
                )
                continue
            seen.add(record.record_id)
            records.append(record)
    return records


def _parse_row(row: dict) -> FraRecord:
    record_id = (row["record_id"] or "").strip()
    if not record_id:
        raise ValueError("empty record_id")
    age_text = (row.get("user_age") or "").strip()
    return FraRecord(
        record_id=record_id,
        date=_parse_date(row["date"]),
        state=(row["state"] or "").strip(),
        county=(row["county"] or "").strip(),
        city=(row["city"] or "").strip(),
        killed=int(row["killed"]),
        injured=int(row["injured"]),
        time=(row.get("time") or "").strip() or None,
        highway=(row.get("highway") or "").strip() or None,
        user_sex=(row.get("user_sex") or "").strip() or None,
        user_age=int(age_text) if age_text else None,
        raw={key: (value or "") for key, value in row.items() if key is not None},
    )


def _spatial_matches(cues: ArticleCues, record: FraRecord) -> tuple[str, ...]:
    hits = []
    if cues.county and record.county and normalize_place(cues.county) == normalize_place(record.county):
        hits.append("county")
    if cues.city:
        if record.city:
            if normalize_place(cues.city) == normalize_place(record.city):
                hits.append("city")
        elif record.county and normalize_place(cues.city) == normalize_place(record.county):
            hits.append("city")
    if cues.highway and record.highway and normalize_place(cues.highway) == normalize_place(record.highway):
        hits.append("highway")
    return tuple(hits)


def _soft_score(cues: ArticleCues, record: FraRecord) -> tuple[float, int]:
    agreements = []
    if cues.user_sex is not None and record.user_sex is not None:
        agreements.append(cues.user_sex.strip().casefold() == record.user_sex.strip().casefold())
    if cues.user_age is not None and record.user_age is not None:
        agreements.append(abs(cues.user_age - record.user_age) <= AGE_TOLERANCE_YEARS)
    if cues.killed is not None:
        agreements.append(cues.killed == record.killed)
    if cues.injured is not None:
        agreements.append(cues.injured == record.injured)
    if cues.highway is not None and record.highway is not None:
        agreements.append(normalize_place(cues.highway) == normalize_place(record.highway))
    if not agreements:
        return 0.0, 0
    return sum(agreements) / len(agreements), len(agreements)


def match_article(cues: ArticleCues, records: list[FraRecord]) -> MatchResult:
    """Rank candidate records for one article and decide the link."""
    candidates = []
    for record in records:
        day_offset = (cues.event_date - record.date).days
        if not 0 <= day_offset <= MATCH_WINDOW_DAYS:
            continue
        if cues.state is None or record.state.casefold() != cues.state.strip().casefold():
            continue
        spatial = _spatial_matches(cues, record)
        if not spatial:
            continue
        score, cues_used = _soft_score(cues, record)
        candidates.append(
            MatchCandidate(
                article_id=cues.article_id,
                record_id=record.record_id,
                day_offset=day_offset,
                spatial_matches=spatial,
                soft_score=score,
                soft_cues_used=cues_used,
            )
        )
    candidates.sort(key=lambda c: (-c.soft_score, c.day_offset, c.record_id))
    ordered = tuple(candidates)
    if not ordered:
        return MatchResult(cues.article_id, MatchDecision.UNMATCHED, None, ordered)
    if len(ordered) > 1:
        top, runner = ordered[0], ordered[1]
        if (top.soft_score, top.day_offset) == (runner.soft_score, runner.day_offset):
            return MatchResult(cues.article_id, MatchDecision.AMBIGUOUS, None, ordered)
    return MatchResult(cues.article_id, MatchDecision.MATCHED, ordered[0], ordered)


def build_linkage_report(
    articles: list[ArticleCues], records: list[FraRecord]
) -> LinkageReport:
    results = tuple(match_article(cues, records) for cues in articles)
    matched = {
        r.article_id: r.best.record_id for r in results if r.decision is MatchDecision.MATCHED
    }
    ambiguous = tuple(
        r.article_id for r in results if r.decision is MatchDecision.AMBIGUOUS
    )
    unmatched = tuple(
        r.article_id for r in results if r.decision is MatchDecision.UNMATCHED
    )
    return LinkageReport(
        matched=matched, ambiguous=ambiguous, unmatched=unmatched, results=results
    )
