import json
from decimal import Decimal

import pytest

from form57.gateway import ScriptedBackend
from form57.qa import (
    AnswerFormatError,
    ArticleDoc,
    BatchingMode,
    ChoiceValue,
    DigitValue,
    PopulatedForm,
    TextValue,
    Unknown,
    UNKNOWN_TOKEN,
    build_qa_prompt,
    list_article_ids,
    parse_answers,
    parse_clock,
    parse_number,
    populate_form,
)

ARTICLE = ArticleDoc(article_id="t1", body="A short crossing report.")


@pytest.mark.parametrize(
    "text,minutes",
    [
        ("14:30", 870),
        ("2:30 PM", 870),
        ("2:30 p.m.", 870),
        ("12:05 AM", 5),
        ("12:30 PM", 750),
        ("00:00", 0),
        ("23:59", 1439),
        ("7:45", 465),
        ("1430", 870),
        ("630", 390),
        ("14", 840),
        ("2 PM", 840),
    ],
)
def test_parse_clock_accepts(text, minutes):
    assert parse_clock(text) == minutes


@pytest.mark.parametrize("text", ["24:00", "25:99", "13:75", "99", "2460", "", "noon-ish"])
def test_parse_clock_rejects(text):
    assert parse_clock(text) is None


@pytest.mark.parametrize(
    "text,value",
    [
        ("15", Decimal("15")),
        ("about 15 mph", Decimal("15")),
        ("1,200 feet", Decimal("1200")),
        ("-3.5", Decimal("-3.5")),
    ],
)
def test_parse_number(text, value):
    assert parse_number(text) == value


def test_parse_number_none():
    assert parse_number("no digits") is None


def _reply(payload) -> str:
    return json.dumps(payload)


def test_parse_answers_exact_key_set(schema):
    keys = ["9/value", "10/value"]
    parsed = parse_answers(_reply({"9/value": "Kern", "10/value": "CA"}), schema, keys)
    assert parsed["9/value"].value == TextValue("Kern")
    assert parsed["10/value"].attempted

    with pytest.raises(AnswerFormatError, match="missing"):
        parse_answers(_reply({"9/value": "Kern"}), schema, keys)
    with pytest.raises(AnswerFormatError, match="unexpected"):
        parse_answers(
            _reply({"9/value": "x", "10/value": "y", "11/value": "z"}), schema, keys
        )
    with pytest.raises(AnswerFormatError):
        parse_answers(_reply(["not", "an", "object"]), schema, keys)
    with pytest.raises(AnswerFormatError):
        parse_answers("total garbage", schema, keys)


def test_parse_answers_accepts_fenced_json(schema):
    text = 'Here you go:\n```json\n{"9/value": "Kern"}\n```'
    parsed = parse_answers(text, schema, ["9/value"])
    assert parsed["9/value"].value == TextValue("Kern")


def test_value_coercions(schema):
    keys = ["15/value", "19/value", "21/value", "6/Time", "30/value", "58/value"]
    reply = {
        "15/value": "North",          # choice by label
        "19/value": 34,               # digit from JSON number
        "21/value": "about 15 mph",   # digit from prose
        "6/Time": "2:30 PM",          # clock composite
        "30/value": {"value": "Fog"}, # wrapped object
        "58/value": "  narrative  ",  # text is stripped
    }
    parsed = parse_answers(_reply(reply), schema, keys)
    assert parsed["15/value"].value == ChoiceValue("N")
    assert parsed["19/value"].value == DigitValue(Decimal(34))
    assert parsed["21/value"].value == DigitValue(Decimal(15))
    assert parsed["6/Time"].value == DigitValue(Decimal(1430))
    assert parsed["6/Time"].raw_model_text == "2:30 PM"
    assert parsed["30/value"].value == ChoiceValue("4")
    assert parsed["58/value"].value == TextValue("narrative")


def test_unmappable_values_become_unknown(schema):
    keys = ["15/value", "19/value", "20/value"]
    reply = {
        "15/value": "Sideways",   # no such choice
        "19/value": "no digits",  # unparseable digit
        "20/value": UNKNOWN_TOKEN,
    }
    parsed = parse_answers(_reply(reply), schema, keys)
    for key in keys:
        assert parsed[key].value == Unknown()
        assert not parsed[key].attempted
    # the raw text is preserved for review even when unmapped
    assert parsed["15/value"].raw_model_text == "Sideways"


@pytest.mark.parametrize("raw", [None, "", "unknown", "UNKNOWN", " Unknown "])
def test_unknown_spellings(schema, raw):
    parsed = parse_answers(_reply({"19/value": raw}), schema, ["19/value"])
    assert parsed["19/value"].value == Unknown()


def test_question_lines_enumerate_choices(schema, grouping):
    prompt = build_qa_prompt(ARTICLE, schema, ["6/Time", "6/AM-PM", "20/value"])
    assert "[6/Time]" in prompt
    assert "[6/AM-PM]" in prompt
    assert "M = Male" in prompt
    assert ARTICLE.body in prompt


def _tape_for(schema, grouping, mode):
    """One canned reply per batch, echoing Unknown for every key."""
    from form57.qa import _batches_for_mode

    entries = []
    for keys in _batches_for_mode(schema, grouping, mode):
        entries.append(
            {
                "match": {"role": "qa"},
                "response": json.dumps({k: UNKNOWN_TOKEN for k in keys}),
            }
        )
    return entries


@pytest.mark.parametrize(
    "mode,expected_calls",
    [
        (BatchingMode.SINGLE, 66),
        (BatchingMode.ALL, 1),
        (BatchingMode.GROUP, 7),
    ],
)
def test_call_count_per_mode(schema, grouping, mode, expected_calls):
    backend = ScriptedBackend(_tape_for(schema, grouping, mode))
    form, telemetry = populate_form(backend, ARTICLE, schema, grouping, mode=mode)
    assert backend.calls == expected_calls
    assert telemetry.calls == expected_calls
    assert len(telemetry.batches) == expected_calls
    assert len(form.answers) == 75


def test_group_mode_requires_grouping(schema):
    with pytest.raises(ValueError):
        populate_form(ScriptedBackend([]), ARTICLE, schema, None, mode=BatchingMode.GROUP)


def test_group_batches_follow_grouping_order(schema, grouping):
    from form57.qa import _batches_for_mode

    batches = _batches_for_mode(schema, grouping, BatchingMode.GROUP)
    assert len(batches) == 7
    first = batches[0]
    # first group is "time & location"; its first field is 4
    assert first[0].startswith("4/")
    flat = [k for batch in batches for k in batch]
    assert len(flat) == 75 and len(set(flat)) == 75


def test_malformed_batch_reply_raises_without_retry(schema, grouping):
    tape = [{"match": {"role": "qa"}, "response": "not json"}]
    backend = ScriptedBackend(tape)
    with pytest.raises(AnswerFormatError):
        populate_form(backend, ARTICLE, schema, grouping, mode=BatchingMode.ALL)
    # exactly one gateway call: QA replies are never retried for format
    assert backend.calls == 1


def test_populated_form_payload_round_trip(schema, grouping):
    backend = ScriptedBackend(_tape_for(schema, grouping, BatchingMode.ALL))
    form, _ = populate_form(backend, ARTICLE, schema, grouping, mode=BatchingMode.ALL)
    payload = form.to_payload()
    assert payload["article_id"] == "t1"
    back = PopulatedForm.from_payload(payload)
    # keys carry identity; the payload is a fixed point of the round trip
    assert back.to_payload() == payload
    assert set(back.answers) == set(form.answers)
    for key, answer in form.answers.items():
        assert back.answers[key].value == answer.value
        assert back.answers[key].key == answer.key


def test_article_loading(tmp_path):
    (tmp_path / "x1.txt").write_text("body text", encoding="utf-8")
    (tmp_path / "x1.meta.json").write_text(
        json.dumps({"published_date": "2024-03-15", "state": "CA"}), encoding="utf-8"
    )
    (tmp_path / "x2.txt").write_text("no meta", encoding="utf-8")
    assert list_article_ids(tmp_path) == ["x1", "x2"]
    doc = ArticleDoc.load(tmp_path, "x1")
    assert doc.body == "body text"
    assert doc.published_date.isoformat() == "2024-03-15"
    assert doc.state == "CA"
    assert ArticleDoc.load(tmp_path, "x2").meta == {}
