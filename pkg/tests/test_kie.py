import copy
import json
import random

import pytest

from form57.gateway import ScriptedBackend
from form57.kie import (
    DocumentImage,
    KiePipelineConfig,
    SchemaMismatch,
    ValidationRetriesExhausted,
    count_kie_errors,
    extract_json,
    run_kie,
)
from form57.schema import dumps_document, parse_schema

IMAGE = DocumentImage(data=b"not a real scan")


def load_tape(fixtures_dir):
    path = fixtures_dir / "tapes" / "transcribe.json"
    return json.loads(path.read_text(encoding="utf-8"))


def cfg(**kwargs):
    defaults = dict(n_samples=5, max_concurrency=1)
    defaults.update(kwargs)
    return KiePipelineConfig(**defaults)


def test_all_valid_run_uses_exactly_2n_plus_2_calls(fixtures_dir, schema_text, grouping):
    backend = ScriptedBackend(load_tape(fixtures_dir))
    result = run_kie(backend, IMAGE, cfg())
    assert backend.calls == 12
    assert result.telemetry.gateway_calls == 12
    assert result.telemetry.transcription_sample_attempts == (1, 1, 1, 1, 1)
    assert result.telemetry.transcription_merge_attempts == 1
    assert result.telemetry.grouping_sample_attempts == (1, 1, 1, 1, 1)
    assert result.telemetry.grouping_merge_attempts == 1
    assert dumps_document(result.t_final.payload) == schema_text
    assert result.g_final.assignment.to_payload() == grouping.to_payload()


def test_invalid_sample_consumes_a_retry_and_still_validates(fixtures_dir):
    tape = load_tape(fixtures_dir)
    # first transcriber reply is garbage; the retry must carry feedback
    tape.insert(0, {"match": {"role": "transcriber"}, "response": "not json at all"})
    tape[1]["match"] = {"role": "transcriber", "contains": "failed validation"}
    backend = ScriptedBackend(tape)
    result = run_kie(backend, IMAGE, cfg())
    assert backend.calls == 13
    assert result.telemetry.transcription_sample_attempts == (2, 1, 1, 1, 1)
    assert result.telemetry.gateway_calls == 13
    assert parse_schema(result.t_final.payload).field_count == 66


def test_structurally_invalid_sample_also_retries(fixtures_dir, schema_text):
    doc = json.loads(schema_text)
    doc[0].pop("name")
    tape = load_tape(fixtures_dir)
    tape.insert(0, {"match": {"role": "transcriber"}, "response": dumps_document(doc)})
    backend = ScriptedBackend(tape)
    result = run_kie(backend, IMAGE, cfg())
    assert result.telemetry.transcription_sample_attempts == (2, 1, 1, 1, 1)


def test_validation_retries_exhausted_names_the_phase():
    budget = 3
    backend = ScriptedBackend([{"response": "junk"}] * budget)
    with pytest.raises(ValidationRetriesExhausted) as excinfo:
        run_kie(backend, IMAGE, cfg(n_samples=1, max_validation_retries=budget))
    err = excinfo.value
    assert err.phase == "transcription_sample"
    assert err.attempts == budget
    assert backend.calls == budget
    assert not err.last_result.ok


def test_merge_phase_exhaustion(fixtures_dir, schema_text):
    budget = 2
    tape = [{"match": {"role": "transcriber"}, "response": schema_text}]
    tape += [{"match": {"role": "merger"}, "response": "{]"}] * budget
    backend = ScriptedBackend(tape)
    with pytest.raises(ValidationRetriesExhausted) as excinfo:
        run_kie(backend, IMAGE, cfg(n_samples=1, max_validation_retries=budget))
    assert excinfo.value.phase == "transcription_merge"


def test_grouping_sample_exhaustion(fixtures_dir, schema_text):
    budget = 2
    tape = [
        {"match": {"role": "transcriber"}, "response": schema_text},
        {"match": {"role": "merger"}, "response": schema_text},
    ]
    tape += [{"match": {"role": "grouper"}, "response": '{"g": ["999"]}'}] * budget
    backend = ScriptedBackend(tape)
    with pytest.raises(ValidationRetriesExhausted) as excinfo:
        run_kie(backend, IMAGE, cfg(n_samples=1, max_validation_retries=budget))
    err = excinfo.value
    assert err.phase == "grouping_sample"
    # the transcription part had already succeeded
    assert err.t_final is not None


def test_concurrent_run_matches_sequential(fixtures_dir):
    sequential = run_kie(ScriptedBackend(load_tape(fixtures_dir)), IMAGE, cfg())
    concurrent = run_kie(
        ScriptedBackend(load_tape(fixtures_dir)), IMAGE, cfg(max_concurrency=4)
    )
    assert concurrent.t_final.payload == sequential.t_final.payload
    assert concurrent.g_final.assignment == sequential.g_final.assignment


class _Recorder:
    def __init__(self, inner):
        self.inner = inner
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)


def test_sampling_and_merge_temperatures(fixtures_dir):
    backend = _Recorder(ScriptedBackend(load_tape(fixtures_dir)))
    run_kie(backend, IMAGE, cfg(sampling_temperature=0.7, merge_temperature=0.0))
    temps = [request.temperature for request in backend.requests]
    assert temps[:5] == [0.7] * 5
    assert temps[5] == 0.0
    assert temps[6:11] == [0.7] * 5
    assert temps[11] == 0.0


def test_config_rejects_nonsense():
    with pytest.raises(ValueError):
        KiePipelineConfig(n_samples=0)
    with pytest.raises(ValueError):
        KiePipelineConfig(max_validation_retries=0)


@pytest.mark.parametrize(
    "text,expected",
    [
        ('{"a": 1}', {"a": 1}),
        ('  [1, 2]  ', [1, 2]),
        ('prose\n```json\n{"a": 1}\n```\nmore', {"a": 1}),
        ('```\n[{"x": 2}]\n```', [{"x": 2}]),
        ("no json here", None),
        ("{broken", None),
    ],
)
def test_extract_json(text, expected):
    assert extract_json(text) == expected


# --- transcription error counting ----------------------------------------

MUTATIONS = ("rename_field", "flip_type", "relabel_choice", "drop_choice", "add_place")


def _mutate_field(entry: dict, kind: str) -> bool:
    """Apply one value-level defect to a field dict; True when it applied."""
    places = entry["answer_places"]
    first = places[next(iter(places))]
    if kind == "rename_field":
        entry["name"] = entry["name"] + " damaged"
        return True
    if kind == "flip_type":
        if first["answer_type"] == "choice":
            return False
        first["answer_type"] = "digit" if first["answer_type"] == "text" else "text"
        return True
    if kind == "relabel_choice":
        for place in places.values():
            if place["answer_type"] == "choice":
                code = next(iter(place["choices"]))
                place["choices"][code] = place["choices"][code] + " altered"
                return True
        return False
    if kind == "drop_choice":
        for place in places.values():
            if place["answer_type"] == "choice" and len(place["choices"]) > 1:
                place["choices"].pop(next(iter(place["choices"])))
                return True
        return False
    if kind == "add_place":
        places["Extra"] = {"answer_type": "digit"}
        return True
    raise AssertionError(kind)


def inject_errors(doc: list, k: int, seed: int) -> list:
    """Damage exactly k distinct fields of a transcription document."""
    mutated = copy.deepcopy(doc)
    rng = random.Random(seed)
    order = list(range(len(mutated)))
    rng.shuffle(order)
    damaged = 0
    kinds = iter(())
    for index in order:
        if damaged == k:
            break
        for kind in rng.sample(MUTATIONS, len(MUTATIONS)):
            if _mutate_field(mutated[index], kind):
                damaged += 1
                break
        else:
            raise AssertionError("no mutation applied")
    assert damaged == k
    return mutated


@pytest.mark.parametrize("k", [0, 1, 2, 5, 10])
def test_injected_defects_count_exactly(schema_text, schema, k):
    doc = json.loads(schema_text)
    mutated = inject_errors(doc, k, seed=20240300 + k)
    report = count_kie_errors(parse_schema(mutated), schema)
    assert report.errors == k
    assert len(report.erroneous_field_ids) == k
    assert report.total_fields == 66
    assert report.error_rate == pytest.approx(k / 66)


def test_two_defects_in_one_field_count_once(schema_text, schema):
    doc = json.loads(schema_text)
    doc[0]["name"] = doc[0]["name"] + " damaged"
    doc[0]["answer_places"]["value"]["answer_type"] = "digit"
    report = count_kie_errors(parse_schema(doc), schema)
    assert report.errors == 1
    assert report.erroneous_field_ids == frozenset({"1"})


def test_cosmetic_whitespace_is_not_an_error(schema_text, schema):
    doc = json.loads(schema_text)
    doc[0]["name"] = "  " + doc[0]["name"].replace(" ", "  ") + " "
    report = count_kie_errors(parse_schema(doc), schema)
    assert report.errors == 0


def test_differing_field_ids_raise_schema_mismatch(schema_text, schema):
    doc = json.loads(schema_text)
    del doc[65]
    with pytest.raises(SchemaMismatch):
        count_kie_errors(parse_schema(doc), schema)
