"""Acceptance suite: one test and one printed verdict line per criterion.

Each test prints "PASS  <criterion>" through the capture plumbing on success,
or "FAIL  <criterion>" before the assertion error surfaces, so a plain pytest
run shows one line per criterion. Tolerances used: metric recount 1e-9; the
pipeline-structure runtime bound is 1 second.
"""

import contextlib
import copy
import datetime as dt
import json
import random
import sys
import time
from decimal import Decimal
from pathlib import Path

import pytest

from form57.cli import main as cli_main
from form57.evaluation import (
    AnswerabilityAnnotation,
    Rule,
    Verdict,
    compute_report,
    judge_field,
    load_crosswalk,
)
from form57.gateway import ScriptedBackend
from form57.kie import (
    DocumentImage,
    KiePipelineConfig,
    ValidationRetriesExhausted,
    count_kie_errors,
    run_kie,
)
from form57.linkage import (
    ArticleCues,
    MATCH_WINDOW_DAYS,
    MatchDecision,
    build_linkage_report,
    load_fra_csv,
    match_article,
)
from form57.qa import (
    ChoiceValue,
    DigitValue,
    FieldAnswer,
    PopulatedForm,
    TextValue,
    Unknown,
)
from form57.schema import (
    AnswerPlace,
    AnswerType,
    parse_schema,
    dumps_document,
    serialize_schema,
    validate_groups_format,
    validate_transcription_format,
)

from test_kie import inject_errors

A_ID = "crossing-accident-bakersfield"
B_ID = "train-strikes-van-marion"


@contextlib.contextmanager
def criterion(capsys, label):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"FAIL  {label}", file=sys.stderr)
        raise
    with capsys.disabled():
        print(f"PASS  {label}")


def test_pipeline_structure(fixtures_dir, capsys):
    with criterion(capsys, "[PRIMARY] Algorithm-1 structure: 2N+2 calls, retry behavior, <1s"):
        tape = json.loads(
            (fixtures_dir / "tapes" / "transcribe.json").read_text(encoding="utf-8")
        )
        image = DocumentImage(data=(fixtures_dir / "form.png").read_bytes())
        cfg = KiePipelineConfig(n_samples=5, max_concurrency=1)

        started = time.perf_counter()
        backend = ScriptedBackend(tape)
        result = run_kie(backend, image, cfg)
        elapsed = time.perf_counter() - started
        assert backend.calls == 12, "all-valid N=5 run must use exactly 2N+2 calls"
        assert validate_transcription_format(result.t_final.payload).ok
        schema = result.t_final.to_schema()
        assert validate_groups_format(result.g_final.assignment.to_payload(), schema).ok
        assert elapsed < 1.0, f"pipeline took {elapsed:.3f}s"

        # one injected invalid sample: attempts_used increments, output still valid
        flawed = [{"match": {"role": "transcriber"}, "response": "not json"}] + tape
        backend = ScriptedBackend(flawed)
        retried = run_kie(backend, image, cfg)
        assert retried.telemetry.transcription_sample_attempts == (2, 1, 1, 1, 1)
        assert backend.calls == 13
        assert validate_transcription_format(retried.t_final.payload).ok

        # a full budget of consecutive invalid outputs exhausts the retries
        budget = 5
        dead = ScriptedBackend([{"response": "junk"}] * budget)
        dead_cfg = KiePipelineConfig(
            n_samples=1, max_validation_retries=budget, max_concurrency=1
        )
        with pytest.raises(ValidationRetriesExhausted) as excinfo:
            run_kie(dead, image, dead_cfg)
        assert excinfo.value.attempts == budget


def test_schema_fidelity(fixtures_dir, schema_text, capsys):
    from test_schema import DEFECTS

    with criterion(capsys, "[PRIMARY] Schema fidelity: byte-stable round-trip, defect catalog rejected"):
        doc = json.loads(schema_text)
        parsed = parse_schema(doc)
        assert parsed.field_count == 66
        assert dumps_document(serialize_schema(parsed)) == schema_text

        assert len(DEFECTS) >= 10, "catalog must cover at least 10 defect classes"
        rejected = 0
        for name, mutate in sorted(DEFECTS.items()):
            damaged = mutate(json.loads(schema_text))
            assert not validate_transcription_format(damaged).ok, name
            rejected += 1
        assert rejected == len(DEFECTS), "every cataloged defect must be rejected"

        # grouping must be an exact partition of the field ids
        grouping = json.loads(
            (fixtures_dir / "schema" / "grouping.json").read_text(encoding="utf-8")
        )
        assert validate_groups_format(grouping, parsed).ok
        non_partition = copy.deepcopy(grouping)
        non_partition["casualties"].append("4")  # 4 is already in time & location
        assert not validate_groups_format(non_partition, parsed).ok
        foreign = copy.deepcopy(grouping)
        foreign["casualties"].append("99")
        assert not validate_groups_format(foreign, parsed).ok


def test_kie_error_counting(schema_text, schema, capsys):
    with criterion(capsys, "[PRIMARY] KIE error counting: k planted defects count exactly k, k in {0,1,2,5,10}"):
        for k in (0, 1, 2, 5, 10):
            damaged = inject_errors(json.loads(schema_text), k, seed=570000 + k)
            report = count_kie_errors(parse_schema(damaged), schema)
            assert report.errors == k, f"k={k} counted {report.errors}"
            assert report.total_fields == 66
        # several defects inside one field still count once
        doc = json.loads(schema_text)
        doc[4]["name"] += " x"
        doc[4]["answer_places"]["Month"]["answer_type"] = "text"
        assert count_kie_errors(parse_schema(doc), schema).errors == 1


def _random_triple(schema, crosswalk, gold_record, rng, trial):
    answers = {}
    answerable = set()
    for key, field, place in schema.answer_keys():
        roll = rng.random()
        if roll < 0.3:
            value, raw = Unknown(), "Unknown"
        elif place.answer_type is AnswerType.CHOICE:
            code = rng.choice(sorted(place.choices))
            value, raw = ChoiceValue(code), code
        elif place.answer_type is AnswerType.DIGIT:
            n = rng.randint(0, 99)
            value, raw = DigitValue(Decimal(n)), str(n)
        else:
            raw = rng.choice(["Kern", "Jameson Road", "CA", "freight train", "x y z"])
            value = TextValue(raw)
        answers[key] = FieldAnswer(field_id=field.field_id, answer_place=place.name,
                                   value=value, raw_model_text=raw)
        if rng.random() < 0.5:
            answerable.add(key)
    form = PopulatedForm(article_id=f"triple-{trial}", answers=answers)
    annotation = AnswerabilityAnnotation(
        article_id=form.article_id, answerable=frozenset(answerable)
    )
    return form, annotation


def test_metric_oracle_equivalence(fixtures_dir, schema, capsys):
    with criterion(capsys, "[PRIMARY] Metric oracle: 50 random triples recount within 1e-9, trivial cases hold"):
        crosswalk = load_crosswalk(fixtures_dir / "e2e" / "crosswalk.json")
        records = {r.record_id: r for r in load_fra_csv(fixtures_dir / "e2e" / "records.csv")}
        gold = records["R2024-0311"]
        rng = random.Random(66)
        for trial in range(50):
            form, annotation = _random_triple(schema, crosswalk, gold, rng, trial)
            report = compute_report(form, gold, annotation, crosswalk, schema)
            verdicts = report.verdicts
            matches = sum(1 for v in verdicts if v.verdict is Verdict.MATCH)
            mismatches = sum(1 for v in verdicts if v.verdict is Verdict.MISMATCH)
            answerable = sum(1 for v in verdicts if v.answerable)
            attempted = sum(
                1 for v in verdicts
                if v.answerable and v.verdict is not Verdict.NOT_ATTEMPTED
            )
            overall = report.overall
            assert overall.matches == matches and overall.mismatches == mismatches
            assert overall.n_answerable == answerable and overall.n_attempted == attempted
            if matches + mismatches:
                assert abs(overall.accuracy - matches / (matches + mismatches)) <= 1e-9
            else:
                assert not overall.accuracy_defined
            if answerable:
                assert abs(overall.coverage - attempted / answerable) <= 1e-9
            else:
                assert not overall.coverage_defined

        # trivial case: 9 of 10 answerable keys attempted -> coverage 0.9
        keys = [key for key, _, _ in schema.answer_keys()][:10]
        answers = {}
        for i, key in enumerate(keys):
            field_id, _, place = key.partition("/")
            value = Unknown() if i == 0 else TextValue("anything")
            answers[key] = FieldAnswer(field_id=field_id, answer_place=place,
                                       value=value,
                                       raw_model_text="Unknown" if i == 0 else "anything")
        form = PopulatedForm(article_id="nine-of-ten", answers=answers)
        annotation = AnswerabilityAnnotation(article_id=form.article_id,
                                             answerable=frozenset(keys))
        report = compute_report(form, None, annotation, {}, schema)
        assert abs(report.overall.coverage - 0.9) <= 1e-9

        # trivial case: an all-Unknown form covers nothing and has no accuracy
        all_unknown = PopulatedForm(
            article_id="all-unknown",
            answers={
                key: FieldAnswer(field_id=key.partition("/")[0],
                                 answer_place=key.partition("/")[2],
                                 value=Unknown(), raw_model_text="Unknown")
                for key in keys
            },
        )
        report = compute_report(all_unknown, None, annotation, {}, schema)
        assert report.overall.coverage == 0.0
        assert report.overall.accuracy == 0.0
        assert not report.overall.accuracy_defined


def test_judging_rules(capsys):
    with criterion(capsys, "[PRIMARY] Judging rules: time/speed boundaries, symmetry, Unknown -> NotAttempted"):
        digit_place = AnswerPlace(name="value", answer_type=AnswerType.DIGIT, choices={})

        def digit(n):
            return FieldAnswer(field_id="21", answer_place="value",
                               value=DigitValue(Decimal(n)), raw_model_text=str(n))

        def clock(minutes):
            text = f"{minutes // 60:02d}:{minutes % 60:02d}"
            return FieldAnswer(field_id="6", answer_place="Time",
                               value=DigitValue(Decimal(f"{minutes // 60}{minutes % 60:02d}")),
                               raw_model_text=text)

        base = 14 * 60 + 30
        assert judge_field(clock(base + 60), "14:30", digit_place, semantics="time").verdict is Verdict.MATCH
        assert judge_field(clock(base + 61), "14:30", digit_place, semantics="time").verdict is Verdict.MISMATCH
        assert judge_field(digit(50), "40", digit_place, semantics="speed").verdict is Verdict.MATCH
        assert judge_field(digit(51), "40", digit_place, semantics="speed").verdict is Verdict.MISMATCH

        rng = random.Random(5757)
        for _ in range(500):
            a, b = rng.randint(0, 300), rng.randint(0, 300)
            for semantics in (None, "speed"):
                one = judge_field(digit(a), str(b), digit_place, semantics=semantics).verdict
                other = judge_field(digit(b), str(a), digit_place, semantics=semantics).verdict
                assert one is other, f"asymmetric for {a} vs {b} ({semantics})"
        for _ in range(500):
            a, b = rng.randint(0, 1439), rng.randint(0, 1439)
            fmt = lambda m: f"{m // 60:02d}:{m % 60:02d}"
            pa = FieldAnswer(field_id="6", answer_place="Time",
                             value=DigitValue(Decimal(1)), raw_model_text=fmt(a))
            pb = FieldAnswer(field_id="6", answer_place="Time",
                             value=DigitValue(Decimal(1)), raw_model_text=fmt(b))
            one = judge_field(pa, fmt(b), digit_place, semantics="time").verdict
            other = judge_field(pb, fmt(a), digit_place, semantics="time").verdict
            assert one is other

        unknown = FieldAnswer(field_id="21", answer_place="value",
                              value=Unknown(), raw_model_text="Unknown")
        for gold in ("40", None, "", "garbage"):
            for semantics in (None, "speed", "time"):
                verdict = judge_field(unknown, gold, digit_place, semantics=semantics)
                assert verdict.verdict is Verdict.NOT_ATTEMPTED
                assert verdict.rule_applied is Rule.UNKNOWN_SKIP


def test_linkage_oracle(fixtures_dir, capsys):
    with criterion(capsys, "[PRIMARY] Linkage oracle: hand-built mapping exact, window holds under 1000 fuzzed dates"):
        records = load_fra_csv(fixtures_dir / "linkage" / "records.csv")
        assert len(records) == 20
        articles_dir = fixtures_dir / "linkage" / "articles"
        cues = [
            ArticleCues.from_meta(
                p.name.removesuffix(".meta.json"),
                json.loads(p.read_text(encoding="utf-8")),
            )
            for p in sorted(articles_dir.glob("*.meta.json"))
        ]
        assert len(cues) == 10
        payload = build_linkage_report(cues, records).to_payload()
        assert payload["matched"] == {
            "a01": "R01", "a03": "R04", "a04": "R05", "a07": "R09",
            "a08": "R11", "a09": "R12", "a10": "R14",
        }
        assert payload["ambiguous"] == ["a02"]
        assert payload["unmatched"] == ["a05", "a06"]

        rng = random.Random(20240307)
        epoch = dt.date(2024, 1, 1)
        base = cues[0]
        for _ in range(1000):
            fuzzed = dt.timedelta(days=rng.randint(0, 365))
            probe = ArticleCues(
                article_id=base.article_id,
                event_date=epoch + fuzzed,
                state=base.state,
                county=base.county,
                city=base.city,
                highway=base.highway,
                user_sex=base.user_sex,
                user_age=base.user_age,
                killed=base.killed,
                injured=base.injured,
            )
            result = match_article(probe, records)
            if result.decision is MatchDecision.MATCHED:
                assert 0 <= result.best.day_offset <= MATCH_WINDOW_DAYS
            for cand in result.candidates:
                assert 0 <= cand.day_offset <= MATCH_WINDOW_DAYS


def test_end_to_end_golden_run(fixtures_dir, tmp_path, capsys):
    with criterion(capsys, "[PRIMARY] End-to-end golden run: byte-identical artifacts, call counts per mode"):
        out = tmp_path / "e2e"
        golden = fixtures_dir / "golden"

        rc = cli_main([
            "transcribe",
            "--image", str(fixtures_dir / "form.png"),
            "--backend", f"scripted:{fixtures_dir / 'tapes' / 'transcribe.json'}",
            "--out", str(out / "transcribe"),
            "--workers", "1",
        ])
        assert rc == 0
        rc = cli_main([
            "extract",
            "--articles", str(fixtures_dir / "e2e" / "articles"),
            "--schema", str(out / "transcribe" / "T_final.json"),
            "--grouping", str(out / "transcribe" / "G_final.json"),
            "--mode", "group",
            "--backend", f"scripted:{fixtures_dir / 'tapes' / 'extract_group.json'}",
            "--out", str(out / "forms"),
        ])
        assert rc == 0
        rc = cli_main([
            "link",
            "--articles", str(fixtures_dir / "e2e" / "articles"),
            "--records", str(fixtures_dir / "e2e" / "records.csv"),
            "--out", str(out / "link"),
        ])
        assert rc == 0
        rc = cli_main([
            "evaluate",
            "--forms", str(out / "forms"),
            "--linkage", str(out / "link" / "linkage.json"),
            "--records", str(fixtures_dir / "e2e" / "records.csv"),
            "--crosswalk", str(fixtures_dir / "e2e" / "crosswalk.json"),
            "--schema", str(fixtures_dir / "schema" / "form_schema.json"),
            "--annotations", str(fixtures_dir / "e2e" / "annotations"),
            "--label", "Group",
            "--out", str(out / "eval"),
        ])
        assert rc == 0

        comparisons = [
            ("transcribe/T_final.json", "transcribe/T_final.json"),
            ("transcribe/G_final.json", "transcribe/G_final.json"),
            (f"forms/{A_ID}.form.json", f"forms/{A_ID}.form.json"),
            (f"forms/{B_ID}.form.json", f"forms/{B_ID}.form.json"),
            ("link/linkage.json", "link/linkage.json"),
            ("eval/report.json", "eval/report.json"),
            ("eval/report.txt", "eval/report.txt"),
        ]
        for produced, frozen in comparisons:
            assert (out / produced).read_bytes() == (golden / frozen).read_bytes(), produced

        # the evaluation text block is shaped like a pipeline summary table
        text = (out / "eval" / "report.txt").read_text(encoding="utf-8")
        lines = text.splitlines()
        assert lines[0].split() == ["Pipeline", "Accuracy", "Coverage"]
        assert lines[1].split()[0] == "Group"

        # per-mode gateway call counts over the same two articles
        expectations = [
            ("group", "extract_group.json", "7"),
            ("single", "extract_single.json", "66"),
            ("all", "extract_all.json", "1"),
        ]
        for mode, tape, calls in expectations:
            mode_out = tmp_path / f"mode-{mode}"
            args = [
                "extract",
                "--articles", str(fixtures_dir / "e2e" / "articles"),
                "--schema", str(fixtures_dir / "schema" / "form_schema.json"),
                "--mode", mode,
                "--backend", f"scripted:{fixtures_dir / 'tapes' / tape}",
                "--out", str(mode_out),
            ]
            if mode == "group":
                args += ["--grouping", str(fixtures_dir / "schema" / "grouping.json")]
            assert cli_main(args) == 0
            manifest = json.loads((mode_out / "manifest.json").read_text(encoding="utf-8"))
            per_article = manifest["attempts"]["articles"]
            assert per_article == {A_ID: f"calls={calls}", B_ID: f"calls={calls}"}


def test_primary_suite_has_no_dashboard_dependency(capsys):
    with criterion(capsys, "[SECONDARY precondition] primary suite imports nothing from the dashboard"):
        foreign = [name for name in sys.modules if "frontend" in name]
        assert foreign == []
        # the dashboard talks to the service over HTTP only; nothing in the
        # installed package references it
        import form57

        package_dir = Path(form57.__file__).parent
        for path in package_dir.rglob("*.py"):
            assert "frontend" not in path.read_text(encoding="utf-8")
