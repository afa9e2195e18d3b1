import json

import pytest

from form57.gateway import (
    BackendRefused,
    ImagePart,
    ModelRequest,
    RateLimited,
    RetriesExhausted,
    RetryPolicy,
    ScriptedBackend,
    TapeError,
    TextPart,
    TransportError,
    complete_with_retry,
)

FAST = RetryPolicy(max_attempts=3, base_delay=0.0, max_delay=0.0)


def req(text="hello", role="default", parts=None):
    return ModelRequest(
        system_prompt="sys",
        user_parts=tuple(parts) if parts else (TextPart(text),),
        role=role,
    )


def test_tape_replays_in_order():
    backend = ScriptedBackend([{"response": "one"}, {"response": "two"}])
    assert backend.complete(req()).text == "one"
    assert backend.complete(req()).text == "two"
    assert backend.remaining == 0
    assert backend.calls == 2


def test_tape_exhausted_raises():
    backend = ScriptedBackend([{"response": "only"}])
    backend.complete(req())
    with pytest.raises(TapeError):
        backend.complete(req())


def test_match_contains():
    backend = ScriptedBackend([{"match": {"contains": "needle"}, "response": "ok"}])
    with pytest.raises(TapeError):
        backend.complete(req("no such text"))


def test_match_contains_passes():
    backend = ScriptedBackend([{"match": {"contains": "needle"}, "response": "ok"}])
    assert backend.complete(req("hay needle stack")).text == "ok"


def test_match_role():
    backend = ScriptedBackend([{"match": {"role": "qa"}, "response": "ok"}])
    with pytest.raises(TapeError):
        backend.complete(req(role="merger"))


def test_match_image_sha256():
    image = ImagePart(data=b"pixels", media_type="image/png")
    backend = ScriptedBackend(
        [{"match": {"image_sha256": image.digest}, "response": "ok"}]
    )
    assert backend.complete(req(parts=(TextPart("t"), image))).text == "ok"
    backend2 = ScriptedBackend(
        [{"match": {"image_sha256": "0" * 64}, "response": "ok"}]
    )
    with pytest.raises(TapeError):
        backend2.complete(req(parts=(TextPart("t"), image)))


@pytest.mark.parametrize(
    "fault,err",
    [
        ({"kind": "transport"}, TransportError),
        ({"kind": "rate_limited", "retry_after": 0}, RateLimited),
        ({"kind": "refused", "status": 400}, BackendRefused),
    ],
)
def test_faults_raise(fault, err):
    backend = ScriptedBackend([{"fault": fault}])
    with pytest.raises(err):
        backend.complete(req())


def test_entry_must_have_exactly_one_of_response_or_fault():
    with pytest.raises(ValueError):
        ScriptedBackend([{"response": "x", "fault": {"kind": "transport"}}])
    with pytest.raises(ValueError):
        ScriptedBackend([{"match": {"role": "qa"}}])


def test_unknown_fault_kind_rejected():
    with pytest.raises(ValueError):
        ScriptedBackend([{"fault": {"kind": "meteor"}}])


def test_from_file(tmp_path):
    path = tmp_path / "tape.json"
    path.write_text(json.dumps([{"response": "hi"}]), encoding="utf-8")
    backend = ScriptedBackend.from_file(path)
    assert backend.complete(req()).text == "hi"


def test_retry_recovers_from_transient_faults():
    backend = ScriptedBackend(
        [
            {"fault": {"kind": "transport"}},
            {"fault": {"kind": "rate_limited", "retry_after": 0}},
            {"response": "third time lucky"},
        ]
    )
    response = complete_with_retry(backend, req(), FAST)
    assert response.text == "third time lucky"
    assert backend.calls == 3


def test_retry_budget_exhausted():
    backend = ScriptedBackend([{"fault": {"kind": "transport"}}] * 3)
    with pytest.raises(RetriesExhausted) as excinfo:
        complete_with_retry(backend, req(), FAST)
    assert excinfo.value.attempts == 3
    assert isinstance(excinfo.value.last_error, TransportError)


def test_refusal_is_not_retried():
    backend = ScriptedBackend(
        [{"fault": {"kind": "refused", "status": 401}}, {"response": "never"}]
    )
    with pytest.raises(BackendRefused):
        complete_with_retry(backend, req(), FAST)
    assert backend.calls == 1
    assert backend.remaining == 1


def test_request_helpers():
    image = ImagePart(data=b"img", media_type="image/png")
    r = req(parts=(TextPart("a"), image, TextPart("b")))
    assert r.joined_text() == "sys\na\nb"
    assert r.image_digests() == (image.digest,)
    assert len(image.digest) == 64
