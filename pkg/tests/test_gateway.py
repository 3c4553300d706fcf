import json

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skillsim.gateway import (
    ChatResponse,
    Gateway,
    GatewayError,
    MockExhausted,
    PayloadError,
    ScriptedResponder,
    TranscriptMiss,
    TranscriptStore,
    UsageLedger,
    make_request,
    parse_generation_payload,
)


def req(user="hello", purpose="codegen", system="sys"):
    return make_request(system, user, purpose)


def test_request_validation():
    with pytest.raises(ValueError):
        make_request("s", "u", "chitchat")
    with pytest.raises(ValueError):
        make_request("s", "u", "codegen", temperature=-1)


def test_digest_depends_on_content_not_purpose():
    assert req("a").digest() == req("a").digest()
    assert req("a").digest() != req("b").digest()
    assert req("a", "codegen").digest() == req("a", "rag").digest()


def test_replay_returns_recorded_response(tmp_path):
    path = tmp_path / "t.jsonl"
    live = Gateway("mock", responder=ScriptedResponder(["answer one"]), transcript=TranscriptStore(path))
    first = live.complete(req("q"))
    replay = Gateway("replay", transcript=TranscriptStore(path))
    again = replay.complete(req("q"))
    assert again == first
    assert replay.network_calls == 0


def test_replay_miss(tmp_path):
    gw = Gateway("replay", transcript=TranscriptStore(tmp_path / "none.jsonl"))
    with pytest.raises(TranscriptMiss, match="transcript miss"):
        gw.complete(req("unknown"))


def test_ledger_sums_completion_tokens():
    ledger = UsageLedger()
    ledger.record("offline", "codegen", ChatResponse("a", 10, 100, 0.1))
    ledger.record("offline", "judge", ChatResponse("b", 5, 150, 0.2))
    assert ledger.totals().completion_tokens == 250
    assert ledger.totals(purpose="judge").completion_tokens == 150
    assert ledger.totals("runtime").requests == 0


def test_ledger_rejects_unknown_phase():
    with pytest.raises(ValueError):
        UsageLedger().record("online", "codegen", ChatResponse("x"))


def test_phases_are_kept_apart():
    gw = Gateway("mock", responder=ScriptedResponder(["a", "b", "c"]))
    gw.complete(req(), "offline")
    gw.complete(req(), "runtime")
    gw.complete(req(purpose="rag"), "runtime")
    assert gw.ledger.totals("offline").requests == 1
    assert gw.ledger.totals("runtime").requests == 2
    assert set(gw.ledger.by_purpose("runtime")) == {"codegen", "rag"}


def test_mock_exhausted():
    gw = Gateway("mock", responder=ScriptedResponder([]))
    with pytest.raises(MockExhausted):
        gw.complete(req())


def test_scripted_responder_per_purpose():
    r = ScriptedResponder({"codegen": ["c1"], "judge": ["j1"]})
    gw = Gateway("mock", responder=r)
    assert gw.complete(req(purpose="judge")).text == "j1"
    assert gw.complete(req(purpose="codegen")).text == "c1"
    assert [c.purpose for c in r.captured] == ["judge", "codegen"]


def test_mode_preconditions():
    with pytest.raises(GatewayError):
        Gateway("live")
    with pytest.raises(GatewayError):
        Gateway("replay")
    with pytest.raises(GatewayError):
        Gateway("mock")


def completion(text, prompt=7, completion_tokens=3):
    return {"choices": [{"message": {"content": text}}],
            "usage": {"prompt_tokens": prompt, "completion_tokens": completion_tokens}}


def test_live_mode_wire_format(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return httpx.Response(200, json=completion("hi"))

    monkeypatch.setenv("TEST_KEY", "secret")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    gw = Gateway("live", endpoint="http://llm.local/v1/", model_id="m1", api_key_env="TEST_KEY", client=client)
    resp = gw.complete(req("ping"))
    assert resp.text == "hi" and resp.prompt_tokens == 7 and resp.completion_tokens == 3
    body = json.loads(seen[0].content)
    assert str(seen[0].url) == "http://llm.local/v1/chat/completions"
    assert seen[0].headers["authorization"] == "Bearer secret"
    assert body["messages"][-1] == {"role": "user", "content": "ping"}


def test_live_mode_retries_then_fails():
    calls, sleeps = [], []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    gw = Gateway("live", endpoint="http://x", client=client, sleep=sleeps.append)
    with pytest.raises(GatewayError, match="after 3 attempts"):
        gw.complete(req())
    assert len(calls) == 3
    assert sleeps == [0.5, 1.0]


def test_live_mode_recovers_after_transient_error():
    replies = iter([httpx.Response(500), httpx.Response(200, json=completion("ok"))])
    client = httpx.Client(transport=httpx.MockTransport(lambda r: next(replies)))
    gw = Gateway("live", endpoint="http://x", client=client, sleep=lambda s: None)
    assert gw.complete(req()).text == "ok"


def test_replay_uses_no_transport(tmp_path):
    path = tmp_path / "t.jsonl"
    TranscriptStore(path).put(req("q"), ChatResponse("stored", 1, 2, 0.0))

    def refuse(request):
        raise AssertionError("network used in replay")

    gw = Gateway("replay", transcript=TranscriptStore(path), client=httpx.Client(transport=httpx.MockTransport(refuse)))
    assert gw.complete(req("q")).text == "stored"
    assert gw.network_calls == 0


def test_payload_plain():
    p = parse_generation_payload('{"init_code":"a","code":"b","code_name":"c"}')
    assert (p.init_code, p.code, p.code_name) == ("a", "b", "c")


def test_payload_fenced():
    text = '```json\n{"init_code":"a","code":"b","code_name":"c"}\n```'
    assert parse_generation_payload(text) == parse_generation_payload('{"init_code":"a","code":"b","code_name":"c"}')


def test_payload_missing_and_extra_keys():
    with pytest.raises(PayloadError, match="missing keys"):
        parse_generation_payload('{"code":""}')
    with pytest.raises(PayloadError, match="unexpected keys"):
        parse_generation_payload('{"init_code":"","code":"x","code_name":"n","notes":1}')
    with pytest.raises(PayloadError, match="unparsable"):
        parse_generation_payload("Sure, here you go")


def test_empty_code_is_infeasible():
    assert parse_generation_payload('{"init_code":"x","code":"","code_name":"n"}').infeasible


@given(st.lists(st.tuples(st.sampled_from(["offline", "runtime"]),
                          st.sampled_from(["taskgen", "codegen", "judge", "rag"]),
                          st.integers(0, 500), st.integers(0, 500)), max_size=30))
def test_ledger_conservation(entries):
    ledger = UsageLedger()
    for phase, purpose, p, c in entries:
        ledger.record(phase, purpose, ChatResponse("", p, c))
    total = ledger.totals().tokens
    assert total == sum(p + c for _, _, p, c in entries)
    by_cells = sum(t.tokens for ph in ("offline", "runtime") for t in ledger.by_purpose(ph).values())
    assert total == by_cells
    assert ledger.totals().requests == len(entries)
