import json
import threading

import httpx
import pytest
from hypothesis import given, settings, strategies as st

from helpers import cassette_path
from kgplan import demo
from kgplan.llm import (STAGES, Cassette, CassetteEntry, CallRecord, ChatRequest, DenyNetworkBackend, HttpBackend,
                        LLMError, LLMGateway, NetworkDenied, ReplayMiss, ScriptedBackend, TokenUsage, TransportError,
                        UsageLedger, fingerprint, usage_report)


def echo(request: ChatRequest) -> str:
    return "echo " + request.user_text


def test_fingerprint_ignores_whitespace_layout():
    a = ChatRequest.of("hello   world\n", "Task: judge")
    b = ChatRequest.of(" hello world", "Task:  judge")
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(ChatRequest.of("hello world!", "Task: judge"))
    assert fingerprint(a) != fingerprint(ChatRequest.of("hello world", "Task: judge", model="other"))


@settings(max_examples=50)
@given(st.text(min_size=1), st.lists(st.sampled_from([" ", "\n", "\t"]), min_size=1, max_size=3))
def test_fingerprint_whitespace_property(text, pads):
    pad = "".join(pads)
    noisy = ChatRequest.of(pad + text.replace(" ", pad) + pad)
    assert fingerprint(noisy) == fingerprint(ChatRequest.of(text))


def test_record_then_replay(tmp_path):
    path = str(tmp_path / "c.jsonl")
    backend = ScriptedBackend(echo)
    rec = LLMGateway(backend, mode="record", cassette=Cassette(path=path), clock=lambda: "t0")
    first = rec.ask("one two three", "categorize", "Task: categorize")
    rec.cassette.save()
    assert backend.calls == 1
    assert first.usage == TokenUsage.of(5, 4)
    assert first.latency == pytest.approx(0.05 + 4 * 0.002)

    deny = DenyNetworkBackend()
    replay = LLMGateway(deny, mode="replay", cassette=Cassette.load(path))
    again = replay.ask("one two three", "categorize", "Task: categorize")
    assert (again.content, again.usage, again.latency) == (first.content, first.usage, first.latency)
    assert deny.attempts == 0
    with pytest.raises(ReplayMiss):
        replay.ask("something else", "categorize", "Task: categorize")
    assert deny.attempts == 0


def test_cassette_file_round_trip(tmp_path):
    c = Cassette.load(cassette_path("science"))
    out = tmp_path / "copy.jsonl"
    c.save(str(out))
    assert out.read_text() == c.dumps()
    assert Cassette.load(str(out)).dumps() == c.dumps()
    entry = c.entries()[0]
    assert CassetteEntry.from_json(entry.to_json()) == entry
    assert fingerprint(ChatRequest(entry.messages, model=entry.model)) == entry.fingerprint


def test_malformed_cassette_is_located(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"fingerprint": "x"}\n')
    with pytest.raises(LLMError, match=":1:"):
        Cassette.load(str(p))


def test_deny_network_backend():
    with pytest.raises(NetworkDenied):
        LLMGateway(DenyNetworkBackend()).ask("hi", "judge")


def test_mode_requirements():
    with pytest.raises(ValueError):
        LLMGateway(None, mode="replay")
    with pytest.raises(ValueError):
        LLMGateway(None, mode="live")
    with pytest.raises(ValueError):
        LLMGateway(ScriptedBackend(echo), mode="bogus")
    with pytest.raises(ValueError):
        LLMGateway(ScriptedBackend(echo)).ask("x", "not-a-stage")


def _openai_reply(request: httpx.Request) -> httpx.Response:
    body = json.loads(request.content)
    assert request.url.path == "/v1/chat/completions"
    assert request.headers["authorization"] == "Bearer k"
    text = body["messages"][-1]["content"].upper()
    return httpx.Response(200, json={"choices": [{"message": {"content": text}}],
                                     "usage": {"prompt_tokens": 7, "completion_tokens": 2}})


def test_http_backend_against_mock_transport():
    backend = HttpBackend("http://llm.test/v1", "k", transport=httpx.MockTransport(_openai_reply))
    gw = LLMGateway(backend, model="m")
    resp = gw.ask("hi there", "judge")
    assert resp.content == "HI THERE"
    assert resp.usage == TokenUsage.of(7, 2)
    assert gw.ledger.calls("judge") == 1


def test_http_backend_errors():
    bad_status = HttpBackend("http://llm.test", transport=httpx.MockTransport(lambda r: httpx.Response(500, text="x")))
    with pytest.raises(LLMError, match="500"):
        bad_status.send(ChatRequest.of("q"))
    bad_shape = HttpBackend("http://llm.test", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(LLMError, match="shape"):
        bad_shape.send(ChatRequest.of("q"))

    def boom(request):
        raise httpx.ConnectError("down")

    flaky = HttpBackend("http://llm.test", transport=httpx.MockTransport(boom), transport_retries=1, backoff=0)
    with pytest.raises(TransportError):
        flaky.send(ChatRequest.of("q"))


def test_http_backend_needs_endpoint(monkeypatch):
    monkeypatch.delenv("LLM_BASE_URL", raising=False)
    with pytest.raises(LLMError):
        HttpBackend()


def test_ledger_sessions_and_report():
    root = UsageLedger()
    a, b = root.session(), root.session()
    a.add(CallRecord("generate", "f1", TokenUsage.of(3, 1), 0.1))
    b.add(CallRecord("judge", "f2", TokenUsage.of(5, 5), 0.2))
    b.add(CallRecord("generate", "f3", TokenUsage.of(1, 1), 0.3))
    rep = usage_report(root)
    assert rep.total.calls == 3
    assert rep.total.usage == TokenUsage.of(9, 7)
    assert rep.per_stage["generate"].calls == 2
    assert set(rep.per_stage) == set(STAGES)
    assert usage_report(a).total.calls == 1


@settings(max_examples=50)
@given(st.lists(st.tuples(st.sampled_from(STAGES), st.integers(0, 500), st.integers(0, 500)), max_size=40))
def test_per_stage_partitions_total(calls):
    ledger = UsageLedger()
    for i, (stage, p, c) in enumerate(calls):
        ledger.add(CallRecord(stage, str(i), TokenUsage.of(p, c), 0.0))
    rep = usage_report(ledger)
    assert rep.total.calls == len(calls) == sum(s.calls for s in rep.per_stage.values())
    assert rep.total.usage.total_tokens == sum(s.usage.total_tokens for s in rep.per_stage.values())
    assert rep.total.usage.prompt_tokens == sum(p for _, p, _ in calls)


def test_ledger_is_thread_safe():
    ledger = UsageLedger()

    def work():
        for i in range(500):
            ledger.add(CallRecord("judge", str(i), TokenUsage.of(1, 1), 0.0))

    threads = [threading.Thread(target=work) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert usage_report(ledger).total.calls == 4000


def test_token_usage_rejects_negatives():
    with pytest.raises(ValueError):
        TokenUsage.of(-1, 0)


def test_committed_cassettes_match_a_fresh_recording():
    fresh = demo.record_fixture_cassettes()
    assert set(fresh) == set(demo.CASSETTE_NAMES)
    for name, cassette in fresh.items():
        committed = Cassette.load(cassette_path(name))
        assert {e.fingerprint for e in committed.entries()} == {e.fingerprint for e in cassette.entries()}, name
        assert committed.dumps() == cassette.dumps(), name
