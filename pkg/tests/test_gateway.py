from __future__ import annotations

import urllib.error

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skillkb.errors import DimensionMismatch, FormatError, MalformedResponse, TransportError
from skillkb.gateway import (
    ChatRequest,
    EchoChatGateway,
    HashEmbedder,
    HttpChatGateway,
    HttpEmbeddingGateway,
    Message,
    MockChatGateway,
    MockRule,
    RetryPolicy,
    fingerprint,
)


def test_chat_request_validation():
    with pytest.raises(ValueError):
        ChatRequest(())
    with pytest.raises(ValueError):
        ChatRequest((Message("assistant", "hi"),))
    with pytest.raises(ValueError):
        ChatRequest.of(None, "x", temperature=2.5)
    with pytest.raises(ValueError):
        ChatRequest((Message("user", "a"), Message("tool", "b")))
    r = ChatRequest.of("sys", "hello")
    assert r.last_user == "hello"
    assert r.joined() == "sys\nhello"


def test_fingerprint_ignores_sampling_parameters():
    a = ChatRequest.of("s", "u", temperature=0.1)
    b = ChatRequest.of("s", "u", temperature=1.7, max_output_tokens=5)
    assert fingerprint(a) == fingerprint(b)
    assert fingerprint(a) != fingerprint(ChatRequest.of("s", "u2"))


def test_mock_first_match_wins_and_echo_fallback():
    gw = MockChatGateway([MockRule("one", all_of=("alpha",)), MockRule("two", all_of=("alpha", "beta"))])
    assert gw.complete(ChatRequest.of("alpha", "beta")) == "one"
    assert gw.complete(ChatRequest.of(None, "gamma")) == "gamma"
    assert gw.count("alpha") == 1
    assert len(gw.calls) == 2


def test_mock_fingerprint_rule_and_literal_fallback():
    req = ChatRequest.of("s", "exact")
    gw = MockChatGateway.from_dict({"rules": [{"fingerprint": fingerprint(req), "reply": "hit"}], "fallback": "nope"})
    assert gw.complete(req) == "hit"
    assert gw.complete(ChatRequest.of("s", "other")) == "nope"
    assert EchoChatGateway().complete(ChatRequest.of("s", "ping")) == "ping"


def test_mock_table_errors(tmp_path):
    with pytest.raises(FormatError):
        MockChatGateway.from_dict({"rules": [{"all_of": ["x"]}]})
    p = tmp_path / "t.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        MockChatGateway.from_file(p)


@settings(max_examples=60, deadline=None)
@given(st.text(min_size=1).filter(lambda s: s.strip()))
def test_hash_embedder_unit_norm(text):
    v = HashEmbedder(64).embed([text])[0]
    assert abs(np.linalg.norm(v) - 1.0) <= 1e-9


def test_hash_embedder_properties():
    e = HashEmbedder(256, seed=1)
    a, b = e.embed(["Send  an Email", "send an email"])
    assert np.array_equal(a, b)  # case and whitespace insensitive
    assert not np.array_equal(a, HashEmbedder(256, seed=2).embed_one("send an email"))
    assert np.array_equal(a, HashEmbedder(256, seed=1).embed_one("send an email"))
    close = float(e.embed_one("send an email to bob") @ a)
    far = float(e.embed_one("rename the jazz playlist") @ a)
    assert close > far
    with pytest.raises(ValueError):
        e.embed([])
    with pytest.raises(ValueError):
        e.embed(["ok", "   "])


def _reply(text):
    return {"choices": [{"message": {"content": text}}]}


def test_http_chat_success_and_body():
    seen = {}

    def post(url, body, key, timeout):
        seen.update(url=url, body=body, key=key)
        return _reply("pong")

    gw = HttpChatGateway("http://x/chat", model="m", api_key="k", post=post)
    assert gw.complete(ChatRequest.of("s", "ping", temperature=0.3, max_output_tokens=7)) == "pong"
    assert seen["body"]["model"] == "m" and seen["body"]["max_tokens"] == 7
    assert seen["body"]["messages"][1] == {"role": "user", "content": "ping"}
    assert seen["key"] == "k"


def test_http_chat_malformed_and_retry():
    gw = HttpChatGateway("u", post=lambda *a: {"choices": []})
    with pytest.raises(MalformedResponse):
        gw.complete(ChatRequest.of(None, "x"))
    sleeps = []
    calls = []

    def flaky(*a):
        calls.append(1)
        if len(calls) < 3:
            raise urllib.error.URLError("down")
        return _reply("ok")

    gw = HttpChatGateway("u", post=flaky, retry=RetryPolicy(3, 0.5, sleeps.append))
    assert gw.complete(ChatRequest.of(None, "x")) == "ok"
    assert sleeps == [0.5, 1.0]

    def dead(*a):
        raise ConnectionError("refused")

    gw = HttpChatGateway("u", post=dead, retry=RetryPolicy(2, 0.1, lambda s: None))
    with pytest.raises(TransportError):
        gw.complete(ChatRequest.of(None, "x"))


def test_http_embedding_checks():
    ok = HttpEmbeddingGateway("u", dimension=2, post=lambda *a: {"data": [{"embedding": [0.0, 1.0]}]})
    assert ok.embed(["a"]).shape == (1, 2)
    wide = HttpEmbeddingGateway("u", dimension=3, post=lambda *a: {"data": [{"embedding": [0.0, 1.0]}]})
    with pytest.raises(DimensionMismatch):
        wide.embed(["a"])
    short = HttpEmbeddingGateway("u", dimension=2, post=lambda *a: {"data": []})
    with pytest.raises(MalformedResponse):
        short.embed(["a"])
    nan = HttpEmbeddingGateway("u", dimension=2, post=lambda *a: {"data": [{"embedding": [float("nan"), 1.0]}]})
    with pytest.raises(MalformedResponse):
        nan.embed(["a"])


def test_from_env(monkeypatch):
    monkeypatch.delenv("SKILLKB_CHAT_URL", raising=False)
    monkeypatch.delenv("SKILLKB_EMBED_URL", raising=False)
    with pytest.raises(TransportError):
        HttpChatGateway.from_env()
    with pytest.raises(TransportError):
        HttpEmbeddingGateway.from_env()
    monkeypatch.setenv("SKILLKB_CHAT_URL", "http://h/c")
    monkeypatch.setenv("SKILLKB_API_KEY", "sk")
    gw = HttpChatGateway.from_env("mdl")
    assert (gw.url, gw.model, gw.api_key) == ("http://h/c", "mdl", "sk")
