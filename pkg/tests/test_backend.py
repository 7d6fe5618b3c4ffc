from __future__ import annotations

import json

import pytest
import requests

from lmsql import (BadResponse, CompletionRequest, HttpBackend, MockBackend,
                   RateLimited, RecordingBackend, TransportError, approx_tokens,
                   mock_from_fixtures, with_cache)
from lmsql.errors import FormatError


def req(prompt="p", **kw):
    return CompletionRequest(prompt, **kw)


def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest("p", n=0)
    with pytest.raises(ValueError):
        CompletionRequest("p", max_output_tokens=0)
    with pytest.raises(ValueError):
        CompletionRequest("p", temperature=3.0)
    with pytest.raises(ValueError):
        CompletionRequest("p", top_p=0.0)


def test_mock_exact_lookup():
    mock = MockBackend()
    mock.add_exact("p", ["yes"])
    assert mock.complete(req("p")) == ["yes"]


def test_mock_returns_n_in_order():
    canned = [f"prog {i}" for i in range(20)]
    mock = MockBackend()
    mock.add_exact("p", canned)
    assert mock.complete(req("p", n=20)) == canned
    # fewer canned than n: cycle deterministically
    mock.add_exact("q", ["a", "b"])
    assert mock.complete(req("q", n=5)) == ["a", "b", "a", "b", "a"]


def test_mock_unknown_prompt_names_nearest():
    mock = MockBackend()
    mock.add_exact("the quick brown fox", ["y"])
    with pytest.raises(BadResponse) as exc:
        mock.complete(req("the quick brown cat"))
    assert "the quick brown fox" in str(exc.value)


def test_mock_regex_rule_with_backreference():
    mock = MockBackend()
    mock.add_rule(r"value of (\w+)", [r"extracted \1"])
    assert mock.complete(req("what is the value of feet today")) == ["extracted feet"]


def test_stop_truncation():
    mock = MockBackend()
    mock.add_exact("p", ["keep this\n\ndrop this"])
    out = mock.complete(req("p", stop=("\n\n",)))
    assert out == ["keep this"]
    for completion in out:
        assert "\n\n" not in completion


def test_fixture_file_loading(tmp_path):
    path = tmp_path / "fx.json"
    path.write_text(json.dumps([
        {"match": "exact", "prompt_pattern": "hello", "responses": ["world"]},
        {"match": "regex", "prompt_pattern": "nu(m)ber", "responses": [r"got \1"]},
    ]))
    mock = mock_from_fixtures(path)
    assert mock.complete(req("hello")) == ["world"]
    assert mock.complete(req("a number here")) == ["got m"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps([{"match": "sometimes", "prompt_pattern": "x", "responses": []}]))
    with pytest.raises(FormatError):
        mock_from_fixtures(bad)


def test_cache_memoizes(tmp_path):
    inner = RecordingBackend(MockBackend([("exact", "p", ["yes"])]))
    cached = with_cache(inner, tmp_path / "cache")
    assert cached.complete(req("p")) == ["yes"]
    assert cached.complete(req("p")) == ["yes"]
    assert len(inner.calls) == 1


def test_cache_key_covers_all_fields(tmp_path):
    inner = RecordingBackend(MockBackend([("exact", "p", ["yes"])]))
    cached = with_cache(inner, tmp_path / "cache")
    cached.complete(req("p", temperature=0.0))
    cached.complete(req("p", temperature=0.5))
    assert len(inner.calls) == 2
    assert len(list((tmp_path / "cache").glob("*.json"))) == 2


def test_cache_survives_restart(tmp_path):
    mock = MockBackend([("exact", "p", ["yes"])])
    first = with_cache(RecordingBackend(mock), tmp_path / "cache")
    first.complete(req("p"))
    inner = RecordingBackend(mock)
    second = with_cache(inner, tmp_path / "cache")
    assert second.complete(req("p")) == ["yes"]
    assert inner.calls == []  # served from disk


def test_cache_recomputes_after_removal(tmp_path):
    import shutil
    mock = MockBackend([("exact", "p", ["yes"])])
    cached = with_cache(mock, tmp_path / "cache")
    before = cached.complete(req("p"))
    shutil.rmtree(tmp_path / "cache")
    cached2 = with_cache(mock, tmp_path / "cache")
    assert cached2.complete(req("p")) == before


def test_cache_seed_scopes_sampled_requests(tmp_path):
    inner = RecordingBackend(MockBackend([("exact", "p", ["yes"])]))
    a = with_cache(inner, tmp_path / "cache", seed=1)
    b = with_cache(inner, tmp_path / "cache", seed=2)
    hot = req("p", temperature=0.7)
    assert a.key(hot) != b.key(hot)
    assert a.key(req("p")) == b.key(req("p"))  # temp 0 ignores the seed


class FakeResponse:
    def __init__(self, status_code, body=None, text=""):
        self.status_code = status_code
        self._body = body
        self.text = text

    def json(self):
        if self._body is None:
            raise ValueError("no json")
        return self._body


class FakeSession:
    """Scripted transport: each element is an exception or a FakeResponse."""

    def __init__(self, script):
        self.script = list(script)
        self.posts = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append(json)
        step = self.script.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


def http_backend(script, **kw):
    sleeps = []
    backend = HttpBackend("http://svc/complete", sleeper=sleeps.append,
                          session=FakeSession(script), **kw)
    return backend, sleeps


def test_http_success_and_payload():
    backend, _ = http_backend([FakeResponse(200, {"choices": [{"text": "a"}, {"text": "b"}]})])
    assert backend.complete(req("p", n=2)) == ["a", "b"]
    assert backend.session.posts[0]["n"] == 2
    assert backend.session.posts[0]["max_tokens"] == 512


def test_http_retries_then_succeeds():
    backend, sleeps = http_backend([
        requests.ConnectionError("down"),
        FakeResponse(500),
        FakeResponse(200, {"choices": [{"text": "ok"}]}),
    ])
    assert backend.complete(req("p")) == ["ok"]
    assert sleeps == [0.5, 1.0]  # exponential backoff between attempts


def test_http_gives_up_after_bounded_retries():
    backend, sleeps = http_backend([requests.ConnectionError("down")] * 3)
    with pytest.raises(TransportError):
        backend.complete(req("p"))
    assert len(backend.session.posts) == 3


def test_http_bad_reply():
    backend, _ = http_backend([FakeResponse(200, {"nope": 1})])
    with pytest.raises(BadResponse):
        backend.complete(req("p"))


def test_http_token_budget():
    backend, _ = http_backend([], token_budget=100)
    with pytest.raises(RateLimited):
        backend.complete(req("x" * 1000))
    assert approx_tokens("x" * 1000) == 250
