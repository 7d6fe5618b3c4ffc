"""Completion backends: remote HTTP service, deterministic fixture mock, and
a persistent on-disk response cache.

All backends share one contract: complete(request) returns exactly
request.n completions, each truncated at the first stop string.
"""

from __future__ import annotations

import difflib
import hashlib
import json
import math
import os
import re
import tempfile
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import requests

from .errors import BadResponse, FormatError, IoError, RateLimited, TransportError


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 512
    n: int = 1
    stop: tuple = ("\n\n",)

    def __post_init__(self):
        object.__setattr__(self, "stop", tuple(self.stop))
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be >= 1")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must be in [0, 2]")
        if not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must be in (0, 1]")


def approx_tokens(text: str) -> int:
    """Deterministic token-count approximation used for budget checks."""
    return math.ceil(len(text) / 4)


def truncate_at_stop(text: str, stop) -> str:
    cut = len(text)
    for s in stop:
        idx = text.find(s)
        if idx >= 0:
            cut = min(cut, idx)
    return text[:cut]


class Backend:
    """A text-completion capability with a stable identity for cache keying."""

    identity: str = "backend"

    def complete(self, req: CompletionRequest) -> list:
        raw = self._complete(req)
        out = [truncate_at_stop(r, req.stop) for r in raw]
        if len(out) != req.n:
            raise BadResponse(f"{self.identity} returned {len(out)} completions, wanted {req.n}")
        return out

    def _complete(self, req: CompletionRequest) -> list:
        raise NotImplementedError


class NullBackend(Backend):
    """Placeholder for call-free execution; any completion attempt fails."""

    identity = "null"

    def _complete(self, req: CompletionRequest) -> list:
        raise TransportError("no completion backend configured")


class MockBackend(Backend):
    """Closed-world backend answering from exact prompts or regex rules.

    Regex rule responses may use backreferences (\\1, \\g<name>) into the
    matched prompt. When fewer canned responses than n exist, they repeat
    cyclically, which keeps temp-0 replays bit-identical.
    """

    identity = "mock"

    def __init__(self, rules=None):
        self._exact: dict = {}
        self._regex: list = []
        for kind, pattern, responses in rules or []:
            if kind == "exact":
                self.add_exact(pattern, responses)
            else:
                self.add_rule(pattern, responses)

    def add_exact(self, prompt: str, responses) -> None:
        self._exact[prompt] = [str(r) for r in responses]

    def add_rule(self, pattern: str, responses) -> None:
        self._regex.append((re.compile(pattern, re.DOTALL), [str(r) for r in responses]))

    def _lookup(self, prompt: str) -> list:
        if prompt in self._exact:
            return self._exact[prompt]
        for pat, responses in self._regex:
            m = pat.search(prompt)
            if m:
                return [m.expand(r) for r in responses]
        raise BadResponse("no fixture for prompt: " + self._nearest(prompt))

    def _nearest(self, prompt: str) -> str:
        keys = list(self._exact)
        if keys:
            best = max(keys, key=lambda k: difflib.SequenceMatcher(None, prompt, k).quick_ratio())
            return f"nearest fixture key starts {best[:120]!r}"
        if self._regex:
            return f"no regex rule matched (have {len(self._regex)}); prompt tail {prompt[-120:]!r}"
        return "mock has no fixtures at all"

    def _complete(self, req: CompletionRequest) -> list:
        responses = self._lookup(req.prompt)
        if not responses:
            raise BadResponse("fixture entry has zero responses")
        return [responses[i % len(responses)] for i in range(req.n)]


def mock_from_fixtures(path) -> MockBackend:
    """Load MockBackend rules from a JSON array of
    {"match": "exact"|"regex", "prompt_pattern": ..., "responses": [...]}."""
    p = Path(path)
    try:
        entries = json.loads(p.read_text(encoding="utf-8"))
    except OSError as e:
        raise IoError(f"cannot read fixture file {p}: {e}")
    except json.JSONDecodeError as e:
        raise FormatError(f"bad JSON in {p.name}: {e}")
    if not isinstance(entries, list):
        raise FormatError(f"{p.name}: fixture file must be a JSON array")
    mock = MockBackend()
    for i, entry in enumerate(entries):
        try:
            match = entry["match"]
            pattern = entry["prompt_pattern"]
            responses = list(entry["responses"])
        except (TypeError, KeyError) as e:
            raise FormatError(f"{p.name}[{i}]: missing field {e}")
        if match == "exact":
            mock.add_exact(pattern, responses)
        elif match == "regex":
            mock.add_rule(pattern, responses)
        else:
            raise FormatError(f"{p.name}[{i}]: match must be 'exact' or 'regex', got {match!r}")
    return mock


class RecordingBackend(Backend):
    """Wrapper that records every request/response pair, for tests and --trace."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.identity = inner.identity
        self.calls: list = []  # (CompletionRequest, responses)

    def _complete(self, req: CompletionRequest) -> list:
        responses = self.inner.complete(req)
        self.calls.append((req, responses))
        return responses


class CachingBackend(Backend):
    """Content-addressed response cache under cache_dir.

    The key covers the backend identity and the full request; nonzero
    temperature additionally mixes in the run seed, since replays of a
    nondeterministic service are only meaningful per run.
    """

    def __init__(self, inner: Backend, cache_dir, seed: int = 0):
        self.inner = inner
        self.identity = inner.identity
        self.seed = seed
        self.cache_dir = Path(cache_dir)
        try:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise IoError(f"cannot create cache dir {cache_dir}: {e}")
        self._lock = threading.Lock()

    def key(self, req: CompletionRequest) -> str:
        payload = {
            "identity": self.identity,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_output_tokens": req.max_output_tokens,
            "n": req.n,
            "stop": list(req.stop),
        }
        if req.temperature > 0:
            payload["seed"] = self.seed
        blob = json.dumps(payload, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.json"

    def _complete(self, req: CompletionRequest) -> list:
        key = self.key(req)
        path = self._path(key)
        if path.exists():
            try:
                entry = json.loads(path.read_text(encoding="utf-8"))
                return list(entry["responses"])
            except (OSError, json.JSONDecodeError, KeyError):
                pass  # corrupt entry: fall through and recompute
        responses = self.inner.complete(req)
        entry = {
            "key": key,
            "identity": self.identity,
            "responses": responses,
            "created_at": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            try:
                fd, tmp = tempfile.mkstemp(dir=self.cache_dir, suffix=".tmp")
                with os.fdopen(fd, "w", encoding="utf-8") as fh:
                    json.dump(entry, fh, ensure_ascii=False)
                os.replace(tmp, path)
            except OSError as e:
                raise IoError(f"cannot write cache entry {path}: {e}")
        return responses


def with_cache(backend: Backend, cache_dir, seed: int = 0) -> Backend:
    return CachingBackend(backend, cache_dir, seed=seed)


class _TokenBucket:
    def __init__(self, per_minute: int, clock=time.monotonic, sleeper=time.sleep):
        self.capacity = float(per_minute)
        self.tokens = float(per_minute)
        self.rate = per_minute / 60.0
        self.clock = clock
        self.sleeper = sleeper
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleeper(wait)


class HttpBackend(Backend):
    """Client for a completion-style HTTP+JSON service.

    POSTs {prompt, temperature, top_p, max_tokens, n, stop} and expects
    {"choices": [{"text": ...}, ...]}. Retries transient failures with
    exponential backoff and enforces a client-side request rate plus an
    approximate per-request token budget.
    """

    def __init__(self, endpoint: str, model: str = "", api_key: str = "",
                 max_retries: int = 3, backoff: float = 0.5,
                 requests_per_minute: int = 200, token_budget: int = 8000,
                 timeout: float = 60.0, sleeper=time.sleep, session=None):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.identity = f"remote:{model or endpoint}"
        self.max_retries = max_retries
        self.backoff = backoff
        self.token_budget = token_budget
        self.timeout = timeout
        self.sleeper = sleeper
        self.session = session or requests.Session()
        self._bucket = _TokenBucket(requests_per_minute, sleeper=sleeper)

    def _complete(self, req: CompletionRequest) -> list:
        needed = approx_tokens(req.prompt) + req.max_output_tokens
        if needed > self.token_budget:
            raise RateLimited(
                f"request needs ~{needed} tokens, budget is {self.token_budget}")
        payload = {
            "prompt": req.prompt,
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_output_tokens,
            "n": req.n,
            "stop": list(req.stop),
        }
        if self.model:
            payload["model"] = self.model
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error = None
        for attempt in range(self.max_retries):
            self._bucket.acquire()
            try:
                resp = self.session.post(self.endpoint, json=payload,
                                         headers=headers, timeout=self.timeout)
            except requests.RequestException as e:
                last_error = str(e)
            else:
                if resp.status_code in (429,) or resp.status_code >= 500:
                    last_error = f"HTTP {resp.status_code}"
                elif resp.status_code != 200:
                    raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    return self._parse(resp)
            if attempt < self.max_retries - 1:
                self.sleeper(self.backoff * (2 ** attempt))
        raise TransportError(f"service unreachable after {self.max_retries} attempts: {last_error}")

    def _parse(self, resp) -> list:
        try:
            body = resp.json()
            return [str(c["text"]) for c in body["choices"]]
        except (ValueError, KeyError, TypeError) as e:
            raise BadResponse(f"unparseable service reply: {e}")
