"""Chat-completion and embedding gateways.

Two remote clients speak the common chat/embedding HTTP wire shape. Two
in-process mocks make every pipeline stage deterministic offline:

* ``MockChatGateway``: a rule table (prompt fingerprint or substring match
  -> canned reply) with an echo fallback.
* ``HashEmbedder``: seeded feature hashing of character 3-grams.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import numpy as np

from .errors import DimensionMismatch, FormatError, MalformedResponse, TransportError

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
DEFAULT_DIMENSION = 1024


@dataclass(frozen=True)
class Message:
    role: str
    content: str


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = 0.9
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        msgs = tuple(self.messages)
        object.__setattr__(self, "messages", msgs)
        if not msgs:
            raise ValueError("ChatRequest needs at least one message")
        if msgs[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")
        for m in msgs:
            if m.role not in ROLES:
                raise ValueError(f"unknown role {m.role!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature must lie in [0, 2]")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    @classmethod
    def of(cls, system: str | None, user: str, **kw) -> "ChatRequest":
        msgs = []
        if system is not None:
            msgs.append(Message("system", system))
        msgs.append(Message("user", user))
        return cls(tuple(msgs), **kw)

    @property
    def last_user(self) -> str:
        for m in reversed(self.messages):
            if m.role == "user":
                return m.content
        return ""

    def joined(self) -> str:
        return "\n".join(m.content for m in self.messages)


def fingerprint(request: ChatRequest) -> str:
    """Stable hash of the message list (sampling parameters excluded)."""
    payload = json.dumps(
        [[m.role, m.content] for m in request.messages], ensure_ascii=False, separators=(",", ":")
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ChatGateway(Protocol):
    def complete(self, request: ChatRequest) -> str: ...


class EmbeddingGateway(Protocol):
    dimension: int

    def embed(self, texts: Sequence[str]) -> np.ndarray: ...


def _check_texts(texts: Sequence[str]) -> list[str]:
    texts = list(texts)
    if not texts:
        raise ValueError("embed() needs at least one text")
    for t in texts:
        if not t or not t.strip():
            raise ValueError("embed() texts must be non-empty after trimming")
    return texts


# ---------------------------------------------------------------- mocks


@dataclass(frozen=True)
class MockRule:
    reply: str
    fingerprint: str | None = None
    all_of: tuple[str, ...] = ()

    def matches(self, request: ChatRequest, fp: str) -> bool:
        if self.fingerprint is not None:
            return self.fingerprint == fp
        text = request.joined()
        return all(s in text for s in self.all_of)


class MockChatGateway:
    """Rule-table chat mock. First matching rule wins; otherwise echo.

    ``calls`` records every request in arrival order so tests can count
    prompts of a given kind.
    """

    def __init__(
        self,
        rules: Iterable[MockRule] = (),
        fallback: str | Callable[[ChatRequest], str] = "echo",
    ):
        self._rules = tuple(rules)
        self._fallback = fallback
        self._lock = threading.Lock()
        self.calls: list[ChatRequest] = []

    @classmethod
    def from_file(cls, path: str | os.PathLike) -> "MockChatGateway":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise FormatError(f"mock table {path}: {exc}") from exc
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "MockChatGateway":
        rules = []
        for raw in data.get("rules", []):
            if "reply" not in raw:
                raise FormatError("mock rule without reply")
            rules.append(
                MockRule(
                    reply=raw["reply"],
                    fingerprint=raw.get("fingerprint"),
                    all_of=tuple(raw.get("all_of", ())),
                )
            )
        fallback = data.get("fallback", "echo")
        return cls(rules, fallback=fallback)

    def complete(self, request: ChatRequest) -> str:
        with self._lock:
            self.calls.append(request)
        fp = fingerprint(request)
        for rule in self._rules:
            if rule.matches(request, fp):
                return rule.reply
        if callable(self._fallback):
            return self._fallback(request)
        if self._fallback == "echo":
            return request.last_user
        return str(self._fallback)

    def count(self, marker: str) -> int:
        """Number of recorded calls whose text contains ``marker``."""
        with self._lock:
            return sum(1 for r in self.calls if marker in r.joined())


class EchoChatGateway(MockChatGateway):
    def __init__(self) -> None:
        super().__init__((), fallback="echo")


class FunctionChatGateway:
    """Adapter turning a plain function into a chat gateway (test helper)."""

    def __init__(self, fn: Callable[[ChatRequest], str]):
        self._fn = fn
        self.calls: list[ChatRequest] = []

    def complete(self, request: ChatRequest) -> str:
        self.calls.append(request)
        return self._fn(request)


_WS = re.compile(r"\s+")


class HashEmbedder:
    """Deterministic embedder: signed feature hashing of character 3-grams.

    Text is lowercased and whitespace-collapsed, padded with one space on
    each side, and every 3-gram is hashed (keyed BLAKE2b) into a bucket and
    a sign. The count vector is L2-normalised.
    """

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0, n: int = 3):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = dimension
        self.seed = seed
        self.n = n
        self._key = seed.to_bytes(8, "little", signed=False)
        self._cache: dict[str, tuple[int, float]] = {}
        self._lock = threading.Lock()

    def _bucket(self, gram: str) -> tuple[int, float]:
        hit = self._cache.get(gram)
        if hit is not None:
            return hit
        h = hashlib.blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        v = int.from_bytes(h, "little")
        out = (v % self.dimension, 1.0 if (v >> 63) & 1 else -1.0)
        with self._lock:
            self._cache[gram] = out
        return out

    def embed_one(self, text: str) -> np.ndarray:
        norm = " " + _WS.sub(" ", text.strip().lower()) + " "
        vec = np.zeros(self.dimension, dtype=np.float64)
        for i in range(len(norm) - self.n + 1):
            idx, sign = self._bucket(norm[i : i + self.n])
            vec[idx] += sign
        length = np.linalg.norm(vec)
        if length == 0.0:
            # 3-grams cancelled out exactly; fall back to a fixed axis
            vec[self._bucket(norm)[0]] = 1.0
            return vec
        return vec / length

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = _check_texts(texts)
        return np.vstack([self.embed_one(t) for t in texts])


# ---------------------------------------------------------------- remote


def _post_json(url: str, body: dict, api_key: str | None, timeout: float) -> dict:
    data = json.dumps(body).encode("utf-8")
    req = urllib.request.Request(url, data=data, method="POST")
    req.add_header("Content-Type", "application/json")
    if api_key:
        req.add_header("Authorization", f"Bearer {api_key}")
    with urllib.request.urlopen(req, timeout=timeout) as resp:
        return json.loads(resp.read().decode("utf-8"))


@dataclass
class RetryPolicy:
    attempts: int = 3
    base_delay: float = 0.5
    sleep: Callable[[float], None] = field(default=time.sleep, repr=False)

    def run(self, fn: Callable[[], dict], what: str) -> dict:
        last: Exception | None = None
        for attempt in range(self.attempts):
            try:
                return fn()
            except (urllib.error.URLError, TimeoutError, ConnectionError, OSError) as exc:
                last = exc
                logger.warning("%s attempt %d/%d failed: %s", what, attempt + 1, self.attempts, exc)
                if attempt + 1 < self.attempts:
                    self.sleep(self.base_delay * (2**attempt))
        raise TransportError(f"{what} unreachable after {self.attempts} attempts: {last}")


class HttpChatGateway:
    """Client for an OpenAI-shaped ``/chat/completions`` endpoint."""

    def __init__(
        self,
        url: str,
        model: str = "default",
        api_key: str | None = None,
        retry: RetryPolicy | None = None,
        timeout: float = 120.0,
        post: Callable[[str, dict, str | None, float], dict] = _post_json,
    ):
        self.url = url
        self.model = model
        self.api_key = api_key
        self.retry = retry or RetryPolicy()
        self.timeout = timeout
        self._post = post

    @classmethod
    def from_env(cls, model: str = "default") -> "HttpChatGateway":
        url = os.environ.get("SKILLKB_CHAT_URL")
        if not url:
            raise TransportError("SKILLKB_CHAT_URL is not set")
        return cls(url, model=model, api_key=os.environ.get("SKILLKB_API_KEY"))

    def complete(self, request: ChatRequest) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        reply = self.retry.run(lambda: self._post(self.url, body, self.api_key, self.timeout), "chat")
        try:
            text = reply["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"chat reply without message content: {reply!r:.200}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("chat reply content is not text")
        return text


class HttpEmbeddingGateway:
    """Client for an OpenAI-shaped ``/embeddings`` endpoint."""

    def __init__(
        self,
        url: str,
        model: str = "default",
        dimension: int = DEFAULT_DIMENSION,
        api_key: str | None = None,
        retry: RetryPolicy | None = None,
        timeout: float = 120.0,
        post: Callable[[str, dict, str | None, float], dict] = _post_json,
    ):
        self.url = url
        self.model = model
        self.dimension = dimension
        self.api_key = api_key
        self.retry = retry or RetryPolicy()
        self.timeout = timeout
        self._post = post

    @classmethod
    def from_env(cls, model: str = "default", dimension: int = DEFAULT_DIMENSION) -> "HttpEmbeddingGateway":
        url = os.environ.get("SKILLKB_EMBED_URL")
        if not url:
            raise TransportError("SKILLKB_EMBED_URL is not set")
        return cls(url, model=model, dimension=dimension, api_key=os.environ.get("SKILLKB_API_KEY"))

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = _check_texts(texts)
        body = {"model": self.model, "input": texts}
        reply = self.retry.run(lambda: self._post(self.url, body, self.api_key, self.timeout), "embed")
        try:
            rows = [item["embedding"] for item in reply["data"]]
        except (KeyError, TypeError) as exc:
            raise MalformedResponse("embedding reply without data[].embedding") from exc
        if len(rows) != len(texts):
            raise MalformedResponse(f"expected {len(texts)} embeddings, got {len(rows)}")
        out = np.asarray(rows, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dimension:
            raise DimensionMismatch(f"service returned width {out.shape[-1]}, expected {self.dimension}")
        if not np.all(np.isfinite(out)):
            raise MalformedResponse("embedding contains non-finite values")
        return out
