"""Statement raters: a remote chat-completions model, a lexical mock, and replay."""

from __future__ import annotations

import logging
import os
import random
import re
import threading
import time
from pathlib import Path

import httpx

from upr_audit.rater.cache import read_records, stmt_hash
from upr_audit.rater.prompts import PromptProfile

logger = logging.getLogger(__name__)

API_KEY_ENV = "UPR_LLM_API_KEY"


class TransportError(RuntimeError):
    """The provider could not be reached or refused to answer."""


class Provider:
    name = "provider"

    def __init__(self):
        self.calls = 0
        self._calls_lock = threading.Lock()

    def query(self, prompt: str, statement: str, profile: PromptProfile) -> str:
        with self._calls_lock:
            self.calls += 1
        return self.complete(prompt, statement, profile)

    def complete(self, prompt: str, statement: str, profile: PromptProfile) -> str:
        raise NotImplementedError


PRIVILEGE_WORDS = frozenset({
    "passwd", "password", "auth", "uid", "gid", "setuid", "seteuid", "chown",
    "key", "token", "login", "permission",
})
PATH_APIS = frozenset({
    "open", "fopen", "access", "stat", "lstat", "fstat", "chdir", "chroot",
    "opendir", "unlink", "rename", "mkdir", "rmdir", "realpath", "readlink",
})
_WORD = re.compile(r"[A-Za-z0-9]+")
_CONDITION = re.compile(r"^(if|while|switch|for)\s*\(")


def mock_rating(statement: str) -> int:
    """The mock's rating table.

    Words are maximal alphanumeric runs, so ``cleartxt_passwd`` contains the
    word ``passwd`` but ``fluid`` does not contain ``uid``. Matching ignores case.
    """
    words = {w.lower() for w in _WORD.findall(statement)}
    if words & PRIVILEGE_WORDS:
        return 9
    if _CONDITION.match(statement) and words & PATH_APIS:
        return 5
    return 0


class MockProvider(Provider):
    """Deterministic offline rater; ``latency`` adds a random sleep of up to that many seconds."""

    name = "mock"

    def __init__(self, latency: float = 0.0, seed: int = 0):
        super().__init__()
        self.latency = latency
        self._rng = random.Random(seed)
        self._rng_lock = threading.Lock()

    def complete(self, prompt, statement, profile):
        if self.latency:
            with self._rng_lock:
                delay = self._rng.uniform(0, self.latency)
            time.sleep(delay)
        return str(mock_rating(statement))


class ReplayProvider(Provider):
    """Answers from a recorded transcript; statements not in it are an error."""

    name = "replay"

    def __init__(self, path: str | Path):
        super().__init__()
        self.path = Path(path)
        self.answers: dict[tuple[str, str], str] = {}
        for rec in read_records(self.path):
            key = (rec["key"]["stmt_hash"], rec["key"]["profile"])
            self.answers[key] = rec.get("reply", str(rec["value"]))

    def complete(self, prompt, statement, profile):
        try:
            return self.answers[(stmt_hash(statement), profile.id)]
        except KeyError:
            raise TransportError(
                f"statement not in replay transcript {self.path}: {statement!r}") from None


class LLMProvider(Provider):
    """Chat-completions style HTTP endpoint, queried at temperature 0."""

    name = "llm"

    def __init__(self, base_url: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0, max_tokens: int = 4, client: httpx.Client | None = None):
        super().__init__()
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.max_tokens = max_tokens
        self._client = client or httpx.Client(timeout=timeout)

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
            "max_tokens": self.max_tokens,
        }

    def complete(self, prompt, statement, profile):
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = self._client.post(f"{self.base_url}/chat/completions",
                                     json=self.request_body(prompt), headers=headers)
        except httpx.HTTPError as exc:
            raise TransportError(f"{self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise TransportError(f"{self.base_url}: HTTP {resp.status_code}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"{self.base_url}: malformed response") from exc

    def close(self):
        self._client.close()


def make_provider(kind: str, *, transcript: str | Path | None = None,
                  base_url: str | None = None, model: str | None = None,
                  latency: float = 0.0) -> Provider:
    if kind == "mock":
        return MockProvider(latency=latency)
    if kind == "replay":
        if not transcript:
            raise ValueError("replay provider needs a transcript file")
        return ReplayProvider(transcript)
    if kind == "llm":
        if not base_url or not model:
            raise ValueError("llm provider needs an endpoint base_url and model")
        return LLMProvider(base_url, model)
    raise ValueError(f"unknown provider {kind!r}")
