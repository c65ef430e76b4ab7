"""Chat-completion backends: HTTP client with retries plus deterministic mocks for tests."""

from __future__ import annotations

import logging
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import requests

from .augmentation import HeuristicTokenCounter, TokenCounter
from .errors import BackendError
from .prompts import Prompt, parse_prompt

logger = logging.getLogger(__name__)

_RETRY_STATUSES = {429, 500, 502, 503, 504}


@dataclass(frozen=True, slots=True)
class DecodeParams:
    """Decoding policy: single greedy completion, or nucleus sampling with n candidates."""

    mode: str = "greedy"
    top_p: float = 0.6
    n_candidates: int | None = None
    temperature: float | None = None
    max_new_tokens: int | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("greedy", "nucleus"):
            raise ValueError(f"mode must be 'greedy' or 'nucleus', got {self.mode!r}")
        if self.mode == "greedy":
            object.__setattr__(self, "n_candidates", 1 if self.n_candidates is None else self.n_candidates)
            object.__setattr__(self, "temperature", 0.0 if self.temperature is None else self.temperature)
            if self.n_candidates != 1:
                raise ValueError("greedy decoding produces exactly one candidate")
            if self.temperature != 0.0:
                raise ValueError("greedy decoding is temperature 0")
        else:
            object.__setattr__(self, "n_candidates", 32 if self.n_candidates is None else self.n_candidates)
            object.__setattr__(self, "temperature", 1.0 if self.temperature is None else self.temperature)
            if not 0 < self.top_p <= 1:
                raise ValueError("top_p must be in (0, 1]")
            if self.n_candidates < 1:
                raise ValueError("n_candidates must be >= 1")
        if self.max_new_tokens is not None and self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1 when set")


@dataclass(frozen=True, slots=True)
class Completion:
    """One model completion with its token accounting and backend-reported latency."""

    text: str
    prompt_tokens: int
    completion_tokens: int
    latency: float


@dataclass(frozen=True, slots=True)
class BackendConfig:
    """Connection settings for an OpenAI-style chat-completions endpoint."""

    base_url: str
    model: str
    api_key_env: str = "DOCMT_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 3
    max_concurrency: int = 4
    retry_base_delay: float = 0.5
    supports_n: bool = True

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ValueError("base_url must be set")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValueError("max_concurrency must be >= 1")
        if self.retry_base_delay < 0:
            raise ValueError("retry_base_delay must be >= 0")


class Backend(Protocol):
    """Anything that turns a prompt into one or more completions."""

    max_concurrency: int

    def complete(self, prompt: Prompt, params: DecodeParams) -> list[Completion]: ...


def _default_max_new_tokens(prompt: Prompt, counter: TokenCounter) -> int:
    """Twice the source-size estimate, so translations have room without unbounded output."""
    try:
        _, source, _ = parse_prompt(prompt.text, prompt.src_lang, prompt.tgt_lang)
        basis = source
    except ValueError:
        basis = prompt.user_text()
    return max(16, 2 * counter.count(basis))


class HttpBackend:
    """Chat-completions client with bounded retries, backoff, and a concurrency gate.

    Greedy requests send temperature 0 and no sampling parameters; nucleus
    requests always carry top_p and n. Endpoints without native n>1 support get
    n independent single-candidate requests, reassembled in request order.
    """

    def __init__(self, cfg: BackendConfig, counter: TokenCounter | None = None) -> None:
        self.cfg = cfg
        self.counter = counter or HeuristicTokenCounter()
        self.max_concurrency = cfg.max_concurrency
        self.records: list[dict] = []
        self._gate = threading.BoundedSemaphore(cfg.max_concurrency)
        self._lock = threading.Lock()
        self._session = requests.Session()
        api_key = os.environ.get(cfg.api_key_env, "")
        if api_key:
            self._session.headers["Authorization"] = f"Bearer {api_key}"

    def _body(self, prompt: Prompt, params: DecodeParams, n: int) -> dict:
        body: dict = {
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt.user_text()}],
            "max_tokens": params.max_new_tokens or _default_max_new_tokens(prompt, self.counter),
        }
        if params.mode == "greedy":
            body["temperature"] = 0
        else:
            body["temperature"] = params.temperature
            body["top_p"] = params.top_p
            body["n"] = n
        return body

    def _post_once(self, body: dict) -> tuple[dict, int, float]:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        last_error: str | None = None
        started = time.perf_counter()
        for attempt in range(self.cfg.max_retries + 1):
            if attempt:
                time.sleep(self.cfg.retry_base_delay * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(url, json=body, timeout=self.cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                continue
            if resp.status_code in _RETRY_STATUSES:
                last_error = f"HTTP {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise BackendError(f"backend returned HTTP {resp.status_code}: {resp.text[:200]}")
            return resp.json(), attempt + 1, time.perf_counter() - started
        raise BackendError(f"backend unavailable after {self.cfg.max_retries + 1} attempts: {last_error}")

    def _parse(self, payload: dict, prompt: Prompt, latency: float) -> list[Completion]:
        try:
            choices = payload["choices"]
            texts = [c["message"]["content"] for c in choices]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed backend response: {exc}") from exc
        usage = payload.get("usage") or {}
        prompt_tokens = usage.get("prompt_tokens", self.counter.count(prompt.user_text()))
        total_completion = usage.get("completion_tokens")
        out = []
        for text in texts:
            completion_tokens = (
                total_completion // len(texts) if total_completion is not None else self.counter.count(text)
            )
            out.append(Completion(
                text=text, prompt_tokens=prompt_tokens, completion_tokens=completion_tokens, latency=latency,
            ))
        return out

    def complete(self, prompt: Prompt, params: DecodeParams) -> list[Completion]:
        n = params.n_candidates or 1
        with self._gate:
            if params.mode == "greedy" or n == 1 or self.cfg.supports_n:
                payload, attempts, latency = self._post_once(self._body(prompt, params, n))
                completions = self._parse(payload, prompt, latency)
            else:
                indexed: list[tuple[int, Completion]] = []
                attempts = 0
                for i in range(n):
                    payload, tries, latency = self._post_once(self._body(prompt, params, 1))
                    attempts += tries
                    indexed.append((i, self._parse(payload, prompt, latency)[0]))
                completions = [c for _, c in sorted(indexed, key=lambda pair: pair[0])]
        with self._lock:
            self.records.append({
                "mode": params.mode,
                "n_candidates": n,
                "attempts": attempts,
                "latency": completions[0].latency,
            })
        return completions


@dataclass(slots=True)
class RequestRecord:
    """One mock-backend call, with the parsed prompt pieces tests assert on."""

    prompt_text: str
    mode: str
    n_candidates: int
    top_p: float | None
    source: str
    context_pairs: list[tuple[str, str]]


class MockBackend:
    """Deterministic in-process backend recording a full request transcript.

    Behaviors: identity echoes the parsed source; reverse_words reverses its
    words; table looks the source up in a fixed mapping (missing entries raise,
    exercising the error channel); scripted pops canned outputs call by call.
    Per-call latency scales with the number of requested candidates, emulating
    sequential sampling, and is reported as the deterministic configured value.
    """

    def __init__(
        self,
        behavior: str | Callable[[str], str] = "identity",
        table: dict[str, str] | None = None,
        script: Sequence[str | list[str]] | None = None,
        latency_s: float = 0.0,
        max_concurrency: int = 4,
        counter: TokenCounter | None = None,
    ) -> None:
        if isinstance(behavior, str) and behavior not in ("identity", "reverse_words", "table", "scripted"):
            raise ValueError(f"unknown mock behavior {behavior!r}")
        self.behavior = behavior
        self.table = dict(table or {})
        self.script = list(script or [])
        self.latency_s = latency_s
        self.max_concurrency = max_concurrency
        self.counter = counter or HeuristicTokenCounter()
        self.requests: list[RequestRecord] = []
        self.max_in_flight = 0
        self._in_flight = 0
        self._calls = 0
        self._lock = threading.Lock()

    def _outputs(self, source: str, n: int) -> list[str]:
        if callable(self.behavior):
            return [self.behavior(source)] * n
        if self.behavior == "identity":
            return [source] * n
        if self.behavior == "reverse_words":
            return [" ".join(reversed(source.split()))] * n
        if self.behavior == "table":
            if source not in self.table:
                raise BackendError(f"mock table has no translation for {source!r}")
            return [self.table[source]] * n
        with self._lock:
            if self._calls >= len(self.script):
                raise BackendError("mock script exhausted")
            entry = self.script[self._calls]
            self._calls += 1
        if isinstance(entry, list):
            if len(entry) != n:
                raise BackendError(f"scripted entry has {len(entry)} candidates, call asked for {n}")
            return list(entry)
        return [entry] * n

    def complete(self, prompt: Prompt, params: DecodeParams) -> list[Completion]:
        context, source, _ = parse_prompt(prompt.text, prompt.src_lang, prompt.tgt_lang)
        n = params.n_candidates or 1
        with self._lock:
            self._in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self._in_flight)
            self.requests.append(RequestRecord(
                prompt_text=prompt.text,
                mode=params.mode,
                n_candidates=n,
                top_p=params.top_p if params.mode == "nucleus" else None,
                source=source,
                context_pairs=context,
            ))
        try:
            if self.latency_s:
                time.sleep(self.latency_s * n)
            outputs = self._outputs(source, n)
        finally:
            with self._lock:
                self._in_flight -= 1
        prompt_tokens = self.counter.count(prompt.user_text())
        return [
            Completion(
                text=text,
                prompt_tokens=prompt_tokens,
                completion_tokens=self.counter.count(text),
                latency=self.latency_s * n,
            )
            for text in outputs
        ]


def mock_backend(behavior: str = "identity", **kwargs) -> MockBackend:
    """Convenience constructor for the deterministic test backend."""
    return MockBackend(behavior=behavior, **kwargs)
