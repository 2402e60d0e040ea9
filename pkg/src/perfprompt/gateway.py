"""Text-generation clients: an HTTP endpoint client and an offline fixture replayer."""
from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import httpx

from perfprompt.errors import EndpointError, FixtureMiss, GatewayError, GatewayTimeout

DEFAULT_TEMPERATURE = 0.7
DEFAULT_MAX_INPUT_TOKENS = 4096
DEFAULT_MAX_OUTPUT_TOKENS = 8192

# word runs and single punctuation marks each count as one token
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    model_name: str = "mock"
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS
    sample_index: int = 0

    def __post_init__(self) -> None:
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    finish_reason: str = "stop"
    latency: float = 0.0


class Gateway(Protocol):
    def complete(self, req: GenerationRequest) -> GenerationResponse: ...


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def estimate_tokens(text: str) -> int:
    return len(_TOKEN_RE.findall(text))


def truncate_to_budget(text: str, max_input_tokens: int = DEFAULT_MAX_INPUT_TOKENS) -> str:
    """Keep the longest prefix of ``text`` whose token estimate fits the budget."""
    if max_input_tokens <= 0:
        raise ValueError("budget must be positive")
    for i, m in enumerate(_TOKEN_RE.finditer(text)):
        if i == max_input_tokens:
            return text[: m.start()].rstrip()
    return text


class MockGateway:
    """Replays canned responses from ``<fixture_dir>/<sha256(prompt)>.txt``.

    For ``sample_index > 0`` the file ``<hash>.<index>.txt`` is preferred, so
    a fixture set can supply distinct samples for best-of-k runs.
    """

    def __init__(self, fixture_dir: str | Path) -> None:
        self.fixture_dir = Path(fixture_dir)

    def complete(self, req: GenerationRequest) -> GenerationResponse:
        h = prompt_hash(req.prompt)
        candidates = [self.fixture_dir / f"{h}.txt"]
        if req.sample_index > 0:
            candidates.insert(0, self.fixture_dir / f"{h}.{req.sample_index}.txt")
        for path in candidates:
            if path.is_file():
                return GenerationResponse(path.read_text(encoding="utf-8"), "stop", 0.0)
        raise FixtureMiss(h)


def write_fixture(fixture_dir: str | Path, prompt: str, response: str, sample_index: int = 0) -> Path:
    fixture_dir = Path(fixture_dir)
    fixture_dir.mkdir(parents=True, exist_ok=True)
    h = prompt_hash(prompt)
    path = fixture_dir / (f"{h}.{sample_index}.txt" if sample_index else f"{h}.txt")
    path.write_text(response, encoding="utf-8")
    return path


class HttpGateway:
    """JSON-over-HTTP completion client.

    The endpoint receives ``{"model_name", "prompt", "temperature",
    "max_output_tokens"}`` and answers ``{"text", "finish_reason"}``.
    """

    def __init__(
        self,
        base_url: str,
        model_name: str,
        token_env: str | None = "PERFPROMPT_API_TOKEN",
        timeout: float = 120.0,
        max_in_flight: int = 4,
        retries: int = 2,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self.model_name = model_name
        self.retries = retries
        self.backoff = backoff
        headers = {}
        token = os.environ.get(token_env) if token_env else None
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self._client = httpx.Client(base_url=base_url, headers=headers, timeout=timeout, transport=transport)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def complete(self, req: GenerationRequest) -> GenerationResponse:
        payload = {
            "model_name": req.model_name if req.model_name != "mock" else self.model_name,
            "prompt": req.prompt,
            "temperature": req.temperature,
            "max_output_tokens": req.max_output_tokens,
        }
        last: GatewayError | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                with self._slots:
                    resp = self._client.post("", json=payload)
            except httpx.TimeoutException as exc:
                last = GatewayTimeout(str(exc))
                continue
            except httpx.TransportError as exc:
                last = EndpointError(f"transport error: {exc}")
                continue
            if resp.status_code >= 500 or resp.status_code == 429:
                last = EndpointError(f"endpoint returned {resp.status_code}")
                continue
            if resp.status_code >= 400:
                raise EndpointError(f"endpoint returned {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
                text = body["text"]
            except (ValueError, KeyError, TypeError) as exc:
                raise EndpointError("malformed endpoint response") from exc
            return GenerationResponse(text, body.get("finish_reason", "stop"), time.perf_counter() - start)
        assert last is not None
        raise last

    def close(self) -> None:
        self._client.close()
