"""Completion interface over HTTP, scripted-mock and record/replay backends.

Every pipeline stage talks to a :class:`Gateway`; which backend answers is a
deployment choice. With ``mode="record"`` each response is stored under the
request digest, and ``mode="replay"`` serves only from that store.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from legalkg.errors import BackendUnavailableError, CacheMissError, InvalidConfigError

log = logging.getLogger(__name__)

DEFAULT_MODEL = "llama3.3:70b"
MODES = ("off", "record", "replay")


def request_digest(prompt: str, temperature: float, model_name: str) -> str:
    payload = json.dumps(
        {"model": model_name, "prompt": prompt, "temperature": float(temperature)},
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    temperature: float = 0.0
    max_output: int = 4096
    model_name: str = DEFAULT_MODEL
    stage_tag: str = ""
    # when set, a response lacking this string is flagged as truncated
    terminator: str | None = None

    @property
    def digest(self) -> str:
        return request_digest(self.prompt, self.temperature, self.model_name)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend: str
    latency_ms: float
    request_digest: str
    truncated: bool = False


class Backend(Protocol):
    name: str

    def generate(self, request: CompletionRequest) -> str: ...


# --------------------------------------------------------------------------
# HTTP

def _ollama_payload(req: CompletionRequest, model: str) -> dict:
    return {
        "model": model,
        "prompt": req.prompt,
        "stream": False,
        "options": {"temperature": req.temperature, "num_predict": req.max_output},
    }


def _ollama_text(body: dict) -> str:
    return body["response"]


def _openai_payload(req: CompletionRequest, model: str) -> dict:
    return {
        "model": model,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
        "max_tokens": req.max_output,
        "stream": False,
    }


def _openai_text(body: dict) -> str:
    return body["choices"][0]["message"]["content"]


ADAPTERS = {
    "ollama": ("/api/generate", _ollama_payload, _ollama_text),
    "openai": ("/v1/chat/completions", _openai_payload, _openai_text),
}


class HttpBackend:
    """JSON-over-HTTP completion endpoint (Ollama- or OpenAI-style).

    Timeouts, transport errors, 429 and 5xx responses are retried with
    exponential backoff; after ``attempts`` failures the call raises
    :class:`BackendUnavailableError`.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        adapter: str = "ollama",
        path: str | None = None,
        auth_header: str | None = None,
        model: str | None = None,
        timeout: float = 600.0,
        attempts: int = 3,
        backoff: float = 1.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if adapter not in ADAPTERS:
            raise InvalidConfigError(f"unknown adapter {adapter!r}; choose from {sorted(ADAPTERS)}")
        if attempts < 1:
            raise InvalidConfigError("attempts must be >= 1")
        default_path, self._payload, self._text = ADAPTERS[adapter]
        self.url = base_url.rstrip("/") + (path or default_path)
        self.model = model
        self.attempts = attempts
        self.backoff = backoff
        self._sleep = sleep
        headers = {}
        if auth_header:
            key, sep, value = auth_header.partition(":")
            if sep:
                headers[key.strip()] = value.strip()
            else:
                headers["Authorization"] = auth_header.strip()
        self._client = client or httpx.Client(timeout=timeout, headers=headers)
        if client is not None and headers:
            self._client.headers.update(headers)

    def generate(self, request: CompletionRequest) -> str:
        payload = self._payload(request, self.model or request.model_name)
        last = ""
        for attempt in range(1, self.attempts + 1):
            try:
                resp = self._client.post(self.url, json=payload)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 429 or resp.status_code >= 500:
                    last = f"HTTP {resp.status_code}"
                elif resp.status_code >= 400:
                    raise BackendUnavailableError(f"{self.url}: HTTP {resp.status_code}: {resp.text[:200]}")
                else:
                    try:
                        return self._text(resp.json())
                    except (ValueError, KeyError, IndexError, TypeError) as exc:
                        raise BackendUnavailableError(f"{self.url}: malformed response body ({exc})") from exc
            log.warning("completion attempt %d/%d failed: %s", attempt, self.attempts, last)
            if attempt < self.attempts:
                self._sleep(self.backoff * 2 ** (attempt - 1))
        raise BackendUnavailableError(f"{self.url}: giving up after {self.attempts} attempts ({last})")


# --------------------------------------------------------------------------
# replay store

class ReplayStore:
    """Append-only directory of ``<digest>.txt`` responses plus ``index.tsv``."""

    INDEX = "index.tsv"

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self._lock = threading.Lock()

    def path_for(self, digest: str) -> Path:
        return self.directory / f"{digest}.txt"

    def get(self, digest: str) -> str | None:
        p = self.path_for(digest)
        if not p.is_file():
            return None
        return p.read_bytes().decode("utf-8")

    def put(self, digest: str, text: str, stage_tag: str = "") -> None:
        with self._lock:
            p = self.path_for(digest)
            if p.exists():
                return
            self.directory.mkdir(parents=True, exist_ok=True)
            tmp = p.with_suffix(".tmp")
            tmp.write_bytes(text.encode("utf-8"))
            tmp.replace(p)
            with (self.directory / self.INDEX).open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(f"{digest}\t{stage_tag}\t{p.name}\n")

    def __contains__(self, digest: str) -> bool:
        return self.path_for(digest).is_file()

    def __len__(self) -> int:
        return sum(1 for _ in self.directory.glob("*.txt")) if self.directory.is_dir() else 0


# --------------------------------------------------------------------------

class Gateway:
    """Uniform ``complete()`` over a backend with optional record/replay."""

    def __init__(self, backend: Backend | None, store: ReplayStore | None = None, mode: str = "off"):
        if mode not in MODES:
            raise InvalidConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if mode != "off" and store is None:
            raise InvalidConfigError(f"mode {mode!r} needs a replay store")
        if mode != "replay" and backend is None:
            raise InvalidConfigError("a backend is required unless replaying")
        self.backend = backend
        self.store = store
        self.mode = mode

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if not request.prompt:
            raise ValueError("prompt must be non-empty")
        digest = request.digest
        t0 = time.perf_counter()
        text = None
        source = ""
        if self.mode in ("record", "replay"):
            text = self.store.get(digest)
            source = "replay"
            if text is None and self.mode == "replay":
                raise CacheMissError(digest, request.stage_tag)
        if text is None:
            text = self.backend.generate(request)
            source = self.backend.name
            if self.mode == "record":
                self.store.put(digest, text, request.stage_tag)
        truncated = bool(request.terminator) and request.terminator not in text
        if truncated:
            log.warning("response for %s lacks terminator %r; possibly truncated",
                        request.stage_tag or digest[:12], request.terminator)
        return CompletionResponse(
            text=text,
            backend=source,
            latency_ms=(time.perf_counter() - t0) * 1000.0,
            request_digest=digest,
            truncated=truncated,
        )
