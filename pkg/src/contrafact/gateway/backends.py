"""Completion backends: HTTP adapter, scripted mock, and record/replay."""

from __future__ import annotations

import json
import os
import threading
from collections import deque
from pathlib import Path
from typing import Callable, Iterable, Protocol

from .types import CallRecord, GatewayError, ModelRequest, RefusalError, ReplayMiss


class CompletionBackend(Protocol):
    def complete(self, request: ModelRequest) -> str: ...


class HttpBackend:
    """Thin adapter for any chat-completions-shaped HTTP endpoint.

    Configured by base URL plus a header template whose values may reference
    environment variables as ``$NAME`` (credentials stay out of config files).
    """

    def __init__(
        self,
        base_url: str,
        headers: dict[str, str] | None = None,
        timeout: float = 60.0,
        session=None,
    ) -> None:
        if session is None:
            import requests

            session = requests.Session()
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = session
        self._headers = {
            key: os.path.expandvars(value) for key, value in (headers or {}).items()
        }

    def complete(self, request: ModelRequest) -> str:
        body = {
            "model": request.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        response = self._session.post(
            f"{self.base_url}/chat/completions",
            json=body,
            headers=self._headers,
            timeout=self.timeout,
        )
        if response.status_code != 200:
            raise GatewayError(
                f"backend returned {response.status_code}: {response.text[:200]}"
            )
        payload = response.json()
        try:
            choice = payload["choices"][0]
            if choice.get("finish_reason") == "content_filter":
                raise RefusalError("backend refused the request")
            return choice["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed backend payload: {exc}") from exc


class MockBackend:
    """Scripted backend for tests: a FIFO queue, a responder function, or both.

    The responder (a function of the request) wins when set; otherwise
    responses pop off the queue. Exceptions placed in the queue are raised,
    which makes fault injection one-line.
    """

    def __init__(
        self,
        queue: Iterable[str | Exception] = (),
        responder: Callable[[ModelRequest], str] | None = None,
    ) -> None:
        self._queue: deque[str | Exception] = deque(queue)
        self._responder = responder
        self._lock = threading.Lock()
        self.requests: list[ModelRequest] = []

    def push(self, *responses: str | Exception) -> None:
        self._queue.extend(responses)

    def complete(self, request: ModelRequest) -> str:
        with self._lock:
            self.requests.append(request)
            if self._responder is not None:
                return self._responder(request)
            if not self._queue:
                raise GatewayError("mock queue exhausted")
            item = self._queue.popleft()
        if isinstance(item, Exception):
            raise item
        return item


class ReplayBackend:
    """Serves responses from a recording file with zero network activity."""

    def __init__(self, recording: Path | str) -> None:
        self._completions: dict[str, str] = {}
        self._embeddings: dict[str, str] = {}
        path = Path(recording)
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = CallRecord.from_json(line)
            if record.kind == "embed":
                self._embeddings[record.digest] = record.response
            else:
                self._completions[record.digest] = record.response

    def complete(self, request: ModelRequest) -> str:
        digest = request.digest
        if digest not in self._completions:
            raise ReplayMiss(
                f"no recorded response for request digest {digest[:12]}... "
                f"(model={request.model})"
            )
        return self._completions[digest]

    def embedding_response(self, digest: str) -> str | None:
        return self._embeddings.get(digest)


class RecordingWriter:
    """Appends CallRecords as JSON Lines; appends are serialized by a lock."""

    def __init__(self, path: Path | str) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, record: CallRecord) -> None:
        line = record.to_json()
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(line + "\n")


def load_records(path: Path | str) -> list[CallRecord]:
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(CallRecord.from_json(line))
    return out


def embedding_from_response(text: str) -> list[list[float]]:
    return json.loads(text)
