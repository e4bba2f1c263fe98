"""Content-addressed response cache: cache/<model>/<xx>/<digest>.json."""

from __future__ import annotations

import json
import os
import re
import tempfile
import threading
from pathlib import Path

from .types import ModelRequest

_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def _model_dir(model: str) -> str:
    return _UNSAFE.sub("_", model) or "_"


class ResponseCache:
    """Append-only file cache keyed by request content hash.

    Writes are atomic (write-temp-then-rename) so readers never observe a
    partial entry, and concurrent writers of the same key converge on
    identical bytes.
    """

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self._lock = threading.Lock()

    def _path(self, request: ModelRequest) -> Path:
        digest = request.digest
        return self.root / _model_dir(request.model) / digest[:2] / f"{digest}.json"

    def get(self, request: ModelRequest) -> str | None:
        path = self._path(request)
        if not path.exists():
            return None
        payload = json.loads(path.read_text(encoding="utf-8"))
        return payload["response"]

    def put(self, request: ModelRequest, response: str) -> None:
        path = self._path(request)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(
            {"digest": request.digest, "model": request.model, "response": response},
            sort_keys=True,
        )
        with self._lock:
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    handle.write(payload)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
