"""Uniform client layer over chat-completion and embedding backends."""

from .backends import (
    CompletionBackend,
    HttpBackend,
    MockBackend,
    RecordingWriter,
    ReplayBackend,
)
from .cache import ResponseCache
from .client import LlmGateway, RetryPolicy
from .embedding import Embedder, HashEmbedder, HttpEmbedder, QuestionEmbedding
from .types import (
    CallRecord,
    GatewayError,
    ModelRequest,
    RefusalError,
    ReplayMiss,
    request_digest,
)

__all__ = [
    "CallRecord",
    "CompletionBackend",
    "Embedder",
    "GatewayError",
    "HashEmbedder",
    "HttpBackend",
    "HttpEmbedder",
    "LlmGateway",
    "MockBackend",
    "ModelRequest",
    "QuestionEmbedding",
    "RecordingWriter",
    "RefusalError",
    "ReplayBackend",
    "ReplayMiss",
    "ResponseCache",
    "RetryPolicy",
    "request_digest",
]
