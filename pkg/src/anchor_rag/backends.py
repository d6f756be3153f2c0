"""HTTP clients for remote fill-mask, embedding and generation services.

All three speak one small JSON protocol::

    POST /v1/fill-mask  {"text", "mask_token", "top_k"} -> {"predictions": [{"token", "prob"}]}
    POST /v1/embed      {"texts"}                       -> {"vectors": [[...], ...]}
    POST /v1/generate   {"prompt", "max_tokens", "greedy"} -> {"text", "tokens": [{"token", "prob"}]}

Requests carry ``Authorization: Bearer <key>`` when the environment
variable named by ``api_key_ref`` is set.
"""

from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Callable, Sequence

import httpx
import numpy as np

from .exceptions import AnchorRAGError, EmptyGenerationError, InvalidParameterError
from .generate import GenerationResult, Prompt
from .predict import MASK_TOKEN, MaskedQuery, TopKDistribution

logger = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "ANCHOR_RAG_API_KEY"
MAX_BACKOFF_MS = 30_000

TRANSPORT = "transport"
PROTOCOL = "protocol"
AUTH = "auth"
RATE_LIMITED = "rate-limited"
MALFORMED = "malformed-response"
_RETRYABLE = {TRANSPORT, RATE_LIMITED}


class BackendError(AnchorRAGError):
    def __init__(self, kind: str, detail: str, attempts: int = 1):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail
        self.attempts = attempts

    @property
    def retryable(self) -> bool:
        return self.kind in _RETRYABLE


@dataclass(frozen=True)
class BackendConfig:
    base_url: str
    api_key_ref: str = DEFAULT_API_KEY_ENV
    timeout_ms: int = 30_000
    max_retries: int = 3
    backoff_initial_ms: int = 250

    def __post_init__(self):
        if not self.base_url:
            raise InvalidParameterError("base_url is required")
        if self.timeout_ms < 1 or self.backoff_initial_ms < 1:
            raise InvalidParameterError("timeout_ms and backoff_initial_ms must be positive")
        if self.max_retries < 0:
            raise InvalidParameterError("max_retries must be >= 0")

    def backoff_ms(self, retry: int) -> int:
        """Delay before retry number ``retry`` (0-based): doubling, capped."""
        return min(self.backoff_initial_ms * 2**retry, MAX_BACKOFF_MS)


def _classify_status(status: int) -> str | None:
    if 200 <= status < 300:
        return None
    if status in (401, 403):
        return AUTH
    if status == 429:
        return RATE_LIMITED
    if status >= 500:
        return TRANSPORT
    return PROTOCOL


class HttpBackend:
    """JSON-over-HTTP client with the shared auth, timeout and retry policy."""

    id = "remote"

    def __init__(self, config: BackendConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config
        self._sleep = sleep
        headers = {}
        key = os.environ.get(config.api_key_ref)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(base_url=config.base_url.rstrip("/"), headers=headers,
                                    timeout=config.timeout_ms / 1000, transport=transport)

    def close(self):
        self._client.close()

    def post(self, path: str, body: dict) -> dict:
        attempts = 0
        while True:
            attempts += 1
            try:
                resp = self._client.post(path, json=body)
            except httpx.TransportError as exc:
                err = BackendError(TRANSPORT, f"{type(exc).__name__}: {exc}", attempts)
            else:
                kind = _classify_status(resp.status_code)
                if kind is None:
                    try:
                        payload = resp.json()
                    except ValueError:
                        raise BackendError(MALFORMED, "response is not JSON", attempts) from None
                    if not isinstance(payload, dict):
                        raise BackendError(MALFORMED, "response is not a JSON object", attempts)
                    return payload
                err = BackendError(kind, f"HTTP {resp.status_code} from {path}", attempts)
            if not err.retryable or attempts > self.config.max_retries:
                raise err
            delay = self.config.backoff_ms(attempts - 1)
            logger.debug("retrying %s after %s in %d ms", path, err, delay)
            self._sleep(delay / 1000)


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def parse_fill_mask(payload: dict, k: int) -> TopKDistribution:
    preds = payload.get("predictions")
    if not isinstance(preds, list):
        raise BackendError(MALFORMED, "missing 'predictions' list")
    best: dict[str, float] = {}
    repaired = False
    for item in preds:
        if not isinstance(item, dict):
            raise BackendError(MALFORMED, "prediction is not an object")
        token, prob = item.get("token"), item.get("prob")
        if not isinstance(token, str) or not token.strip():
            raise BackendError(MALFORMED, "empty or missing token")
        if not _is_number(prob) or prob < 0 or prob > 1:
            raise BackendError(MALFORMED, f"invalid probability {prob!r} for {token!r}")
        token = token.strip().lower()
        if prob == 0:
            repaired = True
            continue
        if token in best:
            repaired = True
        best[token] = max(prob, best.get(token, 0.0))
    entries = sorted(best.items(), key=lambda kv: (-kv[1], kv[0]))
    if math.fsum(best.values()) > 1 + 1e-9:
        raise BackendError(MALFORMED, "prediction probabilities sum to more than 1")
    seen = [(str(i["token"]).strip().lower(), i["prob"]) for i in preds if i["prob"] > 0]
    if repaired or seen != entries:
        logger.warning("fill-mask response was re-sorted or deduplicated")
    return TopKDistribution(tuple(entries[:k]), k)


class RemoteFillMask(HttpBackend):
    def fill_mask(self, query: MaskedQuery, k: int) -> TopKDistribution:
        return parse_fill_mask(self.fill_mask_text(query.masked_text(MASK_TOKEN), k), k)

    def fill_mask_text(self, text: str, k: int) -> dict:
        return self.post("/v1/fill-mask", {"text": text, "mask_token": MASK_TOKEN, "top_k": k})


def remote_fill_mask(config: BackendConfig, text: str, k: int, **kwargs) -> TopKDistribution:
    client = RemoteFillMask(config, **kwargs)
    try:
        return parse_fill_mask(client.fill_mask_text(text, k), k)
    finally:
        client.close()


class RemoteEmbedder(HttpBackend):
    def __init__(self, config: BackendConfig, dimension: int | None = None, **kwargs):
        super().__init__(config, **kwargs)
        self.dimension = dimension

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dimension or 0))
        if any(not t for t in texts):
            raise InvalidParameterError("texts must be non-empty")
        payload = self.post("/v1/embed", {"texts": texts})
        vectors = payload.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise BackendError(MALFORMED, "expected one vector per text")
        dims = {len(v) if isinstance(v, list) else -1 for v in vectors}
        if len(dims) != 1 or -1 in dims or 0 in dims:
            raise BackendError(MALFORMED, "ragged or empty vectors")
        if not all(_is_number(x) for v in vectors for x in v):
            raise BackendError(MALFORMED, "non-numeric vector component")
        dim = dims.pop()
        if self.dimension is None:
            self.dimension = dim
        elif dim != self.dimension:
            raise BackendError(MALFORMED, f"vector dimension {dim}, expected {self.dimension}")
        return np.asarray(vectors, dtype=np.float64)


def remote_embed(config: BackendConfig, texts: Sequence[str], **kwargs) -> np.ndarray:
    texts = list(texts)
    if not texts:
        return np.zeros((0, 0))
    client = RemoteEmbedder(config, **kwargs)
    try:
        return client.embed(texts)
    finally:
        client.close()


def parse_generation(payload: dict) -> GenerationResult:
    text = payload.get("text")
    if not isinstance(text, str):
        raise BackendError(MALFORMED, "missing 'text'")
    tokens = payload.get("tokens")
    if tokens is None:
        if not text.strip():
            raise EmptyGenerationError("remote generator returned no text")
        return GenerationResult.from_steps([(w, 1.0) for w in text.split()], text=text, prob_free=True)
    if not isinstance(tokens, list):
        raise BackendError(MALFORMED, "'tokens' is not a list")
    steps = []
    for item in tokens:
        if not isinstance(item, dict) or not isinstance(item.get("token"), str):
            raise BackendError(MALFORMED, "token entry lacks a string 'token'")
        prob = item.get("prob")
        if not _is_number(prob) or not 0 < prob <= 1:
            raise BackendError(MALFORMED, f"invalid step probability {prob!r}")
        steps.append((item["token"], float(prob)))
    if not steps:
        raise EmptyGenerationError("remote generator returned no tokens")
    return GenerationResult.from_steps(steps, text=text)


class RemoteGenerator(HttpBackend):
    def complete(self, prompt: Prompt, max_tokens: int) -> GenerationResult:
        return parse_generation(self.generate_text(prompt.render(), max_tokens))

    def generate_text(self, prompt_text: str, max_tokens: int, greedy: bool = True) -> dict:
        return self.post("/v1/generate", {"prompt": prompt_text, "max_tokens": max_tokens, "greedy": greedy})


def remote_generate(config: BackendConfig, prompt_text: str, max_tokens: int, greedy: bool = True,
                    **kwargs) -> GenerationResult:
    client = RemoteGenerator(config, **kwargs)
    try:
        return parse_generation(client.generate_text(prompt_text, max_tokens, greedy))
    finally:
        client.close()
