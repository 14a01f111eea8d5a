"""Generation and embedding backends: remote HTTP endpoints plus offline stubs.

The remote classes speak a minimal JSON-over-POST contract:

* ``POST {endpoint}/generate`` with ``{"prompt", "max_tokens", "temperature"}``
  returns ``{"text": ...}``.
* ``POST {endpoint}/embed`` with ``{"texts": [...]}`` returns
  ``{"vectors": [[...], ...]}`` aligned with the request order.

The stubs are bit-deterministic given their seed and never touch the network,
so every pipeline stage can run in CI.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass

import numpy as np
import requests

from .errors import BackendRefusal, BackendUnavailable, DimensionMismatch

DEFAULT_MAX_TOKENS = 1024
DEFAULT_TEMPERATURE = 0.0
DEFAULT_DIMENSION = 1024

_TOKEN_RE = re.compile(r"\w+")


@dataclass(frozen=True)
class Demonstration:
    """One in-context example for a generation prompt.

    ``table_literal`` is the already-serialized table shown to the model and
    ``description`` the hand-written passage it should imitate.
    """

    table_literal: str
    description: str


class _Limiter:
    """Caps concurrent requests via a bounded semaphore."""

    def __init__(self, max_in_flight: int):
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        self._sem = threading.BoundedSemaphore(max_in_flight)

    def __enter__(self):
        self._sem.acquire()

    def __exit__(self, *exc):
        self._sem.release()


def _post(url: str, payload: dict, timeout: float, retries: int) -> dict:
    last_exc: Exception | None = None
    for _ in range(retries + 1):
        try:
            resp = requests.post(url, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_exc = exc
            continue
        if resp.status_code != 200:
            last_exc = BackendUnavailable(f"{url} returned HTTP {resp.status_code}")
            continue
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendRefusal(f"{url} returned a non-JSON body") from exc
    if isinstance(last_exc, BackendUnavailable):
        raise last_exc
    raise BackendUnavailable(f"{url} unreachable: {last_exc}") from last_exc


class RemoteGenerator:
    """Text generation over the ``/generate`` wire contract."""

    kind = "remote"

    def __init__(self, endpoint: str, timeout: float = 30.0,
                 max_in_flight: int = 4, retries: int = 0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self._limiter = _Limiter(max_in_flight)

    def generate(self, prompt: str, max_tokens: int = DEFAULT_MAX_TOKENS,
                 temperature: float = DEFAULT_TEMPERATURE) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        payload = {"prompt": prompt, "max_tokens": max_tokens, "temperature": temperature}
        with self._limiter:
            body = _post(f"{self.endpoint}/generate", payload, self.timeout, self.retries)
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendRefusal(f"{self.endpoint}/generate reply lacks a 'text' string")
        return text


class RemoteEmbedder:
    """Batch embedding over the ``/embed`` wire contract.

    Returned vectors are validated against ``dimension`` and re-normalized to
    unit length so inner products are cosine similarities.
    """

    kind = "remote"

    def __init__(self, endpoint: str, dimension: int = DEFAULT_DIMENSION,
                 timeout: float = 30.0, max_in_flight: int = 4, retries: int = 0):
        self.endpoint = endpoint.rstrip("/")
        self.dimension = dimension
        self.timeout = timeout
        self.retries = retries
        self._limiter = _Limiter(max_in_flight)

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        with self._limiter:
            body = _post(f"{self.endpoint}/embed", {"texts": list(texts)},
                         self.timeout, self.retries)
        vectors = body.get("vectors")
        if not isinstance(vectors, list) or len(vectors) != len(texts):
            raise BackendRefusal(
                f"{self.endpoint}/embed reply lacks {len(texts)} aligned vectors"
            )
        out = np.asarray(vectors, dtype=np.float64)
        if out.ndim != 2 or out.shape[1] != self.dimension:
            raise DimensionMismatch(
                f"expected {self.dimension}-dimensional vectors, got shape {out.shape}"
            )
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            raise BackendRefusal(f"{self.endpoint}/embed returned a zero vector")
        return (out / norms).astype(np.float32)


class StubGenerator:
    """Offline generator: fixture lookup by exact prompt, else a marker echo.

    Unmatched prompts map to ``"STUB:"`` plus the last 200 characters of the
    prompt, which keeps outputs deterministic and traceable to their input.
    """

    kind = "stub"

    def __init__(self, fixtures: dict[str, str] | None = None):
        self.fixtures = dict(fixtures or {})
        self.calls = 0  # exposed so tests can assert how often generation ran

    def generate(self, prompt: str, max_tokens: int = DEFAULT_MAX_TOKENS,
                 temperature: float = DEFAULT_TEMPERATURE) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        self.calls += 1
        if prompt in self.fixtures:
            return self.fixtures[prompt]
        return "STUB:" + prompt[-200:]


class StubEmbedder:
    """Hashed bag-of-words embedder, bit-deterministic for a given seed.

    Construction (tests recompute it independently, so it is part of the
    contract):

    1. tokens = ``re.findall(r"\\w+", text.lower())``
    2. for each token, ``h = blake2b(token.encode("utf-8"), digest_size=16,
       key=str(seed).encode())``; the token adds ``sign`` at position
       ``index`` where ``index = int.from_bytes(h[:8], "little") % dimension``
       and ``sign = +1.0`` if ``h[8]`` is even else ``-1.0``
    3. the accumulated vector is L2-normalized in float64 and cast to float32

    A text with no word tokens, or whose token contributions cancel exactly,
    falls back to a unit vector at the index hashed from the empty string.
    """

    kind = "stub"

    def __init__(self, dimension: int = DEFAULT_DIMENSION, seed: int = 0):
        if dimension < 1:
            raise ValueError("dimension must be >= 1")
        self.dimension = dimension
        self.seed = seed
        self._key = str(seed).encode("utf-8")

    def _slot(self, token: str) -> tuple[int, float]:
        digest = hashlib.blake2b(
            token.encode("utf-8"), digest_size=16, key=self._key
        ).digest()
        index = int.from_bytes(digest[:8], "little") % self.dimension
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        return index, sign

    def embed_one(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in _TOKEN_RE.findall(text.lower()):
            index, sign = self._slot(token)
            vec[index] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[:] = 0.0
            vec[self._slot("")[0]] = 1.0
            norm = 1.0
        return (vec / norm).astype(np.float32)

    def embed(self, texts: list[str]) -> np.ndarray:
        if not texts:
            return np.zeros((0, self.dimension), dtype=np.float32)
        return np.stack([self.embed_one(t) for t in texts])
