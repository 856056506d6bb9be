"""Text generation, plausibility scoring and embedding backends.

Each role has an HTTP client speaking a small JSON protocol and a
deterministic local stand-in used by tests and the synthetic pipeline.
"""
from __future__ import annotations

import enum
import hashlib
import logging
import re
import time
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from .graph import normalize_text

log = logging.getLogger(__name__)

INTENTION_PROMPT_MARKER = "Users buy these items because they want to:"
CONCEPT_PROMPT_MARKER = "give several phrases containing 1-3 words"

_TOKEN = re.compile(r"[a-z0-9]+")
_ITEM_LINE = re.compile(r"^\s*\d+\.\s+(.+?)(?:\s+—\s+.*)?$")
_CONCEPT_QUERY = re.compile(r"INTENTION: (.+?)\.?\nYour answer:\s*$")


class BackendKind(str, enum.Enum):
    HTTP_GENERATOR = "HttpGenerator"
    MOCK_GENERATOR = "MockGenerator"
    HTTP_SCORER = "HttpScorer"
    MOCK_SCORER = "MockScorer"
    HASH_EMBEDDER = "HashEmbedder"


class BackendError(Exception):
    """Base class for backend failures."""


class BackendTransportError(BackendError):
    pass


class BackendProtocolError(BackendError):
    pass


class BackendInputError(BackendError, ValueError):
    pass


@dataclass(frozen=True)
class GenParams:
    max_tokens: int = 256
    temperature: float = 0.0
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


@runtime_checkable
class Generator(Protocol):
    def generate(self, prompt: str, params: GenParams) -> str: ...


@runtime_checkable
class Scorer(Protocol):
    def plausibility(self, statement: str) -> float: ...


@runtime_checkable
class Embedder(Protocol):
    dim: int

    def embed(self, text: str) -> np.ndarray: ...


def keyed_unit(text: str, seed: int) -> float:
    """Map (text, seed) to a float in [0, 1) with a keyed hash."""
    h = hashlib.blake2b(text.encode("utf-8"), digest_size=8, key=str(seed).encode("ascii"))
    return int.from_bytes(h.digest(), "big") / 2.0**64


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


def token_bucket(token: str, dim: int) -> int:
    return int.from_bytes(hashlib.md5(token.encode("utf-8")).digest()[:8], "big") % dim


# --------------------------------------------------------------------------
# deterministic local backends


# A few hand-written entries so the demo prompts produce sensible output.
DEFAULT_INTENTIONS = {
    "coffee beans": "make coffee at home",
    "milk frother": "froth milk for lattes",
}
DEFAULT_CONCEPTS = {
    "personalize their drawstring bags": ["personalization", "gift", "accessorizing"],
    "purchase a construction dump truck toy for a 2-year-old boy or girl": ["playtime", "construction", "gift"],
    "make coffee at home": ["coffee brewing", "home comfort"],
    "froth milk for lattes": ["latte making", "coffee brewing"],
}
_FALLBACK_VERBS = ("use", "enjoy", "get")


class MockGenerator:
    """Completions built from lookup tables keyed by the prompt content.

    Intention prompts: one line per item title, using ``intentions[title]``
    when present and ``"<verb> <title>"`` otherwise. Concept prompts: the
    phrases in ``concepts[intention]`` or the trailing words of the
    intention.
    """

    kind = BackendKind.MOCK_GENERATOR

    def __init__(
        self,
        intentions: dict[str, str] | None = None,
        concepts: dict[str, list[str]] | None = None,
        seed: int = 0,
    ):
        table = DEFAULT_INTENTIONS if intentions is None else intentions
        self.intentions = {normalize_text(k): v for k, v in table.items()}
        table = DEFAULT_CONCEPTS if concepts is None else concepts
        self.concepts = {normalize_text(k): list(v) for k, v in table.items()}
        self.seed = seed

    def generate(self, prompt: str, params: GenParams = GenParams()) -> str:
        if not prompt.strip():
            raise BackendInputError("empty prompt")
        seed = self.seed if params.seed is None else params.seed
        if INTENTION_PROMPT_MARKER in prompt:
            return self._intentions(prompt, seed)
        m = _CONCEPT_QUERY.search(prompt)
        if CONCEPT_PROMPT_MARKER in prompt and m:
            return self._concepts(m.group(1), seed)
        return ""

    def _intentions(self, prompt: str, seed: int) -> str:
        session_block = prompt.split("Explain the basic intentions", 1)[0]
        lines = []
        for raw in session_block.splitlines():
            m = _ITEM_LINE.match(raw)
            if not m:
                continue
            title = m.group(1).strip()
            phrase = self.intentions.get(normalize_text(title))
            if phrase is None:
                verb = _FALLBACK_VERBS[int(keyed_unit(title, seed) * len(_FALLBACK_VERBS))]
                phrase = f"{verb} {normalize_text(title)}"
            lines.append(f"intention {len(lines) + 1}: {phrase}")
        return "\n".join(lines)

    def _concepts(self, intention: str, seed: int) -> str:
        phrases = self.concepts.get(normalize_text(intention))
        if phrases is None:
            words = tokenize(intention)
            phrases = [" ".join(words[-2:]), words[-1]] if words else []
        return ", ".join(phrases)


class MockScorer:
    """Keyed-hash plausibility in ``[0, ceiling)`` with exact-string overrides."""

    kind = BackendKind.MOCK_SCORER

    def __init__(self, overrides: dict[str, float] | None = None, seed: int = 0, ceiling: float = 1.0):
        if not 0.0 <= ceiling <= 1.0:
            raise ValueError("ceiling must lie in [0, 1]")
        self.overrides = dict(overrides or {})
        self.seed = seed
        self.ceiling = ceiling

    def plausibility(self, statement: str) -> float:
        if not statement.strip():
            raise BackendInputError("empty statement")
        if statement in self.overrides:
            return float(self.overrides[statement])
        return keyed_unit(statement, self.seed) * self.ceiling


class HashEmbedder:
    """Bag of hashed tokens, L2-normalized."""

    kind = BackendKind.HASH_EMBEDDER

    def __init__(self, dim: int = 64):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        tokens = tokenize(text)
        if not tokens:
            raise BackendInputError(f"nothing to embed in {text!r}")
        vec = np.zeros(self.dim)
        for tok in tokens:
            vec[token_bucket(tok, self.dim)] += 1.0
        return vec / np.linalg.norm(vec)


# --------------------------------------------------------------------------
# HTTP clients


class _HttpBackend:
    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.5,
        client: httpx.Client | None = None,
    ):
        if retries < 1:
            raise ValueError("retries must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)

    def _post(self, path: str, payload: dict) -> dict:
        url = f"{self.base_url}{path}"
        last: Exception | None = None
        for attempt in range(self.retries):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._client.post(url, json=payload)
            except httpx.TransportError as exc:
                last = exc
                log.warning("POST %s failed (%s), attempt %d/%d", path, exc, attempt + 1, self.retries)
                continue
            if resp.status_code >= 500:
                last = BackendTransportError(f"HTTP {resp.status_code}")
                log.warning("POST %s returned %d, attempt %d/%d", path, resp.status_code, attempt + 1, self.retries)
                continue
            if resp.status_code >= 400:
                raise BackendProtocolError(f"POST {path} returned {resp.status_code}: {resp.text[:200]}")
            try:
                body = resp.json()
            except ValueError:
                raise BackendProtocolError(f"POST {path} returned a non-JSON body") from None
            if not isinstance(body, dict):
                raise BackendProtocolError(f"POST {path} returned {type(body).__name__}, expected object")
            return body
        raise BackendTransportError(f"POST {url} failed after {self.retries} attempts: {last}")

    def close(self) -> None:
        self._client.close()


class HttpGenerator(_HttpBackend):
    kind = BackendKind.HTTP_GENERATOR

    def generate(self, prompt: str, params: GenParams = GenParams()) -> str:
        if not prompt.strip():
            raise BackendInputError("empty prompt")
        payload = {"prompt": prompt, "max_tokens": params.max_tokens, "temperature": params.temperature}
        if params.seed is not None:
            payload["seed"] = params.seed
        body = self._post("/generate", payload)
        text = body.get("text")
        if not isinstance(text, str):
            raise BackendProtocolError("response lacks string field 'text'")
        return text


class HttpScorer(_HttpBackend):
    kind = BackendKind.HTTP_SCORER

    def plausibility(self, statement: str) -> float:
        if not statement.strip():
            raise BackendInputError("empty statement")
        body = self._post("/score", {"statement": statement})
        score = body.get("score")
        if isinstance(score, bool) or not isinstance(score, (int, float)) or not 0.0 <= score <= 1.0:
            raise BackendProtocolError(f"bad score {score!r}")
        return float(score)


class HttpEmbedder(_HttpBackend):
    def __init__(self, base_url: str, dim: int = 64, **kwargs):
        super().__init__(base_url, **kwargs)
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        if not text.strip():
            raise BackendInputError("empty text")
        body = self._post("/embed", {"text": text})
        vec = body.get("vector")
        if not isinstance(vec, list) or len(vec) != self.dim:
            raise BackendProtocolError(f"expected a {self.dim}-dim 'vector'")
        arr = np.asarray(vec, dtype=float)
        norm = np.linalg.norm(arr)
        if not np.isfinite(norm) or norm == 0:
            raise BackendProtocolError("degenerate embedding vector")
        return arr / norm
