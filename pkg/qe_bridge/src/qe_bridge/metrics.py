"""Scoring models and the context-prepending rules shared by all of them."""

from __future__ import annotations

import threading
from collections import Counter
from typing import Protocol

from .schema import ScoreItem

STUB_MODEL_ID = "stub-charf"

# Context handling is flagged in the reported model id so callers can tell
# which encoding produced their scores.
CONTEXT_TAG = "ctx-prepend-512"

CONTEXT_TOKEN_LIMIT = 512


class ModelUnavailableError(RuntimeError):
    """Raised when the configured model cannot serve requests."""


class ScoringModel(Protocol):
    model_id: str

    def score_batch(self, metric: str, items: list[ScoreItem]) -> list[float]: ...


def _bigrams(text: str) -> Counter:
    return Counter(text[i : i + 2] for i in range(len(text) - 1))


def char_f(a: str, b: str) -> float:
    """Character-bigram F1 in [0, 1]; 1.0 iff the bigram multisets coincide."""
    if a == b:
        return 1.0
    ga, gb = _bigrams(a), _bigrams(b)
    if not ga or not gb:
        return 0.0
    overlap = sum(min(c, gb[g]) for g, c in ga.items())
    precision = overlap / sum(ga.values())
    recall = overlap / sum(gb.values())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def fit_context(context: list[tuple[str, str]], fields: list[str], limit: int = CONTEXT_TOKEN_LIMIT) -> str:
    """Joined context block trimmed to the token budget, oldest pairs dropped first.

    The budget covers the block plus the longest field it will be prepended to,
    mirroring a fixed encoder window. Tokens are whitespace words.
    """
    kept = list(context)
    field_cost = max((len(f.split()) for f in fields), default=0)

    def block(pairs: list[tuple[str, str]]) -> str:
        return " ".join(f"{s} {t}" for s, t in pairs)

    while kept and len(block(kept).split()) + field_cost > limit:
        kept.pop(0)
    return block(kept)


class CharFModel:
    """Deterministic stub standing in for a learned metric.

    ref_based scores mt against ref; qe falls back to source overlap; the
    context variant prepends the trimmed context block to both comparison
    sides. Batch calls are serialized: the stub is pure, but the lock marks
    where a non-thread-safe model would be protected.
    """

    model_id = STUB_MODEL_ID

    def __init__(self) -> None:
        self._lock = threading.Lock()

    def _score_one(self, metric: str, item: ScoreItem) -> float:
        if metric == "qe":
            return char_f(item.mt, item.src)
        assert item.ref is not None  # schema-checked upstream
        if metric == "context_ref_based" and item.context:
            block = fit_context(item.context, [item.src, item.mt, item.ref])
            if block:
                return char_f(f"{block} {item.mt}", f"{block} {item.ref}")
        return char_f(item.mt, item.ref)

    def score_batch(self, metric: str, items: list[ScoreItem]) -> list[float]:
        with self._lock:
            return [self._score_one(metric, item) for item in items]


class UnavailableModel:
    """Placeholder for a configured model this deployment cannot load."""

    def __init__(self, model_id: str, reason: str) -> None:
        self.model_id = model_id
        self.reason = reason

    def score_batch(self, metric: str, items: list[ScoreItem]) -> list[float]:
        raise ModelUnavailableError(f"model {self.model_id!r} unavailable: {self.reason}")


def load_model(model_id: str = STUB_MODEL_ID) -> ScoringModel:
    """Only the stub ships with the service; any other id needs weights we don't have."""
    if model_id == STUB_MODEL_ID:
        return CharFModel()
    return UnavailableModel(model_id, "no weights bundled with this service")
