"""Quality scorers: an in-process deterministic stub and a client for the scoring service."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import requests

from .errors import ScorerError
from .metrics import char_bigram_f

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class CharFScorer:
    """Deterministic character-bigram F stub filling every scorer role.

    With a reference it scores the translation against it; without one it falls
    back to source overlap, a crude reference-free proxy. Scores stay in [0, 1].
    """

    use_context: bool = False

    def score(
        self,
        src: str,
        mt: str,
        ref: str | None = None,
        context: Sequence[tuple[str, str]] | None = None,
    ) -> float:
        basis = ref if ref is not None else src
        if context and self.use_context:
            joined_ctx = " ".join(f"{s} {t}" for s, t in context)
            return char_bigram_f(f"{joined_ctx} {mt}", f"{joined_ctx} {basis}")
        return char_bigram_f(mt, basis)


@dataclass(slots=True)
class CharFUtility:
    """Candidate-pair utility built on the same character-bigram F stub."""

    use_context: bool = False

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        if context and self.use_context:
            joined_ctx = " ".join(f"{s} {t}" for s, t in context)
            return char_bigram_f(f"{joined_ctx} {hyp}", f"{joined_ctx} {ref}")
        return char_bigram_f(hyp, ref)


class QeBridgeClient:
    """HTTP client for the scoring service's /v1/score and /health endpoints.

    The same client serves as segment scorer (ref_based / qe), consensus
    utility (ref_based or context_ref_based via use_context), and window
    scorer. Scores come back in item order.
    """

    def __init__(self, base_url: str, timeout_s: float = 30.0, use_context: bool = False) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s
        self.use_context = use_context
        self._session = requests.Session()

    def score_batch(self, metric: str, items: list[dict]) -> list[float]:
        try:
            resp = self._session.post(
                f"{self.base_url}/v1/score",
                json={"metric": metric, "items": items},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise ScorerError(f"scoring service unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerError(f"scoring service returned HTTP {resp.status_code}: {resp.text[:200]}")
        payload = resp.json()
        scores = payload.get("scores")
        if not isinstance(scores, list) or len(scores) != len(items):
            raise ScorerError("scoring service returned a malformed score list")
        return [float(s) for s in scores]

    def score(
        self,
        src: str,
        mt: str,
        ref: str | None = None,
        context: Sequence[tuple[str, str]] | None = None,
    ) -> float:
        item: dict = {"src": src, "mt": mt}
        if ref is None:
            metric = "qe"
        elif context and self.use_context:
            metric = "context_ref_based"
            item["ref"] = ref
            item["context"] = [[s, t] for s, t in context]
        else:
            metric = "ref_based"
            item["ref"] = ref
        return self.score_batch(metric, [item])[0]

    # Consensus-utility role: candidate pairs scored reference-based.
    def utility_score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        return self.score("", hyp, ref=ref, context=context)

    def health(self) -> dict:
        try:
            resp = self._session.get(f"{self.base_url}/health", timeout=self.timeout_s)
        except requests.RequestException as exc:
            raise ScorerError(f"scoring service unreachable: {exc}") from exc
        return resp.json()


@dataclass(slots=True)
class BridgeUtility:
    """Adapter exposing a bridge client under the consensus-utility interface."""

    client: QeBridgeClient

    @property
    def use_context(self) -> bool:
        return self.client.use_context

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        return self.client.utility_score(hyp, ref, context)


@dataclass(slots=True)
class BridgeChunkScorer:
    """Adapter exposing a bridge client under the window-scorer interface."""

    client: QeBridgeClient

    def score(self, src: str, hyp: str, ref: str) -> float:
        return self.client.score(src, hyp, ref=ref)
