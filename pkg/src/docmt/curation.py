"""Parallel-corpus cleaning: heuristic filters, quality gating, language checks, dedup, balancing."""

from __future__ import annotations

import logging
import random
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Protocol

from .corpus import Corpus, ParallelDoc, StatsReport, corpus_stats
from .errors import ScorerError
from .metrics import align_sentences

logger = logging.getLogger(__name__)

# Verdict reason tags. DUPLICATE appears only in drop logs, not segment verdicts.
MIN_WORDS = "MIN_WORDS"
IDENTICAL_FRACTION = "IDENTICAL_FRACTION"
LENGTH_RATIO = "LENGTH_RATIO"
QE_BELOW = "QE_BELOW"
FLUENCY_BELOW = "FLUENCY_BELOW"
LANG_MISMATCH = "LANG_MISMATCH"
DUPLICATE = "DUPLICATE"


@dataclass(frozen=True, slots=True)
class FilterConfig:
    """Thresholds for the cleaning pipeline."""

    min_words: int = 50
    identical_fraction_max: float = 0.10
    length_ratio_max: float = 1.3
    qe_segment_threshold: float = 0.65
    fluency_segment_threshold: float = 0.5
    doc_bad_fraction_max: float = 0.20

    def __post_init__(self) -> None:
        if self.min_words < 1:
            raise ValueError("min_words must be >= 1")
        if not 0 < self.identical_fraction_max <= 1:
            raise ValueError("identical_fraction_max must be in (0, 1]")
        if not 0 < self.doc_bad_fraction_max <= 1:
            raise ValueError("doc_bad_fraction_max must be in (0, 1]")
        # A max/min word ratio is never below 1, so the bound starts there.
        if self.length_ratio_max < 1:
            raise ValueError("length_ratio_max must be >= 1")
        for name in ("qe_segment_threshold", "fluency_segment_threshold"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must be in [0, 1]")


@dataclass(slots=True)
class SegmentVerdict:
    """Filter outcome: kept iff no reason tags accumulated."""

    keep: bool
    reasons: list[str]

    def __post_init__(self) -> None:
        if self.keep != (not self.reasons):
            raise ValueError("keep must equal 'no reasons present'")


@dataclass(slots=True)
class DropRecord:
    """One dropped document with the stage and reason tags that removed it."""

    doc_id: str
    stage: str
    reasons: list[str]

    def to_dict(self) -> dict:
        return {"doc_id": self.doc_id, "stage": self.stage, "reasons": list(self.reasons)}


class ScorerClient(Protocol):
    """Scores one (source, translation) pair, optionally against a reference."""

    def score(self, src: str, mt: str, ref: str | None = None, context=None) -> float: ...


class LanguageIdentifier(Protocol):
    """Returns (language code, confidence) for a text."""

    def identify(self, text: str) -> tuple[str, float]: ...


_NUMERAL_RE = re.compile(r"\d+(?:[.,:/-]\d+)*%?")


def _is_numeral(token: str) -> bool:
    return bool(_NUMERAL_RE.fullmatch(token))


def _multiset_overlap(a: list[str], b: list[str]) -> int:
    from collections import Counter

    ca, cb = Counter(a), Counter(b)
    return sum(min(n, cb[t]) for t, n in ca.items())


def _covered_by_common_ngrams(text: str, other: str, n: int = 8) -> int:
    """Characters of `text` lying inside a length->=n substring shared with `other`."""
    if len(text) < n or len(other) < n:
        return 0
    other_grams = {other[i : i + n] for i in range(len(other) - n + 1)}
    covered = [False] * len(text)
    for i in range(len(text) - n + 1):
        if text[i : i + n] in other_grams:
            for j in range(i, i + n):
                covered[j] = True
    return sum(covered)


def identical_fraction(src: str, tgt: str) -> float:
    """Largest of three copy signals: shared words, shared numerals, shared long substrings.

    Each signal is normalized by the larger side (word or character count), so
    the fraction is symmetric in its arguments.
    """
    src_words = src.split()
    tgt_words = tgt.split()
    max_words = max(len(src_words), len(tgt_words))
    if max_words == 0:
        return 0.0
    word_frac = _multiset_overlap(src_words, tgt_words) / max_words
    num_frac = _multiset_overlap(
        [t for t in src_words if _is_numeral(t)],
        [t for t in tgt_words if _is_numeral(t)],
    ) / max_words
    max_chars = max(len(src), len(tgt))
    sub_frac = max(
        _covered_by_common_ngrams(src, tgt),
        _covered_by_common_ngrams(tgt, src),
    ) / max_chars if max_chars else 0.0
    return max(word_frac, num_frac, sub_frac)


def heuristic_verdict(src: str, tgt: str, cfg: FilterConfig) -> SegmentVerdict:
    """Length, copy-through, and length-ratio checks on one source/target text pair."""
    reasons: list[str] = []
    n_src = len(src.split())
    n_tgt = len(tgt.split())
    if n_src < cfg.min_words:
        reasons.append(MIN_WORDS)
    if identical_fraction(src, tgt) > cfg.identical_fraction_max:
        reasons.append(IDENTICAL_FRACTION)
    if n_src and n_tgt:
        ratio = max(n_src, n_tgt) / min(n_src, n_tgt)
        if ratio > cfg.length_ratio_max:
            reasons.append(LENGTH_RATIO)
    return SegmentVerdict(keep=not reasons, reasons=reasons)


def _exceeds_bad_fraction(n_bad: int, total: int, cfg: FilterConfig) -> bool:
    return n_bad / total > cfg.doc_bad_fraction_max


def qe_document_filter(
    doc: ParallelDoc,
    segment_scores: list[float],
    cfg: FilterConfig,
    threshold: float | None = None,
) -> bool:
    """Keep a document unless the share of segments scoring below threshold exceeds the cap."""
    if not segment_scores:
        raise ValueError(f"doc {doc.doc_id!r}: no segment scores")
    if threshold is None:
        threshold = cfg.qe_segment_threshold
    n_bad = sum(1 for s in segment_scores if s < threshold)
    return not _exceeds_bad_fraction(n_bad, len(segment_scores), cfg)


def language_filter(doc: ParallelDoc, identifier: LanguageIdentifier, min_confidence: float = 0.5) -> bool:
    """Keep a document iff both sides identify as their declared languages."""
    for text, want in ((doc.source_text(), doc.src_lang), (doc.target_text(), doc.tgt_lang)):
        code, confidence = identifier.identify(text)
        if code != want or confidence < min_confidence:
            return False
    return True


def _dedup_key(doc: ParallelDoc) -> tuple[str, str]:
    def norm(text: str) -> str:
        return " ".join(unicodedata.normalize("NFC", text).casefold().split())

    return norm(doc.source_text()), norm(doc.target_text())


def deduplicate(corpus: Corpus) -> Corpus:
    """Drop documents whose normalized (source, target) texts were already seen; first wins."""
    seen: set[tuple[str, str]] = set()
    kept: list[ParallelDoc] = []
    for doc in corpus:
        key = _dedup_key(doc)
        if key in seen:
            continue
        seen.add(key)
        kept.append(doc)
    return Corpus(kept)


def balance_corpus(corpus: Corpus, seed: int = 0) -> Corpus:
    """Downsample each direction group (out of / into English) to its smallest pair size.

    Sampling is without replacement and seeded; surviving documents keep input order.
    """
    rng = random.Random(seed)
    groups: dict[str, dict[str, list[int]]] = {"from_en": {}, "into_en": {}}
    for idx, doc in enumerate(corpus):
        if doc.src_lang == "en":
            groups["from_en"].setdefault(doc.pair, []).append(idx)
        elif doc.tgt_lang == "en":
            groups["into_en"].setdefault(doc.pair, []).append(idx)
        else:
            raise ValueError(f"doc {doc.doc_id!r}: balancing requires English on one side, got {doc.pair}")
    keep: set[int] = set()
    for group in ("from_en", "into_en"):
        pairs = groups[group]
        if not pairs:
            continue
        floor = min(len(ix) for ix in pairs.values())
        for pair in sorted(pairs):
            keep.update(rng.sample(pairs[pair], floor))
    return Corpus([doc for idx, doc in enumerate(corpus) if idx in keep])


@dataclass(slots=True)
class PipelineResult:
    """Cleaned corpus with before/after statistics and the per-document drop log."""

    corpus: Corpus
    pre_stats: StatsReport
    post_stats: StatsReport
    drop_log: list[DropRecord] = field(default_factory=list)


def _qe_pairs(doc: ParallelDoc) -> tuple[list[tuple[str, str]], int]:
    """Segment pairs for scoring plus the count of unpairable segments."""
    if len(doc.src_segments) == len(doc.tgt_segments):
        return list(zip(doc.src_segments, doc.tgt_segments)), 0
    alignment = align_sentences(doc.src_segments, doc.tgt_segments)
    unaligned = len(alignment.hyp_unaligned) + len(alignment.ref_unaligned)
    return alignment.aligned_pairs(doc.src_segments, doc.tgt_segments), unaligned


def run_pipeline(
    corpus: Corpus,
    cfg: FilterConfig,
    qe_scorer: ScorerClient | None = None,
    fluency_scorer: ScorerClient | None = None,
    identifier: LanguageIdentifier | None = None,
    lid_min_confidence: float = 0.5,
) -> PipelineResult:
    """Apply heuristic filters, the quality gate, the language check, and dedup, in that order.

    Cheap text filters run before scorer calls so scored volume stays small.
    Stages with no injected scorer or identifier are skipped. Scorer or
    identifier failures abort the run; the partial drop log is attached to the
    raised error as `partial_drop_log`.
    """
    pre_stats = corpus_stats(corpus)
    drop_log: list[DropRecord] = []

    kept: list[ParallelDoc] = []
    for doc in corpus:
        verdict = heuristic_verdict(doc.source_text(), doc.target_text(), cfg)
        if verdict.keep:
            kept.append(doc)
        else:
            drop_log.append(DropRecord(doc.doc_id, "heuristic", verdict.reasons))

    if qe_scorer is not None or fluency_scorer is not None:
        survivors: list[ParallelDoc] = []
        for doc in kept:
            pairs, unaligned = _qe_pairs(doc)
            reasons: set[str] = set()
            n_bad = unaligned
            if unaligned:
                reasons.update(tag for tag, s in ((QE_BELOW, qe_scorer), (FLUENCY_BELOW, fluency_scorer)) if s)
            try:
                for src, tgt in pairs:
                    bad = False
                    if qe_scorer is not None and qe_scorer.score(src, tgt) < cfg.qe_segment_threshold:
                        bad = True
                        reasons.add(QE_BELOW)
                    if fluency_scorer is not None and fluency_scorer.score(src, tgt) < cfg.fluency_segment_threshold:
                        bad = True
                        reasons.add(FLUENCY_BELOW)
                    n_bad += bad
            except ScorerError as exc:
                if not hasattr(exc, "partial_drop_log"):
                    exc.partial_drop_log = drop_log  # type: ignore[attr-defined]
                raise
            except Exception as exc:
                err = ScorerError(f"scorer failed on doc {doc.doc_id!r}: {exc}")
                err.partial_drop_log = drop_log  # type: ignore[attr-defined]
                raise err from exc
            total = len(pairs) + unaligned
            if total and _exceeds_bad_fraction(n_bad, total, cfg):
                drop_log.append(DropRecord(doc.doc_id, "qe_filter", sorted(reasons)))
            else:
                survivors.append(doc)
        kept = survivors
    else:
        logger.info("no scorer configured: quality gate skipped")

    if identifier is not None:
        survivors = []
        for doc in kept:
            try:
                ok = language_filter(doc, identifier, lid_min_confidence)
            except Exception as exc:
                err = ScorerError(f"language identifier failed on doc {doc.doc_id!r}: {exc}")
                err.partial_drop_log = drop_log  # type: ignore[attr-defined]
                raise err from exc
            if ok:
                survivors.append(doc)
            else:
                drop_log.append(DropRecord(doc.doc_id, "language_filter", [LANG_MISMATCH]))
        kept = survivors
    else:
        logger.info("no language identifier configured: language filter skipped")

    before_ids = {doc.doc_id for doc in kept}
    deduped = deduplicate(Corpus(kept))
    after_ids = {doc.doc_id for doc in deduped}
    for doc_id in sorted(before_ids - after_ids):
        drop_log.append(DropRecord(doc_id, "dedup", [DUPLICATE]))

    return PipelineResult(
        corpus=deduped,
        pre_stats=pre_stats,
        post_stats=corpus_stats(deduped),
        drop_log=drop_log,
    )
