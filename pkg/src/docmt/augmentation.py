"""Training-data augmentation: resolution splits, contextual examples, budget packing, mixing."""

from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .corpus import Corpus, ParallelDoc
from .errors import UnalignableDocumentError
from .metrics import align_sentences

logger = logging.getLogger(__name__)

DEFAULT_SPLIT_KS = (1, 2, 4)
DEFAULT_CONTEXT_WINDOW = 3
DEFAULT_TOKEN_BUDGET = 32768
DEFAULT_SENTENCE_FRACTION = 0.10


class TokenCounter(Protocol):
    """Estimates the token cost of a text."""

    def count(self, text: str) -> int: ...


@dataclass(frozen=True, slots=True)
class HeuristicTokenCounter:
    """Whitespace words scaled by a subword multiplier, rounded up."""

    multiplier: float = 1.3

    def __post_init__(self) -> None:
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")

    def count(self, text: str) -> int:
        return math.ceil(len(text.split()) * self.multiplier)


@dataclass(frozen=True, slots=True)
class ChunkingSpec:
    """How documents are cut: `size` segments per chunk, or a token budget per chunk."""

    unit: str = "segments"
    size: int = 1

    def __post_init__(self) -> None:
        if self.unit not in ("segments", "tokens"):
            raise ValueError(f"unit must be 'segments' or 'tokens', got {self.unit!r}")
        if self.size < 1:
            raise ValueError("size must be >= 1")


@dataclass(slots=True)
class ContextualExample:
    """One training or inference unit: prior (source, target) pairs plus the current chunk."""

    src_lang: str
    tgt_lang: str
    context: list[tuple[str, str]]
    source: str
    target: str | None = None

    def __post_init__(self) -> None:
        if self.src_lang == self.tgt_lang:
            raise ValueError("source and target languages must differ")
        if not self.source:
            raise ValueError("source must be nonempty")
        for i, pair in enumerate(self.context):
            if len(pair) != 2 or not all(isinstance(t, str) for t in pair):
                raise ValueError(f"context entry {i} must be a (source, target) text pair")


def _split_bounds(length: int, parts: int) -> list[int]:
    return [math.ceil(i * length / parts) for i in range(parts + 1)]


def mrd2d_split(doc: ParallelDoc, k: int) -> list[ParallelDoc]:
    """Cut a document into up to k contiguous parts, both sides split proportionally.

    Part counts cap at the shorter side's segment count so every part keeps
    text on both sides. An unsplittable document comes back unchanged.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    parts = min(k, len(doc.src_segments), len(doc.tgt_segments))
    if parts == 1:
        return [doc]
    src_bounds = _split_bounds(len(doc.src_segments), parts)
    tgt_bounds = _split_bounds(len(doc.tgt_segments), parts)
    out = []
    for i in range(parts):
        out.append(ParallelDoc(
            doc_id=f"{doc.doc_id}#k{k}p{i}",
            src_lang=doc.src_lang,
            tgt_lang=doc.tgt_lang,
            src_segments=doc.src_segments[src_bounds[i]:src_bounds[i + 1]],
            tgt_segments=doc.tgt_segments[tgt_bounds[i]:tgt_bounds[i + 1]],
            domain=doc.domain,
            meta=dict(doc.meta),
        ))
    return out


def aligned_segment_pairs(doc: ParallelDoc) -> list[tuple[str, str]]:
    """Positional segment pairs when counts match, monotonic alignment otherwise.

    Raises UnalignableDocumentError when alignment leaves segments unpaired.
    """
    if len(doc.src_segments) == len(doc.tgt_segments):
        return list(zip(doc.src_segments, doc.tgt_segments))
    alignment = align_sentences(doc.src_segments, doc.tgt_segments)
    if alignment.hyp_unaligned or alignment.ref_unaligned:
        raise UnalignableDocumentError(
            f"doc {doc.doc_id!r}: {len(alignment.hyp_unaligned) + len(alignment.ref_unaligned)} segments left unpaired"
        )
    return alignment.aligned_pairs(doc.src_segments, doc.tgt_segments)


def chunk_pairs(doc: ParallelDoc, spec: ChunkingSpec, counter: TokenCounter | None = None) -> list[tuple[str, str]]:
    """Group aligned segment pairs into chunks; chunk text joins its segments with newlines."""
    pairs = aligned_segment_pairs(doc)
    groups: list[list[tuple[str, str]]] = []
    if spec.unit == "segments":
        for i in range(0, len(pairs), spec.size):
            groups.append(pairs[i : i + spec.size])
    else:
        counter = counter or HeuristicTokenCounter()
        current: list[tuple[str, str]] = []
        used = 0
        for pair in pairs:
            cost = counter.count(pair[0])
            if current and used + cost > spec.size:
                groups.append(current)
                current, used = [], 0
            current.append(pair)
            used += cost
        if current:
            groups.append(current)
    return [("\n".join(s for s, _ in g), "\n".join(t for _, t in g)) for g in groups]


def chunk_sources(segments: Sequence[str], spec: ChunkingSpec, counter: TokenCounter | None = None) -> list[str]:
    """Source-only chunking for inference; same grouping rules as chunk_pairs."""
    groups: list[list[str]] = []
    if spec.unit == "segments":
        for i in range(0, len(segments), spec.size):
            groups.append(list(segments[i : i + spec.size]))
    else:
        counter = counter or HeuristicTokenCounter()
        current: list[str] = []
        used = 0
        for seg in segments:
            cost = counter.count(seg)
            if current and used + cost > spec.size:
                groups.append(current)
                current, used = [], 0
            current.append(seg)
            used += cost
        if current:
            groups.append(current)
    return ["\n".join(g) for g in groups]


def build_capt_examples(
    doc: ParallelDoc,
    spec: ChunkingSpec | None = None,
    window: int = DEFAULT_CONTEXT_WINDOW,
    counter: TokenCounter | None = None,
) -> list[ContextualExample]:
    """One contextual example per chunk, with up to `window` preceding reference pairs as context."""
    if window < 0:
        raise ValueError("window must be >= 0")
    chunks = chunk_pairs(doc, spec or ChunkingSpec(), counter)
    examples = []
    for i, (src, tgt) in enumerate(chunks):
        context = chunks[max(0, i - window):i] if window else []
        examples.append(ContextualExample(
            src_lang=doc.src_lang,
            tgt_lang=doc.tgt_lang,
            context=list(context),
            source=src,
            target=tgt,
        ))
    return examples


def concat_to_budget(
    docs: Sequence[ParallelDoc],
    budget: int = DEFAULT_TOKEN_BUDGET,
    counter: TokenCounter | None = None,
) -> list[ParallelDoc]:
    """Greedily merge consecutive same-direction documents while the group fits the token budget.

    Token cost counts both sides. A single document over budget passes through
    with a warning rather than being truncated.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    counter = counter or HeuristicTokenCounter()
    key = None
    for doc in docs:
        doc_key = (doc.src_lang, doc.tgt_lang, doc.domain)
        if key is None:
            key = doc_key
        elif doc_key != key:
            raise ValueError("concat_to_budget requires one (src_lang, tgt_lang, domain) group")

    groups: list[list[ParallelDoc]] = []
    costs: list[int] = []
    current: list[ParallelDoc] = []
    used = 0
    for doc in docs:
        cost = counter.count(doc.source_text()) + counter.count(doc.target_text())
        if cost > budget:
            logger.warning("doc %s exceeds token budget (%d > %d); passing through unsplit", doc.doc_id, cost, budget)
        if current and used + cost > budget:
            groups.append(current)
            current, used = [], 0
        current.append(doc)
        used += cost
    if current:
        groups.append(current)

    out = []
    for group in groups:
        if len(group) == 1:
            out.append(group[0])
            continue
        first = group[0]
        out.append(ParallelDoc(
            doc_id=f"{first.doc_id}#concat{len(group)}",
            src_lang=first.src_lang,
            tgt_lang=first.tgt_lang,
            src_segments=[s for d in group for s in d.src_segments],
            tgt_segments=[t for d in group for t in d.tgt_segments],
            domain=first.domain,
            meta={"concatenated_from": [d.doc_id for d in group]},
        ))
    return out


def mix_corpora(doc_corpus: Corpus, sent_corpus: Corpus, sentence_fraction: float, seed: int = 0) -> Corpus:
    """Blend all document records with enough sentence records to hit the requested share.

    Sentence records are drawn evenly across language pairs (seeded, without
    replacement); documents are never dropped. The combined order is a seeded
    shuffle.
    """
    if not 0 <= sentence_fraction <= 1:
        raise ValueError("sentence_fraction must be in [0, 1]")
    rng = random.Random(seed)
    docs = list(doc_corpus)
    if sentence_fraction == 0:
        return Corpus(docs)
    if sentence_fraction == 1:
        wanted = len(sent_corpus)
    else:
        wanted = round(sentence_fraction * len(docs) / (1 - sentence_fraction))

    by_pair: dict[str, list[ParallelDoc]] = {}
    for doc in sent_corpus:
        by_pair.setdefault(doc.pair, []).append(doc)
    buckets = [list(by_pair[pair]) for pair in sorted(by_pair)]
    for bucket in buckets:
        rng.shuffle(bucket)

    picked: list[ParallelDoc] = []
    while len(picked) < wanted and any(buckets):
        for bucket in buckets:
            if bucket and len(picked) < wanted:
                picked.append(bucket.pop())
    if len(picked) < wanted:
        logger.warning("sentence corpus too small: wanted %d records, using all %d", wanted, len(picked))

    combined = docs + picked
    rng.shuffle(combined)
    return Corpus(combined)


@dataclass(slots=True)
class AugmentConfig:
    """Corpus-expansion settings; domain lists of None mean 'every domain'."""

    mrd2d_ks: tuple[int, ...] = DEFAULT_SPLIT_KS
    capt_window: int = DEFAULT_CONTEXT_WINDOW
    token_budget: int = DEFAULT_TOKEN_BUDGET
    sentence_fraction: float = DEFAULT_SENTENCE_FRACTION
    mrd2d_domains: tuple[str, ...] | None = None
    capt_domains: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if not self.mrd2d_ks or any(k < 1 for k in self.mrd2d_ks):
            raise ValueError("mrd2d_ks must be a nonempty list of positive integers")
        if self.capt_window < 0:
            raise ValueError("capt_window must be >= 0")
        if self.token_budget < 0:
            raise ValueError("token_budget must be >= 0")
        if not 0 <= self.sentence_fraction <= 1:
            raise ValueError("sentence_fraction must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "mrd2d_ks": list(self.mrd2d_ks),
            "capt_window": self.capt_window,
            "token_budget": self.token_budget,
            "sentence_fraction": self.sentence_fraction,
            "mrd2d_domains": None if self.mrd2d_domains is None else list(self.mrd2d_domains),
            "capt_domains": None if self.capt_domains is None else list(self.capt_domains),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AugmentConfig":
        kwargs = dict(data)
        for key in ("mrd2d_ks", "mrd2d_domains", "capt_domains"):
            if kwargs.get(key) is not None:
                kwargs[key] = tuple(kwargs[key])
        return cls(**kwargs)


def expand_corpus(corpus: Corpus, cfg: AugmentConfig, counter: TokenCounter | None = None) -> Corpus:
    """Budget-concatenate each (direction, domain) group, then emit resolution splits.

    Output order follows the input; each document's parts appear k-ascending.
    Duplicate part ids (from unsplittable documents) are emitted once.
    """
    counter = counter or HeuristicTokenCounter()
    if cfg.token_budget:
        grouped: dict[tuple[str, str, str], list[ParallelDoc]] = {}
        order: list[tuple[str, str, str]] = []
        for doc in corpus:
            key = (doc.src_lang, doc.tgt_lang, doc.domain)
            if key not in grouped:
                order.append(key)
            grouped.setdefault(key, []).append(doc)
        docs = [d for key in order for d in concat_to_budget(grouped[key], cfg.token_budget, counter)]
    else:
        docs = list(corpus)

    out: list[ParallelDoc] = []
    seen: set[str] = set()
    for doc in docs:
        split_enabled = cfg.mrd2d_domains is None or doc.domain in cfg.mrd2d_domains
        ks = sorted(set(cfg.mrd2d_ks)) if split_enabled else [1]
        for k in ks:
            for part in mrd2d_split(doc, k):
                if part.doc_id not in seen:
                    seen.add(part.doc_id)
                    out.append(part)
    return Corpus(out)
