"""Document translation runs: whole-document, chunked, context-carrying, and quality-aware."""

from __future__ import annotations

import hashlib
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .augmentation import ChunkingSpec, ContextualExample, HeuristicTokenCounter, TokenCounter, chunk_sources
from .backend import Backend, Completion, DecodeParams
from .corpus import ParallelDoc
from .errors import BackendError, ContextOverflowError
from .prompts import Prompt, render

logger = logging.getLogger(__name__)

MODES = ("doc2doc", "chunk", "context_chunk", "quality_chunk")

# Chunk outputs are merged with a single newline, matching the newline joints
# between segments inside chunk source text.
CHUNK_JOINER = "\n"

DEFAULT_CONTEXT_BUDGET = 32768
UTILITY_CONTEXT_TOKEN_LIMIT = 512


@dataclass(slots=True)
class TranslationRun:
    """One document's translation with token and timing accounting.

    tokens_in counts prompt tokens once per backend call; tokens_out counts
    only completions that reach the merged output, so sampled-and-discarded
    candidates never inflate throughput.
    """

    doc_id: str
    mode: str
    chunk_size: ChunkingSpec | None
    outputs: list[str]
    merged: str
    tokens_in: int
    tokens_out: int
    wall_seconds: float
    throughput: float
    ledger_entries: list[dict] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.merged != CHUNK_JOINER.join(self.outputs):
            raise ValueError("merged text must be the chunk outputs joined with newlines")


def _finish_run(
    doc: ParallelDoc,
    mode: str,
    spec: ChunkingSpec | None,
    outputs: list[str],
    tokens_in: int,
    tokens_out: int,
    started: float,
    entries: list[dict],
) -> TranslationRun:
    wall = max(time.perf_counter() - started, 1e-9)
    return TranslationRun(
        doc_id=doc.doc_id,
        mode=mode,
        chunk_size=spec,
        outputs=outputs,
        merged=CHUNK_JOINER.join(outputs),
        tokens_in=tokens_in,
        tokens_out=tokens_out,
        wall_seconds=wall,
        throughput=(tokens_in + tokens_out) / wall,
        ledger_entries=entries,
    )


def _ledger_entry(doc: ParallelDoc, mode: str, index: int, prompt: Prompt, completion: Completion, **extra) -> dict:
    entry = {
        "doc_id": doc.doc_id,
        "mode": mode,
        "chunk_index": index,
        "prompt_sha256": hashlib.sha256(prompt.text.encode("utf-8")).hexdigest(),
        "output": completion.text,
        "latency": completion.latency,
    }
    entry.update(extra)
    return entry


def _chunk_prompt(doc: ParallelDoc, source: str, context: Sequence[tuple[str, str]]) -> Prompt:
    example = ContextualExample(
        src_lang=doc.src_lang, tgt_lang=doc.tgt_lang, context=list(context), source=source,
    )
    return render(example, "contextual")


def translate_doc2doc(
    doc: ParallelDoc,
    backend: Backend,
    params: DecodeParams,
    counter: TokenCounter | None = None,
    context_budget: int = DEFAULT_CONTEXT_BUDGET,
) -> TranslationRun:
    """Translate the whole document in one backend call."""
    counter = counter or HeuristicTokenCounter()
    example = ContextualExample(src_lang=doc.src_lang, tgt_lang=doc.tgt_lang, context=[], source=doc.source_text())
    prompt = render(example, "doc2doc")
    estimate = counter.count(prompt.text)
    if estimate > context_budget:
        raise ContextOverflowError(
            f"doc {doc.doc_id!r} estimated at {estimate} tokens exceeds the {context_budget}-token context; "
            "use a chunked mode"
        )
    started = time.perf_counter()
    completion = backend.complete(prompt, params)[0]
    entries = [_ledger_entry(doc, "doc2doc", 0, prompt, completion)]
    return _finish_run(
        doc, "doc2doc", None, [completion.text],
        completion.prompt_tokens, completion.completion_tokens, started, entries,
    )


def translate_chunked(
    doc: ParallelDoc,
    spec: ChunkingSpec,
    backend: Backend,
    params: DecodeParams,
    counter: TokenCounter | None = None,
) -> TranslationRun:
    """Translate chunks independently and concurrently; outputs keep chunk order.

    Any chunk failure fails the whole run after logging how many chunks had
    completed.
    """
    chunks = chunk_sources(doc.src_segments, spec, counter)
    prompts = [_chunk_prompt(doc, chunk, []) for chunk in chunks]
    started = time.perf_counter()
    results: list[Completion | None] = [None] * len(chunks)
    with ThreadPoolExecutor(max_workers=backend.max_concurrency) as pool:
        futures = [pool.submit(backend.complete, prompt, params) for prompt in prompts]
        failure: Exception | None = None
        for i, future in enumerate(futures):
            try:
                results[i] = future.result()[0]
            except Exception as exc:  # noqa: BLE001 - re-raised below with partial accounting
                if failure is None:
                    failure = exc
    if failure is not None:
        done = sum(1 for r in results if r is not None)
        logger.error("chunked run for doc %s failed with %d/%d chunks completed", doc.doc_id, done, len(chunks))
        if isinstance(failure, BackendError):
            raise failure
        raise BackendError(f"chunk translation failed: {failure}") from failure

    completions = [r for r in results if r is not None]
    entries = [
        _ledger_entry(doc, "chunk", i, prompt, completion)
        for i, (prompt, completion) in enumerate(zip(prompts, completions))
    ]
    return _finish_run(
        doc, "chunk", spec, [c.text for c in completions],
        sum(c.prompt_tokens for c in completions), sum(c.completion_tokens for c in completions),
        started, entries,
    )


def translate_contextual(
    doc: ParallelDoc,
    spec: ChunkingSpec,
    backend: Backend,
    params: DecodeParams,
    window: int = 3,
    counter: TokenCounter | None = None,
) -> TranslationRun:
    """Translate chunks strictly in order, carrying the last `window` (source, output) pairs.

    Context targets are the model's own outputs, not references; with window 0
    the requests are byte-identical to independent chunking.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    chunks = chunk_sources(doc.src_segments, spec, counter)
    context: list[tuple[str, str]] = []
    outputs: list[str] = []
    entries: list[dict] = []
    tokens_in = tokens_out = 0
    started = time.perf_counter()
    for i, chunk in enumerate(chunks):
        prompt = _chunk_prompt(doc, chunk, context)
        completion = backend.complete(prompt, params)[0]
        outputs.append(completion.text)
        tokens_in += completion.prompt_tokens
        tokens_out += completion.completion_tokens
        entries.append(_ledger_entry(doc, "context_chunk", i, prompt, completion))
        if window:
            context.append((chunk, completion.text))
            context = context[-window:]
    return _finish_run(doc, "context_chunk", spec, outputs, tokens_in, tokens_out, started, entries)


class UtilityMetric(Protocol):
    """Pairwise utility for consensus decoding; use_context says whether context matters."""

    use_context: bool

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float: ...


@dataclass(slots=True)
class CandidateSet:
    """All sampled candidates with the full pairwise utility matrix and the pick."""

    candidates: list[str]
    context: list[tuple[str, str]]
    utility_matrix: list[list[float]]
    chosen_index: int

    def __post_init__(self) -> None:
        n = len(self.candidates)
        if n < 1:
            raise ValueError("at least one candidate required")
        if not 0 <= self.chosen_index < n:
            raise ValueError("chosen_index out of range")
        if len(self.utility_matrix) != n or any(len(row) != n for row in self.utility_matrix):
            raise ValueError("utility matrix must be n x n")


def mbr_select(
    candidates: Sequence[str],
    utility: UtilityMetric,
    context: Sequence[tuple[str, str]] | None = None,
) -> tuple[int, CandidateSet]:
    """Pick the candidate maximizing mean utility against all candidates (self included).

    Matrix entry (t, y) scores candidate y as hypothesis against candidate t as
    pseudo-reference. Ties resolve to the lowest index.
    """
    if not candidates:
        raise ValueError("at least one candidate required")
    ctx = list(context) if (context is not None and utility.use_context) else None
    n = len(candidates)
    matrix = [[utility.score(candidates[y], candidates[t], ctx) for y in range(n)] for t in range(n)]
    best_index = 0
    best_mean = float("-inf")
    for y in range(n):
        mean = sum(matrix[t][y] for t in range(n)) / n
        if mean > best_mean:
            best_mean = mean
            best_index = y
    chosen = CandidateSet(
        candidates=list(candidates),
        context=list(context or []),
        utility_matrix=matrix,
        chosen_index=best_index,
    )
    return best_index, chosen


def fit_context_window(
    context: Sequence[tuple[str, str]],
    candidates: Sequence[str],
    counter: TokenCounter,
    limit: int = UTILITY_CONTEXT_TOKEN_LIMIT,
) -> list[tuple[str, str]]:
    """Drop oldest context pairs until context plus the longest candidate fits the token limit."""
    kept = list(context)
    cand_cost = max((counter.count(c) for c in candidates), default=0)

    def cost(pairs: list[tuple[str, str]]) -> int:
        return sum(counter.count(s) + counter.count(t) for s, t in pairs)

    while kept and cost(kept) + cand_cost > limit:
        kept.pop(0)
    return kept


def translate_quality_aware(
    doc: ParallelDoc,
    spec: ChunkingSpec,
    backend: Backend,
    params: DecodeParams,
    utility: UtilityMetric,
    window: int = 3,
    counter: TokenCounter | None = None,
    context_token_limit: int = UTILITY_CONTEXT_TOKEN_LIMIT,
) -> TranslationRun:
    """Sample candidates per chunk and keep the consensus pick, carrying chosen pairs as context."""
    if params.mode != "nucleus":
        raise ValueError("quality-aware decoding requires nucleus sampling parameters")
    if window < 0:
        raise ValueError("window must be >= 0")
    counter = counter or HeuristicTokenCounter()
    chunks = chunk_sources(doc.src_segments, spec, counter)
    context: list[tuple[str, str]] = []
    outputs: list[str] = []
    entries: list[dict] = []
    tokens_in = tokens_out = 0
    started = time.perf_counter()
    for i, chunk in enumerate(chunks):
        prompt = _chunk_prompt(doc, chunk, context)
        completions = backend.complete(prompt, params)
        texts = [c.text for c in completions]
        scoring_context = (
            fit_context_window(context, texts, counter, context_token_limit) if utility.use_context else None
        )
        chosen_index, _ = mbr_select(texts, utility, scoring_context)
        chosen = completions[chosen_index]
        outputs.append(chosen.text)
        tokens_in += completions[0].prompt_tokens
        tokens_out += chosen.completion_tokens
        entries.append(_ledger_entry(
            doc, "quality_chunk", i, prompt, chosen,
            n_candidates=len(texts), candidates=texts, chosen_index=chosen_index,
        ))
        if window:
            context.append((chunk, chosen.text))
            context = context[-window:]
    return _finish_run(doc, "quality_chunk", spec, outputs, tokens_in, tokens_out, started, entries)
