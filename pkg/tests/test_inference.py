"""Translation modes, consensus candidate selection, and rolling-context handling."""

from __future__ import annotations

import random
import string
import time
from typing import Sequence

import pytest

from docmt.augmentation import ChunkingSpec, HeuristicTokenCounter
from docmt.backend import DecodeParams, MockBackend, mock_backend
from docmt.corpus import ParallelDoc
from docmt.errors import BackendError, ContextOverflowError
from docmt.inference import (
    CHUNK_JOINER,
    CandidateSet,
    TranslationRun,
    fit_context_window,
    mbr_select,
    translate_chunked,
    translate_contextual,
    translate_doc2doc,
    translate_quality_aware,
)
from docmt.scorers import CharFUtility

ONE_SEG = ChunkingSpec(unit="segments", size=1)


def _doc(segments: list[str], doc_id: str = "d1") -> ParallelDoc:
    return ParallelDoc(
        doc_id=doc_id,
        src_lang="en",
        tgt_lang="de",
        src_segments=segments,
        tgt_segments=[f"ref {i}" for i in range(len(segments))],
        domain="news",
    )


FIVE = _doc([f"segment number {i} here" for i in range(5)])


# ------------------------------------------------------------ oracles

def edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        row = [i]
        for j, cb in enumerate(b, 1):
            row.append(min(prev[j] + 1, row[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = row
    return prev[-1]


class NegEditUtility:
    """Integer-valued utility, so mean comparisons and ties are float-exact."""

    use_context = False

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        return -float(edit_distance(hyp, ref))


class AffineUtility:
    use_context = False

    def __init__(self, base, a: float, b: float) -> None:
        self.base = base
        self.a = a
        self.b = b

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        return self.a * self.base.score(hyp, ref, context) + self.b


def brute_force_pick(candidates: list[str], utility) -> int:
    n = len(candidates)
    best, best_mean = 0, float("-inf")
    for y in range(n):
        mean = sum(utility.score(candidates[y], candidates[t]) for t in range(n)) / n
        if mean > best_mean:
            best_mean = mean
            best = y
    return best


# ------------------------------------------------------------ run record

def test_run_record_validates_mode_and_merge():
    with pytest.raises(ValueError):
        TranslationRun(
            doc_id="d", mode="telepathy", chunk_size=None, outputs=["x"], merged="x",
            tokens_in=1, tokens_out=1, wall_seconds=0.1, throughput=1.0,
        )
    with pytest.raises(ValueError):
        TranslationRun(
            doc_id="d", mode="chunk", chunk_size=ONE_SEG, outputs=["a", "b"], merged="a b",
            tokens_in=1, tokens_out=1, wall_seconds=0.1, throughput=1.0,
        )


# ------------------------------------------------------------ mode identities

def test_identity_mock_round_trips_all_modes():
    greedy = DecodeParams(mode="greedy")
    source = FIVE.source_text()

    run = translate_doc2doc(FIVE, mock_backend("identity"), greedy)
    assert run.merged == source and run.mode == "doc2doc"

    run = translate_chunked(FIVE, ONE_SEG, mock_backend("identity"), greedy)
    assert run.merged == source and run.mode == "chunk"
    assert run.outputs == FIVE.src_segments

    run = translate_contextual(FIVE, ONE_SEG, mock_backend("identity"), greedy)
    assert run.merged == source and run.mode == "context_chunk"

    run = translate_quality_aware(
        FIVE, ONE_SEG, mock_backend("identity"),
        DecodeParams(mode="nucleus", n_candidates=3), CharFUtility(),
    )
    assert run.merged == source and run.mode == "quality_chunk"


def test_chunk_covering_whole_doc_matches_doc2doc():
    greedy = DecodeParams(mode="greedy")
    wide = ChunkingSpec(unit="segments", size=10)
    chunked = translate_chunked(FIVE, wide, mock_backend("identity"), greedy)
    whole = translate_doc2doc(FIVE, mock_backend("identity"), greedy)
    assert chunked.merged == whole.merged
    assert len(chunked.outputs) == 1


def test_doc2doc_rejects_oversized_documents():
    with pytest.raises(ContextOverflowError, match="context"):
        translate_doc2doc(FIVE, mock_backend("identity"), DecodeParams(mode="greedy"), context_budget=5)


# ------------------------------------------------------------ chunked concurrency

def test_chunked_runs_chunks_concurrently():
    backend = MockBackend(behavior="identity", latency_s=0.02, max_concurrency=4)
    doc = _doc([f"piece {i}" for i in range(8)])
    started = time.perf_counter()
    run = translate_chunked(doc, ONE_SEG, backend, DecodeParams(mode="greedy"))
    elapsed = time.perf_counter() - started
    assert backend.max_in_flight > 1
    assert elapsed < 8 * 0.02  # strictly faster than serial
    assert run.outputs == doc.src_segments


def test_chunked_output_order_is_stable_under_varied_latency():
    def jittered(source: str) -> str:
        time.sleep((hash(source) % 5) * 0.004)
        return source.upper()

    backend = MockBackend(behavior=jittered, max_concurrency=8)
    doc = _doc([f"part {i}" for i in range(10)])
    run = translate_chunked(doc, ONE_SEG, backend, DecodeParams(mode="greedy"))
    assert run.outputs == [seg.upper() for seg in doc.src_segments]


def test_chunked_failure_propagates_backend_error():
    backend = MockBackend(behavior="table", table={"segment number 0 here": "ok"})
    with pytest.raises(BackendError):
        translate_chunked(FIVE, ONE_SEG, backend, DecodeParams(mode="greedy"))


# ------------------------------------------------------------ contextual transcript

def test_contextual_window_grows_then_saturates():
    backend = mock_backend("identity")
    translate_contextual(FIVE, ONE_SEG, backend, DecodeParams(mode="greedy"), window=3)
    sizes = [len(r.context_pairs) for r in backend.requests]
    assert sizes == [0, 1, 2, 3, 3]
    # Each request carries exactly the immediately preceding (source, output) pairs.
    for i, record in enumerate(backend.requests):
        expected = [(FIVE.src_segments[j], FIVE.src_segments[j]) for j in range(max(0, i - 3), i)]
        assert record.context_pairs == expected


def test_contextual_context_carries_model_outputs_not_references():
    backend = mock_backend("reverse_words")
    translate_contextual(FIVE, ONE_SEG, backend, DecodeParams(mode="greedy"), window=2)
    first_chunk = FIVE.src_segments[0]
    reversed_out = " ".join(reversed(first_chunk.split()))
    assert backend.requests[1].context_pairs == [(first_chunk, reversed_out)]
    assert reversed_out != FIVE.tgt_segments[0]


def test_contextual_window_zero_matches_independent_chunking():
    serial = MockBackend(behavior="identity", max_concurrency=1)
    translate_contextual(FIVE, ONE_SEG, serial, DecodeParams(mode="greedy"), window=0)
    independent = MockBackend(behavior="identity", max_concurrency=1)
    translate_chunked(FIVE, ONE_SEG, independent, DecodeParams(mode="greedy"))
    assert [r.prompt_text for r in serial.requests] == [r.prompt_text for r in independent.requests]


def test_contextual_rejects_negative_window():
    with pytest.raises(ValueError):
        translate_contextual(FIVE, ONE_SEG, mock_backend("identity"), DecodeParams(mode="greedy"), window=-1)


def test_single_chunk_doc_has_empty_context():
    doc = _doc(["only one segment"])
    backend = mock_backend("identity")
    translate_contextual(doc, ONE_SEG, backend, DecodeParams(mode="greedy"))
    assert backend.requests[0].context_pairs == []


# ------------------------------------------------------------ consensus selection

def test_mbr_prefers_majority_candidate():
    index, chosen = mbr_select(["zz", "x", "x"], CharFUtility())
    assert index == 1
    assert chosen.chosen_index == 1
    assert chosen.candidates == ["zz", "x", "x"]


def test_mbr_single_candidate():
    index, chosen = mbr_select(["only"], CharFUtility())
    assert index == 0
    assert chosen.utility_matrix == [[1.0]]


def test_mbr_matrix_orientation_and_self_score():
    _, chosen = mbr_select(["ab", "cd", "ab"], CharFUtility())
    assert chosen.utility_matrix[2][2] == 1.0
    # (t, y) scores candidate y against pseudo-reference t.
    assert chosen.utility_matrix[0][2] == 1.0  # "ab" vs "ab"


def test_mbr_empty_candidates_raise():
    with pytest.raises(ValueError):
        mbr_select([], CharFUtility())


def test_mbr_matches_brute_force_on_random_sets():
    rng = random.Random(91)
    utility = NegEditUtility()
    for _ in range(200):
        n = rng.randint(1, 6)
        candidates = [
            "".join(rng.choice(string.ascii_lowercase[:6]) for _ in range(rng.randint(0, 8)))
            for _ in range(n)
        ]
        index, _ = mbr_select(candidates, utility)
        assert index == brute_force_pick(candidates, utility)


def test_mbr_choice_invariant_under_affine_utility_transform():
    rng = random.Random(92)
    base = NegEditUtility()
    for _ in range(100):
        n = rng.randint(2, 6)
        candidates = [
            "".join(rng.choice("abcd") for _ in range(rng.randint(1, 7))) for _ in range(n)
        ]
        raw, _ = mbr_select(candidates, base)
        scaled, _ = mbr_select(candidates, AffineUtility(base, a=3.0, b=-11.0))
        assert raw == scaled


def test_candidate_set_validation():
    with pytest.raises(ValueError):
        CandidateSet(candidates=[], context=[], utility_matrix=[], chosen_index=0)
    with pytest.raises(ValueError):
        CandidateSet(candidates=["a"], context=[], utility_matrix=[[1.0]], chosen_index=1)
    with pytest.raises(ValueError):
        CandidateSet(candidates=["a", "b"], context=[], utility_matrix=[[1.0]], chosen_index=0)


# ------------------------------------------------------------ quality-aware mode

def test_quality_aware_requires_sampling_params():
    with pytest.raises(ValueError, match="nucleus"):
        translate_quality_aware(
            FIVE, ONE_SEG, mock_backend("identity"), DecodeParams(mode="greedy"), CharFUtility(),
        )


def test_quality_aware_consensus_pick_enters_rolling_context():
    script = [["zz", "x", "x"], ["a", "a", "a"]]
    backend = MockBackend(behavior="scripted", script=script)
    doc = _doc(["first part", "second part"])
    run = translate_quality_aware(
        doc, ONE_SEG, backend, DecodeParams(mode="nucleus", n_candidates=3), CharFUtility(),
    )
    assert run.outputs == ["x", "a"]
    assert backend.requests[1].context_pairs == [("first part", "x")]
    entry = run.ledger_entries[0]
    assert entry["n_candidates"] == 3
    assert entry["candidates"] == ["zz", "x", "x"]
    assert entry["chosen_index"] == 1


def test_quality_aware_single_candidate_matches_contextual():
    run_q = translate_quality_aware(
        FIVE, ONE_SEG, mock_backend("identity"),
        DecodeParams(mode="nucleus", n_candidates=1), CharFUtility(),
    )
    run_c = translate_contextual(FIVE, ONE_SEG, mock_backend("identity"), DecodeParams(mode="greedy"))
    assert run_q.outputs == run_c.outputs


def test_quality_aware_counts_prompt_once_and_only_chosen_output():
    doc = _doc(["alpha beta gamma", "delta epsilon zeta"])
    runs = []
    for n in (1, 4):
        backend = mock_backend("identity")
        runs.append(translate_quality_aware(
            doc, ONE_SEG, backend, DecodeParams(mode="nucleus", n_candidates=n), CharFUtility(),
        ))
    assert runs[0].tokens_in == runs[1].tokens_in
    assert runs[0].tokens_out == runs[1].tokens_out  # discarded candidates never count


def test_quality_aware_merged_joins_with_newline():
    doc = _doc(["one", "two", "three"])
    run = translate_quality_aware(
        doc, ONE_SEG, mock_backend("identity"),
        DecodeParams(mode="nucleus", n_candidates=2), CharFUtility(),
    )
    assert run.merged == CHUNK_JOINER.join(["one", "two", "three"])


# ------------------------------------------------------------ utility context trimming

class RecordingUtility:
    use_context = True

    def __init__(self) -> None:
        self.contexts: list[tuple[tuple[str, str], ...]] = []

    def score(self, hyp: str, ref: str, context: Sequence[tuple[str, str]] | None = None) -> float:
        self.contexts.append(tuple(context or ()))
        return 1.0 if hyp == ref else 0.5


def test_fit_context_window_drops_oldest_pairs():
    counter = HeuristicTokenCounter()
    # 10-word texts cost 13 tokens each at the default multiplier.
    pair = ("w " * 9 + "w", "v " * 9 + "v")
    pairs = [(f"s{i} " + pair[0], pair[1]) for i in range(4)]
    candidate = "c " * 9 + "c"
    kept = fit_context_window(pairs, [candidate], counter, limit=60)
    assert kept == pairs[-1:]
    assert fit_context_window(pairs, [candidate], counter, limit=10_000) == pairs
    assert fit_context_window(pairs, [candidate], counter, limit=1) == []


def test_quality_aware_trims_scoring_context_to_token_limit():
    utility = RecordingUtility()
    doc = _doc([f"src {i}" for i in range(5)])
    backend = mock_backend("identity")
    # Each pair costs 6 tokens and the candidate 3, so a 16-token limit keeps
    # at most two pairs while the rolling prompt context grows to three.
    translate_quality_aware(
        doc, ONE_SEG, backend, DecodeParams(mode="nucleus", n_candidates=2),
        utility, context_token_limit=16,
    )
    seen = {ctx for ctx in utility.contexts}
    assert all(len(ctx) <= 2 for ctx in seen)
    assert any(len(ctx) == 2 for ctx in seen)


def test_quality_aware_ignores_context_for_context_free_utility():
    utility = CharFUtility(use_context=False)
    doc = _doc(["one part", "two part"])
    run = translate_quality_aware(
        doc, ONE_SEG, mock_backend("identity"),
        DecodeParams(mode="nucleus", n_candidates=2), utility,
    )
    # Rolling prompt context still accumulates even when scoring is context-free.
    assert run.ledger_entries[1]["chunk_index"] == 1


# ------------------------------------------------------------ ledger entries

def test_ledger_entries_carry_hashes_and_latency():
    backend = MockBackend(behavior="identity", latency_s=0.01)
    run = translate_chunked(FIVE, ONE_SEG, backend, DecodeParams(mode="greedy"))
    assert len(run.ledger_entries) == 5
    for i, entry in enumerate(run.ledger_entries):
        assert entry["doc_id"] == "d1"
        assert entry["mode"] == "chunk"
        assert entry["chunk_index"] == i
        assert len(entry["prompt_sha256"]) == 64
        assert entry["latency"] == pytest.approx(0.01)
        assert entry["output"] == FIVE.src_segments[i]
