"""Resolution splits, chunking, context windows, packing, and corpus mixing."""

from __future__ import annotations

import math
import random

import pytest

from conftest import SRC_WORDS, TGT_WORDS, make_doc, words
from docmt.augmentation import (
    AugmentConfig,
    ChunkingSpec,
    ContextualExample,
    HeuristicTokenCounter,
    aligned_segment_pairs,
    build_capt_examples,
    chunk_pairs,
    chunk_sources,
    concat_to_budget,
    expand_corpus,
    mix_corpora,
    mrd2d_split,
)
from docmt.corpus import Corpus, ParallelDoc
from docmt.errors import UnalignableDocumentError


class WordCounter:
    """Counts whitespace words, for exact-arithmetic budget tests."""

    def count(self, text: str) -> int:
        return len(text.split())


def _numbered_doc(doc_id: str, n_src: int, n_tgt: int | None = None, **kwargs) -> ParallelDoc:
    n_tgt = n_src if n_tgt is None else n_tgt
    return ParallelDoc(
        doc_id=doc_id,
        src_lang=kwargs.pop("src_lang", "en"),
        tgt_lang=kwargs.pop("tgt_lang", "de"),
        domain=kwargs.pop("domain", "news"),
        src_segments=[f"source sentence number {i}" for i in range(n_src)],
        tgt_segments=[f"ziel satz nummer {i}" for i in range(n_tgt)],
    )


# ------------------------------------------------------------ token counter

def test_heuristic_token_counter():
    counter = HeuristicTokenCounter()
    assert counter.count("") == 0
    assert counter.count("one two three four five six seven eight nine ten") == 13
    assert counter.count("word") == math.ceil(1.3)
    with pytest.raises(ValueError):
        HeuristicTokenCounter(multiplier=0)


def test_chunking_spec_validation():
    with pytest.raises(ValueError):
        ChunkingSpec(unit="pages", size=1)
    with pytest.raises(ValueError):
        ChunkingSpec(unit="segments", size=0)


# ------------------------------------------------------------ mrd2d

def test_mrd2d_k1_returns_doc_unchanged(rng):
    doc = make_doc("d", rng, n_src=5)
    parts = mrd2d_split(doc, 1)
    assert len(parts) == 1
    assert parts[0].to_record() == doc.to_record()


def test_mrd2d_8x8_k4_gives_four_even_parts():
    doc = _numbered_doc("d", 8)
    parts = mrd2d_split(doc, 4)
    assert [len(p.src_segments) for p in parts] == [2, 2, 2, 2]
    assert [len(p.tgt_segments) for p in parts] == [2, 2, 2, 2]
    assert [p.doc_id for p in parts] == ["d#k4p0", "d#k4p1", "d#k4p2", "d#k4p3"]


def test_mrd2d_5x7_k2_splits_proportionally():
    doc = _numbered_doc("d", 5, 7)
    parts = mrd2d_split(doc, 2)
    assert [len(p.src_segments) for p in parts] == [3, 2]
    assert [len(p.tgt_segments) for p in parts] == [4, 3]


def test_mrd2d_part_count_caps_at_shorter_side():
    doc = _numbered_doc("d", 2, 9)
    assert len(mrd2d_split(doc, 4)) == 2
    solo = _numbered_doc("s", 1, 9)
    parts = mrd2d_split(solo, 4)
    assert len(parts) == 1
    assert parts[0].doc_id == "s"  # unchanged, not renamed


def test_mrd2d_rejects_bad_k(rng):
    with pytest.raises(ValueError):
        mrd2d_split(make_doc("d", rng), 0)


def test_mrd2d_reconstruction_200_random_docs():
    rng = random.Random(8844)
    for trial in range(200):
        n_src = rng.randrange(1, 11)
        n_tgt = rng.randrange(1, 11)
        doc = _numbered_doc(f"t{trial}", n_src, n_tgt)
        for k in (1, 2, 4):
            parts = mrd2d_split(doc, k)
            assert len(parts) == min(k, n_src, n_tgt)
            joined_src = [s for p in parts for s in p.src_segments]
            joined_tgt = [t for p in parts for t in p.tgt_segments]
            assert joined_src == doc.src_segments
            assert joined_tgt == doc.tgt_segments
            if len(parts) > 1:
                assert [p.doc_id for p in parts] == [f"t{trial}#k{k}p{i}" for i in range(len(parts))]
            assert all(p.src_segments and p.tgt_segments for p in parts)


# ------------------------------------------------------------ chunking

def test_aligned_pairs_positional_when_counts_match():
    doc = _numbered_doc("d", 4)
    assert aligned_segment_pairs(doc) == list(zip(doc.src_segments, doc.tgt_segments))


def test_aligned_pairs_raises_on_leftovers():
    doc = ParallelDoc(
        doc_id="bad",
        src_lang="en",
        tgt_lang="de",
        domain="news",
        src_segments=["aaaa bbbb cccc", "dddd eeee ffff", "qqqq zzzz"],
        tgt_segments=["aaaa bbbb cccc", "dddd eeee ffff"],
    )
    with pytest.raises(UnalignableDocumentError):
        aligned_segment_pairs(doc)


def test_chunk_pairs_by_segments():
    doc = _numbered_doc("d", 5)
    chunks = chunk_pairs(doc, ChunkingSpec(unit="segments", size=2))
    assert len(chunks) == 3
    assert chunks[0][0] == "\n".join(doc.src_segments[:2])
    assert chunks[2][1] == doc.tgt_segments[4]
    # Chunk texts reassemble the document exactly.
    assert "\n".join(c[0] for c in chunks) == doc.source_text()


def test_chunk_sources_by_token_budget():
    # Costs 4+4 fill the budget exactly; the 2-cost segment opens a new chunk.
    segments = ["one two three four", "five six seven eight", "nine ten"]
    chunks = chunk_sources(segments, ChunkingSpec(unit="tokens", size=8), counter=WordCounter())
    assert chunks == ["one two three four\nfive six seven eight", "nine ten"]


def test_chunk_sources_oversized_segment_stands_alone():
    segments = ["a " * 30, "b"]
    chunks = chunk_sources([s.strip() for s in segments], ChunkingSpec(unit="tokens", size=8), counter=WordCounter())
    assert len(chunks) == 2


# ------------------------------------------------------------ capt

def test_capt_context_sizes_window_3():
    doc = _numbered_doc("d", 5)
    examples = build_capt_examples(doc, ChunkingSpec(unit="segments", size=1), window=3)
    assert [len(e.context) for e in examples] == [0, 1, 2, 3, 3]
    # Contexts are the immediately preceding reference chunk pairs.
    pairs = chunk_pairs(doc, ChunkingSpec(unit="segments", size=1))
    assert examples[2].context == pairs[0:2]
    assert examples[4].context == pairs[1:4]
    assert examples[0].source == doc.src_segments[0]
    assert examples[0].target == doc.tgt_segments[0]


def test_capt_window_zero_gives_no_context():
    doc = _numbered_doc("d", 4)
    examples = build_capt_examples(doc, ChunkingSpec(unit="segments", size=1), window=0)
    assert [len(e.context) for e in examples] == [0, 0, 0, 0]


def test_capt_single_chunk_doc():
    doc = _numbered_doc("d", 3)
    examples = build_capt_examples(doc, ChunkingSpec(unit="segments", size=8), window=3)
    assert len(examples) == 1
    assert examples[0].context == []
    assert examples[0].source == doc.source_text()


def test_capt_rejects_negative_window():
    with pytest.raises(ValueError):
        build_capt_examples(_numbered_doc("d", 2), window=-1)


# ------------------------------------------------------------ packing

def _budget_docs(n: int, words_each: int = 10) -> list[ParallelDoc]:
    docs = []
    for i in range(n):
        docs.append(ParallelDoc(
            doc_id=f"b{i}",
            src_lang="en",
            tgt_lang="de",
            domain="news",
            src_segments=[" ".join(f"s{i}w{j}" for j in range(words_each))],
            tgt_segments=[" ".join(f"t{i}w{j}" for j in range(words_each))],
        ))
    return docs


def test_concat_greedy_packing():
    # Each doc costs 20 words both sides; budget 50 fits two (40), not three.
    docs = _budget_docs(5)
    out = concat_to_budget(docs, budget=50, counter=WordCounter())
    assert [d.doc_id for d in out] == ["b0#concat2", "b2#concat2", "b4"]
    assert out[0].meta == {"concatenated_from": ["b0", "b1"]}
    assert out[0].src_segments == docs[0].src_segments + docs[1].src_segments
    assert out[2].to_record() == docs[4].to_record()


def test_concat_oversized_doc_passes_through_with_warning(caplog):
    docs = _budget_docs(2, words_each=40)  # cost 80 each
    with caplog.at_level("WARNING"):
        out = concat_to_budget(docs, budget=50, counter=WordCounter())
    assert [d.doc_id for d in out] == ["b0", "b1"]
    assert any("exceeds token budget" in rec.message for rec in caplog.records)


def test_concat_requires_single_group(rng):
    docs = [make_doc("x", rng), make_doc("y", rng, tgt_lang="zh")]
    with pytest.raises(ValueError):
        concat_to_budget(docs, budget=100)


def test_concat_rejects_bad_budget(rng):
    with pytest.raises(ValueError):
        concat_to_budget([make_doc("x", rng)], budget=0)


def test_concat_reconstructs_segment_stream():
    docs = _budget_docs(7, words_each=6)
    out = concat_to_budget(docs, budget=30, counter=WordCounter())
    flattened = [s for d in out for s in d.src_segments]
    assert flattened == [s for d in docs for s in d.src_segments]


# ------------------------------------------------------------ mixing

def _sentence_corpus(rng, n: int, tag: str = "sent") -> Corpus:
    docs = []
    for i in range(n):
        pair = ("en", "de") if i % 2 == 0 else ("en", "zh")
        docs.append(make_doc(f"{tag}-{i}", rng, n_src=1, src_lang=pair[0], tgt_lang=pair[1], domain="sentence"))
    return Corpus(docs)


def test_mix_ten_percent_of_90_docs_adds_10_sentences(rng):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(90)])
    sentences = _sentence_corpus(rng, 50)
    mixed = mix_corpora(docs, sentences, 0.10, seed=1)
    assert len(mixed) == 100
    sentence_ids = [d.doc_id for d in mixed if d.doc_id.startswith("sent-")]
    assert len(sentence_ids) == 10
    doc_ids = {d.doc_id for d in mixed if d.doc_id.startswith("d")}
    assert len(doc_ids) == 90  # documents never dropped


def test_mix_zero_fraction_keeps_docs_only(rng):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(10)])
    mixed = mix_corpora(docs, _sentence_corpus(rng, 20), 0.0, seed=1)
    assert [d.doc_id for d in mixed] == [f"d{i}" for i in range(10)]


def test_mix_half_fraction_matches_doc_count(rng):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(90)])
    mixed = mix_corpora(docs, _sentence_corpus(rng, 120), 0.5, seed=2)
    n_sentences = sum(1 for d in mixed if d.doc_id.startswith("sent-"))
    assert n_sentences == 90
    assert len(mixed) == 180


def test_mix_draws_evenly_across_pairs(rng):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(90)])
    mixed = mix_corpora(docs, _sentence_corpus(rng, 60), 0.10, seed=3)
    picked = [d for d in mixed if d.doc_id.startswith("sent-")]
    by_pair: dict[str, int] = {}
    for doc in picked:
        by_pair[doc.pair] = by_pair.get(doc.pair, 0) + 1
    assert by_pair == {"en→de": 5, "en→zh": 5}


def test_mix_small_sentence_corpus_warns_and_uses_all(rng, caplog):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(90)])
    with caplog.at_level("WARNING"):
        mixed = mix_corpora(docs, _sentence_corpus(rng, 4), 0.10, seed=4)
    assert sum(1 for d in mixed if d.doc_id.startswith("sent-")) == 4
    assert any("sentence corpus too small" in rec.message for rec in caplog.records)


def test_mix_is_seed_deterministic(rng):
    docs = Corpus([make_doc(f"d{i}", rng) for i in range(30)])
    sentences = _sentence_corpus(rng, 40)
    a = mix_corpora(docs, sentences, 0.2, seed=9)
    b = mix_corpora(docs, sentences, 0.2, seed=9)
    assert [d.doc_id for d in a] == [d.doc_id for d in b]
    c = mix_corpora(docs, sentences, 0.2, seed=10)
    assert len(c) == len(a)


def test_mix_rejects_bad_fraction(rng):
    docs = Corpus([make_doc("d", rng)])
    with pytest.raises(ValueError):
        mix_corpora(docs, _sentence_corpus(rng, 2), 1.2, seed=0)


# ------------------------------------------------------------ config + expand

def test_augment_config_round_trip():
    cfg = AugmentConfig(mrd2d_ks=(1, 2, 4), capt_window=3, mrd2d_domains=("news",))
    again = AugmentConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_augment_config_validation():
    with pytest.raises(ValueError):
        AugmentConfig(mrd2d_ks=())
    with pytest.raises(ValueError):
        AugmentConfig(mrd2d_ks=(0,))
    with pytest.raises(ValueError):
        AugmentConfig(capt_window=-1)
    with pytest.raises(ValueError):
        AugmentConfig(sentence_fraction=1.5)


def test_expand_emits_k_ascending_parts():
    doc = _numbered_doc("d", 8)
    cfg = AugmentConfig(mrd2d_ks=(1, 2, 4), token_budget=0)
    out = expand_corpus(Corpus([doc]), cfg)
    assert [d.doc_id for d in out] == [
        "d", "d#k2p0", "d#k2p1", "d#k4p0", "d#k4p1", "d#k4p2", "d#k4p3",
    ]


def test_expand_dedupes_unsplittable_parts():
    doc = _numbered_doc("d", 1)
    cfg = AugmentConfig(mrd2d_ks=(1, 2, 4), token_budget=0)
    out = expand_corpus(Corpus([doc]), cfg)
    # Every k collapses to the whole document: one record total.
    assert [d.doc_id for d in out] == ["d"]


def test_expand_respects_domain_filter():
    news = _numbered_doc("n", 4, domain="news")
    web = _numbered_doc("w", 4, domain="web")
    cfg = AugmentConfig(mrd2d_ks=(1, 2), token_budget=0, mrd2d_domains=("news",))
    out = expand_corpus(Corpus([news, web]), cfg)
    assert [d.doc_id for d in out] == ["n", "n#k2p0", "n#k2p1", "w"]


def test_expand_packs_per_group_before_splitting():
    first = _budget_docs(2, words_each=5)  # 10 cost each under WordCounter
    other = [_numbered_doc("z", 2, domain="web")]
    cfg = AugmentConfig(mrd2d_ks=(1,), token_budget=40)
    out = expand_corpus(Corpus(first + other), cfg, counter=WordCounter())
    assert [d.doc_id for d in out] == ["b0#concat2", "z"]


def test_expand_zero_budget_skips_packing():
    docs = _budget_docs(3, words_each=2)
    cfg = AugmentConfig(mrd2d_ks=(1,), token_budget=0)
    out = expand_corpus(Corpus(docs), cfg)
    assert [d.doc_id for d in out] == ["b0", "b1", "b2"]


def test_contextual_example_validation():
    with pytest.raises(ValueError):
        ContextualExample(src_lang="en", tgt_lang="en", context=[], source="x")
    with pytest.raises(ValueError):
        ContextualExample(src_lang="en", tgt_lang="de", context=[], source="")
