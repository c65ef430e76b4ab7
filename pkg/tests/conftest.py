"""Shared builders for the test suite.

Source-side words draw on one alphabet half and target-side words on the
other, so generated pairs never trip the copy detector by accident.
"""

from __future__ import annotations

import random

import pytest

from docmt.corpus import Corpus, ParallelDoc

SRC_WORDS = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
    "hotel", "india", "juliet", "kilo", "lima", "mike",
]
TGT_WORDS = [
    "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
]


def words(rng: random.Random, n: int, vocab: list[str]) -> str:
    return " ".join(rng.choice(vocab) for _ in range(n))


def make_doc(
    doc_id: str,
    rng: random.Random,
    n_src: int = 4,
    n_tgt: int | None = None,
    words_per_segment: int = 6,
    src_lang: str = "en",
    tgt_lang: str = "de",
    domain: str = "news",
) -> ParallelDoc:
    """Build a random parallel document with disjoint source/target vocab."""
    if n_tgt is None:
        n_tgt = n_src
    return ParallelDoc(
        doc_id=doc_id,
        src_lang=src_lang,
        tgt_lang=tgt_lang,
        domain=domain,
        src_segments=[words(rng, words_per_segment, SRC_WORDS) for _ in range(n_src)],
        tgt_segments=[words(rng, words_per_segment, TGT_WORDS) for _ in range(n_tgt)],
    )


def make_corpus(rng: random.Random, n_docs: int, **kwargs) -> Corpus:
    return Corpus([make_doc(f"doc-{i:04d}", rng, **kwargs) for i in range(n_docs)])


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


# Verdict lines registered by the acceptance tests; printed after capture ends
# so the run log always shows one line per checked behavior.
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_VERDICTS:
        terminalreporter.section("acceptance verdicts")
        for line in ACCEPTANCE_VERDICTS:
            terminalreporter.write_line(line)
