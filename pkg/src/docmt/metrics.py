"""Document-level translation metrics: BLEU, sentence alignment, term consistency, windowed scoring."""

from __future__ import annotations

import logging
import math
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .corpus import ParallelDoc

logger = logging.getLogger(__name__)

# Ideographs, kana, and hangul are split per character so n-grams stay
# meaningful without a language-specific word segmenter.
_CJK_RANGES = (
    (0x3040, 0x30FF),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xAC00, 0xD7AF),
    (0xF900, 0xFAFF),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization with punctuation isolated and CJK split per character."""
    tokens: list[str] = []
    buf: list[str] = []

    def flush() -> None:
        if buf:
            tokens.append("".join(buf))
            buf.clear()

    for ch in text:
        if ch.isspace():
            flush()
        elif _is_cjk(ch) or unicodedata.category(ch)[0] in ("P", "S"):
            flush()
            tokens.append(ch)
        else:
            buf.append(ch)
    flush()
    return tokens


@dataclass(slots=True)
class BleuScore:
    """Corpus BLEU-4 with its brevity penalty and per-order precisions."""

    score: float
    bp: float
    precisions: tuple[float, float, float, float]
    hyp_len: int
    ref_len: int


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(hyp_lines: Sequence[str], ref_lines: Sequence[str]) -> BleuScore:
    """Corpus BLEU-4: clipped n-gram counts pooled over pairs, geometric mean, brevity penalty."""
    if len(hyp_lines) != len(ref_lines):
        raise ValueError(f"hypothesis/reference counts differ: {len(hyp_lines)} vs {len(ref_lines)}")
    if not hyp_lines:
        raise ValueError("at least one hypothesis/reference pair required")

    matched = [0, 0, 0, 0]
    total = [0, 0, 0, 0]
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyp_lines, ref_lines):
        hyp_toks = tokenize(hyp)
        ref_toks = tokenize(ref)
        hyp_len += len(hyp_toks)
        ref_len += len(ref_toks)
        for n in range(1, 5):
            hyp_grams = _ngrams(hyp_toks, n)
            if not hyp_grams:
                continue
            ref_grams = _ngrams(ref_toks, n)
            total[n - 1] += sum(hyp_grams.values())
            matched[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())

    if hyp_len == 0:
        logger.warning("empty hypothesis: BLEU forced to 0 (bp recorded as 0)")
        return BleuScore(score=0.0, bp=0.0, precisions=(0.0, 0.0, 0.0, 0.0), hyp_len=0, ref_len=ref_len)

    precisions = tuple(m / t if t else 0.0 for m, t in zip(matched, total))
    bp = min(1.0, math.exp(1.0 - ref_len / hyp_len))
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0) * 100.0
    return BleuScore(score=score, bp=bp, precisions=precisions, hyp_len=hyp_len, ref_len=ref_len)


def d_bleu(hyp_segments: Sequence[str], ref_segments: Sequence[str]) -> BleuScore:
    """BLEU over whole documents: each side joined with single spaces into one pair."""
    return bleu([" ".join(hyp_segments)], [" ".join(ref_segments)])


def char_bigram_f(a: str, b: str) -> float:
    """F-score over character-bigram multisets; degenerate short strings compare by equality."""
    ga = Counter(a[i : i + 2] for i in range(len(a) - 1))
    gb = Counter(b[i : i + 2] for i in range(len(b) - 1))
    if not ga and not gb:
        return 1.0 if a == b else 0.0
    if not ga or not gb:
        return 0.0
    overlap = sum(min(c, gb[g]) for g, c in ga.items())
    return 2.0 * overlap / (sum(ga.values()) + sum(gb.values()))


@dataclass(slots=True)
class Link:
    """One monotonic alignment link between sentence groups."""

    hyp_indices: tuple[int, ...]
    ref_indices: tuple[int, ...]
    score: float


@dataclass(slots=True)
class Alignment:
    """Ordered 1-1/1-2/2-1 links plus explicitly null-aligned leftovers."""

    links: list[Link]
    hyp_unaligned: tuple[int, ...]
    ref_unaligned: tuple[int, ...]

    def total_score(self) -> float:
        return sum(link.score for link in self.links)

    def aligned_pairs(self, hyp: Sequence[str], ref: Sequence[str]) -> list[tuple[str, str]]:
        return [
            (" ".join(hyp[i] for i in link.hyp_indices), " ".join(ref[j] for j in link.ref_indices))
            for link in self.links
        ]


def align_sentences(
    hyp: Sequence[str],
    ref: Sequence[str],
    sim: Callable[[str, str], float] | None = None,
) -> Alignment:
    """Monotonic sentence alignment maximizing total similarity over 1-1, 1-2, and 2-1 links.

    Unlinked sentences are null-aligned at zero score. Ties prefer links over skips.
    """
    sim = sim or char_bigram_f
    n, m = len(hyp), len(ref)
    NEG = float("-inf")
    best = [[NEG] * (m + 1) for _ in range(n + 1)]
    move: list[list[tuple[int, int] | None]] = [[None] * (m + 1) for _ in range(n + 1)]
    best[0][0] = 0.0
    for i in range(n + 1):
        for j in range(m + 1):
            if i == 0 and j == 0:
                continue
            # Candidate transitions in tie-break preference order.
            cands: list[tuple[float, tuple[int, int]]] = []
            if i >= 1 and j >= 1:
                cands.append((best[i - 1][j - 1] + sim(hyp[i - 1], ref[j - 1]), (1, 1)))
            if i >= 2 and j >= 1:
                cands.append((best[i - 2][j - 1] + sim(f"{hyp[i - 2]} {hyp[i - 1]}", ref[j - 1]), (2, 1)))
            if i >= 1 and j >= 2:
                cands.append((best[i - 1][j - 2] + sim(hyp[i - 1], f"{ref[j - 2]} {ref[j - 1]}"), (1, 2)))
            if i >= 1:
                cands.append((best[i - 1][j], (1, 0)))
            if j >= 1:
                cands.append((best[i][j - 1], (0, 1)))
            for score, step in cands:
                if score > best[i][j]:
                    best[i][j] = score
                    move[i][j] = step

    links: list[Link] = []
    hyp_null: list[int] = []
    ref_null: list[int] = []
    i, j = n, m
    while i > 0 or j > 0:
        di, dj = move[i][j]  # type: ignore[misc]
        i, j = i - di, j - dj
        if di and dj:
            hyp_ix = tuple(range(i, i + di))
            ref_ix = tuple(range(j, j + dj))
            score = sim(" ".join(hyp[k] for k in hyp_ix), " ".join(ref[k] for k in ref_ix))
            links.append(Link(hyp_indices=hyp_ix, ref_indices=ref_ix, score=score))
        elif di:
            hyp_null.append(i)
        else:
            ref_null.append(j)
    links.reverse()
    return Alignment(links=links, hyp_unaligned=tuple(sorted(hyp_null)), ref_unaligned=tuple(sorted(ref_null)))


# Function words excluded from term-consistency tallies; callers may pass their own list.
DEFAULT_STOPLIST = frozenset(
    """that this with from have will been were their they them then than what when where which
    while would could should there these those your into over under after before about above
    because between through during against each such only same some most more very also just
    still does done being having other others another every never always
    might must shall upon without within among across both many much several""".split()
)


class WordAligner(Protocol):
    """Picks the target-side token translating one source token, or None."""

    def __call__(self, src_token: str, tgt_tokens: Sequence[str]) -> str | None: ...


def overlap_word_aligner(src_token: str, tgt_tokens: Sequence[str]) -> str | None:
    """Default word aligner: target token with maximal character overlap, leftmost on ties."""
    if not tgt_tokens:
        return None
    src_chars = Counter(src_token)
    best_tok: str | None = None
    best_score = -1
    for tok in tgt_tokens:
        score = sum(min(c, Counter(tok)[ch]) for ch, c in src_chars.items())
        if score > best_score:
            best_score = score
            best_tok = tok
    return best_tok


@dataclass(slots=True)
class LtcrResult:
    """Pairwise term-consistency tallies: consistent occurrence pairs over all pairs."""

    consistent_pairs: int
    total_pairs: int
    skipped_occurrences: int
    per_term: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def ratio(self) -> float | None:
        return self.consistent_pairs / self.total_pairs if self.total_pairs else None


def _content_terms(tokens: Sequence[str], stoplist: frozenset[str]) -> list[str]:
    return [t for t in tokens if t.isalpha() and len(t) >= 4 and t not in stoplist]


def ltcr(
    items: Sequence[tuple[ParallelDoc, Sequence[str]]],
    word_aligner: WordAligner | None = None,
    min_repeat: int = 2,
    stoplist: frozenset[str] | None = None,
) -> LtcrResult:
    """Lexical consistency of repeated source terms across each document's translation.

    For every casefolded alphabetic source term of length >= 4 occurring at least
    `min_repeat` times in a document, each occurrence is mapped to a translation
    token by the word aligner; a pair of occurrences is consistent iff the two
    translations are string-equal. The result pools pair counts over documents.
    """
    aligner = word_aligner or overlap_word_aligner
    stop = DEFAULT_STOPLIST if stoplist is None else stoplist
    consistent = 0
    total = 0
    skipped = 0
    per_term: dict[str, tuple[int, int]] = {}

    for doc, hyp_segments in items:
        src = doc.src_segments
        hyp = list(hyp_segments)
        if len(src) == len(hyp):
            pairs = list(zip(src, hyp))
            unpaired: list[str] = []
        else:
            alignment = align_sentences(src, hyp)
            pairs = alignment.aligned_pairs(src, hyp)
            unpaired = [src[i] for i in alignment.hyp_unaligned]

        translations: dict[str, list[str]] = {}
        for src_sent, hyp_sent in pairs:
            src_tokens = tokenize(src_sent.casefold())
            tgt_tokens = [t for t in tokenize(hyp_sent.casefold()) if any(c.isalnum() for c in t)]
            for term in _content_terms(src_tokens, stop):
                chosen = aligner(term, tgt_tokens)
                if chosen is None:
                    skipped += 1
                else:
                    translations.setdefault(term, []).append(chosen)
        for sent in unpaired:
            skipped += len(_content_terms(tokenize(sent.casefold()), stop))

        for term, occs in translations.items():
            k = len(occs)
            if k < min_repeat:
                continue
            t_pairs = k * (k - 1) // 2
            c_pairs = sum(c * (c - 1) // 2 for c in Counter(occs).values())
            total += t_pairs
            consistent += c_pairs
            prev = per_term.get(term, (0, 0))
            per_term[term] = (prev[0] + c_pairs, prev[1] + t_pairs)

    return LtcrResult(consistent_pairs=consistent, total_pairs=total, skipped_occurrences=skipped, per_term=per_term)


class ChunkScorer(Protocol):
    """Scores one (source, hypothesis, reference) text window."""

    def score(self, src: str, hyp: str, ref: str) -> float: ...


class TokenCostFn(Protocol):
    def count(self, text: str) -> int: ...


def _window_starts(total: int, window: int, stride: int) -> list[int]:
    if total <= window:
        return [0]
    starts = []
    s = 0
    while s + window < total:
        starts.append(s)
        s += stride
    last = total - window
    if not starts or starts[-1] != last:
        starts.append(last)
    return starts


def _select_span(words: list[str], costs: list[int], start: float, end: float) -> str:
    out = []
    pos = 0
    for word, cost in zip(words, costs):
        if start <= pos < end:
            out.append(word)
        pos += cost
    return " ".join(out)


def slide_score(
    hyp_segments: Sequence[str],
    ref_segments: Sequence[str],
    src_segments: Sequence[str],
    scorer: ChunkScorer,
    window: int = 512,
    stride: int = 256,
    counter: TokenCostFn | None = None,
) -> float:
    """Mean scorer output over overlapping token windows spanning the document.

    Windows are spans [i*stride, i*stride + window) over the reference token
    stream, with the last window anchored at the document end; hypothesis and
    source spans are mapped proportionally. Tokens are whitespace words unless
    a counter assigns other per-word costs.
    """
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be positive")

    def prep(segments: Sequence[str]) -> tuple[list[str], list[int], int]:
        words = " ".join(segments).split()
        costs = [max(1, counter.count(w)) if counter else 1 for w in words]
        return words, costs, sum(costs)

    ref_words, ref_costs, ref_total = prep(ref_segments)
    hyp_words, hyp_costs, hyp_total = prep(hyp_segments)
    src_words, src_costs, src_total = prep(src_segments)
    if ref_total == 0:
        raise ValueError("empty reference document")

    scores = []
    for start in _window_starts(ref_total, window, stride):
        end = min(start + window, ref_total)
        ref_text = _select_span(ref_words, ref_costs, start, end)
        h_a = 0 if start == 0 else start * hyp_total / ref_total
        h_b = hyp_total if end == ref_total else end * hyp_total / ref_total
        s_a = 0 if start == 0 else start * src_total / ref_total
        s_b = src_total if end == ref_total else end * src_total / ref_total
        scores.append(scorer.score(
            _select_span(src_words, src_costs, s_a, s_b),
            _select_span(hyp_words, hyp_costs, h_a, h_b),
            ref_text,
        ))
    return sum(scores) / len(scores)


class SegmentScorer(Protocol):
    """Scores one (source, translation, optional reference) segment triple."""

    def score(self, src: str, mt: str, ref: str | None = None, context: Sequence[tuple[str, str]] | None = None) -> float: ...


REPORT_COLUMNS = ("BLEU", "COMET", "d-BLEU (BP)", "d-COMET", "LTCR")


@dataclass(slots=True)
class EvalReport:
    """Per-document evaluation: lexical metrics plus optional learned scores."""

    doc_id: str
    bleu: BleuScore
    d_bleu: BleuScore
    ltcr: LtcrResult
    comet: float | None = None
    d_comet: float | None = None
    notes: list[str] = field(default_factory=list)

    def table_row(self) -> tuple[str, str, str, str, str]:
        ltcr_cell = "-" if self.ltcr.ratio is None else f"{self.ltcr.ratio * 100:.2f}"
        return (
            f"{self.bleu.score:.2f}",
            "-" if self.comet is None else f"{self.comet * 100:.2f}",
            f"{self.d_bleu.score:.2f} ({self.d_bleu.bp:.2f})",
            "-" if self.d_comet is None else f"{self.d_comet * 100:.2f}",
            ltcr_cell,
        )

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "bleu": self.bleu.score,
            "d_bleu": self.d_bleu.score,
            "d_bleu_bp": self.d_bleu.bp,
            "ltcr": self.ltcr.ratio,
            "comet": self.comet,
            "d_comet": self.d_comet,
            "notes": list(self.notes),
        }


def evaluate(
    run,
    ref: ParallelDoc,
    segment_scorer: SegmentScorer | None = None,
    chunk_scorer: ChunkScorer | None = None,
) -> EvalReport:
    """Score one translation run against its reference document.

    `run` needs `doc_id` and `merged` attributes. Sentence-level BLEU and the
    learned segment score are computed on monotonically aligned sentence pairs;
    document-level metrics use whole-side concatenations.
    """
    if run.doc_id != ref.doc_id:
        raise ValueError(f"run doc_id {run.doc_id!r} does not match reference {ref.doc_id!r}")
    hyp_sentences = [line for line in run.merged.split("\n") if line.strip()] or [run.merged]

    alignment = align_sentences(hyp_sentences, ref.tgt_segments)
    pairs = alignment.aligned_pairs(hyp_sentences, ref.tgt_segments)
    hyp_lines = [h for h, _ in pairs] + [""] * len(alignment.ref_unaligned)
    ref_lines = [r for _, r in pairs] + [ref.tgt_segments[j] for j in alignment.ref_unaligned]
    for i in alignment.hyp_unaligned:
        hyp_lines.append(hyp_sentences[i])
        ref_lines.append("")

    notes: list[str] = []
    comet = None
    if segment_scorer is None:
        notes.append("segment scorer not configured: COMET column absent")
    else:
        positional = len(ref.src_segments) == len(ref.tgt_segments)
        seg_scores = []
        for link, (hyp_text, ref_text) in zip(alignment.links, pairs):
            if positional:
                src_text = " ".join(ref.src_segments[j] for j in link.ref_indices)
            else:
                src_text = ""
            seg_scores.append(segment_scorer.score(src_text, hyp_text, ref=ref_text))
        comet = sum(seg_scores) / len(seg_scores) if seg_scores else None

    d_comet = None
    if chunk_scorer is None:
        notes.append("chunk scorer not configured: d-COMET column absent")
    else:
        d_comet = slide_score(hyp_sentences, ref.tgt_segments, ref.src_segments, chunk_scorer)

    return EvalReport(
        doc_id=ref.doc_id,
        bleu=bleu(hyp_lines, ref_lines),
        d_bleu=d_bleu(hyp_sentences, ref.tgt_segments),
        ltcr=ltcr([(ref, hyp_sentences)]),
        comet=comet,
        d_comet=d_comet,
        notes=notes,
    )
