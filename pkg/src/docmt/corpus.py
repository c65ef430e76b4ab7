"""Parallel-document corpus model, JSONL persistence, and summary statistics."""

from __future__ import annotations

import json
import logging
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

from .errors import RecordError
from .languages import is_supported

logger = logging.getLogger(__name__)

# Exact key set of one serialized document record. `meta` may be omitted.
_RECORD_KEYS = ("doc_id", "src_lang", "tgt_lang", "domain", "src_segments", "tgt_segments")
_OPTIONAL_KEYS = ("meta",)


def _check_lang(code: str, side: str, doc_id: str) -> None:
    if not (isinstance(code, str) and len(code) == 2 and code.isascii() and code.islower()):
        raise RecordError(f"doc {doc_id!r}: {side} language must be two lowercase ASCII letters, got {code!r}")
    if not is_supported(code):
        raise RecordError(f"doc {doc_id!r}: unknown language code {code!r}")


def _check_segments(segments: list[str], side: str, doc_id: str) -> None:
    if not isinstance(segments, list) or not segments:
        raise RecordError(f"doc {doc_id!r}: {side} segment list must be nonempty")
    for i, seg in enumerate(segments):
        if not isinstance(seg, str) or not seg.strip():
            raise RecordError(f"doc {doc_id!r}: {side} segment {i} must be nonempty text")
        if "\n" in seg:
            raise RecordError(f"doc {doc_id!r}: {side} segment {i} contains the record separator")


@dataclass(slots=True)
class ParallelDoc:
    """One aligned document pair with segment lists for both sides."""

    doc_id: str
    src_lang: str
    tgt_lang: str
    src_segments: list[str]
    tgt_segments: list[str]
    domain: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise RecordError("doc_id must be nonempty")
        _check_lang(self.src_lang, "source", self.doc_id)
        _check_lang(self.tgt_lang, "target", self.doc_id)
        if self.src_lang == self.tgt_lang:
            raise RecordError(f"doc {self.doc_id!r}: source and target language must differ")
        _check_segments(self.src_segments, "source", self.doc_id)
        _check_segments(self.tgt_segments, "target", self.doc_id)

    @property
    def pair(self) -> str:
        return f"{self.src_lang}→{self.tgt_lang}"

    def source_text(self) -> str:
        """Whole source side as one string, one segment per line."""
        return "\n".join(self.src_segments)

    def target_text(self) -> str:
        """Whole target side as one string, one segment per line."""
        return "\n".join(self.tgt_segments)

    def source_words(self) -> int:
        return sum(len(s.split()) for s in self.src_segments)

    def target_words(self) -> int:
        return sum(len(s.split()) for s in self.tgt_segments)

    def to_record(self) -> dict:
        rec: dict = {
            "doc_id": self.doc_id,
            "src_lang": self.src_lang,
            "tgt_lang": self.tgt_lang,
            "domain": self.domain,
            "src_segments": list(self.src_segments),
            "tgt_segments": list(self.tgt_segments),
        }
        if self.meta:
            rec["meta"] = self.meta
        return rec


@dataclass(slots=True)
class Corpus:
    """Ordered document collection with unique doc_ids."""

    docs: list[ParallelDoc]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for doc in self.docs:
            if doc.doc_id in seen:
                raise RecordError(f"duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)

    def __len__(self) -> int:
        return len(self.docs)

    def __iter__(self) -> Iterator[ParallelDoc]:
        return iter(self.docs)

    def __getitem__(self, index: int) -> ParallelDoc:
        return self.docs[index]


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _doc_from_record(rec: dict, where: str) -> ParallelDoc:
    if not isinstance(rec, dict):
        raise RecordError(f"{where}: record must be a JSON object")
    unknown = set(rec) - set(_RECORD_KEYS) - set(_OPTIONAL_KEYS)
    if unknown:
        raise RecordError(f"{where}: unknown keys {sorted(unknown)}")
    missing = [k for k in _RECORD_KEYS if k not in rec]
    if missing:
        raise RecordError(f"{where}: missing keys {missing}")
    meta = rec.get("meta", {})
    if not isinstance(meta, dict):
        raise RecordError(f"{where}: meta must be an object")
    try:
        return ParallelDoc(
            doc_id=_nfc(rec["doc_id"]) if isinstance(rec["doc_id"], str) else rec["doc_id"],
            src_lang=rec["src_lang"],
            tgt_lang=rec["tgt_lang"],
            domain=_nfc(rec["domain"]) if isinstance(rec["domain"], str) else rec["domain"],
            src_segments=[_nfc(s) if isinstance(s, str) else s for s in rec["src_segments"]]
            if isinstance(rec["src_segments"], list) else rec["src_segments"],
            tgt_segments=[_nfc(s) if isinstance(s, str) else s for s in rec["tgt_segments"]]
            if isinstance(rec["tgt_segments"], list) else rec["tgt_segments"],
            meta=meta,
        )
    except RecordError as exc:
        raise RecordError(f"{where}: {exc}") from None


def load_corpus(path: str | Path) -> Corpus:
    """Read a UTF-8 JSONL corpus, NFC-normalizing text fields. Blank lines are skipped."""
    path = Path(path)
    docs: list[ParallelDoc] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from None
            docs.append(_doc_from_record(rec, f"{path}:{lineno}"))
    return Corpus(docs)


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as UTF-8 JSONL, one document per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for doc in corpus:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False))
            fh.write("\n")


def format_count(value: float) -> str:
    """Render a count with the K/M suffix layout used by corpus summaries."""
    if value >= 1e6:
        return f"{value / 1e6:.1f}M"
    if value >= 100:
        return f"{value / 1e3:.1f}K"
    return f"{value:.1f}"


@dataclass(slots=True)
class StatsRow:
    """Aggregate counts for one (domain, direction) group."""

    domain: str
    pair: str
    n_docs: int
    n_segments: int
    n_words: int

    def __post_init__(self) -> None:
        if min(self.n_docs, self.n_segments, self.n_words) < 0:
            raise ValueError("counts must be nonnegative")

    @property
    def avg_words_per_doc(self) -> float:
        return self.n_words / self.n_docs if self.n_docs else 0.0

    def to_dict(self) -> dict:
        return {
            "domain": self.domain,
            "pair": self.pair,
            "n_docs": self.n_docs,
            "n_segments": self.n_segments,
            "n_words": self.n_words,
            "avg_words_per_doc": self.avg_words_per_doc,
        }


@dataclass(slots=True)
class StatsReport:
    """Per-group corpus statistics plus totals. Words are counted on the source side."""

    rows: list[StatsRow]
    total: StatsRow

    def to_dict(self) -> dict:
        return {
            "note": "words counted on the source side (whitespace tokens)",
            "rows": [r.to_dict() for r in self.rows],
            "total": self.total.to_dict(),
        }

    def render(self) -> str:
        header = ("domain", "pair", "|D|", "|S|", "|W|", "|W|/|D|")
        lines = [list(header)]
        for row in self.rows + [self.total]:
            lines.append([
                row.domain,
                row.pair,
                format_count(row.n_docs),
                format_count(row.n_segments),
                format_count(row.n_words),
                format_count(row.avg_words_per_doc),
            ])
        widths = [max(len(line[i]) for line in lines) for i in range(len(header))]
        out = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line)).rstrip() for line in lines]
        out.append("words counted on the source side (whitespace tokens)")
        return "\n".join(out)


def corpus_stats(corpus: Corpus) -> StatsReport:
    """Group document, segment, and source-word counts by (domain, direction)."""
    groups: dict[tuple[str, str], list[int]] = {}
    for doc in corpus:
        key = (doc.domain, doc.pair)
        tally = groups.setdefault(key, [0, 0, 0])
        tally[0] += 1
        tally[1] += len(doc.src_segments)
        tally[2] += doc.source_words()
    rows = [
        StatsRow(domain=d, pair=p, n_docs=t[0], n_segments=t[1], n_words=t[2])
        for (d, p), t in sorted(groups.items())
    ]
    total = StatsRow(
        domain="TOTAL",
        pair="*",
        n_docs=sum(r.n_docs for r in rows),
        n_segments=sum(r.n_segments for r in rows),
        n_words=sum(r.n_words for r in rows),
    )
    return StatsReport(rows=rows, total=total)
