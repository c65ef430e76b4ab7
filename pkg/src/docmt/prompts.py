"""Chat-turn prompt rendering with byte-span target masks, plus training record export."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from .augmentation import ChunkingSpec, ContextualExample, build_capt_examples
from .corpus import Corpus, ParallelDoc
from .errors import UnalignableDocumentError
from .languages import display_name

logger = logging.getLogger(__name__)

TURN_START_USER = "<|im_start|>user\n"
TURN_START_ASSISTANT = "<|im_start|>assistant\n"
TURN_END = "<|im_end|>"

MODES = ("contextual", "doc2doc", "sentence")

# The trailing periods after the source and target payloads are template
# literals: they are always appended, never deduplicated.
_INSTRUCTION = "Translate the following source text from {src} into {tgt}.\n"


@dataclass(slots=True)
class Prompt:
    """Rendered chat text; target offsets are in UTF-8 bytes, None for inference prompts."""

    text: str
    mode: str
    src_lang: str
    tgt_lang: str
    target_start: int | None = None
    target_len: int | None = None

    def user_text(self) -> str:
        """Content of the user turn, without turn markers."""
        start = self.text.index(TURN_START_USER) + len(TURN_START_USER)
        end = self.text.index(TURN_END, start)
        return self.text[start:end]


def render(example: ContextualExample, mode: str) -> Prompt:
    """Render one example into chat-turn text.

    The user turn carries an optional context block (one line per prior pair),
    the instruction line, the labeled source, and the target-language cue; the
    assistant turn carries the target when present. There is no system turn.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode != "contextual" and example.context:
        raise ValueError(f"mode {mode!r} does not accept context pairs")
    src_name = display_name(example.src_lang)
    tgt_name = display_name(example.tgt_lang)

    parts = [TURN_START_USER]
    if example.context:
        parts.append("Context:\n")
        for ctx_src, ctx_tgt in example.context:
            parts.append(f"{src_name}: {ctx_src} {tgt_name}: {ctx_tgt}\n")
    parts.append(_INSTRUCTION.format(src=src_name, tgt=tgt_name))
    parts.append(f"{src_name}: {example.source}.\n")
    parts.append(f"{tgt_name}:{TURN_END}\n")
    parts.append(TURN_START_ASSISTANT)
    prefix = "".join(parts)

    if example.target is None:
        return Prompt(text=prefix, mode=mode, src_lang=example.src_lang, tgt_lang=example.tgt_lang)
    target_piece = f"{example.target}.{TURN_END}"
    return Prompt(
        text=prefix + target_piece,
        mode=mode,
        src_lang=example.src_lang,
        tgt_lang=example.tgt_lang,
        target_start=len(prefix.encode("utf-8")),
        target_len=len(target_piece.encode("utf-8")),
    )


def parse_prompt(text: str, src_lang: str, tgt_lang: str) -> tuple[list[tuple[str, str]], str, str | None]:
    """Recover (context pairs, source, target) from rendered prompt text.

    Context pairs are parsed line-wise; a continuation line (from multi-line
    pair text) is folded into the previous pair's target side.
    """
    src_name = display_name(src_lang)
    tgt_name = display_name(tgt_lang)
    if not text.startswith(TURN_START_USER):
        raise ValueError("prompt does not open with a user turn")
    user_end = text.index(TURN_END)
    user = text[len(TURN_START_USER):user_end]

    instruction = _INSTRUCTION.format(src=src_name, tgt=tgt_name)
    ins_at = user.find(instruction)
    if ins_at < 0:
        raise ValueError("prompt lacks the translation instruction line")

    context: list[tuple[str, str]] = []
    block = user[:ins_at]
    if block:
        if not block.startswith("Context:\n"):
            raise ValueError("unexpected text before the instruction line")
        sep = f" {tgt_name}: "
        for line in block[len("Context:\n"):].splitlines():
            if line.startswith(f"{src_name}: ") and sep in line:
                ctx_src, ctx_tgt = line[len(f"{src_name}: "):].split(sep, 1)
                context.append((ctx_src, ctx_tgt))
            elif context:
                prev_src, prev_tgt = context[-1]
                context[-1] = (prev_src, f"{prev_tgt}\n{line}")
            else:
                raise ValueError(f"malformed context line: {line!r}")

    body = user[ins_at + len(instruction):]
    src_label = f"{src_name}: "
    tail = f".\n{tgt_name}:"
    if not body.startswith(src_label) or not body.endswith(tail):
        raise ValueError("malformed source block")
    source = body[len(src_label):-len(tail)]

    rest = text[text.index(TURN_START_ASSISTANT) + len(TURN_START_ASSISTANT):]
    if not rest:
        return context, source, None
    suffix = f".{TURN_END}"
    if not rest.endswith(suffix):
        raise ValueError("malformed assistant turn")
    return context, source, rest[:-len(suffix)]


@dataclass(slots=True)
class TrainingRecord:
    """One serializable training example with its loss-span byte offsets."""

    prompt: Prompt
    doc_id: str
    chunk_index: int

    def __post_init__(self) -> None:
        if self.prompt.target_start is None:
            raise ValueError(f"doc {self.doc_id!r} chunk {self.chunk_index}: prompt has no target span")

    def to_record(self) -> dict:
        return {
            "text": self.prompt.text,
            "target_start": self.prompt.target_start,
            "target_len": self.prompt.target_len,
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "mode": self.prompt.mode,
            "src_lang": self.prompt.src_lang,
            "tgt_lang": self.prompt.tgt_lang,
        }


def emit_training_record(example: ContextualExample, mode: str, doc_id: str, chunk_index: int) -> TrainingRecord:
    """Render one example and wrap it with its provenance fields."""
    if example.target is None:
        raise ValueError(f"doc {doc_id!r} chunk {chunk_index}: training examples need a target")
    return TrainingRecord(prompt=render(example, mode), doc_id=doc_id, chunk_index=chunk_index)


def format_corpus(
    corpus: Corpus,
    mode: str,
    chunk_spec: ChunkingSpec | None = None,
    window: int = 3,
    capt_domains: Sequence[str] | None = None,
) -> list[TrainingRecord]:
    """Turn a corpus into training records for one prompt mode.

    doc2doc emits one whole-document record per document; sentence emits one
    record per aligned segment pair; contextual emits one record per chunk with
    its preceding reference pairs. Unalignable documents are logged and skipped.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    records: list[TrainingRecord] = []
    for doc in corpus:
        try:
            if mode == "doc2doc":
                example = ContextualExample(
                    src_lang=doc.src_lang, tgt_lang=doc.tgt_lang, context=[],
                    source=doc.source_text(), target=doc.target_text(),
                )
                records.append(emit_training_record(example, mode, doc.doc_id, 0))
            elif mode == "sentence":
                from .augmentation import aligned_segment_pairs

                for i, (src, tgt) in enumerate(aligned_segment_pairs(doc)):
                    example = ContextualExample(
                        src_lang=doc.src_lang, tgt_lang=doc.tgt_lang, context=[], source=src, target=tgt,
                    )
                    records.append(emit_training_record(example, mode, doc.doc_id, i))
            else:
                use_context = capt_domains is None or doc.domain in capt_domains
                examples = build_capt_examples(doc, chunk_spec, window if use_context else 0)
                for i, example in enumerate(examples):
                    records.append(emit_training_record(example, mode, doc.doc_id, i))
        except UnalignableDocumentError as exc:
            logger.warning("skipping document: %s", exc)
    return records


@dataclass(frozen=True, slots=True)
class TrainingConfig:
    """Fine-tuning hyperparameters exported alongside formatted data."""

    batch_size: int = 32
    epochs: int = 2
    lr: float = 7e-6
    scheduler: str = "cosine"
    warmup_steps: int = 125
    weight_decay: float = 0.01
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_seq_len: int = 32768

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "lr": self.lr,
            "scheduler": self.scheduler,
            "warmup_steps": self.warmup_steps,
            "weight_decay": self.weight_decay,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "max_seq_len": self.max_seq_len,
        }


def export_training_config() -> TrainingConfig:
    """Default fine-tuning configuration; round-trips exactly through JSON."""
    return TrainingConfig()
