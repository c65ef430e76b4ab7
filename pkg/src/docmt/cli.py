"""Command-line front end: stats, curate, augment, format, translate, evaluate."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Sequence

from .augmentation import (
    AugmentConfig,
    ChunkingSpec,
    DEFAULT_CONTEXT_WINDOW,
    DEFAULT_SENTENCE_FRACTION,
    DEFAULT_SPLIT_KS,
    DEFAULT_TOKEN_BUDGET,
    expand_corpus,
    mix_corpora,
)
from .backend import BackendConfig, DecodeParams, HttpBackend, MockBackend
from .corpus import corpus_stats, load_corpus, save_corpus
from .curation import FilterConfig, balance_corpus, run_pipeline
from .errors import BackendError, ContextOverflowError, DocmtError, RecordError, ScorerError, UnalignableDocumentError
from .inference import (
    translate_chunked,
    translate_contextual,
    translate_doc2doc,
    translate_quality_aware,
)
from .metrics import REPORT_COLUMNS, evaluate
from .prompts import export_training_config, format_corpus
from .scorers import BridgeChunkScorer, BridgeUtility, CharFScorer, CharFUtility, QeBridgeClient

logger = logging.getLogger(__name__)

_TRANSLATE_MODES = ("doc2doc", "chunk", "context", "quality")


def _write_jsonl(path: Path, records: Sequence[dict]) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def _read_config(path: str | None) -> dict:
    if not path:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError(f"config file {path} must hold a JSON object")
    return data


def _resolve(flag_value, config: dict, key: str, default):
    """Flag wins over config file; config file wins over the built-in default."""
    if flag_value is not None:
        return flag_value
    if key in config:
        return config[key]
    return default


def _csv_ints(text: str) -> tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _csv_strs(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def cmd_stats(args: argparse.Namespace) -> int:
    report = corpus_stats(load_corpus(args.input))
    print(report.render())
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return 0


def _filter_config(args: argparse.Namespace) -> FilterConfig:
    config = _read_config(args.config)
    defaults = FilterConfig()
    kwargs = {}
    for f in fields(FilterConfig):
        kwargs[f.name] = _resolve(getattr(args, f.name, None), config, f.name, getattr(defaults, f.name))
    return FilterConfig(**kwargs)


def cmd_curate(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input)
    cfg = _filter_config(args)
    qe_scorer = QeBridgeClient(args.qe_endpoint) if args.qe_endpoint else None
    fluency_scorer = QeBridgeClient(args.fluency_endpoint) if args.fluency_endpoint else None
    try:
        result = run_pipeline(corpus, cfg, qe_scorer=qe_scorer, fluency_scorer=fluency_scorer)
    except ScorerError as exc:
        partial = getattr(exc, "partial_drop_log", [])
        if args.drop_log and partial:
            _write_jsonl(Path(args.drop_log), [r.to_dict() for r in partial])
            logger.error("scorer failure: wrote %d partial drop records to %s", len(partial), args.drop_log)
        raise
    out_corpus = result.corpus
    if args.balance:
        out_corpus = balance_corpus(out_corpus, seed=args.seed)
    save_corpus(out_corpus, args.output)
    if args.drop_log:
        _write_jsonl(Path(args.drop_log), [r.to_dict() for r in result.drop_log])
    print("before:")
    print(result.pre_stats.render())
    print("after:")
    print(corpus_stats(out_corpus).render() if args.balance else result.post_stats.render())
    return 0


def _augment_config(args: argparse.Namespace) -> AugmentConfig:
    config = _read_config(args.config)
    ks = _resolve(_csv_ints(args.mrd2d) if args.mrd2d is not None else None, config, "mrd2d_ks", list(DEFAULT_SPLIT_KS))
    mrd2d_domains = _resolve(
        _csv_strs(args.mrd2d_domains) if args.mrd2d_domains is not None else None, config, "mrd2d_domains", None,
    )
    capt_domains = _resolve(
        _csv_strs(args.capt_domains) if getattr(args, "capt_domains", None) is not None else None,
        config, "capt_domains", None,
    )
    return AugmentConfig(
        mrd2d_ks=tuple(ks),
        capt_window=_resolve(args.capt_n, config, "capt_window", DEFAULT_CONTEXT_WINDOW),
        token_budget=_resolve(args.budget, config, "token_budget", DEFAULT_TOKEN_BUDGET),
        sentence_fraction=_resolve(args.sentence_mix, config, "sentence_fraction", DEFAULT_SENTENCE_FRACTION),
        mrd2d_domains=None if mrd2d_domains is None else tuple(mrd2d_domains),
        capt_domains=None if capt_domains is None else tuple(capt_domains),
    )


def cmd_augment(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input)
    cfg = _augment_config(args)
    out = expand_corpus(corpus, cfg)
    if args.sent_corpus:
        out = mix_corpora(out, load_corpus(args.sent_corpus), cfg.sentence_fraction, seed=args.seed)
    elif cfg.sentence_fraction:
        logger.info("no sentence corpus supplied: skipping sentence mixing")
    save_corpus(out, args.output)
    if args.save_config:
        Path(args.save_config).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(f"augmented {len(corpus)} documents into {len(out)} records")
    return 0


def cmd_format(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input)
    config = _read_config(args.config)
    window = _resolve(args.capt_n, config, "capt_window", DEFAULT_CONTEXT_WINDOW)
    capt_domains = config.get("capt_domains")
    spec = ChunkingSpec(unit="segments", size=args.chunk_size)
    records = format_corpus(corpus, args.mode, chunk_spec=spec, window=window, capt_domains=capt_domains)
    _write_jsonl(Path(args.output), [r.to_record() for r in records])
    if args.train_config:
        Path(args.train_config).write_text(
            json.dumps(export_training_config().to_dict(), indent=2) + "\n", encoding="utf-8",
        )
    print(f"wrote {len(records)} training records")
    return 0


def _build_backend(args: argparse.Namespace):
    spec = args.backend
    if spec.startswith("mock:"):
        behavior = spec[len("mock:"):]
        table = None
        if behavior == "table":
            if not args.table:
                raise ValueError("mock:table requires --table FILE")
            table = json.loads(Path(args.table).read_text(encoding="utf-8"))
        return MockBackend(
            behavior=behavior, table=table, latency_s=args.mock_latency, max_concurrency=args.jobs,
        )
    if spec == "http":
        if not args.base_url or not args.model:
            raise ValueError("http backend requires --base-url and --model")
        cfg = BackendConfig(base_url=args.base_url, model=args.model, max_concurrency=args.jobs)
        return HttpBackend(cfg)
    raise ValueError(f"unknown backend {spec!r} (use mock:identity, mock:reverse_words, mock:table, or http)")


def cmd_translate(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.input)
    backend = _build_backend(args)
    spec = ChunkingSpec(unit=args.chunk_unit, size=args.chunk_size)
    if args.mode == "quality":
        params = DecodeParams(mode="nucleus", top_p=args.top_p, n_candidates=args.n)
        if args.qe_endpoint:
            utility = BridgeUtility(QeBridgeClient(args.qe_endpoint, use_context=args.utility_context))
        else:
            utility = CharFUtility(use_context=args.utility_context)
    else:
        params = DecodeParams(mode="greedy")
        utility = None

    rows = []
    ledger: list[dict] = []
    timing = []
    for doc in corpus:
        if args.mode == "doc2doc":
            run = translate_doc2doc(doc, backend, params, context_budget=args.context_budget)
        elif args.mode == "chunk":
            run = translate_chunked(doc, spec, backend, params)
        elif args.mode == "context":
            run = translate_contextual(doc, spec, backend, params, window=args.context_n)
        else:
            run = translate_quality_aware(doc, spec, backend, params, utility, window=args.context_n)
        rows.append({
            "doc_id": run.doc_id,
            "mode": run.mode,
            "outputs": run.outputs,
            "merged": run.merged,
            "tokens_in": run.tokens_in,
            "tokens_out": run.tokens_out,
        })
        ledger.extend(run.ledger_entries)
        timing.append({"doc_id": run.doc_id, "wall_seconds": run.wall_seconds, "throughput": run.throughput})

    out_path = Path(args.output)
    _write_jsonl(out_path, rows)
    ledger_path = Path(args.ledger) if args.ledger else out_path.with_suffix(out_path.suffix + ".ledger.jsonl")
    _write_jsonl(ledger_path, ledger)
    if args.timing:
        _write_jsonl(Path(args.timing), timing)
    print(f"translated {len(rows)} documents in {args.mode} mode")
    return 0


def _mean(values: list[float | None]) -> float | None:
    present = [v for v in values if v is not None]
    return sum(present) / len(present) if present else None


def cmd_evaluate(args: argparse.Namespace) -> int:
    ref_corpus = {doc.doc_id: doc for doc in load_corpus(args.reference)}
    runs = []
    with Path(args.run).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                runs.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise RecordError(f"{args.run}:{lineno}: invalid JSON: {exc.msg}") from None

    segment_scorer = chunk_scorer = None
    if args.qe_endpoint:
        client = QeBridgeClient(args.qe_endpoint)
        segment_scorer, chunk_scorer = client, BridgeChunkScorer(client)
    elif args.stub_scorers:
        stub = CharFScorer()
        segment_scorer, chunk_scorer = stub, stub

    reports = []
    for row in runs:
        doc_id = row.get("doc_id")
        if doc_id not in ref_corpus:
            raise RecordError(f"run references unknown doc_id {doc_id!r}")
        run = argparse.Namespace(doc_id=doc_id, merged=row["merged"])
        reports.append(evaluate(run, ref_corpus[doc_id], segment_scorer=segment_scorer, chunk_scorer=chunk_scorer))

    header = ("doc_id", *REPORT_COLUMNS)
    table_rows = [header] + [(r.doc_id, *r.table_row()) for r in reports]
    mean_cells = {
        "bleu": _mean([r.bleu.score for r in reports]),
        "d_bleu": _mean([r.d_bleu.score for r in reports]),
        "comet": _mean([r.comet for r in reports]),
        "d_comet": _mean([r.d_comet for r in reports]),
        "ltcr": _mean([r.ltcr.ratio for r in reports]),
    }
    if reports:
        table_rows.append((
            "MEAN",
            f"{mean_cells['bleu']:.2f}",
            "-" if mean_cells["comet"] is None else f"{mean_cells['comet'] * 100:.2f}",
            f"{mean_cells['d_bleu']:.2f}",
            "-" if mean_cells["d_comet"] is None else f"{mean_cells['d_comet'] * 100:.2f}",
            "-" if mean_cells["ltcr"] is None else f"{mean_cells['ltcr'] * 100:.2f}",
        ))
    widths = [max(len(row[i]) for row in table_rows) for i in range(len(header))]
    for row in table_rows:
        print("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip())
    for report in reports:
        for note in report.notes:
            logger.info("%s: %s", report.doc_id, note)

    if args.out:
        payload = {"docs": [r.to_dict() for r in reports], "mean": mean_cells}
        Path(args.out).write_text(json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    return 0


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits 1 on usage errors, per the documented exit codes."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="docmt", description="Document-level machine translation pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="summarize a corpus by domain and direction")
    p.add_argument("input")
    p.add_argument("--out", help="write the report as JSON")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("curate", help="clean a corpus with heuristic and quality filters")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", help="JSON file with FilterConfig keys")
    p.add_argument("--min-words", dest="min_words", type=int)
    p.add_argument("--identical-fraction", dest="identical_fraction_max", type=float)
    p.add_argument("--length-ratio", dest="length_ratio_max", type=float)
    p.add_argument("--qe-threshold", dest="qe_segment_threshold", type=float)
    p.add_argument("--fluency-threshold", dest="fluency_segment_threshold", type=float)
    p.add_argument("--bad-fraction", dest="doc_bad_fraction_max", type=float)
    p.add_argument("--qe-endpoint", help="scoring service URL for the quality gate")
    p.add_argument("--fluency-endpoint", help="scoring service URL for the fluency gate")
    p.add_argument("--drop-log", help="write dropped doc records as JSONL")
    p.add_argument("--balance", action="store_true", help="downsample direction groups to equal pair sizes")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("augment", help="expand a corpus with splits, packing, and sentence mixing")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config", help="JSON file with augmentation keys")
    p.add_argument("--mrd2d", help="comma-separated split factors, e.g. 1,2,4")
    p.add_argument("--capt-n", dest="capt_n", type=int, help="context window recorded for formatting")
    p.add_argument("--budget", type=int, help="token budget for document packing (0 disables)")
    p.add_argument("--sentence-mix", dest="sentence_mix", type=float, help="sentence-record share of output")
    p.add_argument("--sent-corpus", dest="sent_corpus", help="sentence-level corpus to mix in")
    p.add_argument("--mrd2d-domains", dest="mrd2d_domains", help="domains to split (default: all)")
    p.add_argument("--capt-domains", dest="capt_domains", help="domains to contextualize (default: all)")
    p.add_argument("--save-config", dest="save_config", help="write the effective augmentation config")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("format", help="render a corpus into loss-masked training records")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=("contextual", "doc2doc", "sentence"), default="contextual")
    p.add_argument("--config", help="JSON file with augmentation keys (capt_window, capt_domains)")
    p.add_argument("--capt-n", dest="capt_n", type=int)
    p.add_argument("--chunk-size", dest="chunk_size", type=int, default=1)
    p.add_argument("--train-config", dest="train_config", help="write fine-tuning hyperparameters as JSON")
    p.set_defaults(func=cmd_format)

    p = sub.add_parser("translate", help="translate documents through a chat-completion backend")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--mode", choices=_TRANSLATE_MODES, default="doc2doc")
    p.add_argument("--backend", default="mock:identity", help="mock:identity, mock:reverse_words, mock:table, or http")
    p.add_argument("--base-url", dest="base_url")
    p.add_argument("--model")
    p.add_argument("--table", help="JSON source-to-output mapping for mock:table")
    p.add_argument("--chunk-size", dest="chunk_size", type=int, default=1)
    p.add_argument("--chunk-unit", dest="chunk_unit", choices=("segments", "tokens"), default="segments")
    p.add_argument("--context-n", dest="context_n", type=int, default=3)
    p.add_argument("--context-budget", dest="context_budget", type=int, default=32768)
    p.add_argument("--top-p", dest="top_p", type=float, default=0.6)
    p.add_argument("--n", type=int, default=32, help="nucleus candidates per chunk in quality mode")
    p.add_argument("--qe-endpoint", help="scoring service URL used as the consensus utility")
    p.add_argument("--utility-context", dest="utility_context", action="store_true")
    p.add_argument("--ledger", help="run ledger path (default: OUTPUT + .ledger.jsonl)")
    p.add_argument("--timing", help="write per-doc wall time and throughput (non-deterministic)")
    p.add_argument("--mock-latency", dest="mock_latency", type=float, default=0.0)
    p.add_argument("--jobs", type=int, default=4, help="max concurrent backend requests")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_translate)

    p = sub.add_parser("evaluate", help="score translations against a reference corpus")
    p.add_argument("run", help="translations JSONL from the translate command")
    p.add_argument("reference", help="reference corpus JSONL")
    p.add_argument("--out", help="write the evaluation report as JSON")
    p.add_argument("--qe-endpoint", help="scoring service URL for learned metrics")
    p.add_argument("--stub-scorers", dest="stub_scorers", action="store_true",
                   help="use the in-process deterministic stub for learned metrics")
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 1
    try:
        return args.func(args)
    except (BackendError, ScorerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RecordError, ContextOverflowError, UnalignableDocumentError, DocmtError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
