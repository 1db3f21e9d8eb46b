"""``seqtag`` command-line entry point.

Every run echoes its resolved settings to stderr as ``# key = value`` lines.
Failures print one line, ``seqtag: error: kind=<kind> exit=<code>: <message>``,
to stderr and exit with the code for that kind.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import DuplicateSentenceError, annotate_raw, bootstrap_cycle, merge_corrected, raw_sentences
from .checkpoint import CheckpointError, load_model, save_model
from .corpus import (
    CorpusError,
    TaggedCorpus,
    builtin_bis_tagset,
    corpus_stats,
    load_tagset_file,
    parse_column_file,
    split_corpus,
    write_column_file,
)
from .embeddings import (
    CharEncoder,
    EmbeddingFormatError,
    EmbeddingStack,
    MissingEmbeddingError,
    StaticTable,
    describe_stack,
    load_precomputed,
    load_static_vectors,
)
from .evaluation import StructureMismatchError, evaluate
from .model import build_model
from .training import ConfigError, TrainingConfig, TrainingError, format_config, parse_config_text, train

log = logging.getLogger("seqtag")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING_FILE = 3
EXIT_FORMAT = 4
EXIT_CHECKPOINT = 5
EXIT_TRAINING = 6
EXIT_CONFIG = 7
EXIT_MISMATCH = 8
EXIT_INTERNAL = 1

_ERROR_KINDS = [
    # most specific first
    (DuplicateSentenceError, "duplicate-sentence", EXIT_FORMAT),
    (CorpusError, "format", EXIT_FORMAT),
    (EmbeddingFormatError, "embedding-format", EXIT_FORMAT),
    (MissingEmbeddingError, "missing-embedding", EXIT_FORMAT),
    (CheckpointError, "checkpoint", EXIT_CHECKPOINT),
    (ConfigError, "config", EXIT_CONFIG),
    (TrainingError, "training", EXIT_TRAINING),
    (StructureMismatchError, "structure-mismatch", EXIT_MISMATCH),
    (FileNotFoundError, "missing-file", EXIT_MISSING_FILE),
    (IsADirectoryError, "missing-file", EXIT_MISSING_FILE),
    (PermissionError, "missing-file", EXIT_MISSING_FILE),
]


class UsageError(Exception):
    pass


class HelpFormatter(argparse.HelpFormatter):
    """Every flag's help ends with its default (or says it is required)."""

    def _get_help_string(self, action):
        text = action.help or ""
        if not action.option_strings or "default" in text or action.default is argparse.SUPPRESS:
            return text
        if action.required:
            return f"{text} (required)"
        d = action.default
        if d is None or d == []:
            return f"{text} (default: none)"
        if d is False:
            return f"{text} (default: off)"
        return f"{text} (default: %(default)s)"


class Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("formatter_class", HelpFormatter)
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(message)


_CONFIG_HELP = {
    "hidden_size": "LSTM hidden size per direction",
    "hidden_layers": "number of BiLSTM layers",
    "word_dropout": "probability of zeroing a whole word vector",
    "learning_rate": "initial SGD learning rate",
    "max_epochs": "maximum training epochs",
    "sequence_length": "training-time chunk length for long sentences",
    "mini_batch_size": "sentences per mini-batch",
    "anneal_factor": "LR multiplier after `patience` epochs without dev gain",
    "patience": "epochs without dev improvement before annealing",
    "min_learning_rate": "stop once the LR would fall below this",
    "seed": "random seed (falls back to $SEQTAG_SEED)",
    "clip_norm": "global gradient-norm clip",
    "tagger": "bilstm-crf or crf (no encoder)",
    "batch_reduction": "sum or mean of sentence losses per batch",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="flat key = value config file")
    defaults = TrainingConfig()
    for f in dataclasses.fields(TrainingConfig):
        default = getattr(defaults, f.name)
        typ = {"int": int, "float": float}.get(str(f.type), str)
        p.add_argument(
            "--" + f.name.replace("_", "-"), dest=f.name, type=typ, default=None,
            help=f"{_CONFIG_HELP.get(f.name, f.name)} (default: {default})",
        )


def _add_embedding_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--static", action="append", default=[], metavar="FILE",
                   help="static vector text file; repeatable")
    p.add_argument("--trainable-static", action="store_true",
                   help="fine-tune static tables")
    p.add_argument("--oov", choices=("zero", "mean"), default="zero",
                   help="vector for unknown words in static tables (default: zero)")
    p.add_argument("--precomputed", action="append", default=[], metavar="FILE",
                   help="precomputed contextual vectors; repeatable")
    p.add_argument("--char", action="store_true", help="add a character BiLSTM encoder")
    p.add_argument("--char-dim", type=int, default=25, help="char embedding size (default: 25)")
    p.add_argument("--char-hidden", type=int, default=25, help="char LSTM hidden size (default: 25)")
    p.add_argument("--random-embeddings", type=int, default=0, metavar="DIM",
                   help="add a trainable randomly initialized word table of this size (default: 0, off)")


def build_parser() -> Parser:
    parser = Parser(prog="seqtag", description="BiLSTM-CRF POS tagging toolkit")
    parser.add_argument("--version", action="version", version=f"seqtag {__version__}")
    parser.add_argument("--log-level", default="WARNING", help="logging level (default: WARNING)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    p = sub.add_parser("train", help="train a tagger")
    p.add_argument("--train", dest="train_file", metavar="FILE", help="training column file")
    p.add_argument("--dev", metavar="FILE", help="dev column file for model selection")
    p.add_argument("--out", metavar="FILE", help="checkpoint path")
    p.add_argument("--curve", metavar="FILE", help="learning-curve TSV (default: <out>.curve.tsv)")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")
    p.add_argument("--dry-run", action="store_true", help="resolve and echo the config, then exit")
    _add_config_flags(p)
    _add_embedding_flags(p)

    p = sub.add_parser("tag", help="tag raw or column input")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="output column file (default: stdout)")
    p.add_argument("--format", choices=("column", "raw"), default="column",
                   help="input format (default: column)")
    p.add_argument("--with-ids", action="store_true", help="write # sent_id lines")
    p.add_argument("--threads", type=int, default=1, help="tagging threads (default: 1)")

    p = sub.add_parser("eval", help="score predictions against gold")
    p.add_argument("--gold", required=True, metavar="FILE")
    p.add_argument("--pred", required=True, metavar="FILE")
    p.add_argument("--top-confusions", type=int, default=10, help="confusion pairs to list (default: 10)")
    p.add_argument("--include-zero-support", action="store_true",
                   help="count unseen tags as F1 0 in the macro mean")
    p.add_argument("--json", metavar="FILE", help="also write a JSON report")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--lenient", action="store_true", help="keep unknown tags as diagnostics (default: strict)")
    p.add_argument("--vocab", metavar="FILE", help="static vector file; list corpus words missing from it")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")

    p = sub.add_parser("split", help="seeded train/dev/test split")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--ratios", default="0.8,0.1,0.1", help="comma-separated ratios (default: 0.8,0.1,0.1)")
    p.add_argument("--seed", type=int, default=None, help="split seed (default: $SEQTAG_SEED or 0)")
    p.add_argument("--out-prefix", metavar="PREFIX", help="output prefix (default: input path without suffix)")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")

    p = sub.add_parser("convert", help="rewrite a column file in canonical form")
    p.add_argument("--in", dest="input", required=True, metavar="FILE")
    p.add_argument("--out", metavar="FILE", help="output file (default: stdout)")
    p.add_argument("--lenient", action="store_true", help="keep unknown tags as diagnostics (default: strict)")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")

    p = sub.add_parser("inspect-embeddings", help="describe an embedding stack")
    p.add_argument("--model", metavar="FILE", help="inspect the stack inside a checkpoint")
    p.add_argument("--corpus", metavar="FILE", help="report coverage of this column file")
    p.add_argument("--seed", type=int, default=0, help="seed for generated providers (default: 0)")
    _add_embedding_flags(p)

    boot = sub.add_parser("bootstrap", help="auto-annotation workflow")
    bsub = boot.add_subparsers(dest="bootstrap_command", required=True, parser_class=Parser)

    p = bsub.add_parser("annotate", help="tag raw text into a review file")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--in", dest="input", required=True, metavar="FILE", help="one tokenized sentence per line")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--timestamp", default=None,
                   help="provenance timestamp (default: $SOURCE_DATE_EPOCH if set, else now)")
    p.add_argument("--threads", type=int, default=1, help="tagging threads (default: 1)")

    p = bsub.add_parser("merge", help="merge corrected review files into a corpus")
    p.add_argument("--base", required=True, metavar="FILE")
    p.add_argument("--corrected", required=True, nargs="+", metavar="FILE")
    p.add_argument("--out", required=True, metavar="FILE")
    p.add_argument("--tagset", metavar="FILE", help="tagset file (default: built-in BIS tagset)")

    p = bsub.add_parser("cycle", help="evaluate, retrain on merged data, re-evaluate")
    p.add_argument("--model", required=True, metavar="FILE")
    p.add_argument("--base", required=True, metavar="FILE")
    p.add_argument("--corrected", required=True, nargs="+", metavar="FILE")
    p.add_argument("--dev", required=True, metavar="FILE")
    p.add_argument("--eval", dest="eval_file", required=True, metavar="FILE", help="fixed held-out set")
    p.add_argument("--out", required=True, metavar="FILE", help="new checkpoint")
    p.add_argument("--raw", metavar="FILE", help="raw text to annotate alongside")
    p.add_argument("--report", metavar="FILE", help="JSON with before/after reports")
    _add_config_flags(p)
    return parser


# ---- helpers

def _read(path: str) -> bytes:
    return Path(path).read_bytes()


def _write(path: str | None, data: bytes) -> None:
    if path is None:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(path).write_bytes(data)


def _tagset(args):
    path = getattr(args, "tagset", None)
    return load_tagset_file(_read(path).decode("utf-8")) if path else builtin_bis_tagset()


def _load_corpus(path: str, tagset, mode: str = "strict") -> TaggedCorpus:
    corpus = parse_column_file(_read(path), tagset, mode, name=Path(path).name)
    for d in corpus.diagnostics:
        log.warning("%s:%d: %s", path, d.line, d.message)
    return corpus


def _echo(settings: dict) -> None:
    for k, v in settings.items():
        print(f"# {k} = {v}", file=sys.stderr)


def _env_seed() -> int | None:
    raw = os.environ.get("SEQTAG_SEED")
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"SEQTAG_SEED must be an integer, got {raw!r}") from None


def resolve_config(args) -> TrainingConfig:
    """defaults < $SEQTAG_SEED < config file < flags."""
    values: dict = {}
    seed = _env_seed()
    if seed is not None:
        values["seed"] = seed
    if args.config:
        values.update(parse_config_text(_read(args.config).decode("utf-8")))
    for f in dataclasses.fields(TrainingConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    return TrainingConfig.from_dict(values)


def build_stack(args, corpora, seed: int) -> EmbeddingStack:
    rng = np.random.default_rng(seed)
    providers = []
    for path in args.static:
        providers.append(load_static_vectors(_read(path), name=Path(path).stem, oov=args.oov,
                                             trainable=args.trainable_static))
    for path in args.precomputed:
        providers.append(load_precomputed(_read(path), name=Path(path).stem))
    words: dict[str, None] = {}
    for c in corpora:
        for s in c.sentences:
            for w in s.surfaces:
                words.setdefault(w, None)
    if args.char:
        alphabet = {ch for w in words for ch in w}
        providers.append(CharEncoder.init(alphabet, rng, args.char_dim, args.char_hidden))
    if args.random_embeddings:
        providers.append(StaticTable.random(words, args.random_embeddings, rng, name="words"))
    if not providers:
        raise ConfigError("no embeddings: give --static, --precomputed, --char or --random-embeddings")
    return EmbeddingStack(providers)


# ---- subcommands

def cmd_train(args) -> int:
    config = resolve_config(args)
    _echo(config.to_dict())
    if args.dry_run:
        sys.stdout.write(format_config(config))
        return EXIT_OK
    for flag in ("train_file", "dev", "out"):
        if not getattr(args, flag):
            raise UsageError(f"train needs --{flag.replace('_file', '')}")
    tagset = _tagset(args)
    train_corpus = _load_corpus(args.train_file, tagset)
    dev_corpus = _load_corpus(args.dev, tagset)
    stack = build_stack(args, [train_corpus, dev_corpus], config.seed)
    model = build_model(stack, tagset, config.to_dict())
    best, curve = train(model, train_corpus, dev_corpus, config,
                        on_epoch=lambda r: log.info("epoch %d dev %.4f", r.epoch, r.dev_score))
    save_model(best, args.out)
    curve_path = args.curve or f"{args.out}.curve.tsv"
    Path(curve_path).write_text(curve.to_tsv(), encoding="utf-8")
    print(f"best dev micro F1 {100 * best.dev_score:.2f}% after {len(curve)} epochs")
    print(f"checkpoint {args.out}")
    print(f"learning curve {curve_path}")
    return EXIT_OK


def cmd_tag(args) -> int:
    _echo({"model": args.model, "input": args.input, "format": args.format, "threads": args.threads})
    model = load_model(args.model)
    name = Path(args.input).name
    if args.format == "raw":
        sents, _ = raw_sentences(_read(args.input).decode("utf-8"), name)
    else:
        sents = list(_load_corpus(args.input, model.tagset, "lenient").sentences)
    if args.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(args.threads) as pool:
            paths = list(pool.map(model.tag, sents))
    else:
        paths = [model.tag(s) for s in sents]
    out = TaggedCorpus(tuple(s.with_tags(p) for s, p in zip(sents, paths)), model.tagset)
    _write(args.out, write_column_file(out, with_ids=args.with_ids))
    return EXIT_OK


def cmd_eval(args) -> int:
    _echo({"gold": args.gold, "pred": args.pred, "top_confusions": args.top_confusions,
           "include_zero_support": args.include_zero_support})
    tagset = _tagset(args)
    gold = _load_corpus(args.gold, tagset)
    pred = _load_corpus(args.pred, tagset, "lenient")
    report = evaluate(gold, pred, args.include_zero_support, args.top_confusions)
    sys.stdout.write(report.to_text())
    if args.json:
        Path(args.json).write_text(report.to_json(), encoding="utf-8")
    return EXIT_OK


def cmd_stats(args) -> int:
    _echo({"input": args.input, "lenient": args.lenient, "vocab": args.vocab})
    corpus = _load_corpus(args.input, _tagset(args), "lenient" if args.lenient else "strict")
    vocab = load_static_vectors(_read(args.vocab)).vocab if args.vocab else None
    st = corpus_stats(corpus, vocab)
    print(f"sentences\t{st.sentence_count}")
    print(f"tokens\t{st.token_count}")
    print(f"untagged\t{st.untagged_count}")
    for code, n in st.tag_histogram.items():
        print(f"tag\t{code}\t{n}")
    if vocab is not None:
        print(f"oov_types\t{len(st.oov_candidates)}")
        for w in st.oov_candidates:
            print(f"oov\t{w}")
    return EXIT_OK


def cmd_split(args) -> int:
    try:
        ratios = [float(r) for r in args.ratios.split(",")]
    except ValueError:
        raise UsageError(f"bad --ratios {args.ratios!r}") from None
    seed = args.seed if args.seed is not None else (_env_seed() or 0)
    prefix = args.out_prefix or str(Path(args.input).with_suffix(""))
    _echo({"input": args.input, "ratios": args.ratios, "seed": seed, "out_prefix": prefix})
    corpus = _load_corpus(args.input, _tagset(args))
    try:
        parts = split_corpus(corpus, ratios, seed)
    except ValueError as exc:
        raise CorpusError(str(exc)) from None
    names = ("train", "dev", "test") if len(parts) == 3 else [f"part{i + 1}" for i in range(len(parts))]
    for name, part in zip(names, parts):
        path = f"{prefix}.{name}.col"
        Path(path).write_bytes(write_column_file(part))
        print(f"{path}\t{len(part.sentences)} sentences\t{part.token_count} tokens")
    return EXIT_OK


def cmd_convert(args) -> int:
    _echo({"input": args.input, "out": args.out or "-", "lenient": args.lenient})
    corpus = _load_corpus(args.input, _tagset(args), "lenient" if args.lenient else "strict")
    _write(args.out, write_column_file(corpus))
    return EXIT_OK


def cmd_inspect(args) -> int:
    _echo({"model": args.model, "corpus": args.corpus})
    corpus = None
    if args.model:
        model = load_model(args.model)
        stack = model.stack
        tagset = model.tagset
    else:
        tagset = builtin_bis_tagset()
        if args.corpus:
            corpus = _load_corpus(args.corpus, tagset, "lenient")
        stack = build_stack(args, [corpus] if corpus else [], args.seed)
    print("name\tkind\tdim\ttrainable\tentries")
    for s in describe_stack(stack):
        print(f"{s.name}\t{s.kind}\t{s.dim}\t{s.trainable}\t{s.size}")
    print(f"total_dim\t{stack.total_dim}")
    if args.corpus:
        corpus = corpus or _load_corpus(args.corpus, tagset, "lenient")
        for p in stack.providers:
            if isinstance(p, StaticTable):
                tokens = [w for s in corpus.sentences for w in s.surfaces]
                miss = sum(1 for w in tokens if w not in p.vocab)
                print(f"oov_rate\t{p.name}\t{miss / max(len(tokens), 1):.4f}")
    return EXIT_OK


def _timestamp(arg: str | None) -> str:
    if arg:
        return arg
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.strftime("%Y-%m-%dT%H:%M:%SZ")


def cmd_bootstrap(args) -> int:
    if args.bootstrap_command == "annotate":
        ts = _timestamp(args.timestamp)
        _echo({"model": args.model, "input": args.input, "out": args.out, "timestamp": ts})
        model = load_model(args.model)
        review = annotate_raw(model, _read(args.input).decode("utf-8"), Path(args.input).name, ts, args.threads)
        for line in review.skipped_lines:
            print(f"{args.input}:{line}: empty line skipped", file=sys.stderr)
        Path(args.out).write_bytes(review.to_bytes())
        print(f"{args.out}\t{len(review.corpus.sentences)} sentences\t{review.corpus.token_count} tokens")
        return EXIT_OK

    if args.bootstrap_command == "merge":
        _echo({"base": args.base, "corrected": " ".join(args.corrected), "out": args.out})
        tagset = _tagset(args)
        base = _load_corpus(args.base, tagset)
        merged = merge_corrected(base, [_load_corpus(p, tagset) for p in args.corrected])
        Path(args.out).write_bytes(write_column_file(merged, with_ids=True))
        print(f"{args.out}\t{len(merged.sentences)} sentences\t{merged.token_count} tokens")
        return EXIT_OK

    config = resolve_config(args)
    _echo(config.to_dict())
    model = load_model(args.model)
    tagset = model.tagset
    result = bootstrap_cycle(
        model,
        _read(args.raw).decode("utf-8") if args.raw else None,
        [_load_corpus(p, tagset) for p in args.corrected],
        config,
        base=_load_corpus(args.base, tagset),
        dev=_load_corpus(args.dev, tagset),
        held_out=_load_corpus(args.eval_file, tagset),
        source=Path(args.raw).name if args.raw else "raw.txt",
    )
    save_model(result.model, args.out)
    sys.stdout.write(result.summary())
    if args.report:
        import json
        doc = {"before": result.before.to_dict(), "after": result.after.to_dict(),
               "held_out_sha256": result.eval_digest,
               "merged_tokens": result.merged.token_count}
        Path(args.report).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "tag": cmd_tag,
    "eval": cmd_eval,
    "stats": cmd_stats,
    "split": cmd_split,
    "convert": cmd_convert,
    "inspect-embeddings": cmd_inspect,
    "bootstrap": cmd_bootstrap,
}


def _fail(kind: str, code: int, message: str) -> int:
    message = " ".join(str(message).split())
    print(f"seqtag: error: kind={kind} exit={code}: {message}", file=sys.stderr)
    return code


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, str(exc))
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    started = time.perf_counter()
    try:
        code = COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, str(exc))
    except Exception as exc:
        for cls, kind, code in _ERROR_KINDS:
            if isinstance(exc, cls):
                msg = exc.strerror + f": {exc.filename}" if isinstance(exc, OSError) and exc.filename else str(exc)
                return _fail(kind, code, msg)
        log.debug("unexpected failure", exc_info=True)
        return _fail("internal", EXIT_INTERNAL, f"{type(exc).__name__}: {exc}")
    log.info("%s finished in %.1fs", args.command, time.perf_counter() - started)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
