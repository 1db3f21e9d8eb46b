"""Auto-annotate, hand-correct, merge, retrain.

A review file is an ordinary column file whose sentences are preceded by
provenance comments::

    # source = raw.txt
    # model = 3f9a0c12d4e1
    # timestamp = 2026-10-16T00:00:00Z
    # sent_id = raw.txt:3

Annotators fix tags in any editor; :func:`merge_corrected` strict-parses the
result and appends it to the base corpus.
"""

from __future__ import annotations

import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

from .corpus import (
    CorpusError,
    Sentence,
    TaggedCorpus,
    Token,
    corpus_stats,
    normalize_surface,
    parse_column_file,
    write_column_file,
)
from .evaluation import EvalReport, evaluate
from .model import SequenceModel
from .training import LearningCurve, TrainingConfig, tag_corpus, train

log = logging.getLogger(__name__)


class DuplicateSentenceError(CorpusError):
    def __init__(self, sentence_id: str):
        self.sentence_id = sentence_id
        super().__init__(f"duplicate sentence id {sentence_id!r}")


@dataclass
class ReviewFile:
    corpus: TaggedCorpus
    source: str
    model_id: str
    timestamp: str
    skipped_lines: list[int] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        header = [f"source = {self.source}", f"model = {self.model_id}"]
        if self.timestamp:
            header.append(f"timestamp = {self.timestamp}")
        comments = {s.id: header for s in self.corpus.sentences}
        return write_column_file(self.corpus, with_ids=True, comments=comments)


def raw_sentences(text: str, source: str) -> tuple[list[Sentence], list[int]]:
    """One whitespace-tokenized sentence per line; ids are ``<source>:<line>``."""
    sents, skipped = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        toks = line.split()
        if not toks:
            skipped.append(lineno)
            log.info("%s:%d: empty line skipped", source, lineno)
            continue
        sents.append(Sentence(tuple(Token(normalize_surface(t)) for t in toks), f"{source}:{lineno}"))
    return sents, skipped


def annotate_raw(
    model: SequenceModel,
    raw_text: str,
    source: str = "raw.txt",
    timestamp: str = "",
    threads: int = 1,
) -> ReviewFile:
    sents, skipped = raw_sentences(raw_text, source)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            paths = list(pool.map(model.tag, sents))
    else:
        paths = [model.tag(s) for s in sents]
    tagged = tuple(s.with_tags(p) for s, p in zip(sents, paths))
    return ReviewFile(TaggedCorpus(tagged, model.tagset), source, model.fingerprint(), timestamp, skipped)


def merge_corrected(
    base: TaggedCorpus,
    corrected: Sequence[TaggedCorpus | bytes | str],
) -> TaggedCorpus:
    """Append corrected corpora to ``base``; raw bytes are strict-parsed first.

    Sentence ids must be unique across all inputs.
    """
    parts = [base]
    for i, item in enumerate(corrected):
        if isinstance(item, TaggedCorpus):
            if item.tagset != base.tagset:
                raise CorpusError("corrected corpus uses a different tagset")
            parts.append(item)
        else:
            parts.append(parse_column_file(item, base.tagset, "strict", name=f"corrected{i + 1}"))
    seen: set[str] = set()
    sentences = []
    for part in parts:
        for s in part.sentences:
            if s.id in seen:
                raise DuplicateSentenceError(s.id)
            if part is not base and not s.is_tagged:
                raise CorpusError(f"corrected sentence {s.id!r} has untagged tokens")
            seen.add(s.id)
            sentences.append(s)
    return TaggedCorpus(tuple(sentences), base.tagset)


def corpus_digest(corpus: TaggedCorpus) -> str:
    return hashlib.sha256(write_column_file(corpus, with_ids=True)).hexdigest()


@dataclass
class CycleResult:
    model: SequenceModel
    before: EvalReport
    after: EvalReport
    merged: TaggedCorpus
    curve: LearningCurve
    eval_digest: str
    review: ReviewFile | None = None

    def summary(self) -> str:
        return (
            f"merged corpus: {len(self.merged.sentences)} sentences, {self.merged.token_count} tokens\n"
            f"held-out sha256: {self.eval_digest}\n"
            f"before: accuracy {100 * self.before.accuracy:.2f}%  micro F1 {100 * self.before.micro_f1:.2f}%\n"
            f"after:  accuracy {100 * self.after.accuracy:.2f}%  micro F1 {100 * self.after.micro_f1:.2f}%\n"
        )


def bootstrap_cycle(
    model: SequenceModel,
    raw_text: str | None,
    corrected: Sequence[TaggedCorpus | bytes | str],
    config: TrainingConfig,
    *,
    base: TaggedCorpus,
    dev: TaggedCorpus,
    held_out: TaggedCorpus,
    source: str = "raw.txt",
) -> CycleResult:
    """Score the incumbent, retrain it on base + corrections, score again.

    Both scores use the same held-out corpus; its digest is checked before
    and after.  When ``raw_text`` is given it is annotated too, so the
    review file can be returned alongside.
    """
    digest = corpus_digest(held_out)
    before = evaluate(held_out, tag_corpus(model, held_out))
    review = annotate_raw(model, raw_text, source) if raw_text is not None else None
    merged = merge_corrected(base, corrected)
    new_model, curve = train(model, merged, dev, config)
    after = evaluate(held_out, tag_corpus(new_model, held_out))
    if corpus_digest(held_out) != digest:
        raise RuntimeError("held-out corpus changed during the bootstrap cycle")
    hist = corpus_stats(merged).tag_histogram
    log.info("merged %d tokens over %d tags", sum(hist.values()), len(hist))
    return CycleResult(new_model, before, after, merged, curve, digest, review)
