"""Training loop: shuffled mini-batches, dev-score annealing, best-model selection."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .corpus import Sentence, TaggedCorpus
from .evaluation import evaluate
from .model import SequenceModel, clone_model
from .neural import NonFiniteGradientError, sgd_step

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class TrainingConfig:
    """Hyperparameters.  Defaults are the published setup where one exists."""

    hidden_size: int = 512
    hidden_layers: int = 2
    word_dropout: float = 0.05
    learning_rate: float = 0.01
    max_epochs: int = 100
    sequence_length: int = 128
    mini_batch_size: int = 16
    anneal_factor: float = 0.5
    patience: int = 3
    min_learning_rate: float = 1e-4
    seed: int = 0
    clip_norm: float = 50.0
    tagger: str = "bilstm-crf"
    batch_reduction: str = "sum"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("hidden_size", "hidden_layers", "max_epochs", "sequence_length",
                     "mini_batch_size", "patience"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        for name in ("learning_rate", "min_learning_rate", "clip_norm"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.anneal_factor < 1:
            raise ConfigError("anneal_factor must be in (0, 1)")
        if not 0 <= self.word_dropout <= 1:
            raise ConfigError("word_dropout must be in [0, 1]")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.batch_reduction not in ("mean", "sum"):
            raise ConfigError("batch_reduction must be 'mean' or 'sum'")
        if self.tagger not in ("bilstm-crf", "crf"):
            raise ConfigError(f"tagger must be 'bilstm-crf' or 'crf', got {self.tagger!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainingConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(d) - set(fields)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**{k: _coerce(fields[k].type, k, v) for k, v in d.items()})


def _coerce(typ, key, value):
    if not isinstance(value, str):
        return value
    try:
        if typ in (int, "int"):
            return int(value)
        if typ in (float, "float"):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    return value


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def format_config(config: TrainingConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.to_dict().items())


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    dev_score: float
    learning_rate: float


@dataclass
class LearningCurve:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch != self.records[-1].epoch + 1:
            raise ValueError("epochs must be recorded in order")
        self.records.append(rec)

    @property
    def best(self) -> EpochRecord:
        # earliest epoch wins ties
        return max(self.records, key=lambda r: (r.dev_score, -r.epoch))

    def to_tsv(self) -> str:
        lines = ["epoch\ttrain_loss\tdev_score\tlearning_rate"]
        for r in self.records:
            lines.append(f"{r.epoch}\t{r.train_loss:.6f}\t{r.dev_score:.6f}\t{r.learning_rate:g}")
        return "\n".join(lines) + "\n"


class Decision(str, Enum):
    CONTINUE = "continue"
    ANNEAL = "anneal"
    STOP = "stop"


def anneal_and_stop_check(curve: LearningCurve, config: TrainingConfig) -> Decision:
    """Decide what follows the last recorded epoch.

    Epochs without a new best dev score are counted since the later of the
    best epoch and the last anneal.  Reaching ``patience`` of them anneals;
    an anneal that would drop the LR below the floor stops instead.
    """
    if not curve.records:
        raise ValueError("empty learning curve")
    last = curve.records[-1]
    lr = last.learning_rate
    if lr < config.min_learning_rate or len(curve) >= config.max_epochs:
        return Decision.STOP
    best_epoch = curve.best.epoch
    # the epoch before the first one run at the current LR is the last anneal point
    anneal_epoch = curve.records[0].epoch - 1
    for r in reversed(curve.records):
        if r.learning_rate != lr:
            anneal_epoch = r.epoch
            break
    stale = last.epoch - max(best_epoch, anneal_epoch)
    if stale >= config.patience:
        if lr * config.anneal_factor < config.min_learning_rate:
            return Decision.STOP
        return Decision.ANNEAL
    return Decision.CONTINUE


def training_units(sentences: Sequence[Sentence], max_len: int) -> list[tuple[Sentence, tuple[int, int] | None]]:
    """Sentences longer than ``max_len`` become consecutive chunks."""
    units = []
    for s in sentences:
        if len(s) <= max_len:
            units.append((s, None))
        else:
            for lo in range(0, len(s), max_len):
                units.append((s, (lo, min(lo + max_len, len(s)))))
    return units


def tag_sentence(model: SequenceModel, sentence: Sentence) -> list[int]:
    return model.tag(sentence)


def tag_corpus(model: SequenceModel, corpus: TaggedCorpus) -> TaggedCorpus:
    return TaggedCorpus(tuple(s.with_tags(model.tag(s)) for s in corpus.sentences), corpus.tagset)


def dev_score(model: SequenceModel, dev: TaggedCorpus) -> float:
    return evaluate(dev, tag_corpus(model, dev), top_k=0).micro_f1


def train(
    model: SequenceModel,
    train_corpus: TaggedCorpus,
    dev_corpus: TaggedCorpus,
    config: TrainingConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[SequenceModel, LearningCurve]:
    """Train a copy of ``model``; return the best-on-dev copy and the curve.

    Each epoch shuffles with a generator seeded by ``(seed, epoch)``.  A
    batch's loss is the sum (or, with ``batch_reduction="mean"``, the mean)
    of its sentences' CRF losses.
    """
    if not train_corpus.sentences:
        raise TrainingError("empty training corpus")
    if not dev_corpus.sentences:
        raise TrainingError("empty dev corpus")
    for corpus in (train_corpus, dev_corpus):
        if corpus.tagset != model.tagset:
            raise TrainingError("corpus tagset differs from the model's")
        for s in corpus.sentences:
            if not s.is_tagged:
                raise TrainingError(f"sentence {s.id!r} has untagged tokens")

    try:
        work = clone_model(model)
    except ValueError as exc:
        raise TrainingError(f"cannot train this model: {exc}") from exc
    work.config.update(config.to_dict())
    params = work.params()
    units = training_units(train_corpus.sentences, config.sequence_length)
    lr = config.learning_rate
    curve = LearningCurve()
    best_state = work.state()
    best_score = -math.inf

    for epoch in range(1, config.max_epochs + 1):
        rng = np.random.default_rng([config.seed, epoch])
        order = rng.permutation(len(units))
        total_loss = 0.0
        for b, start in enumerate(range(0, len(order), config.mini_batch_size), 1):
            batch = order[start:start + config.mini_batch_size]
            scale = 1.0 / len(batch) if config.batch_reduction == "mean" else 1.0
            batch_loss = 0.0
            try:
                for k in batch:
                    sent, span = units[k]
                    batch_loss += work.forward_loss(sent, rng=rng, span=span, scale=scale)
            except ValueError as exc:
                work.discard_pending()
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            if not math.isfinite(batch_loss):
                work.discard_pending()
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            work.backward()
            try:
                sgd_step(params, lr, config.clip_norm)
            except NonFiniteGradientError as exc:
                raise TrainingError(f"epoch {epoch}, batch {b}: {exc}") from exc
            total_loss += batch_loss
        score = dev_score(work, dev_corpus)
        rec = EpochRecord(epoch, total_loss / len(units), score, lr)
        curve.append(rec)
        log.info("epoch %d  loss %.4f  dev %.4f  lr %g", epoch, rec.train_loss, score, lr)
        if on_epoch is not None:
            on_epoch(rec)
        # ties go to the later epoch: same dev score, more training
        if score >= best_score:
            best_score = score
            best_state = work.state()
        decision = anneal_and_stop_check(curve, config)
        if decision is Decision.STOP:
            break
        if decision is Decision.ANNEAL:
            lr *= config.anneal_factor
            log.info("annealing learning rate to %g", lr)

    work.load_state(best_state)
    work.dev_score = best_score
    return work, curve
