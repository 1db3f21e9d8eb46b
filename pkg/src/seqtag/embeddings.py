"""Token embedding providers and their stacked concatenation.

Three provider kinds exist:

* :class:`StaticTable` -- a surface -> vector lookup read from a text file
  (word2vec/GloVe/fastText style), frozen unless marked trainable.
* :class:`PrecomputedContextual` -- vectors keyed by (sentence id, token
  index), produced offline by any contextual model.
* :class:`CharEncoder` -- a character-level BiLSTM whose final states are
  concatenated into a word vector.

Every provider exposes ``dim``, ``trainable``, ``params()``, and a
``forward(sentence) -> (matrix, cache)`` / ``backward(cache, grad)`` pair.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .corpus import Sentence
from .neural import LstmParams, Param, lstm_backward, lstm_forward

log = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MissingEmbeddingError(LookupError):
    def __init__(self, sentence_id: str, index: int, provider: str = ""):
        self.sentence_id = sentence_id
        self.index = index
        where = f" in provider {provider!r}" if provider else ""
        super().__init__(f"no precomputed vector for sentence {sentence_id!r} token {index}{where}")

    def __str__(self) -> str:
        return self.args[0]


class StaticTable:
    kind = "static"

    def __init__(
        self,
        vocab: dict[str, int],
        matrix,
        oov_vector=None,
        name: str = "static",
        trainable: bool = False,
    ):
        matrix = np.asarray(matrix.value if isinstance(matrix, Param) else matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[1] == 0:
            raise ValueError("static table needs a (|V|, d) matrix with d > 0")
        if len(vocab) != matrix.shape[0] or sorted(vocab.values()) != list(range(matrix.shape[0])):
            raise ValueError("vocabulary must map onto every matrix row exactly once")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("static table contains non-finite values")
        self.vocab = dict(vocab)
        self.matrix = Param(matrix)
        self.oov_vector = (
            np.zeros(matrix.shape[1]) if oov_vector is None else np.asarray(oov_vector, dtype=np.float64)
        )
        if self.oov_vector.shape != (matrix.shape[1],):
            raise ValueError("oov vector has the wrong width")
        self.name = name
        self.trainable = trainable
        self.diagnostics: list[str] = []

    @classmethod
    def random(cls, words: Iterable[str], dim: int, rng: np.random.Generator,
               name: str = "random", trainable: bool = True, scale: float = 1.0) -> "StaticTable":
        vocab: dict[str, int] = {}
        for w in words:
            vocab.setdefault(w, len(vocab))
        matrix = rng.normal(0.0, scale / np.sqrt(dim), size=(len(vocab), dim))
        return cls(vocab, matrix, name=name, trainable=trainable)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def __len__(self) -> int:
        return len(self.vocab)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, StaticTable)
            and self.vocab == other.vocab
            and np.array_equal(self.matrix.value, other.matrix.value)
            and np.array_equal(self.oov_vector, other.oov_vector)
        )

    def params(self) -> dict[str, Param]:
        return {"matrix": self.matrix} if self.trainable else {}

    def lookup(self, surface: str) -> np.ndarray:
        row = self.vocab.get(surface)
        return self.oov_vector if row is None else self.matrix.value[row]

    def forward(self, sentence: Sentence):
        rows = [self.vocab.get(s, -1) for s in sentence.surfaces]
        out = np.empty((len(rows), self.dim))
        for i, r in enumerate(rows):
            out[i] = self.oov_vector if r < 0 else self.matrix.value[r]
        return out, rows

    def backward(self, rows, grad: np.ndarray) -> None:
        if not self.trainable:
            return
        for r, g in zip(rows, grad):
            if r >= 0:
                self.matrix.grad[r] += g


def _is_header(fields: list[str]) -> bool:
    return len(fields) == 2 and all(f.isdigit() for f in fields)


def load_static_vectors(
    data: bytes | str,
    name: str = "static",
    oov: str = "zero",
    trainable: bool = False,
) -> StaticTable:
    """Parse ``<token> v1 ... vd`` lines, with an optional ``<count> <dim>`` header.

    Duplicate tokens keep their first row; each repeat is logged and recorded
    in ``table.diagnostics``.  ``oov`` is ``"zero"`` or ``"mean"``.
    """
    if oov not in ("zero", "mean"):
        raise ValueError(f"oov must be 'zero' or 'mean', got {oov!r}")
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    lines = text.splitlines()
    dim: int | None = None
    vocab: dict[str, int] = {}
    rows: list[list[float]] = []
    diagnostics: list[str] = []
    first = True
    for lineno, line in enumerate(lines, 1):
        fields = line.split()
        if not fields:
            continue
        if first:
            first = False
            if _is_header(fields):
                dim = int(fields[1])
                if dim <= 0:
                    raise EmbeddingFormatError("header dimension must be positive", lineno)
                continue
        token, values = fields[0], fields[1:]
        if dim is None:
            dim = len(values)
            if dim == 0:
                raise EmbeddingFormatError(f"no vector components for {token!r}", lineno)
        if len(values) != dim:
            raise EmbeddingFormatError(
                f"dimension mismatch: expected {dim} components, got {len(values)}", lineno
            )
        try:
            vec = [float(v) for v in values]
        except ValueError:
            raise EmbeddingFormatError(f"non-numeric component in row for {token!r}", lineno) from None
        if token in vocab:
            msg = f"line {lineno}: duplicate token {token!r} ignored"
            diagnostics.append(msg)
            log.warning(msg)
            continue
        vocab[token] = len(rows)
        rows.append(vec)
    if not rows:
        raise EmbeddingFormatError("empty vector file")
    matrix = np.array(rows, dtype=np.float64)
    oov_vector = matrix.mean(axis=0) if oov == "mean" else None
    table = StaticTable(vocab, matrix, oov_vector, name=name, trainable=trainable)
    table.diagnostics = diagnostics
    return table


def dump_static_vectors(table: StaticTable, header: bool = True) -> bytes:
    out = []
    if header:
        out.append(f"{len(table)} {table.dim}\n")
    words = sorted(table.vocab, key=table.vocab.get)
    for w in words:
        row = table.matrix.value[table.vocab[w]]
        out.append(w + " " + " ".join(repr(float(v)) for v in row) + "\n")
    return "".join(out).encode("utf-8")


class PrecomputedContextual:
    """Per-token vectors computed offline and keyed by (sentence id, token index)."""

    kind = "precomputed"
    trainable = False

    def __init__(self, store: dict[tuple[str, int], np.ndarray], dim: int, name: str = "precomputed"):
        if dim <= 0:
            raise ValueError("dim must be positive")
        for key, vec in store.items():
            if np.shape(vec) != (dim,):
                raise ValueError(f"vector for {key} has shape {np.shape(vec)}, expected ({dim},)")
        self.store = {k: np.asarray(v, dtype=np.float64) for k, v in store.items()}
        self.dim = dim
        self.name = name

    def params(self) -> dict[str, Param]:
        return {}

    def forward(self, sentence: Sentence):
        out = np.empty((len(sentence), self.dim))
        for i in range(len(sentence)):
            try:
                out[i] = self.store[(sentence.id, i)]
            except KeyError:
                raise MissingEmbeddingError(sentence.id, i, self.name) from None
        return out, None

    def backward(self, cache, grad) -> None:
        pass


def load_precomputed(data: bytes | str, name: str = "precomputed") -> PrecomputedContextual:
    """Read ``#dim=<d>`` then ``<sentence-id>\\t<token-index>\\t v1 ... vd`` records."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    dim = None
    store: dict[tuple[str, int], np.ndarray] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#dim="):
                try:
                    dim = int(line[5:].strip())
                except ValueError:
                    raise EmbeddingFormatError("bad #dim header", lineno) from None
            continue
        if dim is None:
            raise EmbeddingFormatError("missing #dim=<d> header", lineno)
        parts = line.split("\t", 2)
        if len(parts) != 3:
            raise EmbeddingFormatError("expected <sentence-id>\\t<token-index>\\t<values>", lineno)
        sid, idx, values = parts
        try:
            key = (sid, int(idx))
            vec = np.array([float(v) for v in values.split()])
        except ValueError:
            raise EmbeddingFormatError("non-numeric token index or component", lineno) from None
        if vec.shape != (dim,):
            raise EmbeddingFormatError(f"dimension mismatch: expected {dim}, got {vec.size}", lineno)
        if key in store:
            raise EmbeddingFormatError(f"duplicate key {key}", lineno)
        store[key] = vec
    if dim is None:
        raise EmbeddingFormatError("empty precomputed file")
    return PrecomputedContextual(store, dim, name)


def dump_precomputed(provider: PrecomputedContextual) -> bytes:
    out = [f"#dim={provider.dim}\n"]
    for (sid, idx), vec in provider.store.items():
        out.append(f"{sid}\t{idx}\t" + " ".join(repr(float(v)) for v in vec) + "\n")
    return "".join(out).encode("utf-8")


UNK_CHAR = 0


class CharEncoder:
    """Character BiLSTM.  Index 0 of the char table is the unknown-character slot."""

    kind = "char"

    def __init__(self, chars: dict[str, int], table, forward: LstmParams, backward: LstmParams,
                 name: str = "char", trainable: bool = True):
        self.chars = dict(chars)
        self.table = table if isinstance(table, Param) else Param(table)
        self.fwd = forward
        self.bwd = backward
        self.name = name
        self.trainable = trainable
        if self.table.shape[0] != len(self.chars) + 1:
            raise ValueError("char table needs one row per char plus the unknown slot")
        if forward.hidden != backward.hidden or forward.input_dim != self.table.shape[1]:
            raise ValueError("char LSTM shapes do not match the char table")

    @classmethod
    def init(cls, alphabet: Iterable[str], rng: np.random.Generator, char_dim: int = 25,
             hidden: int = 25, name: str = "char", trainable: bool = True) -> "CharEncoder":
        chars: dict[str, int] = {}
        for ch in sorted(set(alphabet)):
            chars[ch] = len(chars) + 1
        table = rng.uniform(-0.1, 0.1, (len(chars) + 1, char_dim))
        return cls(chars, table, LstmParams.init(char_dim, hidden, rng),
                   LstmParams.init(char_dim, hidden, rng), name, trainable)

    @property
    def dim(self) -> int:
        return 2 * self.fwd.hidden

    def params(self) -> dict[str, Param]:
        if not self.trainable:
            return {}
        out = {"table": self.table}
        out.update({f"fwd.{k}": p for k, p in self.fwd.params().items()})
        out.update({f"bwd.{k}": p for k, p in self.bwd.params().items()})
        return out

    def char_ids(self, surface: str) -> list[int]:
        return [self.chars.get(ch, UNK_CHAR) for ch in surface]

    def _encode(self, surface: str):
        ids = self.char_ids(surface)
        xs = self.table.value[ids]
        hf, cf = lstm_forward(self.fwd, xs)
        hb, cb = lstm_forward(self.bwd, xs[::-1])
        return np.concatenate([hf[-1], hb[-1]]), (ids, cf, cb)

    def encode(self, surface: str) -> np.ndarray:
        return self._encode(surface)[0]

    def forward(self, sentence: Sentence):
        outs, caches = [], []
        for s in sentence.surfaces:
            v, c = self._encode(s)
            outs.append(v)
            caches.append(c)
        return np.array(outs), caches

    def backward(self, caches, grad: np.ndarray) -> None:
        if not self.trainable:
            return
        h = self.fwd.hidden
        for (ids, cf, cb), g in zip(caches, grad):
            m = len(ids)
            dh = np.zeros((m, h))
            dh[-1] = g[:h]
            dxf = lstm_backward(self.fwd, cf, dh)
            dh = np.zeros((m, h))
            dh[-1] = g[h:]
            dxb = lstm_backward(self.bwd, cb, dh)
            np.add.at(self.table.grad, ids, dxf + dxb[::-1])


def char_encode(params: CharEncoder, surface: str) -> np.ndarray:
    if not surface:
        raise ValueError("cannot encode an empty surface")
    return params.encode(surface)


Provider = StaticTable | PrecomputedContextual | CharEncoder


class EmbeddingStack:
    """Ordered providers whose per-token vectors are concatenated."""

    def __init__(self, providers: Sequence[Provider]):
        if not providers:
            raise ValueError("an embedding stack needs at least one provider")
        self.providers = list(providers)
        names = [p.name for p in self.providers]
        if len(set(names)) != len(names):
            raise ValueError(f"provider names must be unique, got {names}")

    @property
    def total_dim(self) -> int:
        return sum(p.dim for p in self.providers)

    @property
    def dims(self) -> list[int]:
        return [p.dim for p in self.providers]

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.providers]

    def params(self) -> dict[str, Param]:
        out = {}
        for p in self.providers:
            for k, v in p.params().items():
                out[f"{p.name}.{k}"] = v
        return out

    def forward(self, sentence: Sentence):
        blocks, caches = [], []
        for p in self.providers:
            b, c = p.forward(sentence)
            blocks.append(b)
            caches.append(c)
        return np.concatenate(blocks, axis=1), caches

    def backward(self, caches, grad: np.ndarray) -> None:
        off = 0
        for p, c in zip(self.providers, caches):
            p.backward(c, grad[:, off:off + p.dim])
            off += p.dim


def embed_sentence(stack: EmbeddingStack, sentence: Sentence) -> np.ndarray:
    return stack.forward(sentence)[0]


def word_dropout_mask(n: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean keep-mask over ``n`` tokens."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"dropout probability must be in [0, 1], got {p}")
    return rng.random(n) >= p


def word_dropout(vectors, p: float, rng: np.random.Generator) -> np.ndarray:
    """Zero each token's whole vector with probability ``p``; no rescaling."""
    vectors = np.asarray(vectors, dtype=np.float64)
    keep = word_dropout_mask(vectors.shape[0], p, rng)
    return vectors * keep[:, None]


@dataclass(frozen=True)
class ProviderSummary:
    name: str
    kind: str
    dim: int
    trainable: bool
    size: int


def describe_stack(stack: EmbeddingStack) -> list[ProviderSummary]:
    out = []
    for p in stack.providers:
        if isinstance(p, StaticTable):
            size = len(p)
        elif isinstance(p, PrecomputedContextual):
            size = len(p.store)
        else:
            size = len(p.chars)
        out.append(ProviderSummary(p.name, p.kind, p.dim, p.trainable, size))
    return out
