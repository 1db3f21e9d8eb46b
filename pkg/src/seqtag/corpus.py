"""Column-format tagged corpora and the BIS tagset.

A column file holds one token per line (``<surface>\\t<tag>``), with a blank
line ending each sentence.  Lines starting with ``#`` are comments; a
``# sent_id = <id>`` comment names the sentence that follows it.
"""

from __future__ import annotations

import random
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class CorpusError(ValueError):
    """Raised for malformed column input.  Carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownTagError(CorpusError):
    def __init__(self, code: str, line: int | None = None):
        self.code = code
        super().__init__(f"unknown tag {code!r}", line)


CATEGORIES = (
    "Noun",
    "Pronoun",
    "Demonstrative",
    "Verb",
    "Adjective",
    "Adverb",
    "Post Position",
    "Conjunction",
    "Particles",
    "Quantifiers",
    "Residuals",
)

# (category, type, code) in table order
_BIS_ROWS = (
    ("Noun", "Proper Noun", "N_NNP"),
    ("Noun", "Common Noun", "N_CNN"),
    ("Noun", "Verbal Noun", "N_VNN"),
    ("Noun", "Abstract Noun", "N_ANN"),
    ("Noun", "Material Noun", "N_MNN"),
    ("Noun", "Noun (Location)", "N_NST"),
    ("Noun", "Noun (unclassified)", "N_NN"),
    ("Pronoun", "Personal", "PR_PRP"),
    ("Pronoun", "Reflexive", "PR_PRF"),
    ("Pronoun", "Reciprocal", "PR_PRC"),
    ("Pronoun", "Relative", "PR_PRL"),
    ("Pronoun", "Wh-words", "PR_PRQ"),
    ("Pronoun", "Indefinite", "PR_PRI"),
    ("Demonstrative", "Deictic", "DM_DMD"),
    ("Demonstrative", "Relative", "DM_DMR"),
    ("Demonstrative", "Wh-words", "DM_DMQ"),
    ("Demonstrative", "Indefinite", "DM_DMI"),
    ("Verb", "Auxiliary Verb", "V_VAUX"),
    ("Verb", "Main Verb", "V_VM"),
    ("Verb", "Transitive", "V_VBT"),
    ("Verb", "In-transitive", "V_VBI"),
    ("Adjective", "Proper Adjective", "J_PJJ"),
    ("Adjective", "Verbal Adjective", "J_VJJ"),
    ("Adjective", "Adjectival Adverb", "J_JJ"),
    ("Adverb", "", "RB"),
    ("Post Position", "", "PSP"),
    ("Conjunction", "Conjunction", "CC_CCD"),
    ("Conjunction", "Co-ordinator", "CC_CCS"),
    ("Particles", "Particles (unclassified)", "SUF"),
    ("Particles", "Classifier", "RP_RPD"),
    ("Particles", "Interjection", "RP_INJ"),
    ("Particles", "Negation", "RP_NEG"),
    ("Particles", "Intensifier", "RP_INTF"),
    ("Quantifiers", "General", "QT_QTF"),
    ("Quantifiers", "Cardinals", "QT_QTC"),
    ("Quantifiers", "Ordinals", "QT_QTO"),
    ("Residuals", "Foreign word", "RD_RDF"),
    ("Residuals", "Symbol", "RD_SYM"),
    ("Residuals", "Punctuation", "RD_PUNC"),
    ("Residuals", "Echowords", "RD_ECH"),
    ("Residuals", "Unknown", "RD_UNK"),
)


@dataclass(frozen=True)
class Tag:
    code: str
    category: str
    type_name: str = ""


class TagSet:
    """An ordered, closed tag inventory.  Ordinals are list positions."""

    def __init__(self, tags: Iterable[Tag]):
        self.tags: tuple[Tag, ...] = tuple(tags)
        self.index: dict[str, int] = {}
        for i, tag in enumerate(self.tags):
            if tag.code in self.index:
                raise ValueError(f"duplicate tag code {tag.code!r}")
            self.index[tag.code] = i

    @classmethod
    def from_codes(cls, codes: Iterable[str], category: str = "Residuals") -> "TagSet":
        return cls(Tag(c, category) for c in codes)

    def __len__(self) -> int:
        return len(self.tags)

    def __iter__(self):
        return iter(self.tags)

    def __contains__(self, code: object) -> bool:
        return code in self.index

    def __eq__(self, other: object) -> bool:
        return isinstance(other, TagSet) and self.tags == other.tags

    def __hash__(self) -> int:
        return hash(self.tags)

    def __repr__(self) -> str:
        return f"TagSet({len(self)} tags)"

    @property
    def codes(self) -> list[str]:
        return [t.code for t in self.tags]

    @property
    def categories(self) -> list[str]:
        seen: dict[str, None] = {}
        for t in self.tags:
            seen.setdefault(t.category, None)
        return list(seen)

    def ordinal(self, code: str) -> int:
        try:
            return self.index[code]
        except KeyError:
            raise UnknownTagError(code) from None

    def code(self, ordinal: int) -> str:
        return self.tags[ordinal].code

    def category_of(self, code: str) -> tuple[str, str]:
        tag = self.tags[self.ordinal(code)]
        return tag.category, tag.type_name

    def to_records(self) -> list[list[str]]:
        return [[t.code, t.category, t.type_name] for t in self.tags]

    @classmethod
    def from_records(cls, records: Iterable[Sequence[str]]) -> "TagSet":
        return cls(Tag(*r) for r in records)


def builtin_bis_tagset() -> TagSet:
    """The 41-tag BIS inventory with its 11 top-level categories."""
    return TagSet(Tag(code, cat, typ) for cat, typ, code in _BIS_ROWS)


def load_tagset_file(text: str) -> TagSet:
    """Read a tagset from ``code[\\tcategory[\\ttype]]`` lines."""
    tags = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) > 3:
            raise CorpusError("expected at most 3 tab-separated fields", lineno)
        code = parts[0].strip()
        category = parts[1] if len(parts) > 1 else ""
        type_name = parts[2] if len(parts) > 2 else ""
        tags.append(Tag(code, category, type_name))
    return TagSet(tags)


def normalize_surface(surface: str) -> str:
    return unicodedata.normalize("NFC", surface)


@dataclass(frozen=True)
class Token:
    surface: str
    gold: int | None = None

    def __post_init__(self):
        if not self.surface:
            raise ValueError("empty token surface")
        if any(ch.isspace() for ch in self.surface):
            raise ValueError(f"whitespace in token surface {self.surface!r}")
        if not unicodedata.is_normalized("NFC", self.surface):
            object.__setattr__(self, "surface", normalize_surface(self.surface))


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]
    id: str = ""

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")
        if not isinstance(self.tokens, tuple):
            object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @property
    def gold(self) -> list[int | None]:
        return [t.gold for t in self.tokens]

    @property
    def is_tagged(self) -> bool:
        return all(t.gold is not None for t in self.tokens)

    def with_tags(self, tags: Sequence[int | None]) -> "Sentence":
        if len(tags) != len(self.tokens):
            raise ValueError("tag count does not match token count")
        return Sentence(tuple(Token(t.surface, g) for t, g in zip(self.tokens, tags)), self.id)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, int | None]], id: str = "") -> "Sentence":
        return cls(tuple(Token(s, g) for s, g in pairs), id)


@dataclass(frozen=True)
class CorpusStats:
    sentence_count: int
    token_count: int
    tag_histogram: dict[str, int]
    untagged_count: int = 0
    oov_candidates: tuple[str, ...] = ()


@dataclass(frozen=True)
class Diagnostic:
    line: int
    message: str


@dataclass(frozen=True, eq=False)
class TaggedCorpus:
    sentences: tuple[Sentence, ...]
    tagset: TagSet
    diagnostics: tuple[Diagnostic, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not isinstance(self.sentences, tuple):
            object.__setattr__(self, "sentences", tuple(self.sentences))

    def __eq__(self, other: object) -> bool:
        # structural equality; diagnostics are not part of the corpus
        return (
            isinstance(other, TaggedCorpus)
            and self.tagset == other.tagset
            and self.sentences == other.sentences
        )

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def stats(self) -> CorpusStats:
        return corpus_stats(self)

    def replace(self, sentences: Iterable[Sentence]) -> "TaggedCorpus":
        return TaggedCorpus(tuple(sentences), self.tagset)


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        # report the line the bad byte sits on
        line = data[: exc.start].count(b"\n") + 1
        raise CorpusError(f"invalid UTF-8 at byte {exc.start}", line) from None


SENT_ID_PREFIX = "# sent_id = "


def parse_column_file(
    data: bytes | str,
    tagset: TagSet,
    mode: str = "strict",
    name: str = "<input>",
) -> TaggedCorpus:
    """Parse column-format bytes into a corpus.

    Fields are split on a tab, or on any whitespace run when the line has no
    tab.  A single-field line is an untagged token.  In ``lenient`` mode
    unknown tag codes become diagnostics and the token is kept untagged.
    Sentence ids default to ``<name>:<n>`` with ``n`` counted from 1.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    text = _decode(data)
    if text.startswith("﻿"):
        text = text[1:]

    sentences: list[Sentence] = []
    diagnostics: list[Diagnostic] = []
    current: list[Token] = []
    pending_id: str | None = None

    def close():
        nonlocal current, pending_id
        if current:
            sid = pending_id or f"{name}:{len(sentences) + 1}"
            sentences.append(Sentence(tuple(current), sid))
        current = []
        pending_id = None

    for lineno, raw in enumerate(text.split("\n"), 1):
        line = raw.rstrip("\r")
        if line.startswith("#"):
            if line.startswith(SENT_ID_PREFIX) and not current:
                pending_id = line[len(SENT_ID_PREFIX):].strip()
            continue
        if not line.strip():
            close()
            continue
        fields = line.split("\t") if "\t" in line else line.split()
        fields = [f.strip() for f in fields]
        if len(fields) not in (1, 2) or not all(fields):
            raise CorpusError(f"expected 1 or 2 fields, got {len(fields)}", lineno)
        surface = normalize_surface(fields[0])
        if any(ch.isspace() for ch in surface):
            raise CorpusError(f"whitespace inside surface {surface!r}", lineno)
        gold = None
        if len(fields) == 2:
            code = fields[1]
            if code in tagset.index:
                gold = tagset.index[code]
            elif mode == "strict":
                raise UnknownTagError(code, lineno)
            else:
                diagnostics.append(Diagnostic(lineno, f"unknown tag {code!r}"))
        current.append(Token(surface, gold))
    close()
    return TaggedCorpus(tuple(sentences), tagset, tuple(diagnostics))


def write_column_file(
    corpus: TaggedCorpus,
    with_ids: bool = False,
    comments: dict[str, Sequence[str]] | None = None,
) -> bytes:
    """Serialize to canonical column form: one tab, a blank line per sentence end.

    ``comments`` maps a sentence id to extra ``#`` lines written before it.
    """
    out: list[str] = []
    for sent in corpus.sentences:
        if comments and sent.id in comments:
            out.extend(f"# {c}\n" for c in comments[sent.id])
        if with_ids:
            out.append(f"{SENT_ID_PREFIX}{sent.id}\n")
        for tok in sent.tokens:
            if tok.gold is None:
                out.append(f"{tok.surface}\n")
            else:
                out.append(f"{tok.surface}\t{corpus.tagset.code(tok.gold)}\n")
        out.append("\n")
    return "".join(out).encode("utf-8")


def strip_comments(data: bytes | str) -> bytes:
    text = _decode(data)
    kept = [ln for ln in text.split("\n") if not ln.startswith("#")]
    return "\n".join(kept).encode("utf-8")


def split_corpus(
    corpus: TaggedCorpus,
    ratios: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 0,
) -> tuple[TaggedCorpus, ...]:
    """Seeded sentence-level partition.

    Part sizes use largest-remainder rounding, so each is within one sentence
    of its exact share and every part gets at least one sentence.
    """
    if not ratios or any(r <= 0 for r in ratios):
        raise ValueError("ratios must be positive")
    if abs(sum(ratios) - 1.0) > 1e-6:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(corpus.sentences)
    k = len(ratios)
    if n < k:
        raise ValueError(f"cannot split {n} sentences into {k} parts")

    exact = [r * n for r in ratios]
    sizes = [int(e) for e in exact]
    by_remainder = sorted(range(k), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in by_remainder[: n - sum(sizes)]:
        sizes[i] += 1
    # a part rounded down to zero borrows from the largest part
    for i in range(k):
        if sizes[i] == 0:
            donor = max(range(k), key=lambda j: sizes[j])
            sizes[donor] -= 1
            sizes[i] = 1

    order = list(range(n))
    random.Random(seed).shuffle(order)
    parts = []
    start = 0
    for size in sizes:
        idx = sorted(order[start:start + size])
        parts.append(corpus.replace(corpus.sentences[i] for i in idx))
        start += size
    return tuple(parts)


def corpus_stats(corpus: TaggedCorpus, vocabulary: Iterable[str] | None = None) -> CorpusStats:
    hist: Counter[str] = Counter()
    untagged = 0
    tokens = 0
    surfaces: dict[str, None] = {}
    for sent in corpus.sentences:
        for tok in sent.tokens:
            tokens += 1
            surfaces.setdefault(tok.surface, None)
            if tok.gold is None:
                untagged += 1
            else:
                hist[corpus.tagset.code(tok.gold)] += 1
    oov: tuple[str, ...] = ()
    if vocabulary is not None:
        vocab = set(vocabulary)
        oov = tuple(s for s in surfaces if s not in vocab)
    ordered = {code: hist[code] for code in corpus.tagset.codes if hist[code]}
    return CorpusStats(len(corpus.sentences), tokens, ordered, untagged, oov)


def corpus_from_rows(
    rows: Sequence[Sequence[tuple[str, str]]],
    tagset: TagSet,
    name: str = "<input>",
) -> TaggedCorpus:
    """Build a corpus from ``[(surface, code), ...]`` lists, one per sentence."""
    sentences = []
    for i, rows_ in enumerate(rows, 1):
        tokens = tuple(Token(normalize_surface(s), tagset.ordinal(c)) for s, c in rows_)
        sentences.append(Sentence(tokens, f"{name}:{i}"))
    return TaggedCorpus(tuple(sentences), tagset)
