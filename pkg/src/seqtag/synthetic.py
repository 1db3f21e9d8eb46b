"""Generated corpora with known structure, for convergence and ablation checks.

* ``unambiguous``: every surface has exactly one tag, so perfect accuracy
  is attainable from the word alone.
* ``context_ambiguous``: some surfaces take one of two tags depending on
  which cue word precedes them.  Both cue words share a tag, so tag-to-tag
  transitions alone cannot resolve the ambiguity; the left context word can.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Sentence, TaggedCorpus, TagSet, Token, builtin_bis_tagset

DEFAULT_TAGS = ("N_NN", "V_VM", "J_JJ", "RB", "PSP", "PR_PRP", "QT_QTC", "CC_CCD")


@dataclass
class SyntheticData:
    train: TaggedCorpus
    dev: TaggedCorpus
    test: TaggedCorpus
    lexicon: dict[str, str]          # surface -> tag code, for unambiguous words
    ambiguous: dict[str, tuple[str, str]]  # surface -> (tag after cue A, tag after cue B)


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i:03d}" for i in range(n)]


def _corpus(rows, tagset: TagSet, name: str) -> TaggedCorpus:
    sents = []
    for i, row in enumerate(rows, 1):
        sents.append(Sentence(tuple(Token(s, tagset.ordinal(t)) for s, t in row), f"{name}:{i}"))
    return TaggedCorpus(tuple(sents), tagset)


def unambiguous(
    n_train: int = 500,
    n_dev: int = 50,
    n_test: int = 50,
    vocab_size: int = 200,
    tags: tuple[str, ...] = DEFAULT_TAGS,
    length: tuple[int, int] = (4, 12),
    seed: int = 0,
    tagset: TagSet | None = None,
) -> SyntheticData:
    tagset = tagset or builtin_bis_tagset()
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    # every tag gets words; the rest are assigned at random
    codes = [tags[i % len(tags)] for i in range(vocab_size)]
    rng.shuffle(codes)
    lexicon = dict(zip(words, codes))

    def sentence():
        n = int(rng.integers(length[0], length[1] + 1))
        return [(w, lexicon[w]) for w in rng.choice(words, size=n)]

    rows = [sentence() for _ in range(n_train + n_dev + n_test)]
    return SyntheticData(
        _corpus(rows[:n_train], tagset, "train"),
        _corpus(rows[n_train:n_train + n_dev], tagset, "dev"),
        _corpus(rows[n_train + n_dev:], tagset, "test"),
        lexicon,
        {},
    )


def context_ambiguous(
    n_train: int = 400,
    n_dev: int = 50,
    n_test: int = 100,
    vocab_size: int = 60,
    n_ambiguous: int = 6,
    pairs_per_sentence: tuple[int, int] = (1, 3),
    filler: tuple[int, int] = (1, 4),
    tags: tuple[str, ...] = DEFAULT_TAGS,
    cue_tag: str = "DM_DMD",
    ambiguous_tags: tuple[str, str] = ("V_VM", "V_VAUX"),
    seed: int = 0,
    tagset: TagSet | None = None,
    exclude_from_train: tuple[str, ...] = (),
) -> SyntheticData:
    """Sentences of filler words with cue+ambiguous pairs dropped in.

    Cue ``ka`` sends the following ambiguous word to ``ambiguous_tags[0]``,
    cue ``kb`` to ``ambiguous_tags[1]``.  Surfaces listed in
    ``exclude_from_train`` never appear in the training split.
    """
    tagset = tagset or builtin_bis_tagset()
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    codes = [tags[i % len(tags)] for i in range(vocab_size)]
    rng.shuffle(codes)
    lexicon = dict(zip(words, codes))
    lexicon["ka"] = cue_tag
    lexicon["kb"] = cue_tag
    amb_words = _words("a", n_ambiguous)
    ambiguous = {w: ambiguous_tags for w in amb_words}
    excluded = set(exclude_from_train)

    def sentence(avoid: set[str]):
        fill = [w for w in words if w not in avoid]
        amb = [w for w in amb_words if w not in avoid]
        row = []
        for _ in range(int(rng.integers(pairs_per_sentence[0], pairs_per_sentence[1] + 1))):
            for w in rng.choice(fill, size=int(rng.integers(filler[0], filler[1] + 1))):
                row.append((str(w), lexicon[str(w)]))
            cue = int(rng.integers(2))
            row.append((("ka", "kb")[cue], cue_tag))
            row.append((str(rng.choice(amb)), ambiguous_tags[cue]))
        for w in rng.choice(fill, size=int(rng.integers(filler[0], filler[1] + 1))):
            row.append((str(w), lexicon[str(w)]))
        return row

    train_rows = [sentence(excluded) for _ in range(n_train)]
    dev_rows = [sentence(set()) for _ in range(n_dev)]
    test_rows = [sentence(set()) for _ in range(n_test)]
    return SyntheticData(
        _corpus(train_rows, tagset, "train"),
        _corpus(dev_rows, tagset, "dev"),
        _corpus(test_rows, tagset, "test"),
        lexicon,
        ambiguous,
    )


def vocabulary(data: SyntheticData) -> list[str]:
    seen: dict[str, None] = {}
    for corpus in (data.train, data.dev, data.test):
        for s in corpus.sentences:
            for t in s.surfaces:
                seen.setdefault(t, None)
    for w in list(data.lexicon) + list(data.ambiguous):
        seen.setdefault(w, None)
    return list(seen)
