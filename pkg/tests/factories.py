"""Small random models and sentences shared by several test modules."""

from __future__ import annotations

import numpy as np

from seqtag.corpus import Sentence, TagSet, Token
from seqtag.embeddings import CharEncoder, EmbeddingStack, PrecomputedContextual, StaticTable
from seqtag.model import build_model

WORDS = ["ab", "ba", "c", "abc", "d", "bd"]


def tiny_tagset(T: int) -> TagSet:
    return TagSet.from_codes([f"T{i}" for i in range(T)])


def random_sentence(rng, T: int, n: int, sid: str = "s:1", words=WORDS) -> Sentence:
    # "zz" is never in the vocabulary, so OOV paths get exercised too
    pool = list(words) + ["zz"]
    return Sentence(
        tuple(Token(str(rng.choice(pool)), int(rng.integers(T))) for _ in range(n)), sid
    )


def tiny_model(rng, arch="bilstm-crf", T=None, max_dim=6, char=True, precomputed_for=None,
               layers=None):
    T = T or int(rng.integers(2, max_dim + 1))
    providers = [StaticTable.random(WORDS, int(rng.integers(1, max_dim + 1)), rng, name="w")]
    if char:
        providers.append(CharEncoder.init("abcd", rng, int(rng.integers(1, 4)), int(rng.integers(1, 3))))
    if precomputed_for is not None:
        d = int(rng.integers(1, 4))
        providers.append(PrecomputedContextual(
            {(precomputed_for.id, i): rng.normal(size=d) for i in range(len(precomputed_for))}, d, "ctx"))
    config = {
        "tagger": arch,
        "hidden_size": int(rng.integers(1, max_dim // 2 + 1)),
        "hidden_layers": layers or int(rng.integers(1, 3)),
        "word_dropout": 0.0,
    }
    model = build_model(EmbeddingStack(providers), tiny_tagset(T), config, rng)
    # push everything off the init scale so gradients are not all tiny
    for p in model.params().values():
        p.value[...] = rng.normal(0, 0.5, p.shape)
    return model


def model_gradient_error(model, sentence, eps: float = 1e-5) -> tuple[float, str]:
    """Max relative error between backprop and central differences, and where it occurred."""
    import oracles

    model.zero_grad()
    model.forward_loss(sentence)
    model.backward()
    worst, where = 0.0, ""
    for name, p in model.params().items():
        numeric = oracles.central_difference(lambda: model.loss(sentence), p.value, eps)
        err = oracles.rel_error(p.grad, numeric)
        if err > worst:
            worst, where = err, name
    return worst, where


# scaled-down published setup: only the network size and epoch budget change
SCALED = dict(hidden_size=32, hidden_layers=1, max_epochs=20)


def scaled_config(**overrides):
    from seqtag.training import TrainingConfig

    return TrainingConfig(**{**SCALED, **overrides})


def fresh_model(data, config, dim: int = 50):
    """A BiLSTM-CRF (or CRF-only) over a trainable random table covering the whole synthetic vocabulary."""
    from seqtag import synthetic

    rng = np.random.default_rng(config.seed)
    table = StaticTable.random(synthetic.vocabulary(data), dim, rng, name="words", trainable=True)
    return build_model(EmbeddingStack([table]), data.train.tagset, config.to_dict(), rng)
