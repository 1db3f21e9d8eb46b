"""The BiLSTM-CRF sequence tagger (and its encoder-free CRF variant)."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import crf
from .corpus import Sentence, TagSet
from .embeddings import CharEncoder, EmbeddingStack, word_dropout_mask
from .neural import BiLstmEncoder, LstmParams, Param, linear_backward, uniform_init

ARCHITECTURES = ("bilstm-crf", "crf")


class BackwardError(RuntimeError):
    pass


@dataclass
class _Pending:
    stack_caches: Any
    keep: np.ndarray | None
    encoder_caches: Any
    features: np.ndarray
    crf_grads: crf.CrfGradients
    batch_scale: float
    span: tuple[int, int] | None
    length: int


class SequenceModel:
    """Embedding stack -> optional BiLSTM -> linear emission layer -> CRF."""

    def __init__(
        self,
        stack: EmbeddingStack,
        encoder: BiLstmEncoder | None,
        proj_W,
        proj_b,
        transitions: crf.Transitions,
        tagset: TagSet,
        config: dict[str, Any] | None = None,
    ):
        self.stack = stack
        self.encoder = encoder
        self.proj_W = proj_W if isinstance(proj_W, Param) else Param(proj_W)
        self.proj_b = proj_b if isinstance(proj_b, Param) else Param(proj_b)
        self.transitions = transitions
        self.tagset = tagset
        self.config = dict(config or {})
        self.dev_score: float | None = None
        feat_dim = encoder.output_dim if encoder is not None else stack.total_dim
        if encoder is not None and encoder.input_dim != stack.total_dim:
            raise ValueError("encoder input dim must equal the stack's total dim")
        if self.proj_W.shape != (len(tagset), feat_dim) or self.proj_b.shape != (len(tagset),):
            raise ValueError("emission projection must map features onto the tagset")
        if transitions.num_tags != len(tagset):
            raise ValueError("transition size must equal the tagset size")
        self._pending: list[_Pending] = []

    @property
    def architecture(self) -> str:
        return "crf" if self.encoder is None else "bilstm-crf"

    def params(self) -> dict[str, Param]:
        """Every trainable parameter, by dotted name."""
        out = {f"embed.{k}": p for k, p in self.stack.params().items()}
        if self.encoder is not None:
            out.update({f"encoder.{k}": p for k, p in self.encoder.params().items()})
        out["proj.W"] = self.proj_W
        out["proj.b"] = self.proj_b
        out.update({f"crf.{k}": p for k, p in self.transitions.params().items()})
        return out

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self.params().items()}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(params) != set(state):
            raise ValueError("state does not match the model's parameters")
        for k, p in params.items():
            p.value[...] = state[k]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for k, p in sorted(self.params().items()):
            h.update(k.encode())
            h.update(p.value.astype("<f8").tobytes())
        return h.hexdigest()[:12]

    def zero_grad(self) -> None:
        for p in self.params().values():
            p.zero_grad()

    # ---- inference

    def features(self, sentence: Sentence) -> np.ndarray:
        x, _ = self.stack.forward(sentence)
        if self.encoder is not None:
            x, _ = self.encoder.forward(x)
        return x

    def emissions(self, sentence: Sentence) -> np.ndarray:
        return self.features(sentence) @ self.proj_W.value.T + self.proj_b.value

    def tag(self, sentence: Sentence) -> list[int]:
        return crf.viterbi_decode(self.emissions(sentence), self.transitions)[0]

    def loss(self, sentence: Sentence, span: tuple[int, int] | None = None) -> float:
        """CRF negative log-likelihood with dropout off (used for gradient checks)."""
        e = self._span_emissions(sentence, span, None)[0]
        gold = sentence.gold[slice(*span) if span else slice(None)]
        return crf.nll_loss(e, self.transitions, gold)

    # ---- training

    def _span_emissions(self, sentence, span, keep_rng):
        x, stack_caches = self.stack.forward(sentence)
        keep = None
        if keep_rng is not None:
            p = float(self.config.get("word_dropout", 0.0))
            keep = word_dropout_mask(len(sentence), p, keep_rng)
            x = x * keep[:, None]
        if span is not None:
            x = x[span[0]:span[1]]
        enc_caches = None
        feats = x
        if self.encoder is not None:
            feats, enc_caches = self.encoder.forward(x)
        e = feats @ self.proj_W.value.T + self.proj_b.value
        return e, stack_caches, keep, enc_caches, feats

    def forward_loss(
        self,
        sentence: Sentence,
        rng: np.random.Generator | None = None,
        span: tuple[int, int] | None = None,
        scale: float = 1.0,
    ) -> float:
        """Forward pass recording what :meth:`backward` needs.

        ``rng`` enables word dropout.  ``span`` restricts the loss to a
        token slice (for over-long sentences).  ``scale`` multiplies this
        sentence's contribution to the gradients.
        """
        if not sentence.is_tagged:
            raise ValueError(f"sentence {sentence.id!r} has untagged tokens")
        e, stack_caches, keep, enc_caches, feats = self._span_emissions(sentence, span, rng)
        gold = sentence.gold[slice(*span) if span else slice(None)]
        g = crf.crf_gradients(e, self.transitions, gold)
        self._pending.append(
            _Pending(stack_caches, keep, enc_caches, feats, g, scale, span, len(sentence))
        )
        return g.loss

    def backward(self) -> None:
        """Push every recorded forward pass back into the parameter grads."""
        if not self._pending:
            raise BackwardError("backward() called without a recorded forward pass")
        t = self.transitions
        for rec in self._pending:
            g, scale = rec.crf_grads, rec.batch_scale
            t.A.grad += scale * g.A
            t.start.grad += scale * g.start
            t.end.grad += scale * g.end
            d_e = scale * g.emissions
            d_feat = linear_backward(self.proj_W, self.proj_b, rec.features, d_e)
            if self.encoder is not None:
                d_x = self.encoder.backward(rec.encoder_caches, d_feat)
            else:
                d_x = d_feat
            if not self.stack.params():
                continue
            full = np.zeros((rec.length, self.stack.total_dim))
            lo, hi = rec.span if rec.span is not None else (0, rec.length)
            full[lo:hi] = d_x
            if rec.keep is not None:
                full *= rec.keep[:, None]
            self.stack.backward(rec.stack_caches, full)
        self._pending.clear()

    def discard_pending(self) -> None:
        self._pending.clear()


def build_model(
    stack: EmbeddingStack,
    tagset: TagSet,
    config: dict[str, Any],
    rng: np.random.Generator | None = None,
) -> SequenceModel:
    """Freshly initialized model.  Uses ``config['seed']`` when ``rng`` is omitted."""
    if rng is None:
        rng = np.random.default_rng(int(config.get("seed", 0)))
    arch = config.get("tagger", "bilstm-crf")
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown tagger architecture {arch!r}")
    T = len(tagset)
    if arch == "crf":
        encoder = None
        feat_dim = stack.total_dim
    else:
        encoder = BiLstmEncoder.init(
            stack.total_dim, int(config["hidden_size"]), int(config["hidden_layers"]), rng
        )
        feat_dim = encoder.output_dim
    W = uniform_init(rng, (T, feat_dim))
    b = uniform_init(rng, (T,))
    return SequenceModel(stack, encoder, W, b, crf.Transitions.init(T, rng), tagset, config)


def clone_model(model: SequenceModel) -> SequenceModel:
    """Copy every learnable array; frozen providers are shared (they are immutable)."""
    providers = []
    for p in model.stack.providers:
        if not p.trainable:
            providers.append(p)
        elif isinstance(p, CharEncoder):
            providers.append(CharEncoder(
                p.chars, p.table.value.copy(), _copy_lstm(p.fwd), _copy_lstm(p.bwd), p.name, True,
            ))
        else:
            q = type(p)(p.vocab, p.matrix.value.copy(), p.oov_vector.copy(), p.name, True)
            providers.append(q)
    encoder = None
    if model.encoder is not None:
        encoder = BiLstmEncoder([(_copy_lstm(f), _copy_lstm(b)) for f, b in model.encoder.layers])
    t = model.transitions
    trans = crf.Transitions(t.A.value.copy(), t.start.value.copy(), t.end.value.copy())
    return SequenceModel(
        EmbeddingStack(providers), encoder, model.proj_W.value.copy(), model.proj_b.value.copy(),
        trans, model.tagset, model.config,
    )


def _copy_lstm(p: LstmParams) -> LstmParams:
    return LstmParams(p.W.value.copy(), p.U.value.copy(), p.b.value.copy())
