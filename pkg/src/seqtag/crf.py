"""Linear-chain CRF with start/end transition vectors.

A path ``y`` over ``n`` positions scores::

    start[y0] + sum_i e[i, y_i] + sum_{i>0} A[y_{i-1}, y_i] + end[y_{n-1}]

All chain sums run in log space with max-shifted log-sum-exp.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import Param


def logsumexp(x: np.ndarray, axis=None) -> np.ndarray:
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(x - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return out.reshape(())
    return np.squeeze(out, axis=axis)


class Transitions:
    """Learnable transition matrix ``A[s, t]`` (s -> t) plus start and end scores."""

    def __init__(self, A, start, end):
        self.A = A if isinstance(A, Param) else Param(A)
        self.start = start if isinstance(start, Param) else Param(start)
        self.end = end if isinstance(end, Param) else Param(end)
        T = self.A.shape[0]
        if self.A.shape != (T, T) or self.start.shape != (T,) or self.end.shape != (T,):
            raise ValueError("inconsistent transition shapes")

    @classmethod
    def zeros(cls, num_tags: int) -> "Transitions":
        return cls(np.zeros((num_tags, num_tags)), np.zeros(num_tags), np.zeros(num_tags))

    @classmethod
    def init(cls, num_tags: int, rng: np.random.Generator, scale: float = 0.1) -> "Transitions":
        return cls(
            rng.uniform(-scale, scale, (num_tags, num_tags)),
            rng.uniform(-scale, scale, num_tags),
            rng.uniform(-scale, scale, num_tags),
        )

    @property
    def num_tags(self) -> int:
        return self.A.shape[0]

    def params(self) -> dict[str, Param]:
        return {"A": self.A, "start": self.start, "end": self.end}


def _check(emissions, trans: Transitions) -> np.ndarray:
    e = np.asarray(emissions, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ValueError(f"emissions must be (n >= 1, T), got shape {e.shape}")
    if e.shape[1] != trans.num_tags:
        raise ValueError(f"emission width {e.shape[1]} != {trans.num_tags} tags")
    if not np.isfinite(e).all():
        raise ValueError("emissions contain non-finite values")
    return e


def _check_path(path, n: int, T: int) -> list[int]:
    path = [int(y) for y in path]
    if len(path) != n:
        raise ValueError(f"path length {len(path)} != sequence length {n}")
    for y in path:
        if not 0 <= y < T:
            raise ValueError(f"tag ordinal {y} out of range for {T} tags")
    return path


def score_path(emissions, trans: Transitions, path) -> float:
    e = _check(emissions, trans)
    n, T = e.shape
    y = _check_path(path, n, T)
    A = trans.A.value
    total = trans.start.value[y[0]] + e[0, y[0]]
    for i in range(1, n):
        total += A[y[i - 1], y[i]] + e[i, y[i]]
    total += trans.end.value[y[-1]]
    return float(total)


def forward_scores(e: np.ndarray, trans: Transitions) -> np.ndarray:
    """alpha[i, t]: log-sum of scores of all prefixes ending in tag t at i."""
    A = trans.A.value
    alpha = np.empty_like(e)
    alpha[0] = trans.start.value + e[0]
    for i in range(1, e.shape[0]):
        alpha[i] = logsumexp(alpha[i - 1][:, None] + A, axis=0) + e[i]
    return alpha


def backward_scores(e: np.ndarray, trans: Transitions) -> np.ndarray:
    """beta[i, t]: log-sum of scores of all suffixes after tag t at i, end included."""
    A = trans.A.value
    beta = np.empty_like(e)
    beta[-1] = trans.end.value
    for i in range(e.shape[0] - 2, -1, -1):
        beta[i] = logsumexp(A + (e[i + 1] + beta[i + 1])[None, :], axis=1)
    return beta


def log_partition(emissions, trans: Transitions) -> float:
    e = _check(emissions, trans)
    alpha = forward_scores(e, trans)
    return float(logsumexp(alpha[-1] + trans.end.value))


def nll_loss(emissions, trans: Transitions, gold) -> float:
    e = _check(emissions, trans)
    gold = _check_path(gold, *e.shape)
    return log_partition(e, trans) - score_path(e, trans, gold)


@dataclass
class ForwardBackward:
    log_z: float
    marginals: np.ndarray           # (n, T)
    pair_marginals: np.ndarray      # (n-1, T, T)


def forward_backward(emissions, trans: Transitions) -> ForwardBackward:
    e = _check(emissions, trans)
    alpha = forward_scores(e, trans)
    beta = backward_scores(e, trans)
    log_z = float(logsumexp(alpha[-1] + trans.end.value))
    marg = np.exp(alpha + beta - log_z)
    A = trans.A.value
    pairs = np.exp(
        alpha[:-1, :, None] + A[None, :, :] + (e[1:] + beta[1:])[:, None, :] - log_z
    )
    return ForwardBackward(log_z, marg, pairs)


def posterior_marginals(emissions, trans: Transitions) -> np.ndarray:
    return forward_backward(emissions, trans).marginals


@dataclass
class CrfGradients:
    emissions: np.ndarray
    A: np.ndarray
    start: np.ndarray
    end: np.ndarray
    loss: float


def crf_gradients(emissions, trans: Transitions, gold) -> CrfGradients:
    """Gradients of the NLL: expected feature counts minus gold counts."""
    e = _check(emissions, trans)
    n, T = e.shape
    gold = _check_path(gold, n, T)
    fb = forward_backward(e, trans)
    onehot = np.zeros((n, T))
    onehot[np.arange(n), gold] = 1.0
    d_e = fb.marginals - onehot
    d_A = fb.pair_marginals.sum(axis=0)
    for i in range(1, n):
        d_A[gold[i - 1], gold[i]] -= 1.0
    d_start = fb.marginals[0] - onehot[0]
    d_end = fb.marginals[-1] - onehot[-1]
    loss = fb.log_z - score_path(e, trans, gold)
    return CrfGradients(d_e, d_A, d_start, d_end, loss)


def viterbi_decode(emissions, trans: Transitions) -> tuple[list[int], float]:
    """Best path and its score.  Ties go to the lowest tag ordinal."""
    e = _check(emissions, trans)
    n = e.shape[0]
    A = trans.A.value
    delta = trans.start.value + e[0]
    back = np.empty((n, e.shape[1]), dtype=np.intp)
    for i in range(1, n):
        cand = delta[:, None] + A
        back[i] = np.argmax(cand, axis=0)  # argmax returns the first maximum
        delta = cand[back[i], np.arange(e.shape[1])] + e[i]
    last = int(np.argmax(delta + trans.end.value))
    path = [last]
    for i in range(n - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    return path, score_path(e, trans, path)
