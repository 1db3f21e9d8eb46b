"""Dense numeric core for the tagger: parameters, LSTM cells, BiLSTM, SGD.

Gradients are hand-derived for the fixed set of ops the tagger uses.  Every
forward function that participates in training returns a cache which the
matching ``*_backward`` consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

DTYPE = np.float64


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, names: Sequence[str]):
        self.names = list(names)
        super().__init__(f"non-finite gradient in {', '.join(self.names)}")


class Param:
    """A learnable array with a same-shaped gradient accumulator."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=DTYPE)
        if self.value.ndim not in (1, 2):
            raise ValueError(f"parameters are 1-D or 2-D, got shape {self.value.shape}")
        if not np.isfinite(self.value).all():
            raise ValueError("parameter values must be finite")
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"Param(shape={self.shape})"


def uniform_init(rng: np.random.Generator, shape, scale: float = 0.1) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape)


def sigmoid(x):
    # tanh form never overflows
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class LstmParams:
    """One LSTM cell.  Gate rows are stacked in (input, forget, cell, output) order."""

    def __init__(self, W, U, b):
        self.W = W if isinstance(W, Param) else Param(W)
        self.U = U if isinstance(U, Param) else Param(U)
        self.b = b if isinstance(b, Param) else Param(b)
        four_h, d = self.W.shape
        if four_h % 4 or self.U.shape != (four_h, four_h // 4) or self.b.shape != (four_h,):
            raise ValueError("inconsistent LSTM parameter shapes")

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng: np.random.Generator) -> "LstmParams":
        W = uniform_init(rng, (4 * hidden, input_dim))
        U = uniform_init(rng, (4 * hidden, hidden))
        b = uniform_init(rng, (4 * hidden,))
        b[hidden:2 * hidden] = 1.0
        return cls(W, U, b)

    @classmethod
    def zeros(cls, input_dim: int, hidden: int) -> "LstmParams":
        return cls(
            np.zeros((4 * hidden, input_dim)),
            np.zeros((4 * hidden, hidden)),
            np.zeros(4 * hidden),
        )

    @property
    def input_dim(self) -> int:
        return self.W.shape[1]

    @property
    def hidden(self) -> int:
        return self.U.shape[1]

    def params(self) -> dict[str, Param]:
        return {"W": self.W, "U": self.U, "b": self.b}


def lstm_cell_step(params: LstmParams, x, h_prev, c_prev):
    """One LSTM step; returns ``(h, c)``."""
    x = np.asarray(x, dtype=DTYPE)
    h_prev = np.asarray(h_prev, dtype=DTYPE)
    c_prev = np.asarray(c_prev, dtype=DTYPE)
    h = params.hidden
    if x.shape != (params.input_dim,) or h_prev.shape != (h,) or c_prev.shape != (h,):
        raise ValueError(
            f"dimension mismatch: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
            f"for cell ({params.input_dim} -> {h})"
        )
    z = params.W.value @ x + params.U.value @ h_prev + params.b.value
    i = sigmoid(z[:h])
    f = sigmoid(z[h:2 * h])
    g = np.tanh(z[2 * h:3 * h])
    o = sigmoid(z[3 * h:])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


@dataclass
class LstmCache:
    xs: np.ndarray
    hs: np.ndarray        # (n+1, h), row 0 is the initial zero state
    cs: np.ndarray        # (n+1, h)
    gates: np.ndarray     # (n, 4h) post-activation i, f, g, o
    tanh_c: np.ndarray    # (n, h)


def lstm_forward(params: LstmParams, xs: np.ndarray) -> tuple[np.ndarray, LstmCache]:
    """Run a cell left to right over ``xs`` (n, d) from the zero state."""
    n = xs.shape[0]
    h = params.hidden
    if xs.ndim != 2 or xs.shape[1] != params.input_dim:
        raise ValueError(f"expected inputs of width {params.input_dim}, got {xs.shape}")
    U = params.U.value
    pre = xs @ params.W.value.T + params.b.value
    hs = np.zeros((n + 1, h))
    cs = np.zeros((n + 1, h))
    gates = np.empty((n, 4 * h))
    tanh_c = np.empty((n, h))
    for t in range(n):
        z = pre[t] + U @ hs[t]
        gt = gates[t]
        gt[:2 * h] = sigmoid(z[:2 * h])
        gt[2 * h:3 * h] = np.tanh(z[2 * h:3 * h])
        gt[3 * h:] = sigmoid(z[3 * h:])
        cs[t + 1] = gt[h:2 * h] * cs[t] + gt[:h] * gt[2 * h:3 * h]
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = gt[3 * h:] * tanh_c[t]
    return hs[1:], LstmCache(xs, hs, cs, gates, tanh_c)


def lstm_backward(params: LstmParams, cache: LstmCache, dhs: np.ndarray) -> np.ndarray:
    """Backprop ``dL/dh_t`` for every step; accumulates param grads, returns ``dL/dx``."""
    n, h = dhs.shape
    U = params.U.value
    gates = cache.gates
    dz = np.empty((n, 4 * h))
    dh_next = np.zeros(h)
    dc_next = np.zeros(h)
    for t in range(n - 1, -1, -1):
        i = gates[t, :h]
        f = gates[t, h:2 * h]
        g = gates[t, 2 * h:3 * h]
        o = gates[t, 3 * h:]
        tc = cache.tanh_c[t]
        dh = dhs[t] + dh_next
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dzt = dz[t]
        dzt[:h] = dc * g * i * (1.0 - i)
        dzt[h:2 * h] = dc * cache.cs[t] * f * (1.0 - f)
        dzt[2 * h:3 * h] = dc * i * (1.0 - g * g)
        dzt[3 * h:] = dh * tc * o * (1.0 - o)
        dc_next = dc * f
        dh_next = U.T @ dzt
    params.W.grad += dz.T @ cache.xs
    params.U.grad += dz.T @ cache.hs[:-1]
    params.b.grad += dz.sum(axis=0)
    return dz @ params.W.value


class BiLstmEncoder:
    """Stacked bidirectional LSTM.  Each layer emits ``[h_fwd; h_bwd]`` per token."""

    def __init__(self, layers: Sequence[tuple[LstmParams, LstmParams]]):
        if not layers:
            raise ValueError("encoder needs at least one layer")
        self.layers = list(layers)
        for l, (fw, bw) in enumerate(self.layers):
            if fw.hidden != bw.hidden or fw.input_dim != bw.input_dim:
                raise ValueError(f"layer {l}: forward/backward cells differ in shape")
            if l and fw.input_dim != 2 * self.layers[l - 1][0].hidden:
                raise ValueError(f"layer {l}: input dim must be twice the previous hidden size")

    @classmethod
    def init(cls, input_dim: int, hidden: int, num_layers: int, rng) -> "BiLstmEncoder":
        layers = []
        d = input_dim
        for _ in range(num_layers):
            layers.append((LstmParams.init(d, hidden, rng), LstmParams.init(d, hidden, rng)))
            d = 2 * hidden
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0][0].input_dim

    @property
    def output_dim(self) -> int:
        return 2 * self.layers[-1][0].hidden

    def params(self) -> dict[str, Param]:
        out = {}
        for l, (fw, bw) in enumerate(self.layers):
            for k, p in fw.params().items():
                out[f"layer{l}.fwd.{k}"] = p
            for k, p in bw.params().items():
                out[f"layer{l}.bwd.{k}"] = p
        return out

    def forward(self, xs: np.ndarray):
        xs = np.asarray(xs, dtype=DTYPE)
        if xs.ndim != 2 or xs.shape[0] == 0:
            raise ValueError("bilstm_encode needs a non-empty (n, d) input")
        if xs.shape[1] != self.input_dim:
            raise ValueError(f"expected input width {self.input_dim}, got {xs.shape[1]}")
        caches = []
        for fw, bw in self.layers:
            hf, cf = lstm_forward(fw, xs)
            hb, cb = lstm_forward(bw, xs[::-1])
            xs = np.concatenate([hf, hb[::-1]], axis=1)
            caches.append((cf, cb))
        return xs, caches

    def backward(self, caches, dout: np.ndarray) -> np.ndarray:
        for (fw, bw), (cf, cb) in zip(reversed(self.layers), reversed(caches)):
            h = fw.hidden
            dx_f = lstm_backward(fw, cf, dout[:, :h])
            dx_b = lstm_backward(bw, cb, dout[::-1, h:])
            dout = dx_f + dx_b[::-1]
        return dout


def bilstm_encode(encoder: BiLstmEncoder, inputs) -> np.ndarray:
    return encoder.forward(inputs)[0]


def linear_forward(W, b, x):
    """``W x + b`` for one vector, or row-wise for a (n, d) batch."""
    W = np.asarray(W, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    if W.ndim != 2 or b.shape != (W.shape[0],) or x.shape[-1] != W.shape[1]:
        raise ValueError(f"dimension mismatch: W {W.shape}, b {b.shape}, x {x.shape}")
    return x @ W.T + b


def linear_backward(W: Param, b: Param, x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    W.grad += dy.T @ x
    b.grad += dy.sum(axis=0)
    return dy @ W.value


def global_grad_norm(params: Iterable[Param]) -> float:
    return float(np.sqrt(sum(float(np.sum(p.grad * p.grad)) for p in params)))


def clip_grad_norm(params: Iterable[Param], clip: float | None) -> float:
    """Rescale grads in place so their global norm is at most ``clip``."""
    params = list(params)
    norm = global_grad_norm(params)
    if clip is not None and norm > clip:
        scale = clip / norm
        for p in params:
            p.grad *= scale
    return norm


def sgd_step(params: dict[str, Param] | Sequence[Param], lr: float, clip: float | None = 5.0) -> float:
    """Clip by global gradient norm, take one SGD step, reset grads.

    Returns the pre-clip gradient norm.
    """
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    named = params if isinstance(params, dict) else {str(i): p for i, p in enumerate(params)}
    bad = [name for name, p in named.items() if not np.all(np.isfinite(p.grad))]
    if bad:
        raise NonFiniteGradientError(bad)
    norm = clip_grad_norm(named.values(), clip)
    for p in named.values():
        p.value -= lr * p.grad
        p.zero_grad()
    return norm
