"""GRU cell, dense layer, dropout and weight initialization.

Each building block comes in two routes: a plain numpy function used for
inference and for direct numeric checks, and a graph builder operating on
:class:`~crossrec.numcore.tensor.Tensor` used during training. Both follow
the same clamping conventions, so their outputs agree bit for bit.

Matrices are laid out row-convention: an input batch ``(n, d_in)`` is
multiplied as ``x @ W`` with ``W`` of shape ``(d_in, d_out)``.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import NumericError, Tensor

ACTIVATIONS = ("identity", "relu", "sigmoid", "tanh", "exp", "softmax")


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Glorot uniform sample of shape ``(fan_in, fan_out)``."""
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=(fan_in, fan_out))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -T.PREACT_CLAMP, T.PREACT_CLAMP)))


@dataclass
class GruWeights:
    """Update, reset and candidate weights of one GRU layer.

    ``w_*`` act on the input, ``u_*`` on the previous hidden state. Biases
    start at zero.
    """

    w_z: np.ndarray
    u_z: np.ndarray
    b_z: np.ndarray
    w_r: np.ndarray
    u_r: np.ndarray
    b_r: np.ndarray
    w_h: np.ndarray
    u_h: np.ndarray
    b_h: np.ndarray

    @classmethod
    def init(cls, rng: np.random.Generator, d_in: int, d_hidden: int) -> "GruWeights":
        def w():
            return glorot(rng, d_in, d_hidden)

        def u():
            return glorot(rng, d_hidden, d_hidden)

        def b():
            return np.zeros(d_hidden)

        return cls(w(), u(), b(), w(), u(), b(), w(), u(), b())

    def validate(self) -> None:
        d_in, d_h = self.w_z.shape
        for f in fields(self):
            a = getattr(self, f.name)
            want = (d_in, d_h) if f.name.startswith("w") else (d_h, d_h) if f.name.startswith("u") else (d_h,)
            if a.shape != want:
                raise ValueError(f"GruWeights.{f.name}: shape {a.shape}, expected {want}")


def gru_cell(x: np.ndarray, h_prev: np.ndarray, w: GruWeights) -> np.ndarray:
    """One GRU step. ``x`` is ``(d_in,)`` or ``(n, d_in)``, ``h_prev`` alike."""
    z = _sigmoid(x @ w.w_z + h_prev @ w.u_z + w.b_z)
    r = _sigmoid(x @ w.w_r + h_prev @ w.u_r + w.b_r)
    h_hat = np.tanh(x @ w.w_h + (r * h_prev) @ w.u_h + w.b_h)
    h = (1.0 - z) * h_prev + z * h_hat
    if not np.all(np.isfinite(h)):
        raise NumericError("numeric overflow in gru_cell")
    return h


def gru_cell_graph(x: Tensor, h_prev: Tensor, w: dict) -> Tensor:
    """Graph twin of :func:`gru_cell`; ``w`` maps GruWeights field names to Tensors."""
    z = T.sigmoid(T.matmul(x, w["w_z"]) + T.matmul(h_prev, w["u_z"]) + w["b_z"])
    r = T.sigmoid(T.matmul(x, w["w_r"]) + T.matmul(h_prev, w["u_r"]) + w["b_r"])
    h_hat = T.tanh(T.matmul(x, w["w_h"]) + T.matmul(T.mul(r, h_prev), w["u_h"]) + w["b_h"])
    return T.add(T.mul(1.0 - z, h_prev), T.mul(z, h_hat))


def dense(x: np.ndarray, w: np.ndarray, b: np.ndarray, activation: str = "identity") -> np.ndarray:
    """Affine map ``x @ w + b`` followed by an elementwise (or softmax) activation."""
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    a = x @ w + b
    if activation == "relu":
        a = np.maximum(a, 0.0)
    elif activation == "sigmoid":
        a = _sigmoid(a)
    elif activation == "tanh":
        a = np.tanh(a)
    elif activation == "exp":
        a = np.exp(np.clip(a, -T.PREACT_CLAMP, T.PREACT_CLAMP))
    elif activation == "softmax":
        e = np.exp(a - a.max(axis=-1, keepdims=True))
        a = e / e.sum(axis=-1, keepdims=True)
    if not np.all(np.isfinite(a)):
        raise NumericError("numeric overflow in dense")
    return a


def dense_graph(x: Tensor, w: Tensor, b: Tensor, activation: str = "identity") -> Tensor:
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    a = T.add(T.matmul(x, w), b)
    if activation == "relu":
        return T.relu(a)
    if activation == "sigmoid":
        return T.sigmoid(a)
    if activation == "tanh":
        return T.tanh(a)
    if activation == "exp":
        return T.exp(a)
    if activation == "softmax":
        return T.softmax(a, axis=-1)
    return a


def dropout(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: zero with probability ``rate``, else scale by 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    keep = rng.random(x.shape) >= rate
    return x * keep / (1.0 - rate)


def dropout_graph(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Train-mode dropout on a graph tensor; the mask is a constant."""
    if rate == 0.0:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return T.mul(x, Tensor(keep))
