"""Multilayer perceptron with hand-written forward and backward passes.

tanh on hidden layers (smooth everywhere, which keeps finite-difference
gradient checks clean), linear output. Weights are (fan_in, fan_out) so a
batch of row vectors flows left to right: X @ W + b.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadConfigError, ShapeMismatchError
from .linalg import matmul


@dataclass
class EncoderParams:
    layer_dims: tuple            # (d_in, h1, ..., d_out)
    weights: list                # per layer, (fan_in, fan_out) float64
    biases: list                 # per layer, (fan_out,) float64

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "EncoderParams":
        return EncoderParams(self.layer_dims,
                             [w.copy() for w in self.weights],
                             [b.copy() for b in self.biases])


@dataclass
class ForwardCache:
    inputs: list        # per layer, the matrix fed into X @ W + b
    activations: list   # per hidden layer, tanh output (reused for the derivative)


@dataclass
class ParamGrads:
    weights: list
    biases: list


def init_params(layer_dims, seed: int) -> EncoderParams:
    """Zero-mean normal weights with std 1/sqrt(fan_in); zero biases."""
    dims = tuple(int(d) for d in layer_dims)
    if len(dims) < 2:
        raise BadConfigError("layer_dims needs at least input and output dims")
    if any(d < 1 for d in dims):
        raise BadConfigError("all layer dims must be >= 1")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out, dtype=np.float64))
    return EncoderParams(dims, weights, biases)


def forward(p: EncoderParams, views: np.ndarray):
    """Embed a batch of rows; returns (embeddings, cache for backward).

    Embeddings are NOT normalized here; similarity construction owns that.
    """
    x = np.asarray(views, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != p.layer_dims[0]:
        raise ShapeMismatchError(
            f"views shape {x.shape} incompatible with input dim {p.layer_dims[0]}"
        )
    inputs, activations = [], []
    for li in range(p.n_layers):
        inputs.append(x)
        z = matmul(x, p.weights[li]) + p.biases[li]
        if li < p.n_layers - 1:
            x = np.tanh(z)
            activations.append(x)
        else:
            x = z
    return x, ForwardCache(inputs, activations)


def backward(p: EncoderParams, cache: ForwardCache,
             grad_embeddings: np.ndarray) -> ParamGrads:
    """Chain rule from d(loss)/d(embeddings) back to every weight and bias."""
    g = np.asarray(grad_embeddings, dtype=np.float64)
    if g.shape != (cache.inputs[0].shape[0], p.layer_dims[-1]):
        raise ShapeMismatchError("grad_embeddings shape mismatch")
    w_grads = [None] * p.n_layers
    b_grads = [None] * p.n_layers
    dz = g
    for li in range(p.n_layers - 1, -1, -1):
        w_grads[li] = matmul(cache.inputs[li].T, dz)
        b_grads[li] = np.sum(dz, axis=0)
        if li > 0:
            dx = matmul(dz, p.weights[li].T)
            a = cache.activations[li - 1]
            dz = dx * (1.0 - a * a)
    return ParamGrads(w_grads, b_grads)


@dataclass
class SgdState:
    w_velocity: list
    b_velocity: list

    @classmethod
    def zeros_like(cls, p: EncoderParams) -> "SgdState":
        return cls([np.zeros_like(w) for w in p.weights],
                   [np.zeros_like(b) for b in p.biases])


def sgd_step(p: EncoderParams, grads: ParamGrads, lr: float, momentum: float,
             state: SgdState):
    """Classic momentum: v <- momentum*v + g; p <- p - lr*v."""
    if lr <= 0:
        raise BadConfigError("lr must be > 0")
    if not 0 <= momentum < 1:
        raise BadConfigError("momentum must be in [0, 1)")
    new_w, new_b, vw, vb = [], [], [], []
    for w, g, v in zip(p.weights, grads.weights, state.w_velocity):
        v2 = momentum * v + g
        vw.append(v2)
        new_w.append(w - lr * v2)
    for b, g, v in zip(p.biases, grads.biases, state.b_velocity):
        v2 = momentum * v + g
        vb.append(v2)
        new_b.append(b - lr * v2)
    return EncoderParams(p.layer_dims, new_w, new_b), SgdState(vw, vb)
