"""Dense numeric kernel with exact FLOP accounting.

Tensors are plain float64 numpy arrays. Every forward op returns its
output together with the number of floating-point operations it performed
under these conventions:

======================  ===========================================
multiply-accumulate     2 FLOPs
bias add                1 per element
relu                    1 per element
sigmoid                 4 per element (negate, exp, add, divide)
softmax                 4n - 1 (n sub, n exp, n-1 add, n div)
embedding lookup        0 (memory gather, no arithmetic)
======================  ===========================================

Control-flow decisions (argmax, threshold comparisons) are not charged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, DomainError

LAYER_KINDS = ("dense", "relu", "sigmoid", "softmax", "embedding-lookup")

# cross-entropy floor against log(0)
CE_FLOOR = 1e-12


def as_tensor(values) -> np.ndarray:
    """Coerce to a float64 array and reject non-finite entries."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if not np.all(np.isfinite(arr)):
        raise DomainError("tensor contains NaN or Inf")
    return arr


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    has_bias: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise DomainError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise DimensionError(f"dims must be >= 1, got {self.in_dim}->{self.out_dim}", self.kind)
        if self.kind in ("relu", "sigmoid", "softmax") and self.in_dim != self.out_dim:
            raise DimensionError(f"{self.kind} requires in_dim == out_dim", self.kind)

    @property
    def flops(self) -> int:
        return layer_flops(self)


def layer_flops(layer: LayerSpec) -> int:
    """Closed-form FLOP count of one application of ``layer`` to a vector."""
    n = layer.out_dim
    if layer.kind == "dense":
        return 2 * layer.in_dim * layer.out_dim + (n if layer.has_bias else 0)
    if layer.kind == "relu":
        return n
    if layer.kind == "sigmoid":
        return 4 * n
    if layer.kind == "softmax":
        return 4 * n - 1
    return 0


def stack_flops(layers) -> int:
    return sum(layer_flops(layer) for layer in layers)


def dense_forward(layer: LayerSpec, weights, bias, x, name=None):
    """Affine map ``W @ x (+ b)``. Returns ``(output, flops)``."""
    label = name or f"dense {layer.in_dim}->{layer.out_dim}"
    if layer.kind != "dense":
        raise DimensionError(f"expected a dense layer, got {layer.kind}", label)
    W = np.asarray(weights, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if W.shape != (layer.out_dim, layer.in_dim):
        raise DimensionError(
            f"weight shape {W.shape} != {(layer.out_dim, layer.in_dim)}", label)
    if x.shape != (layer.in_dim,):
        raise DimensionError(f"input shape {x.shape} != {(layer.in_dim,)}", label)
    out = W @ x
    if layer.has_bias:
        if bias is None:
            raise DimensionError("layer declares a bias but none was given", label)
        b = np.asarray(bias, dtype=np.float64)
        if b.shape != (layer.out_dim,):
            raise DimensionError(f"bias shape {b.shape} != {(layer.out_dim,)}", label)
        out = out + b
    return out, layer_flops(layer)


def relu(x):
    return np.maximum(x, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # split by sign so exp never overflows
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def logit(p):
    return math.log(p) - math.log1p(-p)


_ACTIVATIONS = {"relu": relu, "sigmoid": sigmoid, "softmax": softmax}


def activation_forward(kind: str, x):
    """Apply an elementwise/normalising activation to a vector."""
    if kind not in _ACTIVATIONS:
        raise DomainError(f"unknown activation {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {x.shape}", kind)
    if x.size == 0:
        raise DomainError(f"{kind} of an empty vector")
    n = x.size
    return _ACTIVATIONS[kind](x), layer_flops(LayerSpec(kind, n, n))


def cross_entropy(probs, target_index: int) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if not 0 <= target_index < probs.shape[-1]:
        raise DomainError(f"target index {target_index} out of range for {probs.shape[-1]} classes")
    return float(-math.log(probs[target_index] + CE_FLOOR))


def sgd_step(params, grads, lr: float):
    """Plain gradient descent: returns a new mapping ``p - lr * g``.

    ``params`` and ``grads`` are dicts keyed alike; parameters without a
    gradient entry are passed through untouched.
    """
    if not lr > 0:
        raise DomainError(f"learning rate must be > 0, got {lr}")
    out = {}
    for key, p in params.items():
        g = grads.get(key)
        if g is None:
            out[key] = p
            continue
        g = np.asarray(g, dtype=np.float64)
        if g.shape != p.shape:
            raise DimensionError(f"grad shape {g.shape} != param shape {p.shape}", key)
        out[key] = p - lr * g
    return out
