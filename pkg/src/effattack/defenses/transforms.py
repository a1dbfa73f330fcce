"""Input transformations applied before inference."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DomainError, UsageError
from ..models.vocab import DEFAULT_ALPHABET


@dataclass(frozen=True)
class Quantize:
    """Snap each coordinate to one of ``2**bits`` evenly spaced levels on [lo, hi]."""

    bits: int
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if self.bits < 1:
            raise DomainError(f"bits must be >= 1, got {self.bits}")
        if not (math.isfinite(self.lo) and math.isfinite(self.hi) and self.lo < self.hi):
            raise DomainError("quantize needs finite domain bounds with lo < hi")


@dataclass(frozen=True)
class MeanSmooth:
    """Centred moving average; the window shrinks at the edges."""

    window: int

    def __post_init__(self):
        if self.window < 1:
            raise DomainError(f"window must be >= 1, got {self.window}")


@dataclass(frozen=True)
class TextNormalize:
    """Drop characters outside ``alphabet`` and keep at most ``max_tokens`` characters."""

    max_tokens: int
    alphabet: str = DEFAULT_ALPHABET

    def __post_init__(self):
        if self.max_tokens < 1:
            raise DomainError(f"max_tokens must be >= 1, got {self.max_tokens}")


TRANSFORMS = {"quantize": Quantize, "mean_smooth": MeanSmooth, "text_normalize": TextNormalize}


def make_transform(name, **params):
    try:
        cls = TRANSFORMS[name]
    except KeyError:
        raise UsageError(f"unknown transform {name!r}; expected one of {sorted(TRANSFORMS)}") from None
    return cls(**params)


def _smooth(x, w):
    left, right = (w - 1) // 2, w // 2
    padded = np.concatenate([np.zeros(left), x, np.zeros(right)])
    ones = np.concatenate([np.zeros(left), np.ones_like(x), np.zeros(right)])
    kernel = np.ones(w)
    return np.convolve(padded, kernel, "valid") / np.convolve(ones, kernel, "valid")


def transform_input(x, transform):
    """Apply ``transform`` to a vector input (quantize, mean_smooth) or a
    prompt string (text_normalize)."""
    text = isinstance(transform, TextNormalize)
    if text != isinstance(x, str):
        kind = "text" if isinstance(x, str) else "vector"
        raise UsageError(f"{type(transform).__name__} cannot be applied to a {kind} input")
    if text:
        kept = "".join(ch for ch in x if ch in transform.alphabet)
        return kept[: transform.max_tokens]
    x = np.asarray(x, dtype=np.float64)
    if isinstance(transform, Quantize):
        levels = 2 ** transform.bits - 1
        span = transform.hi - transform.lo
        k = np.round((np.clip(x, transform.lo, transform.hi) - transform.lo) / span * levels)
        return np.clip(transform.lo + k * span / levels, transform.lo, transform.hi)
    if isinstance(transform, MeanSmooth):
        if transform.window == 1:
            return x.copy()
        return _smooth(x, transform.window)
    raise UsageError(f"unknown transform {transform!r}")
