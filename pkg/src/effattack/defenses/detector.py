"""Logistic detector that separates benign from attacked inference traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError
from ..rng import generator
from ..tensor import sigmoid

HOLDOUT_FRACTION = 0.2


@dataclass(frozen=True)
class DefenseVerdict:
    flag: str  # "benign" | "adversarial"
    score: float

    @property
    def adversarial(self) -> bool:
        return self.flag == "adversarial"


@dataclass(frozen=True)
class Detector:
    """``score = sigmoid(w . f + b)``; a trace is flagged iff ``score >= threshold``.

    Input standardisation from training is already folded into ``weights``
    and ``bias``.
    """

    weights: np.ndarray
    bias: float
    threshold: float
    seed: int = 0
    n_benign: int = 0
    n_adversarial: int = 0
    holdout_balanced_accuracy: float | None = None

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise UsageError(f"detector threshold must lie in (0, 1), got {self.threshold}")

    @property
    def dim(self):
        return len(self.weights)

    def score(self, features) -> float:
        f = _as_vector(features)
        if f.shape != (self.dim,):
            raise UsageError(f"detector expects {self.dim} features, got {f.shape[0]}")
        return float(sigmoid(np.dot(self.weights, f) + self.bias))


def _as_vector(features):
    return np.asarray(getattr(features, "values", features), dtype=np.float64).reshape(-1)


def balanced_accuracy(scores_benign, scores_adv, threshold) -> float:
    tnr = np.mean(np.asarray(scores_benign) < threshold)
    tpr = np.mean(np.asarray(scores_adv) >= threshold)
    return float((tnr + tpr) / 2)


def _split(n, rng):
    order = rng.permutation(n)
    k = int(round(HOLDOUT_FRACTION * n)) if n >= 2 else 0
    k = max(k, 1) if n >= 2 else 0
    return order[k:], order[:k]


def _pick_threshold(sb, sa):
    """Cut with the best balanced accuracy; ties go to the cut nearest 0.5."""
    s = np.unique(np.concatenate([sb, sa]))
    cands = np.concatenate([[0.5], (s[:-1] + s[1:]) / 2])
    cands = cands[(cands > 0) & (cands < 1)]
    best = max(cands, key=lambda t: (balanced_accuracy(sb, sa, t), -abs(t - 0.5)))
    return float(best), balanced_accuracy(sb, sa, best)


def train_detector(benign, adversarial, seed=0, epochs=500, lr=0.5) -> Detector:
    """Fit a logistic scorer by full-batch gradient descent.

    Each class is split 80/20 with a seeded shuffle; weights are fit on the
    80% part (classes weighted equally), and the threshold is the one that
    maximises balanced accuracy on the 20% part. With fewer than two samples
    in a class the threshold is chosen on the training data instead.
    """
    B = np.array([_as_vector(f) for f in benign])
    A = np.array([_as_vector(f) for f in adversarial])
    if len(B) == 0 or len(A) == 0:
        raise UsageError("detector training needs both benign and adversarial traces")
    if B.shape[1:] != A.shape[1:]:
        raise UsageError("benign and adversarial features differ in width")
    rng = generator(seed, "detector")
    tb, hb = _split(len(B), rng)
    ta, ha = _split(len(A), rng)
    X = np.concatenate([B[tb], A[ta]])
    y = np.concatenate([np.zeros(len(tb)), np.ones(len(ta))])
    sample_w = np.where(y == 1, 0.5 / len(ta), 0.5 / len(tb))
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    Z = (X - mu) / sd
    w = rng.uniform(-0.01, 0.01, size=X.shape[1])
    b = 0.0
    for _ in range(epochs):
        err = (sigmoid(Z @ w + b) - y) * sample_w
        w = w - lr * (Z.T @ err)
        b = b - lr * err.sum()
    weights = w / sd
    bias = float(b - np.dot(weights, mu))
    if len(hb) and len(ha):
        sb, sa = B[hb] @ weights + bias, A[ha] @ weights + bias
    else:
        sb, sa = B[tb] @ weights + bias, A[ta] @ weights + bias
    threshold, bacc = _pick_threshold(sigmoid(sb), sigmoid(sa))
    weights.setflags(write=False)
    return Detector(weights, bias, threshold, seed, len(B), len(A), bacc)


def classify_trace(detector: Detector, features) -> DefenseVerdict:
    s = detector.score(features)
    return DefenseVerdict("adversarial" if s >= detector.threshold else "benign", s)
