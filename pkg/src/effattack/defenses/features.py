"""Fixed-length feature vectors read off inference traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import UsageError

FEATURE_NAMES = {
    "D1": None,  # per-exit confidences, then the normalised exit index
    "D2": ("eos_mean", "eos_min", "length"),
    "D3": ("passing", "confidence_mean"),
    "D4": ("gate_score",),
}


@dataclass(frozen=True)
class TraceFeatures:
    behavior: str
    values: np.ndarray

    def __len__(self):
        return len(self.values)


def _need(trace, *names):
    missing = [n for n in names if getattr(trace, n) is None]
    if missing:
        raise UsageError(f"incomplete {trace.behavior} trace: missing {', '.join(missing)}")


def featurize_trace(trace, behavior=None) -> TraceFeatures:
    """Summarise a trace as a real vector whose width depends only on behavior.

    D1: max softmax confidence at each exit (zero for exits not reached)
    followed by ``exit_index / (n_exits - 1)``. D2: mean and minimum EOS
    probability over the decoding steps, and ``length / max_len``. D3:
    number of candidates over the confidence threshold and their mean
    confidence over all cells. D4: the gate score.
    """
    if behavior is not None and trace.behavior != behavior:
        raise UsageError(f"expected a {behavior} trace, got {trace.behavior}")
    b = trace.behavior
    if b == "D1":
        _need(trace, "exit_index", "n_exits")
        n = trace.n_exits
        conf = np.zeros(n)
        conf[: len(trace.exit_confidences)] = trace.exit_confidences
        pos = trace.exit_index / (n - 1) if n > 1 else 0.0
        vals = np.append(conf, pos)
    elif b == "D2":
        _need(trace, "length", "max_len")
        eos = np.asarray(trace.eos_probs, dtype=np.float64)
        vals = np.array([eos.mean() if eos.size else 0.0, eos.min() if eos.size else 0.0,
                         trace.length / trace.max_len])
    elif b == "D3":
        _need(trace, "passing_count")
        scores = np.asarray(trace.candidate_scores, dtype=np.float64)
        vals = np.array([float(trace.passing_count), scores.mean() if scores.size else 0.0])
    elif b == "D4":
        _need(trace, "gate_score")
        vals = np.array([float(trace.gate_score)])
    else:
        raise UsageError(f"unknown behavior {b!r}")
    vals.setflags(write=False)
    return TraceFeatures(b, vals)
