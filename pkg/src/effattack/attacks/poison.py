"""Training-time attacks: poisoned labels and tampered parameters."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from ..errors import DomainError, UsageError
from ..rng import generator

DATA_SCHEMES = ("uniform-soft-label",)
MODEL_SCHEMES = ("exit-temperature", "eos-bias")

# weight left on the true class by uniform-soft-label
SOFT_LABEL_KEEP = 0.1


def poison_dataset(dataset, fraction, scheme="uniform-soft-label", seed=0, n_classes=2):
    """Replace the hard labels of a seeded ``floor(fraction * n)`` subset with
    near-uniform targets, teaching exit heads to be under-confident."""
    if scheme not in DATA_SCHEMES:
        raise UsageError(f"unknown poisoning scheme {scheme!r}; expected one of {DATA_SCHEMES}")
    if not 0 <= fraction <= 1:
        raise DomainError(f"poison fraction must lie in [0, 1], got {fraction}")
    if dataset.kind != "gauss-blobs":
        raise UsageError(f"{scheme} needs a classification dataset, got {dataset.kind}")
    n = len(dataset)
    k = math.floor(fraction * n)
    if k == 0:
        return dataset
    chosen = set(int(i) for i in generator(seed, "poison").choice(n, size=k, replace=False))
    soft = list(dataset.soft_targets) if dataset.soft_targets is not None else [None] * n
    uniform = np.full(n_classes, 1.0 / n_classes)
    for i in chosen:
        onehot = np.zeros(n_classes)
        onehot[int(dataset.labels[i])] = 1.0
        soft[i] = (1 - SOFT_LABEL_KEEP) * uniform + SOFT_LABEL_KEEP * onehot
    return replace(dataset, soft_targets=tuple(soft))


def poison_model(model, scheme, magnitude):
    """Tamper with a trained model's parameters.

    ``exit-temperature`` (D1) divides every exit head's weights and bias by
    ``magnitude``, flattening its softmax without moving its argmax.
    ``eos-bias`` (D2) subtracts ``magnitude`` from the EOS logit bias.
    """
    if scheme == "exit-temperature":
        if model.behavior != "D1":
            raise UsageError("exit-temperature poisoning applies to D1 models")
        if not magnitude > 0:
            raise DomainError(f"temperature must be > 0, got {magnitude}")
        updates = {k: v / magnitude for k, v in model.params.items() if k.startswith("head")}
        return model.with_params(updates)
    if scheme == "eos-bias":
        if model.behavior != "D2":
            raise UsageError("eos-bias poisoning applies to D2 models")
        key = f"body.{len(model.stacks['body']) - 2}.b"
        bias = np.array(model.params[key])
        bias[model.spec.eos_id] -= magnitude
        return model.with_params({key: bias})
    raise UsageError(f"unknown model poisoning scheme {scheme!r}; expected one of {MODEL_SCHEMES}")
