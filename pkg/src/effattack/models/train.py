"""Minibatch SGD training for the toy models."""

from __future__ import annotations

import math

import numpy as np

from ..autograd import GradTape, reverse_grad
from ..errors import DomainError, TrainingError, UsageError
from ..rng import generator
from ..tensor import sgd_step
from .core import run_stack, tape_stack
from .detection import tape_conf_logits
from .early_exit import tape_exit_probs
from .gating import tape_gate_score
from .generator import one_hot, tape_step_probs, window

# D4 gate target: send to the heavy path when the light path is wrong or unsure
GATE_CONFIDENCE = 0.75


def _targets(dataset, n_classes):
    out = np.zeros((len(dataset), n_classes))
    for i, y in enumerate(dataset.labels):
        soft = None if dataset.soft_targets is None else dataset.soft_targets[i]
        if soft is None:
            out[i, int(y)] = 1.0
        else:
            out[i] = soft
    return out


def _soft_ce(tape, probs, targets, batch):
    # mean over the batch of -sum_c t_c log p_c
    return tape.scale(tape.sum(tape.mul(targets, tape.log(probs))), -1.0 / batch)


def _bce(tape, p, y, batch, weight=1.0):
    pos = tape.mul(weight * y, tape.log(p))
    neg = tape.mul(weight * (1.0 - y), tape.log(tape.shift(tape.scale(p, -1.0), 1.0)))
    return tape.scale(tape.sum(tape.add(pos, neg)), -1.0 / batch)


def _loss_d1(tape, pvars, model, X, T):
    total = None
    for probs in tape_exit_probs(tape, pvars, model, X):
        term = _soft_ce(tape, probs, T, len(X))
        total = term if total is None else tape.add(total, term)
    return total


def _loss_d2(tape, pvars, model, X, T):
    return _soft_ce(tape, tape_step_probs(tape, pvars, model, X), T, len(X))


def _loss_d3(tape, pvars, model, X, T):
    return _bce(tape, tape.sigmoid(tape_conf_logits(tape, pvars, model, X)), T, len(X))


def _loss_d4_paths(tape, pvars, model, X, T):
    light = _soft_ce(tape, _tape_path(tape, pvars, model, "light", X), T, len(X))
    heavy = _soft_ce(tape, _tape_path(tape, pvars, model, "heavy", X), T, len(X))
    return tape.add(light, heavy)


def _loss_d4_gate(tape, pvars, model, X, T):
    # T columns: route target, per-example class-balancing weight
    s = tape.reshape(tape_gate_score(tape, pvars, model, X), (len(X),))
    return _bce(tape, s, T[:, 0], len(X), weight=T[:, 1])


def _tape_path(tape, pvars, model, name, X):
    return tape_stack(tape, pvars, model, name, X)


def _arrays(model, dataset):
    spec = model.spec
    if spec.behavior in ("D1", "D4"):
        X = np.stack([np.asarray(x, dtype=np.float64) for x in dataset.inputs])
        return X, _targets(dataset, spec.n_classes)
    if spec.behavior == "D2":
        V = spec.vocab_size
        windows, targets = [], []
        for toks in dataset.inputs:
            toks = list(toks)
            for t, tok in enumerate(toks):
                windows.append(one_hot(window(model, toks[:t]), V))
                targets.append(tok)
        T = np.zeros((len(targets), V))
        T[np.arange(len(targets)), targets] = 1.0
        return np.stack(windows), T
    X = np.stack([np.asarray(x, dtype=np.float64) for x in dataset.inputs])
    T = np.zeros((len(dataset), spec.grid))
    for i, cells in enumerate(dataset.labels):
        T[i, list(cells)] = 1.0
    return X, T


def _check_shape(model, X):
    spec = model.spec
    if spec.behavior != "D2" and X.shape[1] != spec.in_dim:
        raise UsageError(f"dataset inputs have width {X.shape[1]}, model expects {spec.in_dim}")


def _sgd(model, X, T, loss_fn, epochs, lr, rng, batch_size, keys=None, phase=""):
    params = dict(model.params)
    n = len(X)
    last = math.nan
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            tape = GradTape()
            pvars = {k: tape.leaf(v, k) for k, v in params.items()}
            loss = loss_fn(tape, pvars, model, X[idx], T[idx])
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingError(epoch, f"non-finite {phase}loss")
            total += value * len(idx)
            if lr > 0:
                grads = reverse_grad(tape, loss)
                if keys is not None:
                    grads = {k: g for k, g in grads.items() if isinstance(k, str) and k.split(".")[0] in keys}
                params = sgd_step(params, grads, lr)
                if not all(np.all(np.isfinite(p)) for p in params.values()):
                    raise TrainingError(epoch, "non-finite parameters")
        last = total / n
    return model.with_params(params), last


def train_model(model, dataset, epochs=50, lr=0.1, seed=0, batch_size=16):
    """Train a copy of ``model`` and return ``(trained, final mean loss)``.

    Shuffling is driven by ``seed`` only, so repeated calls are identical.
    D1 sums the cross-entropy of all exit heads with equal weight. D4
    trains both paths first, then fits the gate to flag inputs the light
    path gets wrong or answers with confidence below ``GATE_CONFIDENCE``.
    Heavy-route targets are rare, so the gate loss is class-balanced.
    """
    if len(dataset) == 0:
        raise UsageError("empty dataset")
    if epochs < 1:
        raise DomainError(f"epochs must be >= 1, got {epochs}")
    if lr < 0:
        raise DomainError(f"learning rate must be >= 0, got {lr}")
    rng = generator(seed, "shuffle")
    X, T = _arrays(model, dataset)
    _check_shape(model, X)
    behavior = model.behavior
    if behavior == "D4":
        model, path_loss = _sgd(model, X, T, _loss_d4_paths, epochs, lr, rng, batch_size,
                                keys={"light", "heavy"}, phase="path ")
        gate_T = gate_targets(model, X, dataset.labels)
        gate_T = np.stack([gate_T, balance_weights(gate_T)], axis=1)
        model, gate_loss = _sgd(model, X, gate_T, _loss_d4_gate, epochs, lr, rng, batch_size,
                                keys={"gate"}, phase="gate ")
        return model, path_loss + gate_loss
    loss_fn = {"D1": _loss_d1, "D2": _loss_d2, "D3": _loss_d3}[behavior]
    return _sgd(model, X, T, loss_fn, epochs, lr, rng, batch_size)


def balance_weights(y):
    """Per-example weights giving both route classes equal total mass."""
    y = np.asarray(y, dtype=np.float64)
    pos = y.mean()
    if pos in (0.0, 1.0):
        return np.ones_like(y)
    return np.where(y > 0.5, 0.5 / pos, 0.5 / (1 - pos))


def gate_targets(model, X, labels):
    out = np.zeros(len(X))
    for i, (x, y) in enumerate(zip(X, labels)):
        probs, _ = run_stack(model, "light", x)
        if int(np.argmax(probs)) != int(y) or float(np.max(probs)) < GATE_CONFIDENCE:
            out[i] = 1.0
    return out

