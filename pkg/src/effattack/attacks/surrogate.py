"""Differentiable stand-ins for inference cost.

Each surrogate is a scalar that goes *down* as the true (discrete) cost
goes up, so attacks minimise it:

* D1: sum over exits of the max softmax probability (keep every exit below tau).
* D2: sum over decoding steps of the EOS probability (delay termination).
* D3: minus the summed sigmoid margin of every candidate over the
  confidence threshold (push more boxes past it).
* D4: minus the gate score (force the heavy route).
"""

from __future__ import annotations

import numpy as np

from ..autograd import GradTape, reverse_grad
from ..errors import UsageError
from ..models.core import Thresholds, check_input, param_leaves
from ..models.detection import tape_conf_logits
from ..models.early_exit import tape_exit_probs
from ..models.gating import tape_gate_score
from ..models.generator import check_prompt, generate, one_hot, tape_step_probs
from ..models.vocab import PAD_ID
from ..tensor import logit


def _d1(tape, pvars, model, x, thresholds):
    total = None
    for probs in tape_exit_probs(tape, pvars, model, x):
        m = tape.max(probs)
        total = m if total is None else tape.add(total, m)
    return total


def _d3(tape, pvars, model, x, thresholds):
    margin = tape.shift(tape_conf_logits(tape, pvars, model, x), -logit(thresholds.conf))
    return tape.scale(tape.sum(tape.sigmoid(margin)), -1.0)


def _d4(tape, pvars, model, x, thresholds):
    return tape.scale(tape.sum(tape_gate_score(tape, pvars, model, x)), -1.0)


def eos_surrogate_onehot(model, prompt_onehot, generated):
    """D2 surrogate as a function of a (relaxed) one-hot prompt matrix.

    ``generated`` holds the tokens emitted at each decoding step (EOS
    included); they are treated as constants, so only windows that overlap
    the prompt carry gradient. Returns ``(value, grad)``.
    """
    model.require("D2")
    spec = model.spec
    k, V = spec.context, spec.vocab_size
    prompt_onehot = np.asarray(prompt_onehot, dtype=np.float64).reshape(-1, V)
    P = len(prompt_onehot)
    tape = GradTape()
    pvars = param_leaves(tape, model, trainable=False)
    x = tape.leaf(prompt_onehot, "x")
    pads = one_hot([PAD_ID] * k, V)
    # emitted tokens feed later windows; the last one never does
    fed = one_hot(list(generated[:-1]), V) if len(generated) > 1 else np.zeros((0, V))
    seq = tape.concat(pads, x, fed)
    total = None
    for i in range(len(generated)):
        win = tape.slice(seq, P + i, P + i + k)
        p_eos = tape.take(tape_step_probs(tape, pvars, model, win), spec.eos_id)
        total = p_eos if total is None else tape.add(total, p_eos)
    if total is None:
        return 0.0, np.zeros_like(prompt_onehot)
    return float(total.value), reverse_grad(tape, total)["x"]


def surrogate_loss(model, x, thresholds: Thresholds | None = None, behavior=None):
    """Surrogate value and its exact gradient w.r.t. the input.

    For D2, ``x`` is a token list and the gradient is taken w.r.t. its
    one-hot encoding (shape ``(len(x), vocab)``), with the decoding steps
    fixed to the greedy run from ``x``. Passing ``behavior`` asserts the
    model kind.
    """
    if behavior is not None and model.behavior != behavior:
        raise UsageError(f"surrogate for {behavior} given a {model.behavior} model")
    thresholds = thresholds or Thresholds()
    if model.behavior == "D2":
        prompt = check_prompt(model, x)
        res = generate(model, prompt)
        return eos_surrogate_onehot(model, one_hot(prompt, model.spec.vocab_size), res.trace.tokens)
    fn = {"D1": _d1, "D3": _d3, "D4": _d4}.get(model.behavior)
    if fn is None:
        raise UsageError(f"no surrogate for behavior {model.behavior}")
    tape = GradTape()
    pvars = param_leaves(tape, model, trainable=False)
    xv = tape.leaf(check_input(model, x), "x")
    loss = fn(tape, pvars, model, xv, thresholds)
    return float(loss.value), reverse_grad(tape, loss)["x"]

