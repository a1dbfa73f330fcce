"""D1: early-exit classifier."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from .core import (
    InferenceResult,
    InferenceTrace,
    check_input,
    check_policy,
    fits,
    run_stack,
    tape_stack,
)
from ..tensor import stack_flops


def n_exits(model):
    return len(model.spec.exit_positions)


def early_exit_infer(model, x, tau=0.9, ceiling=None, policy="abort-and-flag") -> InferenceResult:
    """Run backbone segments in order and stop at the first confident exit.

    An exit fires when its max softmax probability is ``>= tau``; the last
    exit always fires. Only executed segments and heads are charged.

    With a FLOP ``ceiling``, the run stops before any segment or head that
    would push the total past it. ``policy="exit-now"`` then answers from
    the deepest completed exit; ``"abort-and-flag"`` returns no output.
    """
    model.require("D1")
    if not 0 < tau <= 1:
        raise DomainError(f"tau must lie in (0, 1], got {tau}")
    check_policy(policy)
    h = check_input(model, x)
    trace = InferenceTrace("D1", n_exits=n_exits(model))
    spent, label = 0, None
    last = n_exits(model) - 1
    for j in range(last + 1):
        for stage in (f"seg{j}", f"head{j}"):
            if not fits(spent, stack_flops(model.stacks[stage]), ceiling):
                out = label if policy == "exit-now" else None
                return InferenceResult(out, trace, spent, breached=True)
            if stage.startswith("seg"):
                h, f = run_stack(model, stage, h)
            else:
                probs, f = run_stack(model, stage, h)
            spent += f
            trace.cumulative_flops.append(spent)
        conf = float(np.max(probs))
        label = int(np.argmax(probs))
        trace.exit_confidences.append(conf)
        if conf >= tau or j == last:
            trace.exit_index = j
            return InferenceResult(label, trace, spent)
    raise AssertionError("unreachable")


def exit_probabilities(model, x):
    """Softmax output of every exit head, ignoring the exit rule."""
    model.require("D1")
    h = check_input(model, x)
    probs = []
    for j in range(n_exits(model)):
        h, _ = run_stack(model, f"seg{j}", h)
        p, _ = run_stack(model, f"head{j}", h)
        probs.append(p)
    return probs


def tape_exit_probs(tape, pvars, model, x):
    """Tape forward through all exits; ``x`` may be a batch."""
    probs = []
    h = x
    for j in range(n_exits(model)):
        h = tape_stack(tape, pvars, model, f"seg{j}", h)
        probs.append(tape_stack(tape, pvars, model, f"head{j}", h))
    return probs
