"""D4: gate that routes each input to a light or a heavy classifier."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..tensor import stack_flops
from .core import InferenceResult, InferenceTrace, check_input, check_policy, fits, run_stack, tape_stack


def gate_score(model, x) -> float:
    s, _ = run_stack(model, "gate", check_input(model, x))
    return float(s[0])


def gated_infer(model, x, theta=0.5, ceiling=None, policy="abort-and-flag") -> InferenceResult:
    """Score the gate, then run the heavy path iff ``score >= theta``.

    Under a FLOP ceiling, ``policy="exit-now"`` falls back to the light
    path when the heavy one does not fit; otherwise the run aborts.
    """
    model.require("D4")
    if not 0 <= theta <= 1:
        raise DomainError(f"theta must lie in [0, 1], got {theta}")
    check_policy(policy)
    x = check_input(model, x)
    trace = InferenceTrace("D4")
    spent = 0
    if not fits(spent, stack_flops(model.stacks["gate"]), ceiling):
        return InferenceResult(None, trace, spent, breached=True)
    s, spent = run_stack(model, "gate", x)
    trace.cumulative_flops.append(spent)
    trace.gate_score = float(s[0])
    route = "heavy" if trace.gate_score >= theta else "light"
    breached = False
    if not fits(spent, stack_flops(model.stacks[route]), ceiling):
        breached = True
        if policy != "exit-now" or route == "light" or not fits(spent, stack_flops(model.stacks["light"]), ceiling):
            return InferenceResult(None, trace, spent, breached=True)
        route = "light"
    trace.route = route
    probs, f = run_stack(model, route, x)
    spent += f
    trace.cumulative_flops.append(spent)
    return InferenceResult(int(np.argmax(probs)), trace, spent, breached=breached)


def tape_gate_score(tape, pvars, model, x):
    return tape_stack(tape, pvars, model, "gate", x)
