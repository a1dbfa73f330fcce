"""D2: greedy autoregressive generator over a sliding character window."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError
from ..tensor import stack_flops
from .core import InferenceResult, InferenceTrace, check_policy, fits, run_stack, tape_stack
from .vocab import PAD_ID


def step_flops(model) -> int:
    return stack_flops(model.stacks["embed"]) + stack_flops(model.stacks["body"])


def window(model, seq):
    """Last ``context`` tokens of ``seq``, left-padded with PAD."""
    k = model.spec.context
    padded = [PAD_ID] * k + list(seq)
    return tuple(padded[-k:])


def next_token_probs(model, context):
    """Softmax over the vocabulary for one context window, and its FLOPs."""
    E = model.params["embed.0.E"]
    emb = E[list(context)].reshape(-1)  # gather: no arithmetic
    probs, f = run_stack(model, "body", emb)
    return probs, f + stack_flops(model.stacks["embed"])


def _step(model, context):
    # the model is immutable, so per-window results can be memoised
    hit = model._step_cache.get(context)
    if hit is None:
        probs, f = next_token_probs(model, context)
        hit = (int(np.argmax(probs)), float(probs[model.spec.eos_id]), f)
        model._step_cache[context] = hit
    return hit


def check_prompt(model, prompt):
    V = model.spec.vocab_size
    prompt = [int(t) for t in prompt]
    if any(not 0 <= t < V for t in prompt):
        raise DomainError(f"prompt token outside vocabulary of size {V}")
    return prompt


def _rollout(model, context, L):
    """Greedy tokens and EOS probabilities from a window, up to ``L`` steps.

    Decoding only ever looks at the last ``context`` tokens, so the whole
    run is a function of the prompt's final window and can be memoised.
    """
    key = ("rollout", context, L)
    hit = model._step_cache.get(key)
    if hit is None:
        tokens, eos_probs = [], []
        win = context
        for _ in range(L):
            tok, p_eos, _ = _step(model, win)
            tokens.append(tok)
            eos_probs.append(p_eos)
            if tok == model.spec.eos_id:
                break
            win = win[1:] + (tok,)
        hit = (tuple(tokens), tuple(eos_probs))
        model._step_cache[key] = hit
    return hit


def generate(model, prompt, max_len=None, ceiling=None, policy="abort-and-flag") -> InferenceResult:
    """Greedy decode until EOS or ``max_len`` steps.

    The output is the list of generated tokens without the EOS; the trace
    records every emitted token (EOS included) and the EOS probability at
    each step. Cost is ``steps * step_flops``. Under a ceiling, a step runs
    only if its cost still fits.
    """
    model.require("D2")
    check_policy(policy)
    L = model.spec.max_len if max_len is None else int(max_len)
    if L < 1:
        raise DomainError(f"max length must be >= 1, got {L}")
    seq = check_prompt(model, prompt)
    tokens, eos_probs = _rollout(model, window(model, seq), L)
    cost = step_flops(model)
    n = len(tokens)
    breached = False
    if ceiling is not None and not fits((n - 1) * cost, cost, ceiling):
        n = max(0, int(ceiling // cost))
        breached = True
    trace = InferenceTrace("D2", max_len=L)
    trace.tokens = list(tokens[:n])
    trace.eos_probs = list(eos_probs[:n])
    trace.cumulative_flops = [cost * (i + 1) for i in range(n)]
    trace.length = n
    generated = [t for t in trace.tokens if t != model.spec.eos_id]
    if breached:
        return InferenceResult(generated if policy == "exit-now" else None, trace, n * cost, breached=True)
    return InferenceResult(generated, trace, n * cost)


def one_hot(tokens, vocab_size):
    out = np.zeros((len(tokens), vocab_size))
    out[np.arange(len(tokens)), tokens] = 1.0
    return out


def tape_step_probs(tape, pvars, model, window_onehot):
    """Next-token distribution from a one-hot window on the tape.

    ``window_onehot`` has shape ``(..., context, vocab)``.
    """
    emb = tape.matmul(window_onehot, pvars["embed.0.E"])
    lead = emb.shape[:-2]
    flat = tape.reshape(emb, lead + (model.spec.context * model.spec.embed_dim,))
    return tape_stack(tape, pvars, model, "body", flat)
