"""Character- and word-level prompt attacks on the D2 generator."""

from __future__ import annotations

import numpy as np

from ..cost import inflation
from ..errors import DomainError, UsageError
from ..models.generator import check_prompt
from ..models.vocab import PAD_ID, Vocab
from .config import AttackConfig, AttackResult
from .edits import editor_for, in_alphabet
from .evasion import observed
from .surrogate import surrogate_loss

LEVELS = ("character", "word")
MODES = ("whitebox", "blackbox")


def _budget(cfg):
    eps = cfg.epsilon
    if eps < 1 or eps != int(eps):
        raise DomainError(f"text attacks need an integer edit budget >= 1, got {eps}")
    return int(eps)


def linear_edit_score(grad, old, new):
    """First-order change of the surrogate when ``old`` tokens become ``new``.

    Sequences are aligned at their right end (the generator only sees the
    tail of the prompt); positions that fall off the front read as PAD.
    """
    shift = len(new) - len(old)
    score = 0.0
    for p in np.flatnonzero(np.any(grad != 0, axis=1)):
        q = p + shift
        tok = new[q] if 0 <= q < len(new) else PAD_ID
        if tok != old[p]:
            score += grad[p, tok] - grad[p, old[p]]
    return score


def text_attack(target, prompt: str, level="character", mode="blackbox", cfg: AttackConfig | None = None,
                editor=None) -> AttackResult:
    """Apply up to ``epsilon`` edits to ``prompt`` to lengthen generation.

    ``blackbox``: each round queries every candidate edit and keeps the one
    with the largest strict cost increase, stopping early when none helps.
    Identical candidate prompts are queried once; the query budget in
    ``cfg`` is not applied because every round is exhaustive.

    ``whitebox``: each round ranks candidates by the first-order decrease of
    the EOS surrogate (gradient w.r.t. the one-hot prompt) and applies the
    best one. The returned prompt is the round with the highest measured cost.
    """
    model = target.model
    model.require("D2")
    if level not in LEVELS:
        raise UsageError(f"level must be one of {LEVELS}")
    if mode not in MODES:
        raise UsageError(f"mode must be one of {MODES}")
    cfg = cfg or AttackConfig(epsilon=1)
    budget = _budget(cfg)
    if not prompt:
        raise DomainError("empty prompt")
    vocab = Vocab(model.spec.alphabet)
    editor = editor or editor_for(level, vocab.alphabet)
    seen = {}

    def cost(text):
        if text not in seen:
            seen[text] = target.measure(vocab.encode(text))
        return seen[text]

    check_prompt(model, vocab.encode(prompt))
    benign = cost(prompt)
    cur, cur_cost, edits = prompt, benign, ()
    best, best_cost, best_edits = cur, cur_cost, edits
    # one edit per round, so after r rounds the distance is at most r <= budget
    for _ in range(budget):
        ops = editor.candidates(cur)
        if mode == "blackbox":
            choice = None
            for op in ops:
                prop = editor.apply(cur, op)
                c = cost(prop)
                if observed(c) > observed(cur_cost if choice is None else choice[2]):
                    choice = (op, prop, c)
            if choice is None:
                break
            op, cur, cur_cost = choice
        else:
            _, grad = surrogate_loss(model, vocab.encode(cur), target.thresholds)
            old = vocab.encode(cur)
            scored = None
            for op in ops:
                prop = editor.apply(cur, op)
                s = linear_edit_score(grad, old, vocab.encode(prop))
                if scored is None or s < scored[0]:
                    scored = (s, op, prop)
            if scored is None or scored[0] >= 0:
                break
            _, op, cur = scored
            cur_cost = cost(cur)
        edits = edits + (op,)
        if cur_cost.flops > best_cost.flops:
            best, best_cost, best_edits = cur, cur_cost, edits
    ok = editor.distance(prompt, best) <= budget and in_alphabet(best, vocab.alphabet)
    return AttackResult(best, benign, best_cost, inflation(benign, best_cost), len(seen), ok,
                        edits=best_edits)
