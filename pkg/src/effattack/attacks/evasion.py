"""Inference-time attacks on continuous inputs."""

from __future__ import annotations

import numpy as np

from ..cost import inflation
from ..errors import DomainError, UsageError
from ..rng import generator
from .edits import in_alphabet
from .config import AttackConfig, AttackResult, box_bounds, within_box
from .surrogate import surrogate_loss


def _check_domain(x, cfg):
    if np.any(x < cfg.lo) or np.any(x > cfg.hi):
        raise DomainError("clean input lies outside the domain bounds")


def pgd_cost_attack(target, x, cfg: AttackConfig) -> AttackResult:
    """Signed-gradient descent on the cost surrogate inside the epsilon-box.

    Every iterate is projected onto ``[x - eps, x + eps]`` and clamped to
    the domain. The surrogate only approximates the discrete cost, so the
    iterate with the highest *measured* FLOPs is returned (earliest on ties),
    not the one with the lowest surrogate.
    """
    model = target.model
    if model.behavior == "D2":
        raise UsageError("PGD needs a continuous-input model; use text_attack for D2")
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, cfg)
    lo, hi = box_bounds(x, cfg)
    benign = target.measure(x)
    best, best_cost = x.copy(), benign
    cur = x.copy()
    trajectory = []
    for _ in range(cfg.steps):
        loss, grad = surrogate_loss(model, cur, target.thresholds)
        trajectory.append(loss)
        cur = np.clip(cur - cfg.step_size * np.sign(grad), lo, hi)
        cost = target.measure(cur)
        if cost.flops > best_cost.flops:
            best, best_cost = cur.copy(), cost
    return AttackResult(best, benign, best_cost, inflation(benign, best_cost), 0,
                        within_box(x, best, cfg), tuple(trajectory))


def random_noise_attack(target, x, cfg: AttackConfig) -> AttackResult:
    """Same-budget baseline: one uniform draw from the epsilon-box."""
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, cfg)
    lo, hi = box_bounds(x, cfg)
    rng = generator(cfg.seed, "random-noise")
    adv = np.clip(x + rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape), lo, hi)
    benign, adv_cost = target.measure(x), target.measure(adv)
    return AttackResult(adv, benign, adv_cost, inflation(benign, adv_cost), 0, within_box(x, adv, cfg))


def observed(cost):
    # what a black-box attacker sees: the latency side channel
    return cost.latency_ms


def blackbox_search_attack(cost_oracle, x, cfg: AttackConfig, editor=None) -> AttackResult:
    """Greedy random search that only looks at oracle costs.

    Continuous inputs: each proposal redraws one random coordinate
    uniformly inside its feasible interval. Text inputs (``str``): each
    proposal is one random edit from ``editor``; proposals that would take
    the prompt beyond ``epsilon`` edits are discarded unqueried. A proposal
    is kept only if the observed cost strictly increases. The first query
    measures the clean input; ``queries_used`` counts every oracle call.
    """
    if isinstance(x, str):
        return _blackbox_text(cost_oracle, x, cfg, editor)
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, cfg)
    if cfg.query_budget == 0:
        return AttackResult(x.copy(), None, None, None, 0, True)
    lo, hi = box_bounds(x, cfg)
    rng = generator(cfg.seed, "blackbox")
    benign = cost_oracle(x)
    queries = 1
    cur, cur_cost = x.copy(), benign
    while queries < cfg.query_budget:
        i = int(rng.integers(x.size))
        prop = cur.copy()
        prop[i] = rng.uniform(lo[i], hi[i])
        cost = cost_oracle(prop)
        queries += 1
        if observed(cost) > observed(cur_cost):
            cur, cur_cost = prop, cost
    return AttackResult(cur, benign, cur_cost, _maybe_inflation(benign, cur_cost), queries,
                        within_box(x, cur, cfg))


def _maybe_inflation(benign, adv):
    return inflation(benign, adv) if benign.flops > 0 else None


def _blackbox_text(cost_oracle, prompt, cfg, editor):
    if editor is None:
        raise UsageError("text black-box search needs an editor")
    budget = int(cfg.epsilon)
    if cfg.query_budget == 0:
        return AttackResult(prompt, None, None, None, 0, True)
    rng = generator(cfg.seed, "blackbox-text")
    benign = cost_oracle(prompt)
    queries, tries = 1, 0
    cur, cur_cost, edits = prompt, benign, ()
    max_tries = 20 * cfg.query_budget
    while queries < cfg.query_budget and tries < max_tries:
        tries += 1
        cands = editor.candidates(cur)
        if not cands:
            break
        op = cands[int(rng.integers(len(cands)))]
        prop = editor.apply(cur, op)
        if editor.distance(prompt, prop) > budget:
            continue
        cost = cost_oracle(prop)
        queries += 1
        if observed(cost) > observed(cur_cost):
            cur, cur_cost, edits = prop, cost, edits + (op,)
    ok = editor.distance(prompt, cur) <= budget and in_alphabet(cur, editor.alphabet)
    return AttackResult(cur, benign, cur_cost, _maybe_inflation(benign, cur_cost), queries, ok,
                        edits=edits)

