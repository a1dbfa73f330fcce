"""Quick invariant checks runnable from the command line (``effattack selftest``)."""

from __future__ import annotations

import math

import numpy as np

from ..attacks import AttackConfig, blackbox_search_attack, pgd_cost_attack, surrogate_loss, text_attack
from ..attacks.edits import edit_distance
from ..autograd import finite_diff_check
from ..cost import executed_path, flops_closed_form
from ..defenses import GuardConfig, guarded_infer
from ..models import ModelSpec, Vocab, build_model
from ..rng import generator
from ..target import CostTarget
from .report import report_to_csv, report_to_json
from .runner import run_scenario
from .scenario import Scenario


def random_spec(rng, behavior, seed=None) -> ModelSpec:
    """A small random architecture of the given behavior."""
    seed = int(rng.integers(2**31)) if seed is None else seed
    w = lambda k: tuple(int(v) for v in rng.integers(2, 7, size=k))  # noqa: E731
    if behavior == "D1":
        return ModelSpec("D1", in_dim=int(rng.integers(2, 6)), widths=w(int(rng.integers(2, 4))),
                         n_classes=int(rng.integers(2, 4)), seed=seed)
    if behavior == "D2":
        return ModelSpec("D2", widths=w(1), embed_dim=int(rng.integers(2, 5)), context=int(rng.integers(1, 4)),
                         max_len=int(rng.integers(1, 12)), seed=seed)
    if behavior == "D3":
        side = int(rng.integers(2, 4))
        return ModelSpec("D3", in_dim=int(rng.integers(2, 6)), widths=w(1), grid=side * side,
                         c_out=int(rng.integers(0, 50)), seed=seed)
    return ModelSpec("D4", in_dim=int(rng.integers(2, 5)), gate_widths=w(1), light_widths=(),
                     heavy_widths=(8, 8), seed=seed)


def _input(rng, model):
    if model.behavior == "D2":
        return [int(t) for t in rng.integers(2, model.spec.vocab_size, size=int(rng.integers(1, 6)))]
    return rng.uniform(0.0, 1.0, size=model.spec.in_dim) if model.behavior == "D3" else \
        rng.standard_normal(model.spec.in_dim)


def check_gradients(n=40) -> bool:
    rng = generator(1, "selftest-grad")
    for i in range(n):
        model = build_model(random_spec(rng, ("D1", "D3", "D4")[i % 3]))
        x = _input(rng, model)
        res = finite_diff_check(lambda v: surrogate_loss(model, v), x)
        if not res.passed:
            return False
    return True


def check_flops(n=40) -> bool:
    rng = generator(1, "selftest-flops")
    for i in range(n):
        model = build_model(random_spec(rng, ("D1", "D2", "D3", "D4")[i % 4]))
        res = CostTarget(model).infer(_input(rng, model))
        if res.flops != flops_closed_form(model.spec, executed_path(res.trace)):
            return False
    return True


def check_budgets(n=40) -> bool:
    rng = generator(1, "selftest-budget")
    for i in range(n):
        behavior = ("D1", "D3", "D4", "D2")[i % 4]
        target = CostTarget(build_model(random_spec(rng, behavior)))
        x = _input(rng, target.model)
        if behavior == "D2":
            vocab = Vocab(target.model.spec.alphabet)
            prompt = vocab.decode(x)
            eps = int(rng.integers(1, 3))
            res = text_attack(target, prompt, "character", "blackbox", AttackConfig(epsilon=eps))
            if edit_distance(prompt, res.adversarial) > eps:
                return False
            continue
        eps = float(rng.uniform(0, 0.5))
        cfg = AttackConfig(epsilon=eps, steps=5, query_budget=20, seed=i, lo=-1.0 if behavior != "D3" else 0.0,
                           hi=1.0)
        x = np.clip(x, cfg.lo, cfg.hi)
        for res in (pgd_cost_attack(target, x, cfg), blackbox_search_attack(target.measure, x, cfg)):
            adv = res.adversarial
            if np.max(np.abs(adv - x)) > eps or adv.min() < cfg.lo or adv.max() > cfg.hi:
                return False
    return True


def check_guard(n=40) -> bool:
    rng = generator(1, "selftest-guard")
    for i in range(n):
        target = CostTarget(build_model(random_spec(rng, ("D1", "D2", "D3", "D4")[i % 4])))
        x = _input(rng, target.model)
        full = target.infer(x)
        ceiling = float(rng.uniform(1, max(2, full.flops)))
        for policy in ("abort-and-flag", "exit-now"):
            if guarded_infer(target, x, GuardConfig(ceiling, policy)).cost.flops > ceiling:
                return False
        unguarded = guarded_infer(target, x, GuardConfig(math.inf))
        if unguarded.breached or unguarded.cost.flops != full.flops or repr(unguarded.output) != repr(full.output):
            return False
    return True


TINY = {
    "id": "selftest",
    "seed": 3,
    "model": {"behavior": "D1", "in_dim": 4, "widths": [4, 4]},
    "dataset": {"kind": "gauss-blobs", "n": 40},
    "training": {"epochs": 2},
    "attack": {"name": "pgd", "epsilon": [0.1, 0.2], "steps": 3},
    "defense": {"name": "detector", "train_size": 10, "epochs": 20},
    "eval_size": 5,
}


def check_determinism() -> bool:
    sc = Scenario.from_dict(TINY)
    a, b = run_scenario(sc), run_scenario(sc)
    return report_to_json(a) == report_to_json(b) and report_to_csv(a) == report_to_csv(b)


CHECKS = {
    "gradient soundness": check_gradients,
    "flop exactness": check_flops,
    "attack budgets": check_budgets,
    "guard ceiling": check_guard,
    "report determinism": check_determinism,
}


def run_selftest(out=print) -> bool:
    ok = True
    for name, fn in CHECKS.items():
        try:
            passed, note = fn(), ""
        except Exception as exc:  # a crash is a failed check, not an aborted run
            passed, note = False, f"  ({type(exc).__name__}: {exc})"
        ok &= passed
        out(f"{'PASS' if passed else 'FAIL'}  {name}{note}")
    return ok


__all__ = ["CHECKS", "random_spec", "run_selftest"]
