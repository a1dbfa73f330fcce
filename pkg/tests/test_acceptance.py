"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Reference scenarios live in ``scenarios/``; multi-seed criteria rerun them with
``Scenario.with_seed``. Run with ``pytest tests/test_acceptance.py -s`` to see
the lines inline; they are also repeated in the terminal summary.
"""

import math
import time
from itertools import islice
from pathlib import Path

import numpy as np
import pytest

from effattack.attacks import (
    AttackConfig, blackbox_search_attack, editor_for, pgd_cost_attack, random_noise_attack, surrogate_loss,
    text_attack,
)
from effattack.attacks.edits import in_alphabet
from effattack.attacks.surrogate import eos_surrogate_onehot
from effattack.autograd import finite_diff_check
from effattack.cost import executed_path, flops_closed_form
from effattack.defenses import GuardConfig, guarded_infer
from effattack.harness import build_target, eval_inputs, load_scenario, report_to_csv, report_to_json, run_scenario
from effattack.harness.selftest import random_spec
from effattack.models import Thresholds, Vocab, build_model, generate
from effattack.models.early_exit import exit_probabilities
from effattack.models.generator import one_hot
from effattack.rng import generator
from effattack.target import CostTarget

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
SEEDS = range(5)
SUITE_START = time.perf_counter()


def scenario(name):
    return load_scenario(SCENARIOS / f"{name}.yaml")


def random_input(rng, model):
    if model.behavior == "D2":
        return [int(t) for t in rng.integers(2, model.spec.vocab_size, size=int(rng.integers(1, 6)))]
    if model.behavior == "D3":
        return rng.uniform(0.0, 1.0, size=model.spec.in_dim)
    return rng.standard_normal(model.spec.in_dim)


@pytest.fixture(scope="module")
def d1_runs():
    sc = scenario("d1_reference")
    return [(sc.with_seed(s), run_scenario(sc.with_seed(s))) for s in SEEDS]


@pytest.fixture(scope="module")
def d2_runs():
    sc = scenario("d2_text")
    return [run_scenario(sc.with_seed(s)) for s in SEEDS]


class TestAcceptance:
    def test_01_gradient_soundness(self, verdict):
        rng = generator(0, "acceptance-grad")
        # no absolute floor: every coordinate is held to the relative bound
        start = time.perf_counter()
        worst, failures, counts = 0.0, 0, {}
        for i in range(240):
            behavior = ("D1", "D2", "D3", "D4")[i % 4]
            model = build_model(random_spec(rng, behavior))
            if behavior == "D2":
                prompt = random_input(rng, model)
                tokens = generate(model, prompt).trace.tokens
                # a relaxed one-hot point exercises the surrogate away from the simplex corners
                point = one_hot(prompt, model.spec.vocab_size) + 0.1 * rng.uniform(size=(len(prompt), model.spec.vocab_size))
                res = finite_diff_check(lambda p, m=model, t=tokens: eos_surrogate_onehot(m, p, t), point, abs_floor=0.0)
            else:
                res = finite_diff_check(lambda v, m=model: surrogate_loss(m, v), random_input(rng, model), abs_floor=0.0)
            worst = max(worst, res.max_rel_error)
            failures += not res.passed
            counts[behavior] = counts.get(behavior, 0) + 1
        elapsed = time.perf_counter() - start
        ok = failures == 0 and elapsed < 60 and sum(counts.values()) >= 200 and len(counts) == 4
        detail = f"{sum(counts.values())} configs, max rel err {worst:.2e}, {elapsed:.1f}s"
        assert verdict(1, "gradient soundness", ok, detail)

    def test_02_flop_exactness(self, verdict):
        rng = generator(0, "acceptance-flops")
        mismatches, runs, paths = 0, 0, set()
        knobs = {"D1": [Thresholds(tau=0.3), Thresholds(), Thresholds(tau=1.0)],
                 "D2": [Thresholds()],
                 "D3": [Thresholds(conf=0.2), Thresholds(), Thresholds(conf=0.8, iou=0.2)],
                 "D4": [Thresholds(theta=0.0), Thresholds(), Thresholds(theta=1.0)]}
        for i in range(60):
            behavior = ("D1", "D2", "D3", "D4")[i % 4]
            model = build_model(random_spec(rng, behavior))
            for t in knobs[behavior]:
                target = CostTarget(model, t)
                for _ in range(4):
                    res = target.infer(random_input(rng, model))
                    path = executed_path(res.trace)
                    paths.add((behavior, str(path)))
                    runs += 1
                    mismatches += res.flops != flops_closed_form(model.spec, path)
        ok = mismatches == 0
        assert verdict(2, "flop exactness", ok, f"60 specs, {runs} runs, {len(paths)} distinct paths, "
                                                 f"{mismatches} mismatches")

    def test_03_budget_soundness(self, verdict):
        rng = generator(0, "acceptance-budget")
        kinds = ("pgd", "random-noise", "blackbox", "text-character", "text-word",
                 "text-character-whitebox", "text-word-whitebox")
        violations, runs = 0, 0
        for i in range(1050):
            kind = kinds[i % len(kinds)]
            if kind.startswith("text"):
                model = build_model(random_spec(rng, "D2"))
                target = CostTarget(model)
                vocab = Vocab(model.spec.alphabet)
                prompt = vocab.decode(random_input(rng, model))
                level = "word" if "word" in kind else "character"
                eps = int(rng.integers(1, 4))
                mode = "whitebox" if kind.endswith("whitebox") else "blackbox"
                adv = text_attack(target, prompt, level, mode, AttackConfig(epsilon=eps, seed=i)).adversarial
                bad = editor_for(level, vocab.alphabet).distance(prompt, adv) > eps or not in_alphabet(adv, vocab.alphabet)
            else:
                behavior = ("D1", "D3", "D4")[i % 3]
                target = CostTarget(build_model(random_spec(rng, behavior)))
                lo, hi = (0.0, 1.0) if behavior == "D3" else (-1.0, 1.0)
                x = np.clip(random_input(rng, target.model), lo, hi)
                eps = float(rng.uniform(0, 0.5))
                cfg = AttackConfig(epsilon=eps, steps=5, query_budget=20, seed=i, lo=lo, hi=hi)
                if kind == "pgd":
                    adv = pgd_cost_attack(target, x, cfg).adversarial
                elif kind == "random-noise":
                    adv = random_noise_attack(target, x, cfg).adversarial
                else:
                    adv = blackbox_search_attack(target.measure, x, cfg).adversarial
                bad = np.max(np.abs(adv - x)) > eps or adv.min() < lo or adv.max() > hi
            violations += bool(bad)
            runs += 1
        assert verdict(3, "budget soundness", violations == 0, f"{runs} runs over {len(kinds)} attack kinds, "
                                                                 f"{violations} violations")

    def test_04_whitebox_optimality(self, verdict):
        sc = scenario("d4_reference")
        target, _ = build_target(sc)
        attack = sc.attacks[0]
        eps = attack.epsilons[0]
        cfg = AttackConfig(epsilon=eps, steps=attack.steps)

        def grid_max(x, n):
            g = np.linspace(-eps, eps, n)
            return max(target.measure(x + np.array([a, b])).flops for a in g for b in g)

        # inputs whose box holds no costlier point are trivially optimal; a
        # coarse grid screens them out before the exhaustive 101x101 check
        candidates, _ = eval_inputs(sc, n=300)
        chosen = list(islice((x for x in candidates if grid_max(x, 21) > target.measure(x).flops), 10))
        ratios = []
        for x in chosen:
            adv = pgd_cost_attack(target, x, cfg).adversarial
            ratios.append(target.measure(adv).flops / grid_max(x, 101))
        hits = sum(r >= 0.99 for r in ratios)
        ok = len(chosen) == 10 and hits == 10
        assert verdict(4, "white-box optimality", ok, f"{hits}/{len(chosen)} inputs at >=99% of grid max, "
                                                      f"min ratio {min(ratios, default=0):.3f}")

    def test_05_d1_effectiveness(self, verdict, d1_runs):
        early = final = total = 0
        pgd_inf, noise_inf = [], []
        for sc, report in d1_runs:
            full = flops_closed_form(sc.model, 2)
            pgd, noise = report.campaigns[0], report.campaigns[1]
            assert (pgd.attack, noise.attack) == ("pgd", "random-noise")
            early += sum(r["benign"]["flops"] < full for r in pgd.records)
            final += sum(r["adversarial"]["flops"] == full for r in pgd.records)
            total += len(pgd.records)
            pgd_inf += [r["inflation"]["flops_pct"] for r in pgd.records]
            noise_inf += [r["inflation"]["flops_pct"] for r in noise.records]
        early_rate, final_rate = early / total, final / total
        pgd_mean, noise_mean = np.mean(pgd_inf), np.mean(noise_inf)
        ok = total == 500 and early_rate >= 0.5 and final_rate >= 0.8 and pgd_mean > noise_mean
        detail = (f"benign early {early_rate:.2f}, PGD final {final_rate:.2f}, "
                  f"inflation PGD {pgd_mean:.2f}% vs noise {noise_mean:.2f}%")
        assert verdict(5, "D1 attack effectiveness", ok, detail)

    def test_06_d2_trend(self, verdict, d2_runs):
        means = {}
        for report in d2_runs:
            for c in report.campaigns:
                key = (c.attack, c.epsilon)
                means[key] = means.get(key, 0.0) + c.aggregate()["flops_pct"]["mean"] / len(d2_runs)
        char = [means[("text-character", e)] for e in (1, 2, 3)]
        word = means[("text-word", 1)]
        ok = char[0] <= char[1] <= char[2] and word >= char[0]
        detail = "char " + " -> ".join(f"{v:.2f}" for v in char) + f", word@1 {word:.2f}"
        assert verdict(6, "D2 inflation trend", ok, detail)

    def test_07_poisoning(self, verdict):
        control_sc = scenario("d1_control")
        increases, argmax_same, inputs_checked = {}, 0, 0
        for name in ("d1_poison_temperature", "d1_poison_softlabel"):
            poisoned_sc = scenario(name)
            wins = []
            for s in SEEDS:
                base = run_scenario(control_sc.with_seed(s)).campaigns[0].summary()["benign_flops_mean"]
                pois = run_scenario(poisoned_sc.with_seed(s)).campaigns[0].summary()["benign_flops_mean"]
                wins.append(pois > base)
            increases[name] = all(wins)
        temp_sc = scenario("d1_poison_temperature")
        for s in SEEDS:
            clean, _ = build_target(control_sc.with_seed(s))
            poisoned, _ = build_target(temp_sc.with_seed(s))
            for x in eval_inputs(temp_sc.with_seed(s))[0]:
                a = np.argmax(exit_probabilities(clean.model, x)[-1])
                b = np.argmax(exit_probabilities(poisoned.model, x)[-1])
                argmax_same += a == b
                inputs_checked += 1
        ok = all(increases.values()) and argmax_same == inputs_checked
        detail = (f"temperature up on all seeds: {increases['d1_poison_temperature']}, "
                  f"soft-label up on all seeds: {increases['d1_poison_softlabel']}, "
                  f"final argmax kept {argmax_same}/{inputs_checked}")
        assert verdict(7, "poisoning effect", ok, detail)

    def test_08_detection(self, verdict, d1_runs):
        accs, drops = [], []
        for _, report in d1_runs:
            pgd = report.campaigns[0]
            summ = pgd.defended_summary()
            # scored on the evaluation traces, disjoint from the detector's training draws
            accs.append(summ["balanced_accuracy"])
            drops.append(100 * (pgd.summary()["benign_quality"] - summ["benign_quality"]))
        ok = np.mean(accs) >= 0.85 and min(accs) >= 0.80 and max(drops) <= 1.0
        detail = (f"balanced accuracy mean {np.mean(accs):.3f} min {min(accs):.3f}, "
                  f"worst benign accuracy drop {max(drops):.2f}pp")
        assert verdict(8, "trace detector", ok, detail)

    def test_09_guard_soundness(self, verdict):
        rng = generator(0, "acceptance-guard")
        violations = mismatches = runs = 0
        for i in range(200):
            target = CostTarget(build_model(random_spec(rng, ("D1", "D2", "D3", "D4")[i % 4])))
            x = random_input(rng, target.model)
            full = target.infer(x)
            ceiling = float(rng.uniform(1, max(2, 1.5 * full.flops)))
            for policy in ("abort-and-flag", "exit-now"):
                violations += guarded_infer(target, x, GuardConfig(ceiling, policy)).cost.flops > ceiling
                runs += 1
            free = guarded_infer(target, x, GuardConfig(math.inf))
            mismatches += free.breached or free.cost.flops != full.flops or repr(free.output) != repr(full.output)
        report = run_scenario(scenario("d3_guard"))
        ceiling = report.scenario["defense"]["ceiling"]
        for c in report.campaigns:
            for r in c.records:
                violations += r["defended_adversarial"]["flops"] > ceiling
                violations += r["defended_benign"]["flops"] > ceiling
                runs += 2
        ok = violations == 0 and mismatches == 0
        assert verdict(9, "guard soundness", ok, f"{runs} guarded runs, {violations} over ceiling, "
                                                 f"{mismatches} unguarded mismatches")

    def test_10_transform_tradeoff(self, verdict, d2_runs):
        reference = d2_runs[0]
        reductions, deltas = [], []
        for c in reference.campaigns:
            summ = c.defended_summary()
            reductions.append(summ["adv_length_reduction_pct"])
            deltas.append(summ["benign_quality_delta"])
        ok = min(reductions) >= 70 and all(d < 0 for d in deltas)
        detail = (f"adversarial length cut {min(reductions):.1f}% to {max(reductions):.1f}%, "
                  f"benign exact-match change {min(deltas):+.2f} to {max(deltas):+.2f}")
        assert verdict(10, "transform tradeoff", ok, detail)

    def test_11_determinism(self, verdict):
        files = sorted(SCENARIOS.glob("*.yaml"))
        differing = []
        for f in files:
            sc = load_scenario(f)
            a, b = run_scenario(sc), run_scenario(sc)
            if report_to_json(a) != report_to_json(b) or report_to_csv(a) != report_to_csv(b):
                differing.append(f.stem)
        elapsed = time.perf_counter() - SUITE_START
        ok = not differing and elapsed < 600
        detail = f"{len(files)} scenarios twice, {len(differing)} differ, suite time {elapsed:.0f}s"
        assert verdict(11, "end-to-end determinism", ok, detail)
