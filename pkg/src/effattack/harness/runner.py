"""Run a scenario end to end and collect a report."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import SimpleNamespace

import numpy as np

from .. import __version__
from ..attacks import (AttackConfig, blackbox_search_attack, editor_for, pgd_cost_attack,
                       poison_dataset, poison_model, random_noise_attack, text_attack)
from ..cost import METRICS, aggregate, inflation
from ..datasets import prompt_of, synth_dataset
from ..defenses import (GuardConfig, classify_trace, featurize_trace, guarded_infer, make_transform,
                        train_detector, transform_input)
from ..errors import EffAttackError
from ..models import Vocab, build_model, train_model
from ..models.early_exit import exit_probabilities
from ..models.core import run_stack
from ..rng import derive_seed
from ..target import CostTarget
from .scenario import Scenario, sub_seed


class ScenarioRunError(EffAttackError):
    """A pipeline stage failed; ``stage`` says which and ``__cause__`` holds the error."""

    def __init__(self, scenario_id, stage, exc):
        super().__init__(f"scenario {scenario_id!r} failed during {stage}: {type(exc).__name__}: {exc}")
        self.scenario_id = scenario_id
        self.stage = stage


@dataclass
class Campaign:
    """One (attack, epsilon) pass over the evaluation set."""

    attack: str
    mode: str
    epsilon: float
    records: list
    defense: str | None = None
    detector: dict | None = None

    def aggregate(self, key="inflation") -> dict:
        return aggregate(SimpleNamespace(**r[key]) for r in self.records)

    def summary(self, key_prefix="") -> dict:
        recs = self.records
        out = {}
        for side in ("benign", "adversarial"):
            out[f"{side}_flops_mean"] = math.fsum(r[key_prefix + side]["flops"] for r in recs) / len(recs)
            out[f"{side}_iterations_mean"] = math.fsum(r[key_prefix + side]["iterations"] for r in recs) / len(recs)
        out["benign_quality"] = _mean(r[key_prefix + "benign_quality"] for r in recs)
        out["adv_quality"] = _mean(r[key_prefix + "adv_quality"] for r in recs)
        return out

    def to_dict(self) -> dict:
        d = {"attack": self.attack, "mode": self.mode, "epsilon": self.epsilon,
             "aggregate": self.aggregate(), "summary": self.summary(), "records": self.records}
        if self.defense is not None:
            d["defense"] = self.defense
            d["defended_aggregate"] = self.aggregate("defended_inflation")
            d["defended_summary"] = self.defended_summary()
            if self.detector is not None:
                d["detector"] = self.detector
        return d

    def defended_summary(self) -> dict:
        out = self.summary("defended_")
        flags = [r["flagged"] for r in self.records]
        benign_flags = [r["benign_flagged"] for r in self.records]
        if None in flags:
            out["detection_rate"] = out["false_positive_rate"] = out["balanced_accuracy"] = None
        else:
            out["detection_rate"] = _mean(flags)
            out["false_positive_rate"] = _mean(benign_flags)
            out["balanced_accuracy"] = (out["detection_rate"] + 1 - out["false_positive_rate"]) / 2
        undefended = self.summary()
        adv_len = undefended["adversarial_iterations_mean"]
        out["adv_length_reduction_pct"] = (100.0 * (adv_len - out["adversarial_iterations_mean"]) / adv_len
                                           if adv_len else 0.0)
        out["benign_quality_delta"] = out["benign_quality"] - undefended["benign_quality"]
        return out


def _mean(values):
    values = [float(v) for v in values]
    return math.fsum(values) / len(values) if values else 0.0


@dataclass
class RunReport:
    scenario_id: str
    behavior: str
    seed: int
    scenario: dict
    training: dict
    campaigns: list = field(default_factory=list)
    version: str = __version__

    @property
    def environment(self):
        return {"version": self.version, "seed": self.seed}

    def rows(self) -> list:
        """One row per campaign, plus one per defended campaign."""
        out = []
        for c in self.campaigns:
            agg, summ = c.aggregate(), c.summary()
            out.append(self._row(c.attack, c, agg, summ, None))
            if c.defense is not None:
                dsum = c.defended_summary()
                out.append(self._row(f"{c.attack}+{c.defense}", c, c.aggregate("defended_inflation"), dsum,
                                     dsum["detection_rate"]))
        return out

    def _row(self, attack, c, agg, summ, detection):
        return {
            "scenario_id": self.scenario_id, "behavior": self.behavior, "attack": attack,
            "mode": c.mode, "epsilon": c.epsilon,
            "flops_pct": agg["flops_pct"]["mean"], "latency_pct": agg["latency_pct"]["mean"],
            "energy_pct": agg["energy_pct"]["mean"], "detection_rate": detection,
            "benign_quality": summ["benign_quality"], "adv_quality": summ["adv_quality"],
            "seed": self.seed,
        }

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "behavior": self.behavior,
            "environment": self.environment,
            "scenario": self.scenario,
            "training": self.training,
            "campaigns": [c.to_dict() for c in self.campaigns],
            "rows": self.rows(),
        }


# -- pipeline pieces ----------------------------------------------------------


def _dataset_options(sc: Scenario):
    opts = dict(sc.dataset.options)
    key = {"gauss-blobs": ("dim", sc.model.in_dim), "scene-vectors": ("grid", sc.model.grid),
           "token-corpus": ("alphabet", sc.model.alphabet)}[sc.dataset.kind]
    opts.setdefault(*key)
    return opts


def build_target(sc: Scenario):
    """Synthesize training data, train (and optionally poison) the model."""
    opts = _dataset_options(sc)
    seed = sc.dataset.seed if sc.dataset.seed is not None else sub_seed(sc.seed, "train_data")
    data = synth_dataset(sc.dataset.kind, sc.dataset.n, seed, **opts)
    if sc.poison.data_scheme:
        data = poison_dataset(data, sc.poison.fraction, sc.poison.data_scheme, seed=sub_seed(sc.seed, "poison"),
                              n_classes=sc.model.n_classes)
    t = sc.training
    model, loss = train_model(build_model(sc.model), data, epochs=t.epochs, lr=t.lr,
                              seed=sub_seed(sc.seed, "training"), batch_size=t.batch_size)
    if sc.poison.model_scheme:
        model = poison_model(model, sc.poison.model_scheme, sc.poison.magnitude)
    return CostTarget(model, sc.thresholds, sc.hardware), {"final_loss": loss, "train_size": len(data)}


def eval_inputs(sc: Scenario, purpose="eval_data", n=None):
    """Evaluation inputs and their labels (prompts as strings for D2)."""
    n = sc.eval_size if n is None else n
    data = synth_dataset(sc.dataset.kind, n, sub_seed(sc.seed, purpose), **_dataset_options(sc))
    if sc.behavior == "D2":
        vocab = Vocab(sc.model.alphabet)
        return [prompt_of(toks, vocab) for toks in data.inputs], list(data.labels)
    return list(data.inputs), list(data.labels)


class _Runner:
    def __init__(self, sc: Scenario, target: CostTarget):
        self.sc = sc
        self.target = target
        self.vocab = Vocab(sc.model.alphabet)
        self.text = sc.behavior == "D2"

    def encode(self, x):
        return self.vocab.encode(x) if self.text else x

    def infer(self, x, **kw):
        return self.target.infer(self.encode(x), **kw)

    def measure(self, x):
        return self.target.measure(self.encode(x))

    def quality(self, output, label, clean):
        b = self.sc.behavior
        if output is None:
            return 0.0
        if b in ("D1", "D4"):
            return float(output == label)
        if b == "D2":
            return float(list(output) == list(clean))
        planted = set(label)
        return len(planted & {box.index for box in output}) / len(planted)

    def attack(self, spec, eps, x, seed):
        cfg = AttackConfig(epsilon=eps, steps=spec.steps, alpha=spec.alpha, query_budget=spec.query_budget,
                           seed=seed, lo=spec.lo, hi=spec.hi)
        if spec.name == "none":
            return x, None
        if spec.name == "pgd":
            res = pgd_cost_attack(self.target, x, cfg)
        elif spec.name == "random-noise":
            res = random_noise_attack(self.target, x, cfg)
        elif spec.name == "text":
            res = text_attack(self.target, x, spec.level, spec.mode, cfg)
        elif self.text:
            res = blackbox_search_attack(self.measure, x, cfg, editor=editor_for(spec.level, self.vocab.alphabet))
        else:
            res = blackbox_search_attack(self.target.measure, x, cfg)
        return res.adversarial, res

    def fallback(self, x):
        """Cheapest available answer, served when the detector flags an input."""
        b = self.sc.behavior
        m = self.target.model
        if b == "D1":
            return int(np.argmax(exit_probabilities(m, x)[0]))
        if b == "D4":
            probs, _ = run_stack(m, "light", np.asarray(x, dtype=np.float64))
            return int(np.argmax(probs))
        return None


def _cost(c):
    return c.to_dict()


def _pct(inf):
    return {m: getattr(inf, m) for m in METRICS}


def run_scenario(sc: Scenario) -> RunReport:
    """Data -> training -> (poisoning) -> per-input benign run, attack,
    adversarial run, (defense) -> inflation. Deterministic in the master seed."""
    try:
        target, training = build_target(sc)
    except Exception as exc:
        raise ScenarioRunError(sc.id, "training", exc) from exc
    report = RunReport(sc.id, sc.behavior, sc.seed, sc.to_dict(), training)
    runner = _Runner(sc, target)
    inputs, labels = eval_inputs(sc)
    attack_root = sub_seed(sc.seed, "attack")
    for spec in sc.attacks:
        for eps in spec.epsilons:
            try:
                report.campaigns.append(_campaign(runner, spec, eps, inputs, labels, attack_root))
            except Exception as exc:
                raise ScenarioRunError(sc.id, f"attack {spec.name} (epsilon={eps})", exc) from exc
    return report


def _campaign(runner, spec, eps, inputs, labels, attack_root):
    sc = runner.sc
    records = []
    for i, (x, y) in enumerate(zip(inputs, labels)):
        benign = runner.infer(x)
        clean_out = benign.output
        adv, res = runner.attack(spec, eps, x, derive_seed(attack_root, str(i)))
        adv_run = runner.infer(adv) if res is not None else benign
        b_cost, a_cost = runner.target.cost_of(benign), runner.target.cost_of(adv_run)
        rec = {
            "index": i,
            "benign": _cost(b_cost),
            "adversarial": _cost(a_cost),
            "inflation": _pct(inflation(b_cost, a_cost)),
            "constraint_satisfied": True if res is None else bool(res.constraint_satisfied),
            "queries_used": 0 if res is None else res.queries_used,
            "benign_quality": runner.quality(clean_out, y, clean_out),
            "adv_quality": runner.quality(adv_run.output, y, clean_out),
        }
        if runner.text:
            rec["prompt"], rec["adversarial_prompt"] = x, adv
        records.append((rec, x, adv, benign, adv_run, y))
    camp = Campaign(spec.label, spec.mode_label, eps, [r[0] for r in records])
    if sc.defense is not None:
        camp.defense = sc.defense.label
        camp.detector = _defend(runner, spec, eps, records, attack_root)
    return camp


def _defend(runner, spec, eps, records, attack_root):
    sc, d = runner.sc, runner.sc.defense
    detector_meta = None
    if d.name == "detector":
        det = _train_detector(runner, spec, eps)
        detector_meta = {"threshold": det.threshold, "holdout_balanced_accuracy": det.holdout_balanced_accuracy,
                         "weights": [float(w) for w in det.weights], "bias": det.bias,
                         "n_benign": det.n_benign, "n_adversarial": det.n_adversarial}
    for rec, x, adv, benign, adv_run, y in records:
        clean_out = benign.output
        b_cost = runner.target.cost_of(benign)
        if d.name == "detector":
            vb = classify_trace(det, featurize_trace(benign.trace))
            va = classify_trace(det, featurize_trace(adv_run.trace))
            out_b = runner.fallback(x) if vb.adversarial else benign.output
            out_a = runner.fallback(adv) if va.adversarial else adv_run.output
            db_cost, da_cost = b_cost, runner.target.cost_of(adv_run)
            rec["verdict"] = {"benign": {"flag": vb.flag, "score": vb.score},
                              "adversarial": {"flag": va.flag, "score": va.score}}
            rec["benign_flagged"], rec["flagged"] = vb.adversarial, va.adversarial
        elif d.name == "transform":
            params = {k: v for k, v in d.params.items() if k != "kind"}
            if d.params["kind"] == "quantize":
                params.update(lo=spec.lo, hi=spec.hi)
            if d.params["kind"] == "text_normalize":
                params["alphabet"] = sc.model.alphabet
            t = make_transform(d.params["kind"], **params)
            rb, ra = runner.infer(transform_input(x, t)), runner.infer(transform_input(adv, t))
            out_b, out_a = rb.output, ra.output
            db_cost, da_cost = runner.target.cost_of(rb), runner.target.cost_of(ra)
            # a transform never flags anything, so it has no detection rate
            rec["benign_flagged"] = rec["flagged"] = None
        else:
            guard = GuardConfig(d.params["ceiling"], d.params["policy"])
            gb, ga = guarded_infer(runner.target, runner.encode(x), guard), \
                guarded_infer(runner.target, runner.encode(adv), guard)
            out_b, out_a = gb.output, ga.output
            db_cost, da_cost = gb.cost, ga.cost
            rec["benign_flagged"], rec["flagged"] = gb.breached, ga.breached
        rec["defended_benign"] = _cost(db_cost)
        rec["defended_adversarial"] = _cost(da_cost)
        # measured against the undefended benign run: what an attacked, defended
        # deployment costs relative to normal operation
        rec["defended_inflation"] = _pct(inflation(b_cost, da_cost))
        rec["defended_benign_quality"] = runner.quality(out_b, y, clean_out)
        rec["defended_adv_quality"] = runner.quality(out_a, y, clean_out)
    return detector_meta


def _train_detector(runner, spec, eps):
    """Fit the detector on traces from a separate, freshly drawn input set."""
    sc = runner.sc
    inputs, _ = eval_inputs(sc, "detector_data", sc.defense.params["train_size"])
    root = derive_seed(sub_seed(sc.seed, "detector_data"), "attack")
    benign, adversarial = [], []
    for i, x in enumerate(inputs):
        benign.append(featurize_trace(runner.infer(x).trace))
        adv, _ = runner.attack(spec, eps, x, derive_seed(root, str(i)))
        adversarial.append(featurize_trace(runner.infer(adv).trace))
    p = sc.defense.params
    return train_detector(benign, adversarial, seed=sub_seed(sc.seed, "detector"), epochs=p["epochs"], lr=p["lr"])
