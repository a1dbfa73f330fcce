import copy
import math

import numpy as np
import pytest

from effattack.attacks import poison_model
from effattack.defenses import (
    Detector, GuardConfig, MeanSmooth, Quantize, TextNormalize, balanced_accuracy, classify_trace, featurize_trace,
    guarded_infer, make_transform, train_detector, transform_input,
)
from effattack.cost import flops_closed_form
from effattack.errors import DomainError, UsageError
from effattack.models import InferenceTrace, ModelSpec, Thresholds, build_model
from effattack.models.generator import step_flops
from effattack.rng import generator
from effattack.target import CostTarget


def fresh_accuracy(det, benign, adversarial):
    sb = [det.score(f) for f in benign]
    sa = [det.score(f) for f in adversarial]
    return balanced_accuracy(sb, sa, det.threshold)


class TestFeaturize:
    def test_first_exit_index(self):
        trace = InferenceTrace("D1", exit_confidences=[0.95], exit_index=0, n_exits=3)
        f = featurize_trace(trace)
        assert f.values[-1] == 0.0
        assert f.values.tolist() == [0.95, 0.0, 0.0, 0.0]

    def test_d2_extremes(self):
        trace = InferenceTrace("D2", eos_probs=[1e-9] * 16, length=16, max_len=16)
        eos_mean, eos_min, length = featurize_trace(trace).values
        assert eos_min == pytest.approx(0.0, abs=1e-8)
        assert length == 1.0

    def test_deterministic(self):
        res = CostTarget(build_model(ModelSpec("D1"))).infer(np.ones(8))
        assert np.array_equal(featurize_trace(res.trace).values, featurize_trace(res.trace).values)

    def test_width_depends_only_on_behavior(self):
        target = CostTarget(build_model(ModelSpec("D1", seed=2)))
        rng = generator(0, "width")
        widths = {len(featurize_trace(target.infer(rng.standard_normal(8) * 5).trace)) for _ in range(10)}
        assert widths == {4}

    def test_behavior_mismatch(self):
        with pytest.raises(UsageError):
            featurize_trace(InferenceTrace("D4", gate_score=0.2), behavior="D1")

    def test_incomplete_trace(self):
        with pytest.raises(UsageError):
            featurize_trace(InferenceTrace("D1"))


class TestTrainDetector:
    def test_separable(self):
        benign, adv = [[0.0]] * 50, [[1.0]] * 50
        det = train_detector(benign, adv, seed=0)
        assert det.holdout_balanced_accuracy == 1.0
        assert fresh_accuracy(det, [[0.0]] * 20, [[1.0]] * 20) == 1.0

    def test_chance_level(self):
        rng = generator(1, "chance")
        draw = lambda: rng.standard_normal((600, 3))  # noqa: E731
        det = train_detector(draw(), draw(), seed=0)
        assert fresh_accuracy(det, draw(), draw()) == pytest.approx(0.5, abs=0.1)

    def test_deterministic(self):
        rng = generator(2, "det")
        b, a = rng.standard_normal((40, 2)), rng.standard_normal((40, 2)) + 1
        d1, d2 = train_detector(b, a, seed=5), train_detector(b, a, seed=5)
        assert np.array_equal(d1.weights, d2.weights) and d1.bias == d2.bias and d1.threshold == d2.threshold

    def test_needs_both_classes(self):
        with pytest.raises(UsageError):
            train_detector([[0.0]], [])

    def test_width_mismatch(self):
        with pytest.raises(UsageError):
            train_detector([[0.0]], [[0.0, 1.0]])


class TestClassify:
    def test_threshold_is_closed(self):
        det = Detector(np.array([0.0]), 0.0, threshold=0.5)
        verdict = classify_trace(det, [7.0])
        assert verdict.score == 0.5
        assert verdict.flag == "adversarial"

    def test_zero_weights_score_half(self):
        det = Detector(np.zeros(3), 0.0, threshold=0.7)
        for f in ([0, 0, 0], [1e3, -5, 2]):
            assert classify_trace(det, f).score == 0.5

    def test_stable_under_copy(self):
        det = Detector(np.array([1.0, -2.0]), 0.3, threshold=0.4)
        f = np.array([0.6, 0.0])
        assert classify_trace(det, f) == classify_trace(det, copy.deepcopy(f))

    def test_dimension_mismatch(self):
        with pytest.raises(UsageError):
            Detector(np.zeros(2), 0.0, 0.5).score([1.0])

    @pytest.mark.parametrize("t", [0.0, 1.0])
    def test_threshold_range(self, t):
        with pytest.raises(UsageError):
            Detector(np.zeros(1), 0.0, t)


class TestTransforms:
    def test_one_bit_quantize(self):
        out = transform_input(np.linspace(0, 1, 11), Quantize(1))
        assert set(out.tolist()) <= {0.0, 1.0}

    def test_quantize_levels(self):
        out = transform_input(np.array([0.0, 0.3, 0.5, 1.0]), Quantize(2))
        assert np.allclose(out * 3, np.round(out * 3))

    def test_window_one_identity(self):
        x = np.array([0.3, -1.0, 2.5])
        assert np.array_equal(transform_input(x, MeanSmooth(1)), x)

    def test_mean_smooth_edges(self):
        out = transform_input(np.array([0.0, 3.0, 0.0, 3.0]), MeanSmooth(3))
        np.testing.assert_allclose(out, [1.5, 1.0, 2.0, 1.5])

    def test_truncates_long_prompt(self):
        prompt = "abcdefghij" * 6 + "ab"
        assert len(prompt) == 62
        assert transform_input(prompt, TextNormalize(9)) == prompt[:9]

    def test_drops_foreign_characters(self):
        assert transform_input("a#b!c", TextNormalize(9)) == "abc"

    def test_kind_mismatch(self):
        with pytest.raises(UsageError):
            transform_input("abc", Quantize(2))
        with pytest.raises(UsageError):
            transform_input(np.zeros(2), TextNormalize(3))

    def test_make_transform(self):
        assert make_transform("mean_smooth", window=3) == MeanSmooth(3)
        with pytest.raises(UsageError):
            make_transform("jpeg")

    @pytest.mark.parametrize("cls,kw", [(Quantize, {"bits": 0}), (MeanSmooth, {"window": 0}),
                                        (TextNormalize, {"max_tokens": 0}),
                                        (Quantize, {"bits": 2, "lo": 0, "hi": math.inf})])
    def test_parameter_range(self, cls, kw):
        with pytest.raises(DomainError):
            cls(**kw)


class TestGuard:
    def test_generous_ceiling_is_transparent(self):
        target = CostTarget(build_model(ModelSpec("D1", seed=1)))
        x = np.linspace(-1, 1, 8)
        full = target.infer(x)
        res = guarded_infer(target, x, GuardConfig(full.flops))
        assert not res.breached
        assert res.output == full.output and res.cost.flops == full.flops

    def test_below_first_exit_aborts(self):
        target = CostTarget(build_model(ModelSpec("D1")))
        first = target.infer(np.ones(8)).trace.cumulative_flops[0]
        out, cost, breached = guarded_infer(target, np.ones(8), GuardConfig(first - 1))
        assert breached and out is None
        assert cost.flops <= first - 1

    def test_step_budget_under_eos_suppression(self):
        m = poison_model(build_model(ModelSpec("D2", max_len=64)), "eos-bias", 1e6)
        res = guarded_infer(m, [4, 5, 6], GuardConfig(10 * step_flops(m), "exit-now"))
        assert res.breached
        assert res.trace.length <= 10
        assert len(res.output) <= 10

    def test_infinite_ceiling(self):
        target = CostTarget(build_model(ModelSpec("D3", grid=16)))
        x = np.full(8, 0.5)
        res = guarded_infer(target, x, GuardConfig(math.inf))
        assert not res.breached and res.cost.flops == target.infer(x).flops

    def test_exit_now_d4_falls_back_to_light(self):
        m = build_model(ModelSpec("D4"))
        # theta = 0 routes everything heavy; the ceiling only fits gate + light
        target = CostTarget(m, Thresholds(theta=0.0))
        light = flops_closed_form(m.spec, "light")
        res = guarded_infer(target, np.zeros(8), GuardConfig(light, "exit-now"))
        assert res.breached and res.trace.route == "light" and res.output is not None

    @pytest.mark.parametrize("kw", [{"ceiling": 0}, {"ceiling": 10, "policy": "retry"}])
    def test_config_validation(self, kw):
        with pytest.raises((DomainError, UsageError)):
            GuardConfig(**kw)
