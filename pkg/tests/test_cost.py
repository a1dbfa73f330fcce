import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from effattack.cost import (
    CostReport, HardwareProfile, aggregate, derive_cost, executed_path, flops_closed_form, inflation,
)
from effattack.errors import DomainError, UndefinedBaselineError, UsageError, ValidationError
from effattack.models import ModelSpec, build_model
from effattack.target import CostTarget


def report(flops, profile=HardwareProfile()):
    return derive_cost(flops, profile=profile)


class TestFlopsClosedForm:
    spec = ModelSpec("D1", in_dim=8, widths=(8, 8, 8), n_classes=2)

    def test_d1_first_exit(self):
        # dense 8->8 + relu, then head dense 8->2 + softmax
        assert flops_closed_form(self.spec, 0) == (2 * 64 + 8 + 8) + (2 * 16 + 2 + 7) == 185

    def test_d1_exits_accumulate(self):
        assert flops_closed_form(self.spec, 2) == 3 * flops_closed_form(self.spec, 0)

    def test_d2_zero_steps(self):
        assert flops_closed_form(ModelSpec("D2"), 0) == 0

    def test_d4_light_below_heavy(self):
        spec = ModelSpec("D4", in_dim=2, gate_widths=(), light_widths=(), heavy_widths=(4,))
        gate = 2 * 2 + 1 + 4
        light = 2 * 2 * 2 + 2 + 7
        heavy = (2 * 2 * 4 + 4 + 4) + (2 * 4 * 2 + 2 + 7)
        assert flops_closed_form(spec, "light") == gate + light
        assert flops_closed_form(spec, "heavy") == gate + heavy
        assert gate + light < gate + heavy

    def test_d3_counts(self):
        spec = ModelSpec("D3", in_dim=2, widths=(3,), grid=4, c_out=5)
        backbone = (2 * 2 * 3 + 3 + 3) + (2 * 3 * 20 + 20 + 80)
        assert flops_closed_form(spec, (3, 2)) == backbone + 10 * 3 + 14 * 3 + 5 * 2

    @pytest.mark.parametrize("spec,path", [
        (ModelSpec("D1"), 3), (ModelSpec("D2", max_len=4), 5), (ModelSpec("D3", grid=4), (2, 3)),
        (ModelSpec("D4"), "medium"),
    ])
    def test_bad_path(self, spec, path):
        with pytest.raises(DomainError):
            flops_closed_form(spec, path)

    def test_executed_path_round_trip(self):
        target = CostTarget(build_model(self.spec))
        res = target.infer([0.5] * 8)
        assert flops_closed_form(self.spec, executed_path(res.trace)) == res.flops


class TestDeriveCost:
    def test_zero(self):
        c = report(0)
        assert c.latency_ms == 0 and c.energy_mj == 0

    def test_arithmetic(self):
        c = report(1000, HardwareProfile(throughput=100, energy_per_flop=0.001, idle_power=0))
        assert c.latency_ms == pytest.approx(10.0)
        assert c.energy_mj == pytest.approx(1.0)

    def test_idle_power(self):
        c = report(1000, HardwareProfile(throughput=100, energy_per_flop=0.001, idle_power=1000))
        assert c.energy_mj == pytest.approx(1.0 + 10.0)

    def test_negative_flops(self):
        with pytest.raises(DomainError):
            derive_cost(-1)

    @pytest.mark.parametrize("field,value", [("throughput", 0), ("energy_per_flop", -1), ("idle_power", -1),
                                             ("throughput", float("nan"))])
    def test_profile_validation(self, field, value):
        with pytest.raises(ValidationError, match=field):
            HardwareProfile(**{field: value})


class TestInflation:
    def test_table_cell_semantics(self):
        assert inflation(report(100), report(146)).flops_pct == pytest.approx(46.00)

    def test_equal(self):
        inf = inflation(report(100), report(100))
        assert inf.flops_pct == inf.latency_pct == inf.energy_pct == 0

    def test_decrease(self):
        assert inflation(report(200), report(100)).flops_pct == pytest.approx(-50.0)

    def test_zero_baseline(self):
        with pytest.raises(UndefinedBaselineError):
            inflation(report(0), report(10))

    def test_energy_undefined_without_energy_model(self):
        free = HardwareProfile(energy_per_flop=0)
        assert inflation(report(10, free), report(20, free)).energy_pct == 0.0
        assert inflation(report(10, free), CostReport(20, 0.0, 1.0)).energy_pct is None


class TestAggregate:
    def test_single(self):
        inf = inflation(report(100), report(130))
        assert aggregate([inf])["flops_pct"]["mean"] == pytest.approx(inf.flops_pct)

    def test_mean_of_two(self):
        agg = aggregate([inflation(report(100), report(100)), inflation(report(100), report(200))])
        assert agg["flops_pct"] == {"mean": 50.0, "max": 100.0, "min": 0.0}

    def test_empty(self):
        with pytest.raises(UsageError):
            aggregate([])

    @given(st.lists(st.integers(1, 10**6), min_size=1, max_size=20), st.randoms(use_true_random=False))
    def test_order_independent(self, advs, rnd):
        reps = [inflation(report(1000), report(a)) for a in advs]
        shuffled = list(reps)
        rnd.shuffle(shuffled)
        assert aggregate(reps) == aggregate(shuffled)


class TestCostTarget:
    def test_measure_matches_infer(self):
        target = CostTarget(build_model(ModelSpec("D4")))
        x = [random.Random(0).uniform(-1, 1) for _ in range(8)]
        assert target.measure(x).flops == target.infer(x).flops

    def test_d2_iterations_are_steps(self):
        target = CostTarget(build_model(ModelSpec("D2", max_len=5)))
        res = target.infer([3, 4])
        assert target.cost_of(res).iterations == res.trace.length
