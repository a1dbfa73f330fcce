import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from effattack.autograd import GradTape, finite_diff_check, reverse_grad
from effattack.errors import DimensionError, DomainError, UsageError
from effattack.rng import derive_seed, generator
from effattack.tensor import (
    LayerSpec, activation_forward, as_tensor, cross_entropy, dense_forward, layer_flops, sgd_step,
    softmax,
)

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


class TestDenseForward:
    def test_flops_with_bias(self):
        layer = LayerSpec("dense", 4, 8)
        _, flops = dense_forward(layer, np.ones((8, 4)), np.ones(8), np.ones(4))
        assert flops == 2 * 4 * 8 + 8 == 72

    def test_scalar_no_bias(self):
        out, flops = dense_forward(LayerSpec("dense", 1, 1, has_bias=False), [[2.0]], None, [3.0])
        assert out.tolist() == [6.0]
        assert flops == 2

    def test_zero_weights(self):
        out, _ = dense_forward(LayerSpec("dense", 4, 8), np.zeros((8, 4)), np.zeros(8), np.arange(4.0))
        assert np.all(out == 0)

    def test_shape_mismatch_names_layer(self):
        with pytest.raises(DimensionError, match="enc.0"):
            dense_forward(LayerSpec("dense", 4, 8), np.zeros((8, 3)), np.zeros(8), np.zeros(4), name="enc.0")

    def test_missing_bias(self):
        with pytest.raises(DimensionError):
            dense_forward(LayerSpec("dense", 2, 2), np.eye(2), None, np.zeros(2))

    def test_rejects_nonfinite_tensor(self):
        with pytest.raises(DomainError):
            as_tensor([1.0, math.nan])

    @given(st.integers(1, 30), st.integers(1, 30), st.booleans())
    def test_flops_formula(self, n_in, n_out, bias):
        layer = LayerSpec("dense", n_in, n_out, has_bias=bias)
        _, flops = dense_forward(layer, np.ones((n_out, n_in)), np.ones(n_out) if bias else None, np.ones(n_in))
        assert flops == 2 * n_in * n_out + (n_out if bias else 0)


class TestActivations:
    def test_softmax_symmetric(self):
        out, _ = activation_forward("softmax", [0.0, 0.0])
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_relu(self):
        out, flops = activation_forward("relu", [-1.0, 2.0])
        assert out.tolist() == [0.0, 2.0]
        assert flops == 2

    def test_softmax_closed_form(self):
        out, flops = activation_forward("softmax", [math.log(1), math.log(3)])
        np.testing.assert_allclose(out, [0.25, 0.75])
        assert flops == 4 * 2 - 1

    def test_sigmoid_flops(self):
        _, flops = activation_forward("sigmoid", np.zeros(5))
        assert flops == 20

    def test_unknown_kind(self):
        with pytest.raises(DomainError):
            activation_forward("tanh", [1.0])

    def test_empty_vector(self):
        with pytest.raises(DomainError):
            activation_forward("relu", [])

    def test_embedding_costs_nothing(self):
        assert layer_flops(LayerSpec("embedding-lookup", 30, 8, has_bias=False)) == 0

    @given(arrays(np.float64, st.integers(1, 12), elements=finite))
    def test_softmax_is_distribution(self, x):
        p = softmax(x)
        assert np.all(p >= 0)
        assert math.isclose(p.sum(), 1.0, rel_tol=1e-12)

    @given(arrays(np.float64, st.integers(1, 12), elements=finite), finite)
    def test_softmax_shift_invariant(self, x, c):
        np.testing.assert_allclose(softmax(x), softmax(x + c), atol=1e-12)


class TestCrossEntropy:
    def test_perfect(self):
        assert cross_entropy([1.0, 0.0], 0) == pytest.approx(0.0, abs=1e-9)

    def test_uniform(self):
        assert cross_entropy([0.5, 0.5], 1) == pytest.approx(math.log(2), abs=1e-9)

    def test_quarter(self):
        assert cross_entropy([0.25, 0.75], 0) == pytest.approx(math.log(4), abs=1e-9)

    def test_zero_probability_is_finite(self):
        assert math.isfinite(cross_entropy([0.0, 1.0], 0))

    def test_bad_index(self):
        with pytest.raises(DomainError):
            cross_entropy([0.5, 0.5], 2)


class TestSgdStep:
    def test_arithmetic(self):
        assert sgd_step({"p": np.array([1.0])}, {"p": np.array([2.0])}, 0.5)["p"].tolist() == [0.0]

    def test_zero_gradient(self):
        p = {"p": np.array([1.0, -2.0])}
        assert np.array_equal(sgd_step(p, {"p": np.zeros(2)}, 0.1)["p"], p["p"])

    def test_two_steps_equal_one_summed(self):
        p, g = {"p": np.array([1.0, 2.0])}, {"p": np.array([0.5, -0.25])}
        twice = sgd_step(sgd_step(p, g, 0.5), g, 0.5)
        once = sgd_step(p, {"p": 2 * g["p"]}, 0.5)
        np.testing.assert_allclose(twice["p"], once["p"])

    def test_missing_gradient_passes_through(self):
        p = {"a": np.ones(2), "b": np.ones(3)}
        out = sgd_step(p, {"a": np.ones(2)}, 1.0)
        assert out["b"] is p["b"]

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            sgd_step({"p": np.ones(2)}, {"p": np.ones(3)}, 0.1)

    def test_nonpositive_lr(self):
        with pytest.raises(DomainError):
            sgd_step({"p": np.ones(1)}, {"p": np.ones(1)}, 0.0)


class TestReverseGrad:
    def test_linear_map(self):
        t = GradTape()
        x = t.leaf([3.0], "x")
        y = t.sum(t.dense(t.leaf([[2.0]]), None, x))
        assert reverse_grad(t, y)["x"].tolist() == [2.0]

    def test_dead_relu(self):
        t = GradTape()
        x = t.leaf([-1.0], "x")
        assert reverse_grad(t, t.sum(t.relu(x)))["x"].tolist() == [0.0]

    def test_unused_leaf_gets_zero(self):
        t = GradTape()
        x, z = t.leaf([1.0], "x"), t.leaf([5.0, 6.0], "z")
        g = reverse_grad(t, t.sum(t.scale(x, 3.0)))
        assert g["z"].tolist() == [0.0, 0.0]

    def test_nonscalar_output(self):
        t = GradTape()
        with pytest.raises(UsageError):
            reverse_grad(t, t.leaf([1.0, 2.0]))

    def test_foreign_var(self):
        a, b = GradTape(), GradTape()
        with pytest.raises(UsageError):
            a.add(a.leaf([1.0]), b.leaf([1.0]))

    def test_replay_recomputes(self):
        t = GradTape()
        x = t.leaf([2.0], "x")
        y = t.mul(x, x)
        assert t.replay({"x": [3.0]})[y.id].tolist() == [9.0]

    def test_composed_net_matches_finite_differences(self):
        rng = generator(7, "toy-net")
        W1, b1 = rng.standard_normal((5, 3)), rng.standard_normal(5)
        W2 = rng.standard_normal((2, 5))

        def f(x):
            t = GradTape()
            xv = t.leaf(x, "x")
            h = t.sigmoid(t.dense(t.leaf(W1), t.leaf(b1), xv))
            out = t.log(t.take(t.softmax(t.dense(t.leaf(W2), None, h)), 0))
            return float(out.value), reverse_grad(t, out)["x"]

        for _ in range(10):
            assert finite_diff_check(f, rng.standard_normal(3)).passed


class TestFiniteDiffCheck:
    def test_square(self):
        res = finite_diff_check(lambda x: (float(x[0] ** 2), 2 * x), [2.0], tol=1e-4)
        assert res.passed
        assert res.max_rel_error < 1e-6

    def test_constant(self):
        assert finite_diff_check(lambda x: (1.0, np.zeros_like(x)), [0.3, 4.0]).passed

    def test_wrong_gradient_fails(self):
        res = finite_diff_check(lambda x: (float(x[0] ** 2), 2 * x + 1), [2.0])
        assert not res.passed
        assert res.max_rel_error > 0.1


class TestRng:
    def test_labels_are_independent(self):
        assert derive_seed(0, "a") != derive_seed(0, "b")
        assert derive_seed(0, "a") == derive_seed(0, "a")

    def test_generator_reproducible(self):
        assert np.array_equal(generator(3, "x").standard_normal(4), generator(3, "x").standard_normal(4))

    @settings(max_examples=30)
    @given(st.integers(0, 2**40), st.text(max_size=8))
    def test_seed_in_range(self, seed, label):
        assert 0 <= derive_seed(seed, label) < 2**64
