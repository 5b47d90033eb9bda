"""Tests for the SGD, RMSProp and Adam update rules."""

import numpy as np
import pytest

from elephantlab.common.errors import NonFiniteGradientError, ParameterError, ShapeError
from elephantlab.nn.activations import ActivationSpec
from elephantlab.nn.network import GradientBundle, LayerSpec, Network, build_mlp, mlp_specs
from elephantlab.nn.optim import OptimizerKind, OptimizerState, optimizer_step


def scalar_net(value=1.0):
    return Network(layers=[LayerSpec(1, 1)], weights=[np.array([[value]])], biases=[np.zeros(1)])


def scalar_gradient(net, value):
    g = GradientBundle.zeros(net)
    g.weights[0][...] = value
    return g


class TestUpdateRules:

    def test_sgd_step(self):
        net = scalar_net(1.0)
        optimizer_step(OptimizerState(OptimizerKind.SGD, learning_rate=0.1), net, scalar_gradient(net, 2.0))
        assert net.weights[0][0, 0] == pytest.approx(0.8)

    def test_rmsprop_first_step(self):
        net = scalar_net(0.0)
        state = OptimizerState(OptimizerKind.RMSPROP, learning_rate=0.01, rmsprop_decay=0.999)
        optimizer_step(state, net, scalar_gradient(net, 1.0))
        assert net.weights[0][0, 0] == pytest.approx(-0.01 / np.sqrt(0.001), rel=1e-6)
        assert -net.weights[0][0, 0] == pytest.approx(0.3162, abs=1e-4)

    def test_adam_first_step_is_learning_rate(self):
        net = scalar_net(0.0)
        state = OptimizerState(OptimizerKind.ADAM, learning_rate=1e-3)
        optimizer_step(state, net, scalar_gradient(net, 37.0))
        assert net.weights[0][0, 0] == pytest.approx(-1e-3, rel=1e-6)
        assert state.step_count == 1

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_sign_symmetry(self, kind):
        up, down = scalar_net(0.0), scalar_net(0.0)
        optimizer_step(OptimizerState(kind, learning_rate=0.05), up, scalar_gradient(up, 0.7))
        optimizer_step(OptimizerState(kind, learning_rate=0.05), down, scalar_gradient(down, -0.7))
        assert up.weights[0][0, 0] == pytest.approx(-down.weights[0][0, 0], rel=1e-12)

    @pytest.mark.parametrize("kind", list(OptimizerKind))
    def test_zero_gradient_is_still(self, kind, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("relu")), 0.0, rng)
        before = [w.copy() for w in net.weights]
        optimizer_step(OptimizerState(kind), net, GradientBundle.zeros(net))
        for w, b in zip(net.weights, before):
            np.testing.assert_array_equal(w, b)

    def test_moments_keyed_by_parameter_name(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant")), 0.5, rng)
        state = OptimizerState(OptimizerKind.ADAM)
        g = GradientBundle.zeros(net)
        optimizer_step(state, net, g)
        assert set(state.first_moments) == {"layers.0.weight", "layers.0.bias", "layers.0.a", "layers.0.h",
                                            "layers.1.weight", "layers.1.bias"}
        assert state.second_moments["layers.0.weight"].shape == net.weights[0].shape


class TestElephantParameters:

    def test_clamped_after_step(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant", a=0.2)), 0.5, rng)
        g = GradientBundle.zeros(net)
        g.elephant_a[0][...] = 10.0
        optimizer_step(OptimizerState(OptimizerKind.SGD, learning_rate=1.0), net, g)
        np.testing.assert_array_equal(net.elephant_params[0].a, np.full(4, 1e-4))

    def test_frozen_parameters_untouched(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant", a=0.2)), 0.5, rng,
                        learnable_elephant=False)
        g = GradientBundle.zeros(net)
        g.elephant_a[0][...] = 1.0
        g.elephant_h[0][...] = 1.0
        optimizer_step(OptimizerState(OptimizerKind.SGD, learning_rate=0.1), net, g)
        np.testing.assert_array_equal(net.elephant_params[0].a, np.full(4, 0.2))
        np.testing.assert_array_equal(net.elephant_params[0].h, np.full(4, 1.0))


class TestFailures:

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_gradient_leaves_state_untouched(self, bad, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("tanh")), 0.0, rng)
        state = OptimizerState(OptimizerKind.ADAM)
        optimizer_step(state, net, GradientBundle.zeros(net))
        weights = [w.copy() for w in net.weights]
        moments = {k: v.copy() for k, v in state.first_moments.items()}
        version = net.version

        g = GradientBundle.zeros(net)
        g.weights[0][...] = 1.0
        g.biases[1][0] = bad
        with pytest.raises(NonFiniteGradientError) as exc_info:
            optimizer_step(state, net, g)
        assert "layers.1.bias" in str(exc_info.value)
        assert state.step_count == 1
        assert net.version == version
        for w, b in zip(net.weights, weights):
            np.testing.assert_array_equal(w, b)
        for name, value in moments.items():
            np.testing.assert_array_equal(state.first_moments[name], value)

    def test_gradient_shape_mismatch(self):
        net = scalar_net()
        g = GradientBundle.zeros(net)
        g.weights[0] = np.zeros((2, 1))
        with pytest.raises(ShapeError):
            optimizer_step(OptimizerState(OptimizerKind.SGD), net, g)

    @pytest.mark.parametrize("overrides", [
        {"learning_rate": 0.0},
        {"rmsprop_decay": 1.0},
        {"adam_beta1": 0.0},
        {"eps": -1.0},
    ])
    def test_invalid_hyperparameters(self, overrides):
        with pytest.raises(ParameterError):
            OptimizerState(**overrides)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            OptimizerState("lion")

    def test_from_config(self):
        state = OptimizerState.from_config({"kind": "rmsprop", "learning_rate": "3e-4"})
        assert state.kind == OptimizerKind.RMSPROP
        assert state.learning_rate == 3e-4
        assert state.rmsprop_decay == 0.999
