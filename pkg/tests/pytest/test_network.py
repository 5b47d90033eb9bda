"""Tests for MLP construction, forward and backward passes."""

import numpy as np
import pytest

from elephantlab.common.errors import ShapeError, SpecError, UsageError
from elephantlab.core.rng import RngState
from elephantlab.nn.activations import ActivationSpec, ElephantParams, elephant_backward, elephant_forward
from elephantlab.nn.network import (GradientBundle, LayerSpec, Network, backward, build_mlp,
                                    elephant_bias_init, flatten_gradients, forward, matched_width, mlp_specs,
                                    parameter_count_for, predict)

KINDS = [
    ActivationSpec("relu"),
    ActivationSpec("tanh"),
    ActivationSpec("sigmoid"),
    ActivationSpec("elu"),
    ActivationSpec("maxout", k=2),
    ActivationSpec("lwta", k=2),
    ActivationSpec("fta", k=4, l=-2.0, u=2.0),
    ActivationSpec("elephant", a=0.8, h=1.2, d=4),
]


def _weighted_output(net, x, d_output):
    return float(np.sum(predict(net, x) * d_output))


def finite_difference_gradient(net, x, d_output, h=1e-5):
    """Central differences of ``<d_output, f(x)>`` in flattening order."""
    grads = []
    for _, param in net.named_parameters(include_elephant=True):
        flat = param.reshape(-1)
        for j in range(flat.size):
            original = flat[j]
            flat[j] = original + h
            plus = _weighted_output(net, x, d_output)
            flat[j] = original - h
            minus = _weighted_output(net, x, d_output)
            flat[j] = original
            grads.append((plus - minus) / (2 * h))
    return np.array(grads)


def random_network(rng, spec):
    depth = int(rng.integers(1, 4))
    hidden = [2 * int(rng.integers(1, 9)) for _ in range(depth)]
    n_in = int(rng.integers(1, 5))
    n_out = int(rng.integers(1, 4))
    net = build_mlp(mlp_specs(n_in, hidden, n_out, spec), 0.5, rng)
    return net, n_in, n_out


def hand_elephant_net():
    spec = ActivationSpec("elephant", a=1.0, h=1.0, d=4)
    layers = [LayerSpec(1, 2, spec), LayerSpec(2, 1)]
    return Network(layers=layers,
                   weights=[np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])],
                   biases=[np.zeros(2), np.zeros(1)],
                   elephant_params={0: ElephantParams.initial(2, spec)})


class TestBuild:

    def test_elephant_bias_init(self):
        np.testing.assert_allclose(elephant_bias_init(3, 1.0), [-np.sqrt(3), 0.0, np.sqrt(3)])
        np.testing.assert_array_equal(elephant_bias_init(4, 0.0), np.zeros(4))

    def test_biases_follow_activation(self, rng):
        elephant = build_mlp(mlp_specs(2, [3], 1, ActivationSpec("elephant")), 1.0, rng)
        np.testing.assert_allclose(elephant.biases[0], [-np.sqrt(3), 0.0, np.sqrt(3)])
        np.testing.assert_array_equal(elephant.biases[1], [0.0])
        relu = build_mlp(mlp_specs(2, [3], 1, ActivationSpec("relu")), 1.0, rng)
        np.testing.assert_array_equal(relu.biases[0], np.zeros(3))

    def test_weight_init_range(self, rng):
        net = build_mlp(mlp_specs(16, [64], 4, ActivationSpec("relu")), 0.0, rng)
        assert np.max(np.abs(net.weights[0])) <= np.sqrt(1 / 16)
        assert np.max(np.abs(net.weights[1])) <= np.sqrt(1 / 64)

    def test_layer_norm_default_only_before_elephant(self):
        assert all(s.pre_layer_norm for s in mlp_specs(2, [4, 4], 1, ActivationSpec("elephant"))[:-1])
        assert not any(s.pre_layer_norm for s in mlp_specs(2, [4, 4], 1, ActivationSpec("relu")))
        assert not mlp_specs(2, [4], 1, ActivationSpec("elephant"))[-1].pre_layer_norm

    def test_elephant_params_per_unit(self, rng):
        net = build_mlp(mlp_specs(2, [5], 1, ActivationSpec("elephant", a=0.3, h=2.0)), 0.1, rng,
                        learnable_elephant=False)
        params = net.elephant_params[0]
        np.testing.assert_array_equal(params.a, np.full(5, 0.3))
        np.testing.assert_array_equal(params.h, np.full(5, 2.0))
        assert not params.trainable

    def test_chain_break(self, rng):
        with pytest.raises(SpecError):
            build_mlp([LayerSpec(2, 3, ActivationSpec("relu")), LayerSpec(4, 1)], 0.0, rng)

    def test_maxout_width_must_divide(self, rng):
        with pytest.raises(SpecError):
            build_mlp(mlp_specs(2, [5], 1, ActivationSpec("maxout", k=2)), 0.0, rng)

    def test_negative_sigma_bias(self, rng):
        with pytest.raises(SpecError):
            build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant")), -1.0, rng)

    def test_same_seed_same_network(self):
        specs = mlp_specs(3, [8], 2, ActivationSpec("tanh"))
        a = build_mlp(specs, 0.0, RngState(5))
        b = build_mlp(specs, 0.0, RngState(5))
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)

    def test_matched_width(self):
        relu_count = parameter_count_for(6, 1000, 3, ActivationSpec("relu"))
        assert matched_width(6, 3, ActivationSpec("relu")) == 1000
        for spec in (ActivationSpec("maxout", k=5), ActivationSpec("lwta", k=5),
                     ActivationSpec("fta", k=20), ActivationSpec("elephant")):
            width = matched_width(6, 3, spec)
            count = parameter_count_for(6, width, 3, spec)
            per_unit = parameter_count_for(6, width + spec.k, 3, spec) - count
            assert abs(count - relu_count) <= per_unit
            if spec.kind.value in ("maxout", "lwta"):
                assert width % 5 == 0

    def test_parameter_count_matches_network(self, rng):
        spec = ActivationSpec("maxout", k=5)
        net = build_mlp(mlp_specs(6, [50], 3, spec), 0.0, rng)
        assert net.parameter_count() == parameter_count_for(6, 50, 3, spec)


class TestForward:

    def test_hand_elephant_net(self):
        output, _ = forward(hand_elephant_net(), np.array([2.0]))
        assert output[0] == pytest.approx(2.0 / 17.0, rel=1e-15)

    def test_zero_head_gives_zero(self, rng):
        net = build_mlp(mlp_specs(3, [6], 1, ActivationSpec("tanh")), 0.0, rng)
        net.weights[1][...] = 0.0
        np.testing.assert_array_equal(predict(net, rng.normal(size=(10, 3))), np.zeros((10, 1)))

    def test_identity_net(self):
        net = Network(layers=[LayerSpec(2, 2)], weights=[np.eye(2)], biases=[np.zeros(2)])
        np.testing.assert_array_equal(predict(net, np.array([0.3, -7.0])), [0.3, -7.0])

    def test_batch_matches_samples(self, rng):
        net = build_mlp(mlp_specs(3, [8, 8], 2, ActivationSpec("elephant")), 0.5, rng)
        batch = rng.normal(size=(5, 3))
        stacked = np.vstack([predict(net, x) for x in batch])
        np.testing.assert_allclose(predict(net, batch), stacked, rtol=1e-14)

    def test_input_shape_error(self, rng):
        net = build_mlp(mlp_specs(3, [4], 1, ActivationSpec("relu")), 0.0, rng)
        with pytest.raises(ShapeError):
            forward(net, np.ones(2))

    def test_penultimate_is_last_hidden_output(self, rng):
        net = build_mlp(mlp_specs(2, [4, 6], 1, ActivationSpec("tanh")), 0.0, rng)
        _, cache = forward(net, rng.normal(size=(3, 2)))
        assert cache.penultimate.shape == (3, 6)


class TestBackward:

    @pytest.mark.parametrize("spec", KINDS, ids=lambda s: s.kind.value)
    def test_matches_finite_differences(self, spec):
        rng = RngState(100 + KINDS.index(spec))
        for _ in range(50 // len(KINDS) + 1):
            net, n_in, n_out = random_network(rng, spec)
            x = rng.normal(size=n_in)
            d_output = rng.normal(size=n_out)
            _, cache = forward(net, x)
            analytic = flatten_gradients(backward(net, cache, d_output))
            numeric = finite_difference_gradient(net, x, d_output)
            np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-6)

    def test_zero_cotangent(self, rng):
        net = build_mlp(mlp_specs(2, [4], 2, ActivationSpec("elephant")), 0.5, rng)
        _, cache = forward(net, np.ones(2))
        assert not np.any(flatten_gradients(backward(net, cache, np.zeros(2))))

    def test_linear_net_outer_product(self):
        W = np.array([[1.0, -2.0, 3.0], [0.0, 4.0, -1.0]])
        net = Network(layers=[LayerSpec(3, 2)], weights=[W], biases=[np.array([1.0, 2.0])])
        x = np.array([2.0, -1.0, 5.0])
        d_output = np.array([3.0, -2.0])
        output, cache = forward(net, x)
        np.testing.assert_array_equal(output, [20.0, -7.0])
        grads = backward(net, cache, d_output)
        np.testing.assert_array_equal(grads.weights[0], np.outer(d_output, x))
        np.testing.assert_array_equal(grads.biases[0], d_output)

    def test_one_hidden_layer_closed_form_terms(self, rng):
        spec = ActivationSpec("elephant", a=0.7, h=1.0, d=4)
        net = build_mlp(mlp_specs(3, [5], 1, spec, pre_layer_norm=False), 0.5, rng)
        x = rng.normal(size=3)
        V, b, u = net.weights[0], net.biases[0], net.weights[1][0]
        z = V @ x + b
        slope, _, _ = elephant_backward(z, 0.7, 1.0, 4, np.ones(5))
        _, cache = forward(net, x)
        grads = backward(net, cache, np.ones(1))
        np.testing.assert_allclose(grads.weights[1][0], elephant_forward(z, 0.7, 1.0, 4), rtol=1e-12)
        np.testing.assert_allclose(grads.weights[0], np.outer(u * slope, x), rtol=1e-12)
        np.testing.assert_allclose(grads.biases[0], u * slope, rtol=1e-12)
        np.testing.assert_array_equal(grads.biases[1], [1.0])

    def test_batch_gradient_is_sum_of_samples(self, rng):
        net = build_mlp(mlp_specs(2, [6], 2, ActivationSpec("elephant")), 0.5, rng)
        X = rng.normal(size=(4, 2))
        D = rng.normal(size=(4, 2))
        _, cache = forward(net, X)
        batched = flatten_gradients(backward(net, cache, D))
        total = np.zeros_like(batched)
        for x, d in zip(X, D):
            _, cache = forward(net, x)
            total += flatten_gradients(backward(net, cache, d))
        np.testing.assert_allclose(batched, total, rtol=1e-12, atol=1e-14)

    def test_stale_cache(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("relu")), 0.0, rng)
        _, cache = forward(net, np.ones(2))
        net.mark_updated()
        with pytest.raises(UsageError):
            backward(net, cache, np.ones(1))

    def test_cache_from_other_network(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("relu")), 0.0, rng)
        other = net.copy()
        _, cache = forward(other, np.ones(2))
        with pytest.raises(UsageError):
            backward(net, cache, np.ones(1))

    def test_d_output_shape(self, rng):
        net = build_mlp(mlp_specs(2, [4], 3, ActivationSpec("relu")), 0.0, rng)
        _, cache = forward(net, np.ones(2))
        with pytest.raises(ShapeError):
            backward(net, cache, np.ones(2))


class TestFlatten:

    def test_zero_bundle(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant")), 0.5, rng)
        flat = flatten_gradients(GradientBundle.zeros(net))
        assert flat.shape == (net.parameter_count(),)
        assert not np.any(flat)

    def test_single_layer_length(self):
        net = Network(layers=[LayerSpec(2, 2)], weights=[np.eye(2)], biases=[np.zeros(2)])
        assert flatten_gradients(GradientBundle.zeros(net)).shape == (6,)

    def test_order_is_weight_bias_a_h(self, rng):
        net = build_mlp(mlp_specs(1, [2], 1, ActivationSpec("elephant"), pre_layer_norm=False), 0.5, rng)
        names = [name for name, _ in net.named_parameters()]
        assert names == ["layers.0.weight", "layers.0.bias", "layers.0.a", "layers.0.h",
                         "layers.1.weight", "layers.1.bias"]
        assert flatten_gradients(GradientBundle.zeros(net), include_elephant=False).shape == (7,)

    def test_linearity(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant")), 0.5, rng)
        _, c1 = forward(net, rng.normal(size=2))
        g1 = backward(net, c1, np.ones(1))
        _, c2 = forward(net, rng.normal(size=2))
        g2 = backward(net, c2, np.ones(1))
        np.testing.assert_allclose(flatten_gradients(g1 + g2), flatten_gradients(g1) + flatten_gradients(g2))

    def test_bias_free_output(self, rng):
        net = build_mlp(mlp_specs(2, [3], 1, ActivationSpec("tanh"), output_bias=False), 0.0, rng)
        assert "layers.1.bias" not in dict(net.named_parameters())
        _, cache = forward(net, np.ones(2))
        assert backward(net, cache, np.ones(1)).biases[1] is None


class TestCopy:

    def test_copy_is_independent(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("elephant")), 0.5, rng)
        clone = net.copy()
        clone.weights[0][...] = 0.0
        clone.elephant_params[0].a[...] = 5.0
        assert np.any(net.weights[0])
        assert not np.any(net.elephant_params[0].a == 5.0)

    def test_load_parameters_from(self, rng):
        specs = mlp_specs(2, [4], 1, ActivationSpec("elephant"))
        net = build_mlp(specs, 0.5, rng)
        source = build_mlp(specs, 0.5, rng)
        version = net.version
        net.load_parameters_from(source)
        assert net.version == version + 1
        x = rng.normal(size=2)
        np.testing.assert_array_equal(predict(net, x), predict(source, x))

    def test_load_parameters_architecture_mismatch(self, rng):
        net = build_mlp(mlp_specs(2, [4], 1, ActivationSpec("relu")), 0.0, rng)
        other = build_mlp(mlp_specs(2, [6], 1, ActivationSpec("relu")), 0.0, rng)
        with pytest.raises(SpecError):
            net.load_parameters_from(other)
