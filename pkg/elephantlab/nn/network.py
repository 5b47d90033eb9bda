"""Feedforward MLPs with exact reverse-mode gradients.

A :class:`Network` is a chain of dense layers. Each layer computes
``z = W x + b``, optionally normalizes ``z`` (layer norm without affine
parameters), and applies its activation. The last layer of every network
built by :func:`mlp_specs` is linear.

Initialization:
- weights ~ U[-sqrt(1/in_features), sqrt(1/in_features)]
- biases of layers feeding an Elephant activation are evenly spaced over
  [-sqrt(3) sigma_bias, sqrt(3) sigma_bias], endpoints included
- all other biases are zero

:func:`forward` and :func:`backward` accept a single sample ``(n,)`` or a batch
``(batch, n)``. The backward pass of a batch returns the sum of the
per-sample gradient bundles.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..common.errors import ShapeError, SpecError, UsageError
from ..core.linalg import (DEFAULT_LAYER_NORM_EPS, LayerNormCache, layer_norm_backward,
                           layer_norm_forward, linear_forward)
from ..core.rng import RngState
from .activations import (ActivationKind, ActivationSpec, ElephantParams, activation_backward,
                          activation_forward)


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: ``in_features -> out_features`` followed by an optional activation."""

    in_features: int
    out_features: int
    activation: Optional[ActivationSpec] = None
    pre_layer_norm: bool = False
    bias: bool = True

    @property
    def output_dim(self) -> int:
        if self.activation is None:
            return self.out_features
        return self.activation.output_dim(self.out_features)

    @property
    def is_elephant(self) -> bool:
        return self.activation is not None and self.activation.kind == ActivationKind.ELEPHANT

    def to_dict(self) -> dict:
        return {
            "in_features": self.in_features,
            "out_features": self.out_features,
            "activation": self.activation.to_dict() if self.activation else None,
            "pre_layer_norm": self.pre_layer_norm,
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        activation = data.get("activation")
        return cls(
            in_features=int(data["in_features"]),
            out_features=int(data["out_features"]),
            activation=ActivationSpec.from_dict(activation) if activation else None,
            pre_layer_norm=bool(data.get("pre_layer_norm", False)),
            bias=bool(data.get("bias", True)),
        )


@dataclass
class Network:
    layers: List[LayerSpec]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    elephant_params: Dict[int, ElephantParams] = field(default_factory=dict)
    layer_norm_eps: float = DEFAULT_LAYER_NORM_EPS
    version: int = 0

    @property
    def n_inputs(self) -> int:
        return self.layers[0].in_features

    @property
    def n_outputs(self) -> int:
        return self.layers[-1].output_dim

    @property
    def n_hidden_layers(self) -> int:
        return len(self.layers) - 1

    def named_parameters(self, include_elephant: bool = True) -> Iterator[Tuple[str, np.ndarray]]:
        """Yield ``(name, array)`` in flattening order; arrays are the live parameters."""
        for i, spec in enumerate(self.layers):
            yield f"layers.{i}.weight", self.weights[i]
            if spec.bias:
                yield f"layers.{i}.bias", self.biases[i]
            if include_elephant and i in self.elephant_params:
                yield f"layers.{i}.a", self.elephant_params[i].a
                yield f"layers.{i}.h", self.elephant_params[i].h

    def parameter_count(self, include_elephant: bool = True) -> int:
        return sum(p.size for _, p in self.named_parameters(include_elephant))

    def copy(self) -> "Network":
        return Network(
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            elephant_params={i: p.copy() for i, p in self.elephant_params.items()},
            layer_norm_eps=self.layer_norm_eps,
        )

    def load_parameters_from(self, other: "Network") -> None:
        """Copy every parameter value of an identically shaped network into this one."""
        if [s.to_dict() for s in self.layers] != [s.to_dict() for s in other.layers]:
            raise SpecError("Cannot copy parameters between different architectures")
        for dst, src in zip(self.weights, other.weights):
            dst[...] = src
        for dst, src in zip(self.biases, other.biases):
            dst[...] = src
        for i, params in self.elephant_params.items():
            params.a[...] = other.elephant_params[i].a
            params.h[...] = other.elephant_params[i].h
        self.mark_updated()

    def mark_updated(self) -> None:
        self.version += 1


@dataclass
class LayerRecord:
    inputs: np.ndarray
    pre_activation: np.ndarray
    layer_norm: Optional[LayerNormCache]
    activation_input: np.ndarray
    outputs: np.ndarray


@dataclass
class ForwardCache:
    records: List[LayerRecord]
    batched: bool
    network_id: int
    version: int

    @property
    def penultimate(self) -> np.ndarray:
        """Input to the final layer, i.e. the last hidden representation."""
        return self.records[-1].inputs


@dataclass
class GradientBundle:
    """Per-parameter gradients mirroring a :class:`Network`.

    ``biases[i]`` is None for bias-free layers.
    """

    weights: List[np.ndarray]
    biases: List[Optional[np.ndarray]]
    elephant_a: Dict[int, np.ndarray] = field(default_factory=dict)
    elephant_h: Dict[int, np.ndarray] = field(default_factory=dict)

    @classmethod
    def zeros(cls, net: Network) -> "GradientBundle":
        return cls(
            weights=[np.zeros_like(w) for w in net.weights],
            biases=[np.zeros_like(b) if s.bias else None for s, b in zip(net.layers, net.biases)],
            elephant_a={i: np.zeros_like(p.a) for i, p in net.elephant_params.items()},
            elephant_h={i: np.zeros_like(p.h) for i, p in net.elephant_params.items()},
        )

    def named_gradients(self, include_elephant: bool = True) -> Iterator[Tuple[str, np.ndarray]]:
        for i, weight in enumerate(self.weights):
            yield f"layers.{i}.weight", weight
            if self.biases[i] is not None:
                yield f"layers.{i}.bias", self.biases[i]
            if include_elephant and i in self.elephant_a:
                yield f"layers.{i}.a", self.elephant_a[i]
                yield f"layers.{i}.h", self.elephant_h[i]

    def _combine(self, other: "GradientBundle", op) -> "GradientBundle":
        return GradientBundle(
            weights=[op(a, b) for a, b in zip(self.weights, other.weights)],
            biases=[None if a is None else op(a, b) for a, b in zip(self.biases, other.biases)],
            elephant_a={i: op(v, other.elephant_a[i]) for i, v in self.elephant_a.items()},
            elephant_h={i: op(v, other.elephant_h[i]) for i, v in self.elephant_h.items()},
        )

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        return self._combine(other, np.add)

    def scale(self, factor: float) -> "GradientBundle":
        return GradientBundle(
            weights=[w * factor for w in self.weights],
            biases=[None if b is None else b * factor for b in self.biases],
            elephant_a={i: v * factor for i, v in self.elephant_a.items()},
            elephant_h={i: v * factor for i, v in self.elephant_h.items()},
        )


def mlp_specs(n_inputs: int, hidden: Sequence[int], n_outputs: int,
              activation: Optional[ActivationSpec],
              pre_layer_norm: Optional[bool] = None,
              output_bias: bool = True) -> List[LayerSpec]:
    """Layer specs for an MLP with ``activation`` on every hidden layer and a linear head.

    ``pre_layer_norm=None`` normalizes before Elephant activations only.
    """
    if pre_layer_norm is None:
        pre_layer_norm = activation is not None and activation.kind == ActivationKind.ELEPHANT
    specs = []
    width_in = n_inputs
    for width in hidden:
        spec = LayerSpec(width_in, int(width), activation, bool(pre_layer_norm))
        specs.append(spec)
        width_in = spec.output_dim
    specs.append(LayerSpec(width_in, n_outputs, None, False, bias=output_bias))
    return specs


def elephant_bias_init(units: int, sigma_bias: float) -> np.ndarray:
    """Evenly spaced biases over ``[-sqrt(3) sigma_bias, sqrt(3) sigma_bias]``."""
    if units == 1:
        return np.zeros(1)
    limit = np.sqrt(3.0) * sigma_bias
    return np.linspace(-limit, limit, units)


def build_mlp(specs: Sequence[LayerSpec], sigma_bias: float, rng: RngState,
              learnable_elephant: bool = True,
              layer_norm_eps: float = DEFAULT_LAYER_NORM_EPS) -> Network:
    """Initialize a network for ``specs``.

    Raises:
        SpecError: If consecutive layers do not chain or ``sigma_bias`` is negative
    """
    if not specs:
        raise SpecError("A network needs at least one layer")
    if sigma_bias < 0:
        raise SpecError(f"sigma_bias must be non-negative, got {sigma_bias}")
    for i, spec in enumerate(specs):
        if spec.in_features < 1 or spec.out_features < 1:
            raise SpecError(f"Layer {i} has non-positive dimensions {spec.in_features}->{spec.out_features}")
        if spec.activation is not None:
            try:
                spec.activation.check_units(spec.out_features)
            except ShapeError as e:
                raise SpecError(f"Layer {i}: {e}")
        if spec.pre_layer_norm and spec.out_features < 2:
            raise SpecError(f"Layer {i} normalizes a single unit")
        if i and specs[i - 1].output_dim != spec.in_features:
            raise SpecError(
                f"Layer {i} expects {spec.in_features} inputs but layer {i - 1} "
                f"produces {specs[i - 1].output_dim}"
            )

    weights, biases, elephant = [], [], {}
    for i, spec in enumerate(specs):
        limit = np.sqrt(1.0 / spec.in_features)
        weights.append(rng.uniform(-limit, limit, size=(spec.out_features, spec.in_features)))
        if spec.is_elephant and spec.bias:
            biases.append(elephant_bias_init(spec.out_features, sigma_bias))
        else:
            biases.append(np.zeros(spec.out_features))
        if spec.is_elephant:
            elephant[i] = ElephantParams.initial(spec.out_features, spec.activation, learnable_elephant)

    return Network(layers=list(specs), weights=weights, biases=biases,
                   elephant_params=elephant, layer_norm_eps=layer_norm_eps)


def forward(net: Network, x) -> Tuple[np.ndarray, ForwardCache]:
    """Run the network on a sample or a batch and keep what backward needs."""
    x = np.asarray(x, dtype=np.float64)
    batched = x.ndim == 2
    if x.ndim not in (1, 2) or x.shape[-1] != net.n_inputs:
        raise ShapeError(f"Expected input with {net.n_inputs} features, got shape {x.shape}")
    h = x if batched else x[None, :]

    records = []
    for i, spec in enumerate(net.layers):
        z = linear_forward(net.weights[i], net.biases[i], h)
        ln_cache = None
        s = z
        if spec.pre_layer_norm:
            s, ln_cache = layer_norm_forward(z, net.layer_norm_eps)
        if spec.activation is None:
            y = s
        else:
            y = activation_forward(spec.activation, s, net.elephant_params.get(i))
        records.append(LayerRecord(h, z, ln_cache, s, y))
        h = y

    output = h if batched else h[0]
    return output, ForwardCache(records, batched, id(net), net.version)


def predict(net: Network, x) -> np.ndarray:
    return forward(net, x)[0]


def backward(net: Network, cache: ForwardCache, d_output) -> GradientBundle:
    """Gradient of ``<d_output, f(x)>`` with respect to every parameter.

    Raises:
        UsageError: If the cache was produced by another network or before a parameter update
    """
    if cache.network_id != id(net) or cache.version != net.version:
        raise UsageError("Forward cache is stale: the network changed since it was produced")
    grad = np.asarray(d_output, dtype=np.float64)
    expected = cache.records[-1].outputs.shape if cache.batched else cache.records[-1].outputs.shape[1:]
    if grad.shape != expected:
        raise ShapeError(f"d_output shape {grad.shape} does not match output shape {expected}")
    if not cache.batched:
        grad = grad[None, :]

    bundle = GradientBundle.zeros(net)
    for i in reversed(range(len(net.layers))):
        spec = net.layers[i]
        record = cache.records[i]
        if spec.activation is None:
            ds = grad
        else:
            elephant = net.elephant_params.get(i)
            ds, da, dh = activation_backward(spec.activation, record.activation_input, grad, elephant)
            if elephant is not None:
                bundle.elephant_a[i] = da.sum(axis=0)
                bundle.elephant_h[i] = dh.sum(axis=0)
        dz = layer_norm_backward(record.layer_norm, ds) if spec.pre_layer_norm else ds
        bundle.weights[i] = dz.T @ record.inputs
        if spec.bias:
            bundle.biases[i] = dz.sum(axis=0)
        if i:
            grad = dz @ net.weights[i]
    return bundle


def flatten_gradients(g: GradientBundle, include_elephant: bool = True) -> np.ndarray:
    """Concatenate a bundle layer by layer: weight (row-major), bias, a, h."""
    parts = [v.ravel() for _, v in g.named_gradients(include_elephant)]
    return np.concatenate(parts) if parts else np.zeros(0)


def parameter_count_for(n_inputs: int, width: int, n_outputs: int,
                        activation: ActivationSpec, learnable_elephant: bool = True) -> int:
    """Parameters of a one-hidden-layer MLP of the given hidden width."""
    features = activation.output_dim(width)
    count = n_inputs * width + width + features * n_outputs + n_outputs
    if activation.kind == ActivationKind.ELEPHANT and learnable_elephant:
        count += 2 * width
    return count


def matched_width(n_inputs: int, n_outputs: int, activation: ActivationSpec,
                  baseline_width: int = 1000, learnable_elephant: bool = True) -> int:
    """Hidden width whose parameter count is closest to a ReLU MLP of ``baseline_width``.

    Widths are restricted to multiples of ``k`` for Maxout and LWTA.
    """
    target = parameter_count_for(n_inputs, baseline_width, n_outputs,
                                 ActivationSpec(ActivationKind.RELU))
    step = activation.k if activation.kind in (ActivationKind.MAXOUT, ActivationKind.LWTA) else 1
    candidates = np.arange(step, 4 * baseline_width * max(step, 1) + step, step)
    counts = np.array([parameter_count_for(n_inputs, int(w), n_outputs, activation, learnable_elephant)
                       for w in candidates])
    return int(candidates[int(np.argmin(np.abs(counts - target)))])
