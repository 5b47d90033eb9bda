"""Kernel diagnostics over a trained network.

All functions read the network without modifying it. Gradients are taken
per sample and flattened with :func:`~elephantlab.nn.network.flatten_gradients`,
so every kernel value is an inner product of two flat parameter gradients.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, List, Optional, Sequence

import numpy as np
from scipy.special import softmax

from ..common.errors import DegenerateNetworkError, DiagnosticsError, SpecError, UsageError
from ..common.logging import logger
from ..nn.activations import activation_backward, activation_forward
from ..nn.network import Network, backward, flatten_gradients, forward, predict

DEFAULT_COVARIANCE_SAMPLES = 32
MIN_GRADIENT_NORM = 1e-12


class LossKind(str, Enum):
    SQUARED_ERROR = "squared_error"
    TD_ERROR = "td_error"
    CROSS_ENTROPY = "cross_entropy"


@dataclass
class KernelMatrix:
    entries: np.ndarray
    sample_ids: List[Any]
    excluded: List[Any] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.entries.shape[0]

    def mean_abs_offdiag(self) -> float:
        mask = ~np.eye(self.k, dtype=bool)
        return float(np.mean(np.abs(self.entries[mask])))


@dataclass
class NtkCurve:
    """Kernel values between an anchor ``x_t`` and every point of ``xs``.

    ``normalized`` divides by the largest absolute value on the curve;
    ``self_normalized`` divides by the self-kernel at ``x_t``.
    """

    x_t: np.ndarray
    xs: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray
    self_normalized: np.ndarray
    self_kernel: float


def _scalar_gradient(net: Network, x, include_elephant_params: bool) -> np.ndarray:
    output, cache = forward(net, np.asarray(x, dtype=np.float64))
    return flatten_gradients(backward(net, cache, np.ones_like(output)), include_elephant_params)


def _check_scalar(net: Network) -> None:
    if net.n_outputs != 1:
        raise UsageError(f"The NTK needs a scalar-output network, this one has {net.n_outputs} outputs")


def per_sample_gradients(net: Network, inputs, d_outputs, include_elephant_params: bool = True) -> np.ndarray:
    """Stack ``flatten(backward(x_i, d_output_i))`` for each row into a matrix."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    d_outputs = np.asarray(d_outputs, dtype=np.float64).reshape(len(inputs), -1)
    rows = []
    for x, d_out in zip(inputs, d_outputs):
        _, cache = forward(net, x)
        rows.append(flatten_gradients(backward(net, cache, d_out), include_elephant_params))
    return np.vstack(rows)


def ntk(net: Network, x, x_t, include_elephant_params: bool = True) -> float:
    """Empirical neural tangent kernel ``<grad f(x), grad f(x_t)>`` of a scalar network."""
    _check_scalar(net)
    return float(np.dot(_scalar_gradient(net, x, include_elephant_params),
                        _scalar_gradient(net, x_t, include_elephant_params)))


def ntk_closed_form(net: Network, x, x_t) -> float:
    """Closed-form NTK of a one-hidden-layer network ``f(x) = u . s(Vx + b) [+ c]``.

    Expands to ``s(z).s(z_t) + (x.x_t + 1) (u*s'(z)).(u*s'(z_t))`` plus 1 when the
    output layer has a bias. Elephant ``a``/``h`` are treated as constants.
    Only element-wise hidden activations without layer norm are supported.
    """
    _check_scalar(net)
    if len(net.layers) != 2:
        raise SpecError("The closed-form kernel needs exactly one hidden layer")
    hidden, head = net.layers
    if hidden.activation is None or hidden.activation.kind.is_structured or hidden.pre_layer_norm:
        raise SpecError("The closed-form kernel needs an element-wise activation without layer norm")

    x = np.asarray(x, dtype=np.float64)
    x_t = np.asarray(x_t, dtype=np.float64)
    V, b, u = net.weights[0], net.biases[0], net.weights[1][0]
    if not hidden.bias:
        b = np.zeros_like(b)
    elephant = net.elephant_params.get(0)

    def terms(point):
        z = V @ point + b
        value = activation_forward(hidden.activation, z, elephant)
        slope = activation_backward(hidden.activation, z, np.ones_like(z), elephant)[0]
        return value, slope

    s, ds = terms(x)
    s_t, ds_t = terms(x_t)
    bias_term = 1.0 if hidden.bias else 0.0
    value = s @ s_t + (x @ x_t + bias_term) * ((u * ds) @ (u * ds_t))
    if head.bias:
        value += 1.0
    return float(value)


def normalized_ntk_curve(net: Network, x_t, xs, include_elephant_params: bool = False) -> NtkCurve:
    """Kernel between ``x_t`` and each point of ``xs``, scaled into ``[-1, 1]``.

    Raises:
        DegenerateNetworkError: If the self-kernel at ``x_t`` is zero
    """
    _check_scalar(net)
    x_t = np.atleast_1d(np.asarray(x_t, dtype=np.float64))
    points = np.asarray(xs, dtype=np.float64).reshape(-1, net.n_inputs)
    anchor = _scalar_gradient(net, x_t, include_elephant_params)
    self_kernel = float(anchor @ anchor)
    if self_kernel <= 0.0:
        raise DegenerateNetworkError(f"Self-kernel at x_t={x_t.tolist()} is zero")

    grads = per_sample_gradients(net, points, np.ones(len(points)), include_elephant_params)
    raw = grads @ anchor
    peak = float(np.max(np.abs(raw)))
    if peak == 0.0:
        raise DegenerateNetworkError("Kernel is zero at every curve point")
    return NtkCurve(x_t=x_t, xs=points, raw=raw, normalized=raw / peak,
                    self_normalized=raw / self_kernel, self_kernel=self_kernel)


def _loss_output_gradient(net: Network, loss_kind: LossKind, sample, target_net: Optional[Network],
                          gamma: float):
    """Return ``(x, dL/df)`` for one sample under ``loss_kind``."""
    if loss_kind == LossKind.SQUARED_ERROR:
        x, y = sample
        output, _ = forward(net, x)
        return x, 2.0 * (output - np.asarray(y, dtype=np.float64).reshape(output.shape))
    if loss_kind == LossKind.CROSS_ENTROPY:
        x, label = sample
        output, _ = forward(net, x)
        probs = softmax(output)
        probs[int(label)] -= 1.0
        return x, probs
    # Transition-like sample: state, action, reward, next_state, done
    q, _ = forward(net, sample.state)
    bootstrap = 0.0
    if not sample.done:
        bootstrap = float(np.max(forward(target_net or net, sample.next_state)[0]))
    target = sample.reward + gamma * bootstrap
    d_output = np.zeros_like(q)
    d_output[int(sample.action)] = 2.0 * (q[int(sample.action)] - target)
    return sample.state, d_output


def gradient_covariance(net: Network, loss_kind, samples: Sequence[Any],
                        target_net: Optional[Network] = None, gamma: float = 0.99,
                        sample_ids: Optional[Sequence[Any]] = None,
                        include_elephant_params: bool = True) -> KernelMatrix:
    """Cosine similarity matrix of per-sample loss gradients.

    Samples are ``(x, y)`` pairs for squared error, ``(x, label)`` for cross
    entropy, and transitions (``state``, ``action``, ``reward``,
    ``next_state``, ``done``) for TD error. Samples whose gradient norm is at
    most ``MIN_GRADIENT_NORM`` are dropped with a warning.

    Raises:
        DiagnosticsError: If fewer than two samples remain
    """
    loss_kind = LossKind(loss_kind)
    ids = list(sample_ids) if sample_ids is not None else list(range(len(samples)))
    grads = []
    for sample in samples:
        x, d_output = _loss_output_gradient(net, loss_kind, sample, target_net, gamma)
        _, cache = forward(net, x)
        grads.append(flatten_gradients(backward(net, cache, d_output), include_elephant_params))
    return cosine_matrix(grads, ids)


def cosine_matrix(grads: Sequence[np.ndarray], ids: Sequence[Any]) -> KernelMatrix:
    """Pairwise cosine similarities of gradient vectors, dropping near-zero ones.

    Raises:
        DiagnosticsError: If fewer than two vectors remain
    """
    rows, kept, excluded = [], [], []
    for sample_id, grad in zip(ids, grads):
        if np.linalg.norm(grad) <= MIN_GRADIENT_NORM:
            excluded.append(sample_id)
        else:
            rows.append(grad)
            kept.append(sample_id)

    if excluded:
        logger.warning(f"Excluded {len(excluded)} zero-gradient samples: {excluded}")
    if len(rows) < 2:
        raise DiagnosticsError(f"Need at least 2 samples with non-zero gradients, got {len(rows)}")

    G = np.vstack(rows)
    norms = np.linalg.norm(G, axis=1)
    C = (G @ G.T) / np.outer(norms, norms)
    C = np.clip(0.5 * (C + C.T), -1.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return KernelMatrix(entries=C, sample_ids=kept, excluded=excluded)


def normalized_ntk_matrix(net: Network, inputs, include_elephant_params: bool = True) -> KernelMatrix:
    """Normalized NTK between every pair of ``inputs``.

    For vector outputs the kernel is taken on the largest output of each
    input (the greedy action value for a Q-network).
    """
    batch = np.asarray(inputs, dtype=np.float64).reshape(-1, net.n_inputs)
    outputs = predict(net, batch)
    d_outputs = np.zeros_like(outputs)
    d_outputs[np.arange(len(batch)), np.argmax(outputs, axis=1)] = 1.0
    grads = per_sample_gradients(net, batch, d_outputs, include_elephant_params)
    return cosine_matrix(list(grads), list(range(len(batch))))


def representation_sparsity(net: Network, inputs, eps: float) -> float:
    """Fraction of last-hidden-layer outputs with ``|value| <= eps``, averaged over ``inputs``."""
    if net.n_hidden_layers < 1:
        raise UsageError("Representation sparsity needs at least one hidden layer")
    batch = np.asarray(inputs, dtype=np.float64).reshape(-1, net.n_inputs)
    _, cache = forward(net, batch)
    return float(np.mean(np.abs(cache.penultimate) <= eps))
