"""SGD, RMSProp and Adam over a :class:`~elephantlab.nn.network.Network`.

Accumulators are keyed by parameter name (``layers.0.weight``, ``layers.1.a``,
...) so their shapes mirror the network. Elephant ``a``/``h`` are updated only
when the layer's :class:`ElephantParams` is trainable, and are clamped to
``ELEPHANT_PARAM_FLOOR`` after every step.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict

import numpy as np

from ..common.errors import NonFiniteGradientError, ParameterError, ShapeError
from .network import GradientBundle, Network


class OptimizerKind(str, Enum):
    SGD = "sgd"
    RMSPROP = "rmsprop"
    ADAM = "adam"


@dataclass
class OptimizerState:
    kind: OptimizerKind = OptimizerKind.ADAM
    learning_rate: float = 1e-3
    rmsprop_decay: float = 0.999
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    eps: float = 1e-8
    first_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        self.kind = OptimizerKind(self.kind)
        if self.learning_rate <= 0:
            raise ParameterError(f"learning_rate must be positive, got {self.learning_rate}")
        for name in ("rmsprop_decay", "adam_beta1", "adam_beta2"):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ParameterError(f"{name} must lie in (0, 1), got {value}")
        if self.eps <= 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")

    @classmethod
    def from_config(cls, section: dict) -> "OptimizerState":
        """Build from an ``optimizer`` config section (``kind``, ``learning_rate``, ...)."""
        return cls(
            kind=section.get("kind", "adam"),
            learning_rate=float(section.get("learning_rate", 1e-3)),
            rmsprop_decay=float(section.get("rmsprop_decay", 0.999)),
            adam_beta1=float(section.get("adam_beta1", 0.9)),
            adam_beta2=float(section.get("adam_beta2", 0.999)),
            eps=float(section.get("eps", 1e-8)),
        )


def _trainable(net: Network) -> Dict[str, np.ndarray]:
    params = dict(net.named_parameters(include_elephant=False))
    for i, elephant in net.elephant_params.items():
        if elephant.trainable:
            params[f"layers.{i}.a"] = elephant.a
            params[f"layers.{i}.h"] = elephant.h
    return params


def _update(state: OptimizerState, name: str, grad: np.ndarray) -> np.ndarray:
    lr = state.learning_rate
    if state.kind == OptimizerKind.SGD:
        return lr * grad
    if state.kind == OptimizerKind.RMSPROP:
        v = state.second_moments.setdefault(name, np.zeros_like(grad))
        v *= state.rmsprop_decay
        v += (1.0 - state.rmsprop_decay) * grad ** 2
        return lr * grad / (np.sqrt(v) + state.eps)

    m = state.first_moments.setdefault(name, np.zeros_like(grad))
    v = state.second_moments.setdefault(name, np.zeros_like(grad))
    m *= state.adam_beta1
    m += (1.0 - state.adam_beta1) * grad
    v *= state.adam_beta2
    v += (1.0 - state.adam_beta2) * grad ** 2
    m_hat = m / (1.0 - state.adam_beta1 ** state.step_count)
    v_hat = v / (1.0 - state.adam_beta2 ** state.step_count)
    return lr * m_hat / (np.sqrt(v_hat) + state.eps)


def optimizer_step(state: OptimizerState, net: Network, g: GradientBundle) -> None:
    """Apply one update to ``net`` in place and advance ``state``.

    Every gradient is checked before any parameter moves, so a failed step
    leaves both the network and the accumulators untouched.

    Raises:
        NonFiniteGradientError: If a gradient holds NaN or inf; names the parameter
        ShapeError: If a gradient does not match its parameter
    """
    params = _trainable(net)
    grads = dict(g.named_gradients(include_elephant=True))
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None or grad.shape != param.shape:
            got = None if grad is None else grad.shape
            raise ShapeError(f"Gradient for {name} has shape {got}, expected {param.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteGradientError(name)

    state.step_count += 1
    for name, param in params.items():
        param -= _update(state, name, grads[name])
    for elephant in net.elephant_params.values():
        elephant.clamp()
    net.mark_updated()
