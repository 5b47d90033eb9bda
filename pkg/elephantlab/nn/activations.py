"""Activation functions with exact forward and derivative semantics.

Element-wise activations (ReLU, tanh, sigmoid, ELU, Elephant) map a
pre-activation array to an array of the same shape. Structured activations
act on groups along the last axis: Maxout and LWTA on groups of ``k``
consecutive units, FTA expands every unit into ``k`` bins.

The Elephant activation is ``h / (1 + |x/a|^d)``: a bell of height ``h`` and
half-width ``a`` whose value and derivative are both sparse.
"""

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy.special import expit

from ..common.errors import ParameterError, ShapeError

ELEPHANT_PARAM_FLOOR = 1e-4
DEFAULT_SPARSITY_GRID = 100001


class ActivationKind(str, Enum):
    RELU = "relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"
    ELU = "elu"
    MAXOUT = "maxout"
    LWTA = "lwta"
    FTA = "fta"
    ELEPHANT = "elephant"

    @property
    def is_classical(self) -> bool:
        return self in CLASSICAL_KINDS

    @property
    def is_structured(self) -> bool:
        return self in STRUCTURED_KINDS


CLASSICAL_KINDS = frozenset({ActivationKind.RELU, ActivationKind.TANH,
                             ActivationKind.SIGMOID, ActivationKind.ELU})
STRUCTURED_KINDS = frozenset({ActivationKind.MAXOUT, ActivationKind.LWTA, ActivationKind.FTA})


@dataclass(frozen=True)
class ActivationSpec:
    """Tagged description of one activation function.

    Only the fields relevant to ``kind`` are read: ``k`` for Maxout/LWTA
    (group size) and FTA (bin count), ``l``/``u``/``eta`` for FTA, and
    ``a``/``h``/``d`` for Elephant. ``eta`` defaults to the FTA bin width.
    """

    kind: ActivationKind
    k: int = 5
    l: float = -20.0
    u: float = 20.0
    a: float = 0.2
    h: float = 1.0
    d: int = 4
    eta: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", ActivationKind(self.kind))
        if self.kind == ActivationKind.ELEPHANT:
            _check_elephant(self.a, self.h, self.d)
        if self.kind in STRUCTURED_KINDS and int(self.k) < 2:
            raise ParameterError(f"{self.kind.value} needs k >= 2, got {self.k}")
        if self.kind == ActivationKind.FTA:
            if not self.l < self.u:
                raise ParameterError(f"FTA needs l < u, got [{self.l}, {self.u}]")
            if self.eta is not None and self.eta <= 0:
                raise ParameterError(f"FTA eta must be positive, got {self.eta}")

    @property
    def delta(self) -> float:
        """FTA bin width ``(u - l) / k``."""
        return (self.u - self.l) / self.k

    @property
    def fta_eta(self) -> float:
        return self.delta if self.eta is None else float(self.eta)

    @property
    def bin_centers(self) -> np.ndarray:
        """FTA bin starts ``c_i = l + i * delta`` for ``i = 0..k-1``."""
        return self.l + self.delta * np.arange(self.k)

    def output_dim(self, units: int) -> int:
        """Number of outputs produced from ``units`` pre-activations."""
        if self.kind == ActivationKind.MAXOUT:
            return units // self.k
        if self.kind == ActivationKind.FTA:
            return units * self.k
        return units

    def check_units(self, units: int) -> None:
        if self.kind in (ActivationKind.MAXOUT, ActivationKind.LWTA) and units % self.k:
            raise ShapeError(f"{self.kind.value} needs a width divisible by k={self.k}, got {units}")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["kind"] = self.kind.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ActivationSpec":
        return cls(**data)


@dataclass
class ElephantParams:
    """Per-unit learnable Elephant width ``a`` and height ``h`` with a shared fixed ``d``."""

    a: np.ndarray
    h: np.ndarray
    d: int
    trainable: bool = True

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.float64)
        self.h = np.asarray(self.h, dtype=np.float64)
        if self.a.shape != self.h.shape or self.a.ndim != 1:
            raise ShapeError(f"Elephant a and h must be matching vectors, got {self.a.shape}, {self.h.shape}")
        _check_elephant(self.a, self.h, self.d)
        # positive values below the floor are lifted the same way an optimizer step would
        self.clamp()

    @classmethod
    def initial(cls, units: int, spec: ActivationSpec, trainable: bool = True) -> "ElephantParams":
        return cls(a=np.full(units, float(spec.a)), h=np.full(units, float(spec.h)),
                   d=int(spec.d), trainable=trainable)

    def clamp(self) -> None:
        np.maximum(self.a, ELEPHANT_PARAM_FLOOR, out=self.a)
        np.maximum(self.h, ELEPHANT_PARAM_FLOOR, out=self.h)

    def copy(self) -> "ElephantParams":
        return ElephantParams(a=self.a.copy(), h=self.h.copy(), d=self.d, trainable=self.trainable)


def _check_elephant(a, h, d) -> None:
    if not np.all(np.isfinite(a)) or np.any(np.asarray(a) <= 0):
        raise ParameterError(f"Elephant width a must be positive and finite, got {a}")
    if not np.all(np.isfinite(h)) or np.any(np.asarray(h) <= 0):
        raise ParameterError(f"Elephant height h must be positive and finite, got {h}")
    if int(d) != d or d < 2:
        raise ParameterError(f"Elephant exponent d must be an integer >= 2, got {d}")


# Elephant

def _elephant_terms(x, a, d):
    """Return ``(r, t, p_t)`` with ``r = |x/a|``, ``t = 1/(1+r^d)``, ``p_t = r^d t``.

    ``r^d`` overflows to inf for large ``r``; ``t`` and ``p_t`` stay finite.
    """
    r = np.abs(np.asarray(x, dtype=np.float64) / a)
    with np.errstate(over="ignore"):
        p = r ** d
    t = 1.0 / (1.0 + p)
    p_t = np.where(np.isinf(p), 1.0, p * t)
    return r, t, p_t


def elephant_forward(x, a, h, d: int):
    """``h / (1 + |x/a|^d)``; output in ``(0, h]``, even in ``x``."""
    _check_elephant(a, h, d)
    _, t, _ = _elephant_terms(x, a, d)
    return h * t


def elephant_backward(x, a, h, d: int, upstream) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of ``upstream * elephant_forward(x, a, h, d)``.

    Returns:
        ``(dx, da, dh)`` element-wise, with
        ``dx = -h (d/a) sign(x) |x/a|^(d-1) / (1+|x/a|^d)^2``,
        ``da = h (d/a) |x/a|^d / (1+|x/a|^d)^2`` and ``dh = forward / h``,
        each multiplied by ``upstream``.
    """
    _check_elephant(a, h, d)
    x = np.asarray(x, dtype=np.float64)
    r, t, p_t = _elephant_terms(x, a, d)
    # r^(d-1) t^2 = (r^d t) t / r, finite for every r > 0 and 0 at r = 0 since d >= 2
    safe_r = np.where(r > 0, r, 1.0)
    slope = np.where(r > 0, p_t * t / safe_r, 0.0)
    dx = upstream * (-h * (d / a) * np.sign(x) * slope)
    da = upstream * (h * (d / a) * p_t * t)
    dh = upstream * t
    return dx, da, dh


def elephant_derivative(x, a: float = 1.0, h: float = 1.0, d: int = 4):
    """``d/dx`` of the Elephant function."""
    dx, _, _ = elephant_backward(x, a, h, d, 1.0)
    return dx


def rect(x, a: float, h: float = 1.0):
    """Rectangular limit of the Elephant function as ``d`` grows: h inside ``|x| < a``, h/2 on the edge."""
    ax = np.abs(np.asarray(x, dtype=np.float64))
    return np.where(ax < a, h, np.where(ax == a, h / 2.0, 0.0))


def elephant_active_radius(a: float, d: int, eps: float) -> float:
    """Radius beyond which ``Elephant(x) <= eps`` for ``h = 1``: ``a (1/eps - 1)^(1/d)``."""
    return a * (1.0 / eps - 1.0) ** (1.0 / d)


def elephant_gradient_radius(d: int, eps: float) -> float:
    """Radius beyond which ``|Elephant'(x)| <= eps`` for ``a = h = 1``: ``d / (2 eps)``."""
    return d / (2.0 * eps)


# Classical

def classical_forward(kind, x):
    """Evaluate a classical activation and its derivative.

    ReLU has derivative 0 at the kink; ELU uses alpha = 1.

    Returns:
        ``(y, dy_dx)`` with the shape of ``x``
    """
    kind = ActivationKind(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind == ActivationKind.RELU:
        return np.maximum(x, 0.0), (x > 0).astype(np.float64)
    if kind == ActivationKind.TANH:
        y = np.tanh(x)
        return y, 1.0 - y ** 2
    if kind == ActivationKind.SIGMOID:
        y = expit(x)
        return y, y * (1.0 - y)
    if kind == ActivationKind.ELU:
        negative = np.minimum(x, 0.0)
        return np.where(x > 0, x, np.expm1(negative)), np.where(x > 0, 1.0, np.exp(negative))
    raise ParameterError(f"{kind.value} is not a classical activation")


# Structured

def _groups(x: np.ndarray, k: int) -> np.ndarray:
    if x.shape[-1] % k:
        raise ShapeError(f"Last dimension {x.shape[-1]} is not divisible by k={k}")
    return x.reshape(*x.shape[:-1], x.shape[-1] // k, k)


def _winner_mask(grouped: np.ndarray) -> np.ndarray:
    # argmax returns the first maximum, so ties go to the lowest index
    winners = np.argmax(grouped, axis=-1)
    return np.arange(grouped.shape[-1]) == winners[..., None]


def _fta_distance(x: np.ndarray, spec: ActivationSpec):
    c = spec.bin_centers
    expanded = x[..., None]
    below = c - expanded
    above = expanded - c - spec.delta
    dist = np.maximum(below, 0.0) + np.maximum(above, 0.0)
    return dist, below, above


def structured_forward(kind, x, spec: ActivationSpec) -> np.ndarray:
    """Evaluate Maxout, LWTA or FTA along the last axis of ``x``.

    Maxout keeps one maximum per group of ``k`` (output length ``n / k``);
    LWTA keeps the winner of each group and zeroes the others; FTA emits
    ``1 - min(dist_i(x) / eta, 1)`` for each of its ``k`` bins, unit-major.
    """
    kind = ActivationKind(kind)
    x = np.asarray(x, dtype=np.float64)
    if kind == ActivationKind.MAXOUT:
        return _groups(x, spec.k).max(axis=-1)
    if kind == ActivationKind.LWTA:
        grouped = _groups(x, spec.k)
        return (grouped * _winner_mask(grouped)).reshape(x.shape)
    if kind == ActivationKind.FTA:
        dist, _, _ = _fta_distance(x, spec)
        out = 1.0 - np.minimum(dist / spec.fta_eta, 1.0)
        return out.reshape(*x.shape[:-1], x.shape[-1] * spec.k)
    raise ParameterError(f"{kind.value} is not a structured activation")


def structured_backward(kind, x, spec: ActivationSpec, upstream) -> np.ndarray:
    """Gradient of ``<upstream, structured_forward(kind, x, spec)>`` with respect to ``x``."""
    kind = ActivationKind(kind)
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    if kind == ActivationKind.MAXOUT:
        grouped = _groups(x, spec.k)
        return (_winner_mask(grouped) * upstream[..., None]).reshape(x.shape)
    if kind == ActivationKind.LWTA:
        grouped = _groups(x, spec.k)
        return (_winner_mask(grouped) * _groups(upstream, spec.k)).reshape(x.shape)
    if kind == ActivationKind.FTA:
        dist, below, above = _fta_distance(x, spec)
        eta = spec.fta_eta
        d_dist = (above > 0).astype(np.float64) - (below > 0).astype(np.float64)
        local = np.where(dist < eta, -d_dist / eta, 0.0)
        grouped_up = upstream.reshape(*x.shape, spec.k)
        return np.sum(local * grouped_up, axis=-1)
    raise ParameterError(f"{kind.value} is not a structured activation")


# Dispatch used by the network

def activation_forward(spec: ActivationSpec, z: np.ndarray,
                       elephant: Optional[ElephantParams] = None) -> np.ndarray:
    if spec.kind == ActivationKind.ELEPHANT:
        if elephant is None:
            return elephant_forward(z, spec.a, spec.h, spec.d)
        return elephant_forward(z, elephant.a, elephant.h, elephant.d)
    if spec.kind.is_classical:
        return classical_forward(spec.kind, z)[0]
    return structured_forward(spec.kind, z, spec)


def activation_backward(spec: ActivationSpec, z: np.ndarray, upstream: np.ndarray,
                        elephant: Optional[ElephantParams] = None):
    """Return ``(dz, da, dh)``; ``da``/``dh`` are per-element arrays for Elephant, else None."""
    if spec.kind == ActivationKind.ELEPHANT:
        if elephant is None:
            return elephant_backward(z, spec.a, spec.h, spec.d, upstream)
        return elephant_backward(z, elephant.a, elephant.h, elephant.d, upstream)
    if spec.kind.is_classical:
        _, dy = classical_forward(spec.kind, z)
        return upstream * dy, None, None
    return structured_backward(spec.kind, z, spec, upstream), None, None


# Sparsity

def sparsity_estimate(f: Callable, eps: float, C: float,
                      n_grid: int = DEFAULT_SPARSITY_GRID) -> float:
    """Fraction of an even grid on ``[-C, C]`` where ``|f(x)| <= eps``.

    ``f`` must accept a numpy array. Converges to the sparsity of ``f`` on
    ``[-C, C]`` as ``n_grid`` grows.
    """
    if eps <= 0 or C <= 0:
        raise ParameterError(f"Sparsity needs eps > 0 and C > 0, got eps={eps}, C={C}")
    if n_grid < 1000:
        raise ParameterError(f"Sparsity grid needs at least 1000 points, got {n_grid}")
    grid = np.linspace(-C, C, int(n_grid))
    values = np.asarray(f(grid), dtype=np.float64)
    return float(np.mean(np.abs(values) <= eps))


@dataclass(frozen=True)
class SparsityRow:
    name: str
    function_sparsity: float
    gradient_sparsity: float


def reference_functions(a: float = 1.0, h: float = 1.0, d: int = 4) -> Dict[str, Tuple[Callable, Callable]]:
    """Name -> (function, derivative) pairs for the activation sparsity table."""
    table: Dict[str, Tuple[Callable, Callable]] = {}
    for kind in (ActivationKind.RELU, ActivationKind.SIGMOID, ActivationKind.TANH, ActivationKind.ELU):
        table[kind.value] = (
            lambda x, kind=kind: classical_forward(kind, x)[0],
            lambda x, kind=kind: classical_forward(kind, x)[1],
        )
    table[ActivationKind.ELEPHANT.value] = (
        lambda x: elephant_forward(x, a, h, d),
        lambda x: elephant_derivative(x, a, h, d),
    )
    return table


def activation_table(eps: float = 1e-3, C: float = 1e4,
                     n_grid: int = DEFAULT_SPARSITY_GRID) -> list:
    """Function and gradient sparsity of every reference activation."""
    return [
        SparsityRow(name, sparsity_estimate(f, eps, C, n_grid), sparsity_estimate(df, eps, C, n_grid))
        for name, (f, df) in reference_functions().items()
    ]
