"""One-neuron and small two-layer ReLU models with exact piecewise derivatives.

Parameter layouts (flat JSON order in brackets):

* ``one_neuron``  -- f(x) = relu(w*x + b)            [w, b]
* ``frozen_bias`` -- f(x) = relu(w*x), bias fixed 0   [w]
* ``two_layer``   -- f(x) = W2 . relu(W1 @ [x, 1])    [W1 row-major, then W2]

``W1`` has shape ``(hidden, inputs + 1)``; its last column multiplies the
constant coordinate and plays the role of the bias.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryError, LayoutError

ONE_NEURON = "one_neuron"
FROZEN_BIAS = "frozen_bias"
TWO_LAYER = "two_layer"
LAYOUT_KINDS = (ONE_NEURON, FROZEN_BIAS, TWO_LAYER)

MAX_INPUTS = 8
MAX_HIDDEN = 8


def default_tau(theta: "ParamVector", scale: float = 1e-12) -> float:
    """Scale-aware boundary tolerance ``scale * (1 + ||theta||)``."""
    return scale * (1.0 + float(np.linalg.norm(theta.array())))


@dataclass(frozen=True)
class Layout:
    kind: str
    inputs: int = 1
    hidden: int = 1

    def __post_init__(self):
        if self.kind not in LAYOUT_KINDS:
            raise LayoutError(f"unknown layout kind {self.kind!r}")
        if self.kind != TWO_LAYER and (self.inputs, self.hidden) != (1, 1):
            raise LayoutError(f"{self.kind} has exactly one input and one unit")
        if not 1 <= self.inputs <= MAX_INPUTS:
            raise LayoutError(f"inputs must lie in [1, {MAX_INPUTS}], got {self.inputs}")
        if not 1 <= self.hidden <= MAX_HIDDEN:
            raise LayoutError(f"hidden must lie in [1, {MAX_HIDDEN}], got {self.hidden}")

    @classmethod
    def one_neuron(cls) -> "Layout":
        return cls(ONE_NEURON)

    @classmethod
    def frozen_bias(cls) -> "Layout":
        return cls(FROZEN_BIAS)

    @classmethod
    def two_layer(cls, inputs: int, hidden: int) -> "Layout":
        return cls(TWO_LAYER, inputs, hidden)

    @property
    def size(self) -> int:
        if self.kind == ONE_NEURON:
            return 2
        if self.kind == FROZEN_BIAS:
            return 1
        return self.hidden * (self.inputs + 1) + self.hidden


@dataclass(frozen=True)
class DataPoint:
    """A single datum; ``x`` is a float for the scalar models, a tuple otherwise."""

    x: float | tuple[float, ...]
    y: float

    def __post_init__(self):
        if np.ndim(self.x) == 0:
            x = float(self.x)
            ok = math.isfinite(x)
        else:
            x = tuple(float(v) for v in np.ravel(self.x))
            ok = all(math.isfinite(v) for v in x)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", float(self.y))
        if not ok or not math.isfinite(self.y):
            raise ValueError("datum entries must be finite")

    @property
    def dim(self) -> int:
        return 1 if isinstance(self.x, float) else len(self.x)

    def augmented(self) -> np.ndarray:
        """Input with a trailing constant 1 (the bias coordinate)."""
        return np.append(np.atleast_1d(np.asarray(self.x, dtype=float)), 1.0)

    def normal(self) -> np.ndarray:
        """Gradient of the one-neuron preactivation, ``(x, 1)``."""
        if self.dim != 1:
            raise LayoutError("normal (x, 1) is defined for scalar inputs only")
        return np.array([float(np.ravel(self.x)[0]), 1.0])

    def require_nonzero(self) -> None:
        """Without a nonzero x and y the gradient does not jump across the kink."""
        if self.dim != 1:
            raise ValueError("gradient-jump probes need a scalar datum")
        if np.ravel(self.x)[0] == 0.0 or self.y == 0.0:
            raise ValueError(
                "gradient-jump probes need x != 0 and y != 0 "
                f"(got x={self.x}, y={self.y})"
            )

    def to_json(self) -> list:
        return [self.x if isinstance(self.x, float) else list(self.x), self.y]


@dataclass(frozen=True)
class ParamVector:
    values: tuple[float, ...]
    layout: Layout

    def __post_init__(self):
        vals = tuple(float(v) for v in np.ravel(np.asarray(self.values, dtype=float)))
        object.__setattr__(self, "values", vals)
        if len(vals) != self.layout.size:
            raise LayoutError(
                f"{self.layout.kind} expects {self.layout.size} entries, got {len(vals)}"
            )
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("parameter entries must be finite")

    @classmethod
    def one_neuron(cls, w: float, b: float) -> "ParamVector":
        return cls((w, b), Layout.one_neuron())

    @classmethod
    def frozen_bias(cls, w: float) -> "ParamVector":
        return cls((w,), Layout.frozen_bias())

    @classmethod
    def two_layer(cls, W1, W2) -> "ParamVector":
        W1 = np.atleast_2d(np.asarray(W1, dtype=float))
        W2 = np.ravel(np.asarray(W2, dtype=float))
        h, cols = W1.shape
        if W2.shape != (h,):
            raise LayoutError(f"W2 must have {h} entries, got {W2.shape[0]}")
        layout = Layout.two_layer(cols - 1, h)
        return cls(tuple(W1.ravel()) + tuple(W2), layout)

    @classmethod
    def from_array(cls, arr, layout: Layout) -> "ParamVector":
        return cls(tuple(np.ravel(arr)), layout)

    from_json = from_array

    def array(self) -> np.ndarray:
        return np.array(self.values, dtype=float)

    def to_json(self) -> list[float]:
        return list(self.values)

    @property
    def W1(self) -> np.ndarray:
        lay = self.layout
        if lay.kind != TWO_LAYER:
            raise LayoutError("W1 exists only for two_layer")
        n = lay.hidden * (lay.inputs + 1)
        return np.array(self.values[:n]).reshape(lay.hidden, lay.inputs + 1)

    @property
    def W2(self) -> np.ndarray:
        lay = self.layout
        if lay.kind != TWO_LAYER:
            raise LayoutError("W2 exists only for two_layer")
        return np.array(self.values[lay.hidden * (lay.inputs + 1):])

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class ActivationPattern:
    signs: tuple[int, ...]
    tolerance: float = 0.0

    @property
    def on_boundary(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.signs) if s == 0)

    def active_mask(self) -> np.ndarray:
        return np.array([s > 0 for s in self.signs])

    def __str__(self):
        return "".join({1: "+", -1: "-", 0: "0"}[s] for s in self.signs)


def _check(theta: ParamVector, p: DataPoint) -> None:
    lay = theta.layout
    if lay.kind == TWO_LAYER:
        if p.dim != lay.inputs:
            raise LayoutError(f"two_layer expects {lay.inputs} inputs, datum has {p.dim}")
    elif p.dim != 1:
        raise LayoutError(f"{lay.kind} expects a scalar input")


def preactivations(theta: ParamVector, p: DataPoint) -> np.ndarray:
    """Per-unit preactivation vector (length ``hidden``)."""
    _check(theta, p)
    v = theta.values
    if theta.layout.kind == ONE_NEURON:
        return np.array([v[0] * p.x + v[1]])
    if theta.layout.kind == FROZEN_BIAS:
        return np.array([v[0] * p.x])
    return theta.W1 @ p.augmented()


def preactivation(theta: ParamVector, p: DataPoint) -> float:
    """``s(theta) = w*x + b`` for the one-neuron model."""
    if theta.layout.kind != ONE_NEURON:
        raise LayoutError(f"preactivation needs one_neuron layout, got {theta.layout.kind}")
    _check(theta, p)
    w, b = theta.values
    return w * p.x + b


def _masked_output(theta: ParamVector, p: DataPoint, z: np.ndarray, active) -> float:
    a = np.where(active, z, 0.0)
    if theta.layout.kind == TWO_LAYER:
        return float(theta.W2 @ a)
    return float(a[0])


def forward(theta: ParamVector, p: DataPoint) -> float:
    z = preactivations(theta, p)
    return _masked_output(theta, p, z, z > 0)


def loss(theta: ParamVector, p: DataPoint) -> float:
    """Squared loss ``0.5 * (f - y)**2``."""
    r = forward(theta, p) - p.y
    return 0.5 * r * r  # r * r, not r ** 2: libm pow may be off by an ulp


def activation_pattern(theta: ParamVector, p: DataPoint, tau: float = 0.0) -> ActivationPattern:
    z = preactivations(theta, p)
    signs = tuple(0 if abs(v) <= tau else (1 if v > 0 else -1) for v in z)
    return ActivationPattern(signs, float(tau))


def boundary_distance(theta: ParamVector, p: DataPoint) -> float:
    """Euclidean distance from ``theta`` to the hyperplane ``w*x + b = 0``."""
    s = preactivation(theta, p)
    return abs(s) / math.hypot(p.x, 1.0)


def masked_grad(theta: ParamVector, p: DataPoint, active) -> np.ndarray:
    """Loss gradient of the affine piece selected by ``active`` (one bool per unit).

    Off the boundary with ``active`` equal to the true pattern this is the
    classical gradient; on the boundary it is the one-sided limit from the
    chosen region.
    """
    active = np.asarray(active, dtype=bool)
    z = preactivations(theta, p)
    r = _masked_output(theta, p, z, active) - p.y
    kind = theta.layout.kind
    if kind == ONE_NEURON:
        if not active[0]:
            return np.zeros(2)
        return r * p.normal()
    if kind == FROZEN_BIAS:
        return np.array([r * p.x]) if active[0] else np.zeros(1)
    W2 = theta.W2
    xa = p.augmented()
    g_w1 = np.outer(r * W2 * active, xa)
    g_w2 = r * np.where(active, z, 0.0)
    return np.concatenate([g_w1.ravel(), g_w2])


def masked_hessian(theta: ParamVector, p: DataPoint, active) -> np.ndarray:
    """Loss Hessian of the affine piece selected by ``active``.

    Within a fixed pattern the model is polynomial in the parameters, so this
    is exact: ``H = g g^T + r * d2f`` where ``g`` is the model gradient.
    """
    active = np.asarray(active, dtype=bool)
    kind = theta.layout.kind
    if kind == ONE_NEURON:
        v = p.normal()
        return np.outer(v, v) if active[0] else np.zeros((2, 2))
    if kind == FROZEN_BIAS:
        _check(theta, p)
        return np.array([[p.x * p.x]]) if active[0] else np.zeros((1, 1))
    lay = theta.layout
    z = preactivations(theta, p)
    W2 = theta.W2
    xa = p.augmented()
    m = active.astype(float)
    r = _masked_output(theta, p, z, active) - p.y
    g = np.concatenate([np.outer(W2 * m, xa).ravel(), m * z])
    H = np.outer(g, g)
    # d2f / dW1[j, k] dW2[j] = m_j * xa[k]; all other second derivatives vanish
    cols = lay.inputs + 1
    off = lay.hidden * cols
    for j in range(lay.hidden):
        if active[j]:
            rows = slice(j * cols, (j + 1) * cols)
            H[rows, off + j] += r * xa
            H[off + j, rows] += r * xa
    return H


def _require_off_boundary(theta: ParamVector, p: DataPoint, tau: float | None) -> np.ndarray:
    if tau is None:
        tau = default_tau(theta)
    z = preactivations(theta, p)
    near = [j for j, v in enumerate(z) if abs(v) <= tau]
    if near:
        raise BoundaryError(
            f"units {near} lie within tau={tau:g} of their activation boundary", near
        )
    return z


def grad(theta: ParamVector, p: DataPoint, tau: float | None = None) -> np.ndarray:
    """Exact loss gradient for any layout; refuses points on a boundary."""
    z = _require_off_boundary(theta, p, tau)
    return masked_grad(theta, p, z > 0)


def grad_one_neuron(theta: ParamVector, p: DataPoint, tau: float | None = None):
    """Returns ``(gradient, region)`` with region ``"positive"`` or ``"negative"``."""
    if theta.layout.kind != ONE_NEURON:
        raise LayoutError(f"grad_one_neuron needs one_neuron layout, got {theta.layout.kind}")
    z = _require_off_boundary(theta, p, tau)
    active = z[0] > 0
    return masked_grad(theta, p, [active]), ("positive" if active else "negative")


def grad_net(theta: ParamVector, p: DataPoint, tau: float | None = None) -> np.ndarray:
    if theta.layout.kind != TWO_LAYER:
        raise LayoutError(f"grad_net needs two_layer layout, got {theta.layout.kind}")
    return grad(theta, p, tau)


def sample_params(rng: np.random.Generator, layout: Layout, scale: float = 1.0) -> ParamVector:
    return ParamVector.from_array(rng.normal(scale=scale, size=layout.size), layout)
