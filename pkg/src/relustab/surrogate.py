"""Softplus surrogates of ReLU and the blow-up of their smoothness constants."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import LayoutError, SearchError
from .model_core import ONE_NEURON, DataPoint, ParamVector, preactivation

SOFTPLUS = "softplus"
DEFAULT_BETAS = (10.0, 100.0, 1000.0)
CSV_HEADER = ("beta", "u_peak", "sigma2_at_peak", "residual", "L_lower")

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def softplus_eval(beta: float, u):
    """Value, first and second derivative of ``log(1 + exp(beta*u)) / beta``.

    Works elementwise on arrays. The second derivative is formed as
    ``beta * l(bu) * l(-bu)`` to avoid the ``1 - l`` cancellation.
    """
    if not beta >= 1.0:
        raise ValueError(f"beta must be >= 1, got {beta}")
    bu = beta * np.asarray(u, dtype=float)
    value = np.logaddexp(0.0, bu) / beta
    first = expit(bu)
    second = beta * first * expit(-bu)
    if np.ndim(bu) == 0:
        return float(value), float(first), float(second)
    return value, first, second


@dataclass(frozen=True)
class SurrogateActivation:
    beta: float
    family: str = SOFTPLUS

    def __post_init__(self):
        if self.family != SOFTPLUS:
            raise ValueError(f"unsupported surrogate family {self.family!r}")
        if not self.beta >= 1.0 or not math.isfinite(self.beta):
            raise ValueError(f"beta must be finite and >= 1, got {self.beta}")

    def value(self, u):
        return softplus_eval(self.beta, u)[0]

    def first(self, u):
        return softplus_eval(self.beta, u)[1]

    def second(self, u):
        return softplus_eval(self.beta, u)[2]

    def log_second(self, u):
        """``log sigma''(u)``; finite even where sigma'' underflows."""
        bu = self.beta * np.asarray(u, dtype=float)
        out = math.log(self.beta) - np.logaddexp(0.0, bu) - np.logaddexp(0.0, -bu)
        return float(out) if np.ndim(out) == 0 else out

    def log_second_slope(self, u) -> float:
        """Derivative of ``log sigma''``; its sign locates the peak exactly."""
        return -self.beta * math.tanh(0.5 * self.beta * float(u))

    def __call__(self, u):
        return softplus_eval(self.beta, u)


@dataclass(frozen=True)
class SmoothnessEstimate:
    beta: float
    L_lower: float
    theta_witness: ParamVector
    u_peak: float
    sigma2_at_peak: float
    residual: float

    def row(self) -> tuple[float, ...]:
        return (self.beta, self.u_peak, self.sigma2_at_peak, self.residual, self.L_lower)


def _s(theta: ParamVector, p: DataPoint) -> float:
    if theta.layout.kind != ONE_NEURON:
        raise LayoutError("surrogate model uses the one_neuron layout")
    return preactivation(theta, p)


def surrogate_loss(theta: ParamVector, p: DataPoint, act: SurrogateActivation) -> float:
    return 0.5 * (act.value(_s(theta, p)) - p.y) ** 2


def surrogate_grad(theta: ParamVector, p: DataPoint, act: SurrogateActivation) -> np.ndarray:
    val, d1, _ = act(_s(theta, p))
    return (val - p.y) * d1 * p.normal()


def hessian_scalar(theta: ParamVector, p: DataPoint, act: SurrogateActivation) -> float:
    """``sigma'(s)^2 + (sigma(s) - y) * sigma''(s)``, the rank-one Hessian coefficient."""
    val, d1, d2 = act(_s(theta, p))
    return d1 * d1 + (val - p.y) * d2


def surrogate_hessian(theta: ParamVector, p: DataPoint, act: SurrogateActivation) -> np.ndarray:
    v = p.normal()
    return hessian_scalar(theta, p, act) * np.outer(v, v)


def hessian_lower_bound(theta: ParamVector, p: DataPoint, act: SurrogateActivation) -> float:
    """``|(sigma(s) - y) * sigma''(s)| * ||(x, 1)||^2``."""
    val, _, d2 = act(_s(theta, p))
    return abs((val - p.y) * d2) * (p.x * p.x + 1.0)


def curvature_peak(
    act: SurrogateActivation,
    interval: tuple[float, float] = (-1.0, 1.0),
    tol: float = 1e-10,
) -> float:
    """Argmax of ``|sigma''|`` on ``interval`` by golden-section search.

    Runs on ``log sigma''`` so far-tail evaluations do not underflow to ties.
    Near a smooth maximum, value comparisons stop resolving below about
    ``sqrt(machine eps)``, so the bracket is then polished by bisection on
    the sign of the log-curvature slope. Raises ``SearchError`` when the
    maximiser sits at an interval end.
    """
    a, b = map(float, interval)
    if not a < b:
        raise SearchError(f"empty search interval {interval}")
    lo, hi = a, b
    f = act.log_second
    c = hi - _INVPHI * (hi - lo)
    d = lo + _INVPHI * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INVPHI * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INVPHI * (hi - lo)
            fd = f(d)
    u = _polish(act.log_second_slope, 0.5 * (lo + hi), a, b, tol)
    if u - a <= 2 * tol or b - u <= 2 * tol:
        raise SearchError(f"curvature peak not interior to {interval} (found u={u:.3g})")
    return u


def _polish(slope, u: float, a: float, b: float, tol: float) -> float:
    r = max(1e-6 * (b - a), tol)
    while True:
        lo, hi = max(a, u - r), min(b, u + r)
        if slope(lo) >= 0 >= slope(hi) or (lo == a and hi == b):
            break
        r *= 4
    if not slope(lo) >= 0 >= slope(hi):
        return u
    # the slope sign is reliable down to adjacent floats, so bisect to the end
    while True:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            return mid
        sm = slope(mid)
        if sm == 0.0:
            return mid
        if sm > 0:
            lo = mid
        else:
            hi = mid


def smoothness_divergence_sweep(
    p: DataPoint,
    betas: Sequence[float] = DEFAULT_BETAS,
    interval: tuple[float, float] = (-1.0, 1.0),
) -> list[SmoothnessEstimate]:
    """Hessian lower bound at the curvature peak for each beta.

    The witness is ``theta = (0, u_peak)`` so that ``s(theta) = u_peak``.
    """
    p.require_nonzero()
    betas = [float(b) for b in betas]
    if any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    out = []
    for beta in betas:
        act = SurrogateActivation(beta)
        u = curvature_peak(act, interval)
        theta = ParamVector.one_neuron(0.0, u)
        val, _, d2 = act(u)
        out.append(
            SmoothnessEstimate(
                beta=beta,
                L_lower=hessian_lower_bound(theta, p, act),
                theta_witness=theta,
                u_peak=u,
                sigma2_at_peak=d2,
                residual=val - p.y,
            )
        )
    return out


def divergence_floor(p: DataPoint, beta: float) -> float:
    """``(|y|/2) * (beta/4) * ||(x,1)||^2``; valid once ``beta >= 2 ln2 / |y|``."""
    return 0.5 * abs(p.y) * 0.25 * beta * (p.x * p.x + 1.0)
