"""Probe pairs straddling the ReLU kink and the gradient-jump ratio sweep.

For a datum ``(x, y)`` with ``x, y != 0`` the pair
``theta0 -/+ eps * (x, 1)`` around a boundary point has gradient-jump ratio
``|eps * ||(x, 1)||^2 - y| / (2 * eps)``, which is unbounded as ``eps -> 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AnchorError, LayoutError, UnderflowError
from .model_core import (
    TWO_LAYER,
    DataPoint,
    ParamVector,
    grad,
    grad_one_neuron,
    preactivation,
    preactivations,
)

DEFAULT_EPSILONS = tuple(10.0 ** -k for k in range(1, 7))
CSV_HEADER = ("epsilon", "numeric_ratio", "analytic_ratio", "eps_times_ratio")


@dataclass(frozen=True)
class ProbePair:
    theta_minus: ParamVector
    theta_plus: ParamVector
    eps: float
    theta0: ParamVector
    normal: tuple[float, float]


@dataclass(frozen=True)
class RatioSample:
    eps: float
    numeric_ratio: float
    analytic_ratio: float

    @property
    def eps_times_ratio(self) -> float:
        return self.eps * self.numeric_ratio

    @property
    def discrepancy(self) -> float:
        """Relative numeric/analytic mismatch, scaled by ``max(1, analytic)``."""
        return abs(self.numeric_ratio - self.analytic_ratio) / max(1.0, self.analytic_ratio)

    def row(self) -> tuple[float, ...]:
        return (self.eps, self.numeric_ratio, self.analytic_ratio, self.eps_times_ratio)


@dataclass(frozen=True)
class SweepResult:
    datum: DataPoint
    theta0: ParamVector
    samples: tuple[RatioSample, ...]
    slope: float
    slope_points: int

    @property
    def eps_times_ratio(self) -> tuple[float, ...]:
        return tuple(s.eps_times_ratio for s in self.samples)

    @property
    def limit(self) -> float:
        return abs(self.datum.y) / 2.0


def boundary_point(p: DataPoint, t: float) -> ParamVector:
    """The point ``(t, -t*x)`` on the activation boundary ``w*x + b = 0``."""
    if p.x == 0.0 and t != 0.0:
        raise ValueError("with x = 0 the boundary is empty unless t = 0")
    return ParamVector.one_neuron(t, -(t * p.x))


def analytic_ratio(p: DataPoint, eps: float) -> float:
    nrm2 = p.x * p.x + 1.0
    return abs(eps * nrm2 - p.y) / (2.0 * eps)


def make_probe_pair(theta0: ParamVector, p: DataPoint, eps: float) -> ProbePair:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    v = p.normal()
    s0 = preactivation(theta0, p)
    if abs(s0) > 1e-12 * float(np.linalg.norm(v)):
        raise AnchorError(f"anchor is not on the boundary: s(theta0) = {s0:.3e}")
    base = theta0.array()
    plus = ParamVector.from_array(base + eps * v, theta0.layout)
    minus = ParamVector.from_array(base - eps * v, theta0.layout)
    if not preactivation(minus, p) < 0.0 < preactivation(plus, p):
        raise UnderflowError(f"eps={eps:g} too small: probe pair does not straddle the boundary")
    return ProbePair(minus, plus, float(eps), theta0, (float(v[0]), float(v[1])))


def grad_jump_ratio(pair: ProbePair, p: DataPoint, tau: float = 0.0) -> RatioSample:
    """Measured ``||grad(theta+) - grad(theta-)|| / ||theta+ - theta-||`` beside the closed form."""
    g_plus, _ = grad_one_neuron(pair.theta_plus, p, tau)
    g_minus, _ = grad_one_neuron(pair.theta_minus, p, tau)
    num = float(np.linalg.norm(g_plus - g_minus))
    den = float(np.linalg.norm(pair.theta_plus.array() - pair.theta_minus.array()))
    return RatioSample(pair.eps, num / den, analytic_ratio(p, pair.eps))


def loglog_slope(samples: Sequence[RatioSample]) -> tuple[float, int]:
    """OLS slope of log(ratio) on log(eps) over the smallest-eps samples.

    Uses samples with ``eps <= 100 * min(eps)`` and drops any whose analytic
    ratio is exactly zero.
    """
    eps_min = min(s.eps for s in samples)
    pts = [
        (math.log(s.eps), math.log(s.numeric_ratio))
        for s in samples
        if s.eps <= 100.0 * eps_min * (1 + 1e-9) and s.analytic_ratio != 0.0 and s.numeric_ratio > 0.0
    ]
    if len(pts) < 2:
        return float("nan"), len(pts)
    lx, ly = np.array(pts).T
    slope = np.polyfit(lx, ly, 1)[0]
    return float(slope), len(pts)


def epsilon_sweep(
    p: DataPoint,
    theta0: ParamVector | None = None,
    eps_list: Sequence[float] = DEFAULT_EPSILONS,
    tau: float = 0.0,
) -> SweepResult:
    p.require_nonzero()
    if theta0 is None:
        theta0 = boundary_point(p, 0.0)
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise ValueError("eps_list is empty")
    if any(e <= 1e-14 for e in eps_list):
        raise ValueError("every eps must exceed 1e-14")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    samples = tuple(grad_jump_ratio(make_probe_pair(theta0, p, e), p, tau) for e in eps_list)
    slope, n = loglog_slope(samples)
    return SweepResult(p, theta0, samples, slope, n)


def divergence_onset(p: DataPoint) -> float:
    """Below this eps the ratio increases monotonically as eps shrinks."""
    return abs(p.y) / (2.0 * (p.x * p.x + 1.0))


def unit_crossing_ratio(theta: ParamVector, p: DataPoint, unit: int, eps: float) -> RatioSample:
    """Gradient-jump ratio across one hidden unit's boundary in a two-layer net.

    ``theta`` is projected onto the boundary of ``unit`` (its W1 row only),
    then displaced by ``-/+ eps * [x, 1]`` along that row. With ``c = eps*||xa||^2``
    and ``r0`` the residual of the remaining units, the jump has the closed form

        ||dg||^2 = (r+ a)^2 ||xa||^2 + (r+ c)^2 + (a c)^2 sum_k (W2_k^2 ||xa||^2 + z_k^2)

    (sum over the other active units, ``a = W2[unit]``, ``r+ = r0 + a c``),
    so the ratio behaves like ``|r0 * a| / (2 eps)`` as eps shrinks.
    """
    if theta.layout.kind != TWO_LAYER:
        raise LayoutError("unit_crossing_ratio needs two_layer layout")
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lay = theta.layout
    xa = p.augmented()
    nx2 = float(xa @ xa)
    W1 = theta.W1
    W1[unit] -= (W1[unit] @ xa) * xa / nx2
    W2 = theta.W2

    def displaced(sign):
        W = W1.copy()
        W[unit] = W1[unit] + sign * eps * xa
        return ParamVector.two_layer(W, W2)

    plus, minus = displaced(1.0), displaced(-1.0)
    z = preactivations(plus, p)
    others = [k for k in range(lay.hidden) if k != unit]
    if others and np.min(np.abs(z[others])) <= eps * nx2:
        raise ValueError("another unit is too close to its boundary for this eps")
    num = float(np.linalg.norm(grad(plus, p, 0.0) - grad(minus, p, 0.0)))
    den = float(np.linalg.norm(plus.array() - minus.array()))

    a = W2[unit]
    c = eps * nx2
    act = [k for k in others if z[k] > 0]
    r0 = sum(W2[k] * z[k] for k in act) - p.y
    r_plus = r0 + a * c
    jump2 = (r_plus * a) ** 2 * nx2 + (r_plus * c) ** 2
    jump2 += (a * c) ** 2 * sum(W2[k] ** 2 * nx2 + z[k] ** 2 for k in act)
    closed = math.sqrt(jump2) / (2.0 * eps * math.sqrt(nx2))
    return RatioSample(float(eps), num / den, closed)
