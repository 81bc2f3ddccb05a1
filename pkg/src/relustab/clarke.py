"""Update map, limiting Jacobians, and region-restricted contraction certificates.

The update map is ``T(theta) = theta - eta * grad L(theta)``. Inside a fixed
activation pattern its Jacobian is ``I - eta * H`` with ``H`` the loss Hessian
of that affine piece; at a boundary the Clarke set is the convex hull of the
Jacobians of all adjacent pieces, and only those extreme points are stored.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import (
    ConvergenceError,
    DegeneratePairError,
    EnumerationLimitError,
    LayoutError,
    RegionError,
)
from .model_core import (
    FROZEN_BIAS,
    ONE_NEURON,
    TWO_LAYER,
    DataPoint,
    Layout,
    ParamVector,
    default_tau,
    grad,
    masked_hessian,
    preactivations,
)

HALF_SPACE_POSITIVE = "half_space_positive"
HALF_SPACE_NEGATIVE = "half_space_negative"
PATTERN_FIXED = "pattern_fixed"
REGION_KINDS = (HALF_SPACE_POSITIVE, HALF_SPACE_NEGATIVE, PATTERN_FIXED)

MAX_NEAR_UNITS = 20
JACOBIAN_TAU_SCALE = 1e-9
_SQUARE_EVERY = 8


def _generic_start(n: int) -> np.ndarray:
    v = np.random.default_rng(20240101).standard_normal(n)
    return v / np.linalg.norm(v)



@dataclass(frozen=True)
class UpdateMap:
    eta: float
    datum: DataPoint
    layout: Layout

    def __post_init__(self):
        if not (math.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"step size must be positive and finite, got {self.eta}")

    def __call__(self, theta: ParamVector, tau: float | None = None) -> ParamVector:
        return apply_update(self, theta, tau)


def apply_update(T: UpdateMap, theta: ParamVector, tau: float | None = None) -> ParamVector:
    if theta.layout != T.layout:
        raise LayoutError(f"update map built for {T.layout}, got {theta.layout}")
    g = grad(theta, T.datum, tau)
    return ParamVector.from_array(theta.array() - T.eta * g, theta.layout)


def _unit_normals(layout: Layout, p: DataPoint) -> list[tuple[slice, np.ndarray]]:
    """For each unit, the parameter block its preactivation depends on and the gradient there."""
    if layout.kind == ONE_NEURON:
        return [(slice(0, 2), p.normal())]
    if layout.kind == FROZEN_BIAS:
        return [(slice(0, 1), np.array([float(p.x)]))]
    xa = p.augmented()
    c = layout.inputs + 1
    return [(slice(j * c, (j + 1) * c), xa) for j in range(layout.hidden)]


@dataclass(frozen=True)
class RegionSpec:
    """Set of points whose preactivations have prescribed signs with margin ``delta``.

    ``fixed_w2`` (two_layer only) additionally pins the output weights.
    """

    kind: str
    delta: float
    pattern: tuple[int, ...] | None = None
    fixed_w2: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in REGION_KINDS:
            raise RegionError(f"unknown region kind {self.kind!r}")
        if not (math.isfinite(self.delta) and self.delta > 0):
            raise RegionError(f"region margin must be positive, got {self.delta}")
        if self.kind == PATTERN_FIXED:
            if not self.pattern or any(s not in (-1, 1) for s in self.pattern):
                raise RegionError("pattern_fixed needs a pattern of +1/-1 entries")
            object.__setattr__(self, "pattern", tuple(int(s) for s in self.pattern))
        if self.fixed_w2 is not None:
            object.__setattr__(self, "fixed_w2", tuple(float(v) for v in self.fixed_w2))

    def signs(self, layout: Layout) -> tuple[int, ...]:
        if self.kind == PATTERN_FIXED:
            if len(self.pattern) != layout.hidden:
                raise RegionError(
                    f"pattern has {len(self.pattern)} entries, layout has {layout.hidden} units"
                )
            return self.pattern
        sign = 1 if self.kind == HALF_SPACE_POSITIVE else -1
        return (sign,) * layout.hidden

    def contains(self, theta: ParamVector, p: DataPoint) -> bool:
        z = preactivations(theta, p)
        if any(s * v < self.delta for s, v in zip(self.signs(theta.layout), z)):
            return False
        if self.fixed_w2 is not None and tuple(theta.W2) != self.fixed_w2:
            return False
        return True

    def project(self, theta: ParamVector, p: DataPoint) -> ParamVector:
        """Nearest point of the region (per-unit half-space projections on disjoint blocks)."""
        vals = theta.array()
        signs = self.signs(theta.layout)
        for (block, n), s in zip(_unit_normals(theta.layout, p), signs):
            nn = float(n @ n)
            if nn == 0.0:
                raise RegionError("region is empty: preactivation does not depend on parameters")
            z = float(n @ vals[block])
            if s * z < self.delta:
                # land slightly inside so the margin test survives rounding
                target = self.delta * (1 + 1e-9)
                vals[block] += (target - s * z) * s * n / nn
        if self.fixed_w2 is not None:
            if theta.layout.kind != TWO_LAYER:
                raise RegionError("fixed_w2 applies to two_layer regions only")
            vals[-theta.layout.hidden:] = self.fixed_w2
        out = ParamVector.from_array(vals, theta.layout)
        if not self.contains(out, p):
            raise RegionError("projection failed to land in the region")
        return out

    def closed_form_rho(self, T: UpdateMap) -> float | None:
        """Exact sup of the Jacobian norm where the Jacobian is constant on the region."""
        kind = T.layout.kind
        signs = self.signs(T.layout)
        if kind == TWO_LAYER:
            return None
        if signs[0] < 0:
            return 1.0
        if kind == ONE_NEURON:
            return max(1.0, abs(1.0 - T.eta * (T.datum.x * T.datum.x + 1.0)))
        return abs(1.0 - T.eta * T.datum.x * T.datum.x)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "delta": self.delta,
            "pattern": list(self.pattern) if self.pattern else None,
            "fixed_w2": list(self.fixed_w2) if self.fixed_w2 is not None else None,
        }


@dataclass(frozen=True)
class SamplerSpec:
    """Axis-aligned box ``center +/- radius`` filled with ``count`` Halton points."""

    center: ParamVector
    radius: float | tuple[float, ...]
    count: int = 256

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("sampler needs at least one point")
        r = np.broadcast_to(np.asarray(self.radius, dtype=float), (len(self.center),))
        if np.any(r < 0) or not np.all(np.isfinite(r)):
            raise ValueError("sampler radius must be finite and nonnegative")

    def box_points(self) -> np.ndarray:
        d = len(self.center)
        u = qmc.Halton(d=d, scramble=False).random(self.count)
        r = np.broadcast_to(np.asarray(self.radius, dtype=float), (d,))
        return self.center.array() + r * (2.0 * u - 1.0)


def suggest_sampler(iterates: Sequence[ParamVector], margin: float, count: int = 256) -> SamplerSpec:
    """Bounding box of observed iterates, padded by ``margin`` on every side."""
    A = np.array([t.values for t in iterates])
    lo, hi = A.min(axis=0) - margin, A.max(axis=0) + margin
    center = ParamVector.from_array((lo + hi) / 2, iterates[0].layout)
    return SamplerSpec(center, tuple((hi - lo) / 2), count)


def region_samples(region: RegionSpec, p: DataPoint, sampler: SamplerSpec) -> list[ParamVector]:
    lay = sampler.center.layout
    return [region.project(ParamVector.from_array(row, lay), p) for row in sampler.box_points()]


def operator_norm(M, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """Largest singular value via power iteration on ``M^T M``.

    Starts from the normalised all-ones vector and, because structured
    matrices can have all-ones as a lower eigenvector, also from a fixed
    pseudo-random vector; the larger converged Rayleigh quotient wins. Stops when the eigen-residual
    ``||A x - lam x|| <= tol * lam``. The matrix is rescaled to unit
    max-entry first.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[0] != M.shape[1] or M.shape[0] > 100:
        raise ValueError(f"expected a square matrix of size <= 100, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    n = M.shape[0]
    scale = float(np.max(np.abs(M)))
    if scale == 0.0:
        return 0.0
    # unit max-entry keeps M^T M clear of underflow and overflow
    M = M / scale
    A = M.T @ M
    starts = [np.ones(n) / math.sqrt(n)]
    if n > 1:
        starts.append(_generic_start(n))
    best = 0.0
    for x in starts:
        lam = _power(A, x, tol, max_iter)
        best = max(best, lam)
    return scale * math.sqrt(best)


def _power(A: np.ndarray, x: np.ndarray, tol: float, max_iter: int) -> float:
    """Power iteration, switching to repeated squares of ``A`` when progress stalls.

    Iterating with ``A^(2^k)`` is still power iteration on ``A`` but resolves
    nearly tied top eigenvalues in ``O(log 1/gap)`` squarings rather than
    ``O(1/gap)`` steps. Convergence is always judged on ``A`` itself.
    """
    gap = float("nan")
    B = A
    for it in range(max_iter):
        y = A @ x
        if not np.any(y):
            return 0.0
        lam = float(x @ y)
        gap = float(np.linalg.norm(y - lam * x))
        if gap <= tol * abs(lam):
            return lam
        if it % _SQUARE_EVERY == _SQUARE_EVERY - 1:
            B = B @ B
            B /= np.max(np.abs(B))
        z = B @ x
        nz = float(np.linalg.norm(z))
        if nz == 0.0:  # start orthogonal to the dominant space of B
            return lam
        x = z / nz
    raise ConvergenceError(f"power iteration did not converge (residual {gap:.3e})", gap)


@dataclass(frozen=True)
class GeneralizedJacobianSet:
    point: ParamVector
    tau: float
    jacobians: tuple[np.ndarray, ...] = field(repr=False)
    patterns: tuple[tuple[int, ...], ...]
    max_norm: float
    norms: tuple[float, ...] = field(repr=False)


def jacobian_tau(theta: ParamVector) -> float:
    return default_tau(theta, JACOBIAN_TAU_SCALE)


def limiting_jacobians(
    T: UpdateMap, theta: ParamVector, tau: float | None = None
) -> GeneralizedJacobianSet:
    """Jacobians of ``T`` on every activation piece adjacent to ``theta``.

    Units with ``|z| <= tau`` are enumerated both off (first) and on.
    """
    if tau is None:
        tau = jacobian_tau(theta)
    z = preactivations(theta, T.datum)
    near = [j for j, v in enumerate(z) if abs(v) <= tau]
    if len(near) > MAX_NEAR_UNITS:
        raise EnumerationLimitError(f"{len(near)} near-boundary units exceed {MAX_NEAR_UNITS}")
    eye = np.eye(len(theta))
    mats, pats = [], []
    for choice in itertools.product((False, True), repeat=len(near)):
        active = z > tau
        active[near] = choice
        mats.append(eye - T.eta * masked_hessian(theta, T.datum, active))
        pats.append(tuple(1 if a else -1 for a in active))
    norms = tuple(operator_norm(J) for J in mats)
    return GeneralizedJacobianSet(theta, float(tau), tuple(mats), tuple(pats), max(norms), norms)


def simplex_grid(k: int, steps: int):
    """All weight vectors on the ``k``-simplex with coordinates in ``{0, 1/steps, ..., 1}``."""
    for bars in itertools.combinations(range(steps + k - 1), k - 1):
        parts = np.diff((-1,) + bars + (steps + k - 1,)) - 1
        yield parts / steps


def hull_max_norm(jset: GeneralizedJacobianSet, steps: int = 10) -> float:
    """Max operator norm over a simplex grid of convex combinations of the stored Jacobians."""
    J = np.array(jset.jacobians)
    return max(operator_norm(np.tensordot(w, J, axes=1)) for w in simplex_grid(len(J), steps))


@dataclass(frozen=True)
class RhoCertificate:
    """Max Jacobian norm over a region; empirical unless ``closed_form_used``."""

    region: RegionSpec
    eta: float
    rho: float
    sample_count: int
    worst_point: ParamVector
    closed_form_used: bool
    sampled_rho: float

    def to_json(self) -> dict:
        return {
            "region": self.region.to_json(),
            "eta": self.eta,
            "rho": self.rho,
            "worst_point": self.worst_point.to_json(),
            "sample_count": self.sample_count,
            "closed_form_used": self.closed_form_used,
        }


def rho_over_region(T: UpdateMap, region: RegionSpec, sampler: SamplerSpec) -> RhoCertificate:
    if sampler.center.layout != T.layout:
        raise LayoutError("sampler center layout does not match the update map")
    points = region_samples(region, T.datum, sampler)
    norms = [limiting_jacobians(T, th).max_norm for th in points]
    worst = int(np.argmax(norms))  # first maximum wins ties
    sampled = float(norms[worst])
    closed = region.closed_form_rho(T)
    if closed is not None:
        if abs(sampled - closed) > 1e-12 * max(1.0, closed):
            raise AssertionError(
                f"sampled rho {sampled!r} disagrees with closed form {closed!r}"
            )
        rho = closed
    else:
        rho = sampled
    return RhoCertificate(region, T.eta, rho, len(points), points[worst], closed is not None, sampled)


@dataclass(frozen=True)
class LipschitzReport:
    ratio: float
    rho: float
    passed: bool
    crosses_boundary: bool

    def to_json(self) -> dict:
        return {
            "ratio": self.ratio,
            "rho": self.rho,
            "passed": self.passed,
            "crosses_boundary": self.crosses_boundary,
        }


def segment_crosses(theta: ParamVector, theta2: ParamVector, p: DataPoint) -> bool:
    """Preactivations are affine along a segment, so endpoint signs decide crossings."""
    za, zb = preactivations(theta, p), preactivations(theta2, p)
    return bool(np.any(np.sign(za) != np.sign(zb)))


def check_update_lipschitz(
    T: UpdateMap,
    theta: ParamVector,
    theta2: ParamVector,
    rho: float,
    tau: float | None = None,
) -> LipschitzReport:
    sep = float(np.linalg.norm(theta.array() - theta2.array()))
    if sep == 0.0:
        raise DegeneratePairError("theta and theta' coincide")
    d = apply_update(T, theta, tau).array() - apply_update(T, theta2, tau).array()
    ratio = float(np.linalg.norm(d)) / sep
    return LipschitzReport(ratio, rho, ratio <= rho + 1e-12, segment_crosses(theta, theta2, T.datum))


def region_pair_check(
    T: UpdateMap,
    region: RegionSpec,
    sampler: SamplerSpec,
    rho: float,
    n_pairs: int = 1000,
    seed: int = 0,
) -> list[LipschitzReport]:
    """Random same-region pairs, each checked against ``rho``."""
    rng = np.random.default_rng(seed)
    lay = sampler.center.layout
    c = sampler.center.array()
    r = np.broadcast_to(np.asarray(sampler.radius, dtype=float), c.shape)

    def draw():
        raw = ParamVector.from_array(c + r * rng.uniform(-1.0, 1.0, size=c.shape), lay)
        return region.project(raw, T.datum)

    reports = []
    while len(reports) < n_pairs:
        a, b = draw(), draw()
        if a != b:  # projection can collapse two draws onto one boundary point
            reports.append(check_update_lipschitz(T, a, b, rho))
    return reports
