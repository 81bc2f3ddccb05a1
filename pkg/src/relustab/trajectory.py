"""Gradient-descent trajectories, pattern-crossing logs, and paired perturbation runs."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .clarke import RegionSpec
from .errors import DegeneratePairError, DivergenceError
from .model_core import (
    ActivationPattern,
    DataPoint,
    ParamVector,
    activation_pattern,
    default_tau,
    loss,
    masked_grad,
    preactivations,
)

HALT = "halt"
PICK_ACTIVE = "pick_active"
PICK_INACTIVE = "pick_inactive"
POLICIES = (HALT, PICK_ACTIVE, PICK_INACTIVE)

# bound status labels for DivergenceReport
HOLDS = "holds"
VIOLATED = "violated"
INAPPLICABLE = "inapplicable"


@dataclass(frozen=True)
class TrajectoryRecord:
    iterates: tuple[ParamVector, ...]
    patterns: tuple[ActivationPattern, ...]
    crossings: tuple[tuple[int, int], ...]
    eta: float
    step_count: int
    policy: str
    losses: tuple[float, ...] = field(repr=False)
    halted_at: int | None = None

    def rows(self):
        """``(step, *theta, pattern, loss)`` per iterate."""
        for t, (th, pat, l) in enumerate(zip(self.iterates, self.patterns, self.losses)):
            yield (t, *th.values, str(pat), l)


@dataclass(frozen=True)
class DivergenceReport:
    separations: tuple[float, ...]
    bound: tuple[float, ...]
    both_in_region: tuple[bool, ...]
    first_violation: int | None
    rho: float
    status: str

    @property
    def applicable_steps(self) -> int:
        """Number of leading steps during which both runs stayed in the region."""
        n = 0
        for ok in self.both_in_region:
            if not ok:
                break
            n += 1
        return n

    def to_json(self) -> dict:
        return {
            "separations": list(self.separations),
            "bound": list(self.bound),
            "both_in_region": list(self.both_in_region),
            "first_violation": self.first_violation,
            "rho": self.rho,
            "status": self.status,
        }


@dataclass(frozen=True)
class CrossingCensus:
    total: int
    per_unit: tuple[int, ...]
    first_step: int | None

    def to_json(self) -> dict:
        return {"total": self.total, "per_unit": list(self.per_unit), "first_step": self.first_step}


def _step_gradient(theta: ParamVector, p: DataPoint, tau: float, policy: str) -> np.ndarray | None:
    z = preactivations(theta, p)
    near = np.abs(z) <= tau
    if near.any():
        if policy == HALT:
            return None
        active = np.where(near, policy == PICK_ACTIVE, z > 0)
    else:
        active = z > 0
    return masked_grad(theta, p, active)


def run_gd(
    theta0: ParamVector,
    p: DataPoint,
    eta: float,
    steps: int,
    tau: float | None = None,
    boundary_policy: str = HALT,
) -> TrajectoryRecord:
    """Plain gradient descent ``theta <- theta - eta * grad``.

    ``tau=None`` uses the scale-aware default at each iterate. Under the
    ``halt`` policy the run stops at the first iterate within tolerance of a
    boundary; that iterate is kept and ``halted_at`` records its index.
    """
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    if boundary_policy not in POLICIES:
        raise ValueError(f"unknown boundary policy {boundary_policy!r}")
    if not (math.isfinite(eta) and eta > 0):
        raise ValueError(f"step size must be positive and finite, got {eta}")

    def tol(th):
        return default_tau(th) if tau is None else tau

    theta = theta0
    iterates = [theta]
    patterns = [activation_pattern(theta, p, tol(theta))]
    losses = [loss(theta, p)]
    halted = None
    for t in range(steps):
        g = _step_gradient(theta, p, tol(theta), boundary_policy)
        if g is None:
            halted = t
            break
        with np.errstate(over="ignore", invalid="ignore"):
            nxt = theta.array() - eta * g
        if not np.all(np.isfinite(nxt)):
            raise DivergenceError(f"non-finite iterate at step {t + 1}", theta, t)
        theta = ParamVector.from_array(nxt, theta.layout)
        iterates.append(theta)
        patterns.append(activation_pattern(theta, p, tol(theta)))
        losses.append(loss(theta, p))
    crossings = tuple(
        (t, j)
        for t in range(len(patterns) - 1)
        for j, (a, b) in enumerate(zip(patterns[t].signs, patterns[t + 1].signs))
        if a != b
    )
    return TrajectoryRecord(
        tuple(iterates),
        tuple(patterns),
        crossings,
        float(eta),
        len(iterates) - 1,
        boundary_policy,
        tuple(losses),
        halted,
    )


def crossing_census(record: TrajectoryRecord) -> CrossingCensus:
    hidden = len(record.patterns[0].signs)
    counts = Counter(j for _, j in record.crossings)
    first = min((t for t, _ in record.crossings), default=None)
    return CrossingCensus(len(record.crossings), tuple(counts[j] for j in range(hidden)), first)


def paired_divergence(
    theta0: ParamVector,
    theta0_prime: ParamVector,
    p: DataPoint,
    eta: float,
    steps: int,
    region: RegionSpec,
    rho: float,
    tau: float | None = None,
    boundary_policy: str = HALT,
) -> tuple[DivergenceReport, TrajectoryRecord, TrajectoryRecord]:
    """Run two trajectories and compare their separation with ``rho**t * sep0``.

    The bound is checked only over the leading steps during which both runs
    stayed inside ``region``. If either run leaves the region, status is
    ``inapplicable`` (never ``violated`` on that account).
    """
    if theta0 == theta0_prime:
        raise DegeneratePairError("initial points coincide")
    a = run_gd(theta0, p, eta, steps, tau, boundary_policy)
    b = run_gd(theta0_prime, p, eta, steps, tau, boundary_policy)
    n = min(len(a.iterates), len(b.iterates))
    seps = [
        float(np.linalg.norm(a.iterates[t].array() - b.iterates[t].array())) for t in range(n)
    ]
    bound = [rho ** t * seps[0] for t in range(n)]
    inside = [region.contains(a.iterates[t], p) and region.contains(b.iterates[t], p) for t in range(n)]
    first = None
    for t in range(n):
        if not inside[t]:
            break
        if seps[t] > bound[t] + 1e-12 * seps[0]:
            first = t
            break
    if first is not None:
        status = VIOLATED
    elif all(inside) and n == steps + 1:
        status = HOLDS
    else:
        status = INAPPLICABLE
    report = DivergenceReport(tuple(seps), tuple(bound), tuple(inside), first, float(rho), status)
    return report, a, b


def update_residuals(record: TrajectoryRecord, p: DataPoint) -> list[float]:
    """Per step, max componentwise ``|theta_{t+1} + eta*g_t - theta_t|`` over ``1 + ||theta_t||``.

    ``g_t`` is rebuilt from the recorded pattern and policy, independently of
    the update that produced the record.
    """
    out = []
    for t in range(record.step_count):
        th, nxt = record.iterates[t], record.iterates[t + 1]
        signs = record.patterns[t].signs
        active = [s > 0 or (s == 0 and record.policy == PICK_ACTIVE) for s in signs]
        lhs = nxt.array() + record.eta * masked_grad(th, p, active) - th.array()
        out.append(float(np.max(np.abs(lhs))) / (1.0 + float(np.linalg.norm(th.array()))))
    return out
