"""The four experiment families behind the CLI.

Each runner returns an :class:`Outcome`: rendered output files, named
pass/fail checks, and headline numbers for ``summary.json``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import clarke, lipschitz_probe, surrogate, trajectory
from ._io import render_csv, render_json
from .config import ExperimentConfig
from .model_core import TWO_LAYER, ParamVector, sample_params


@dataclass
class Outcome:
    csv: dict[str, str] = field(default_factory=dict)
    json: dict[str, str] = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    headline: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def run_lipschitz_sweep(cfg: ExperimentConfig) -> Outcome:
    p = cfg.datum
    prm = cfg.params
    theta0 = lipschitz_probe.boundary_point(p, prm["anchor_t"])
    res = lipschitz_probe.epsilon_sweep(p, theta0, prm["epsilons"])
    smp = res.samples
    out = Outcome()
    out.csv["lipschitz_sweep.csv"] = render_csv(
        lipschitz_probe.CSV_HEADER, (s.row() for s in smp)
    )
    out.json["lipschitz_sweep.json"] = render_json(
        {
            "theta0": theta0.to_json(),
            "samples": [dict(zip(lipschitz_probe.CSV_HEADER, s.row())) for s in smp],
            "slope": res.slope,
            "slope_points": res.slope_points,
        }
    )
    nrm2 = p.x * p.x + 1.0
    last = smp[-1]
    onset = lipschitz_probe.divergence_onset(p)
    tail = [s.numeric_ratio for s in smp if s.eps < onset]
    out.checks["numeric_matches_closed_form"] = max(s.discrepancy for s in smp) <= 1e-9
    out.checks["loglog_slope_is_minus_one"] = (
        res.slope_points >= 2 and abs(res.slope + 1.0) <= 0.01
    )
    out.checks["eps_times_ratio_near_half_y"] = all(
        abs(s.eps_times_ratio - res.limit) <= s.eps * nrm2 / 2 * (1 + 1e-9) + 1e-15 for s in smp
    )
    out.checks["ratio_grows_as_eps_shrinks"] = all(b > a for a, b in zip(tail, tail[1:]))
    out.headline = {
        "slope": res.slope,
        "eps_min": last.eps,
        "ratio_at_eps_min": last.numeric_ratio,
        "eps_times_ratio_at_eps_min": last.eps_times_ratio,
        "limit_half_abs_y": res.limit,
        "max_discrepancy": max(s.discrepancy for s in smp),
    }
    return out


def run_surrogate_sweep(cfg: ExperimentConfig) -> Outcome:
    p = cfg.datum
    prm = cfg.params
    est = surrogate.smoothness_divergence_sweep(p, prm["betas"], tuple(prm["search_interval"]))
    out = Outcome()
    out.csv["surrogate_sweep.csv"] = render_csv(surrogate.CSV_HEADER, (e.row() for e in est))
    out.json["surrogate_sweep.json"] = render_json(
        {"estimates": [dict(zip(surrogate.CSV_HEADER, e.row())) for e in est]}
    )
    L = [e.L_lower for e in est]
    betas = [e.beta for e in est]
    large = [e for e in est if e.beta >= 2 * math.log(2) / abs(p.y)]
    decades = [
        L[i + 1] / L[i]
        for i in range(len(est) - 1)
        if abs(betas[i + 1] / betas[i] - 10.0) <= 1e-9
    ]
    v = p.normal()
    rank_one = []
    for e in est:
        act = surrogate.SurrogateActivation(e.beta)
        H = surrogate.surrogate_hessian(e.theta_witness, p, act)
        want = abs(surrogate.hessian_scalar(e.theta_witness, p, act)) * float(v @ v)
        rank_one.append(abs(clarke.operator_norm(H) - want) <= 1e-12 * max(want, 1e-300))
    grid = np.linspace(-5.0, 5.0, 2001)
    out.checks["L_lower_strictly_increasing"] = all(b > a for a, b in zip(L, L[1:]))
    # curvature is linear in beta only asymptotically; judge the largest decade
    out.checks["decade_ratio_near_ten"] = not decades or 9.5 <= decades[-1] <= 10.5
    out.checks["L_lower_above_divergence_floor"] = all(
        e.L_lower >= surrogate.divergence_floor(p, e.beta) for e in large
    )
    out.checks["residual_at_least_half_y"] = all(abs(e.residual) >= abs(p.y) / 2 for e in large)
    out.checks["peak_curvature_is_beta_over_4"] = all(
        abs(e.sigma2_at_peak - e.beta / 4) <= 1e-9 * e.beta / 4 for e in est
    )
    out.checks["first_derivative_bounded_by_one"] = all(
        np.max(np.abs(surrogate.softplus_eval(b, grid)[1])) <= 1.0 for b in betas
    )
    out.checks["hessian_rank_one_norm_identity"] = all(rank_one)
    out.headline = {
        "betas": betas,
        "L_lower": L,
        "decade_ratios": decades,
        "u_peak": [e.u_peak for e in est],
    }
    return out


def _region(prm, layout) -> clarke.RegionSpec:
    return clarke.RegionSpec(
        prm["region"],
        prm["delta"],
        prm.get("pattern"),
        prm.get("fixed_w2") if layout.kind == TWO_LAYER else None,
    )


def run_rho_certificate(cfg: ExperimentConfig) -> Outcome:
    p, lay, prm = cfg.datum, cfg.layout, cfg.params
    T = clarke.UpdateMap(prm["eta"], p, lay)
    region = _region(prm, lay)
    center = prm["center"] or (0.0,) * lay.size
    sampler = clarke.SamplerSpec(ParamVector(center, lay), prm["radius"], prm["samples"])
    cert = clarke.rho_over_region(T, region, sampler)
    reports = clarke.region_pair_check(T, region, sampler, cert.rho, prm["pairs"], prm["seed"])
    out = Outcome()
    out.json["rho_certificate.json"] = render_json(cert.to_json())
    out.csv["region_pairs.csv"] = render_csv(
        ("pair", "ratio", "rho", "passed", "crosses_boundary"),
        ((i, r.ratio, r.rho, r.passed, r.crosses_boundary) for i, r in enumerate(reports)),
    )
    violations = sum(not r.passed for r in reports)
    if cert.closed_form_used:
        out.checks["sampled_rho_matches_closed_form"] = (
            abs(cert.sampled_rho - cert.rho) <= 1e-12 * max(1.0, cert.rho)
        )
    out.checks["same_region_pairs_respect_rho"] = violations == 0
    out.checks["no_pair_crosses_boundary"] = not any(r.crosses_boundary for r in reports)
    out.headline = {
        "rho": cert.rho,
        "closed_form_used": cert.closed_form_used,
        "sample_count": cert.sample_count,
        "pairs": len(reports),
        "violations": violations,
        "max_pair_ratio": max(r.ratio for r in reports) if reports else None,
    }
    return out


def _initial_pair(cfg: ExperimentConfig) -> tuple[ParamVector, ParamVector]:
    lay, prm = cfg.layout, cfg.params
    rng = np.random.default_rng(prm["seed"])
    if prm["theta0"] is not None:
        a = ParamVector(prm["theta0"], lay)
    else:
        a = sample_params(rng, lay)
    if prm["theta0_prime"] is not None:
        b = ParamVector(prm["theta0_prime"], lay)
    else:
        d = rng.normal(size=lay.size)
        b = ParamVector.from_array(a.array() + prm["perturbation"] * d / np.linalg.norm(d), lay)
    return a, b


def run_trajectory_perturb(cfg: ExperimentConfig) -> Outcome:
    p, lay, prm = cfg.datum, cfg.layout, cfg.params
    region = _region(prm, lay)
    a0, b0 = _initial_pair(cfg)
    rho = prm["rho"]
    rho_source = "config"
    if rho is None:
        T = clarke.UpdateMap(prm["eta"], p, lay)
        cert = clarke.rho_over_region(T, region, clarke.SamplerSpec(a0, prm["radius"], prm["samples"]))
        rho, rho_source = cert.rho, ("closed_form" if cert.closed_form_used else "sampled")
    report, ra, rb = trajectory.paired_divergence(
        a0, b0, p, prm["eta"], prm["steps"], region, rho, prm["tau"], prm["policy"]
    )
    census_a, census_b = trajectory.crossing_census(ra), trajectory.crossing_census(rb)
    out = Outcome()
    header = ("step", *(f"theta_{i}" for i in range(lay.size)), "pattern", "loss")
    out.csv["trajectory_a.csv"] = render_csv(header, ra.rows())
    out.csv["trajectory_b.csv"] = render_csv(header, rb.rows())
    out.csv["separations.csv"] = render_csv(
        ("step", "separation", "bound", "both_in_region"),
        (
            (t, s, bd, inside)
            for t, (s, bd, inside) in enumerate(
                zip(report.separations, report.bound, report.both_in_region)
            )
        ),
    )
    out.json["divergence_report.json"] = render_json(
        {
            **report.to_json(),
            "rho_source": rho_source,
            "policy": prm["policy"],
            "census_a": census_a.to_json(),
            "census_b": census_b.to_json(),
        }
    )
    seps = report.separations
    residual = max(trajectory.update_residuals(ra, p) + trajectory.update_residuals(rb, p), default=0.0)
    out.checks["bound_not_violated"] = report.status != trajectory.VIOLATED
    out.checks["update_rule_exact"] = residual <= 1e-15
    out.headline = {
        "rho": rho,
        "bound_status": report.status,
        "first_violation": report.first_violation,
        "steps_in_region": report.applicable_steps,
        "step1_separation_ratio": seps[1] / seps[0] if len(seps) > 1 else None,
        "crossings_a": census_a.total,
        "crossings_b": census_b.total,
        "halted_a": ra.halted_at,
        "halted_b": rb.halted_at,
    }
    return out


RUNNERS = {
    "lipschitz_sweep": run_lipschitz_sweep,
    "surrogate_sweep": run_surrogate_sweep,
    "rho_certificate": run_rho_certificate,
    "trajectory_perturb": run_trajectory_perturb,
}
