import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fd_jacobian, rel_err
from relustab.clarke import (
    HALF_SPACE_NEGATIVE,
    HALF_SPACE_POSITIVE,
    PATTERN_FIXED,
    RegionSpec,
    SamplerSpec,
    UpdateMap,
    apply_update,
    check_update_lipschitz,
    hull_max_norm,
    limiting_jacobians,
    operator_norm,
    region_pair_check,
    region_samples,
    rho_over_region,
    segment_crosses,
    simplex_grid,
    suggest_sampler,
)
from relustab.errors import BoundaryError, ConvergenceError, DegeneratePairError, RegionError
from relustab.lipschitz_probe import make_probe_pair
from relustab.model_core import DataPoint, Layout, ParamVector, preactivations, sample_params

ONE = Layout.one_neuron()


def one(w, b):
    return ParamVector.one_neuron(w, b)


def test_apply_update_examples():
    T = UpdateMap(0.1, DataPoint(1.0, 0.0), ONE)
    assert apply_update(T, one(2.0, -1.0)).to_json() == pytest.approx([1.9, -1.1], abs=1e-15)
    dead = one(-1.0, -1.0)
    assert apply_update(UpdateMap(7.0, DataPoint(1.0, 5.0), ONE), dead) == dead


@pytest.mark.parametrize("eta", [0.0, -0.1, math.inf, math.nan])
def test_update_map_rejects_bad_eta(eta):
    with pytest.raises(ValueError):
        UpdateMap(eta, DataPoint(1.0, 0.0), ONE)


def test_apply_update_on_boundary_raises():
    T = UpdateMap(0.1, DataPoint(1.0, 1.0), ONE)
    with pytest.raises(BoundaryError):
        apply_update(T, one(0.0, 0.0))


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(1e-3, 10))
def test_identity_on_flat_region(w, b, x, y, eta):
    th, p = one(w, b), DataPoint(x, y)
    if preactivations(th, p)[0] >= 0:
        return
    assert apply_update(UpdateMap(eta, p, ONE), th, tau=0.0) == th


def test_limiting_jacobians_one_neuron():
    p = DataPoint(1.0, 1.0)
    T = UpdateMap(0.4, p, ONE)
    flat = limiting_jacobians(T, one(-1.0, -1.0))
    assert len(flat.jacobians) == 1
    np.testing.assert_array_equal(flat.jacobians[0], np.eye(2))
    on = limiting_jacobians(T, one(0.0, 0.0))
    assert len(on.jacobians) == 2
    np.testing.assert_array_equal(on.jacobians[0], np.eye(2))
    np.testing.assert_allclose(on.jacobians[1], np.eye(2) - 0.4 * np.ones((2, 2)), atol=1e-16)
    assert on.norms == pytest.approx((1.0, 1.0), rel=1e-12)
    active = limiting_jacobians(T, one(1.0, 1.0))
    assert len(active.jacobians) == 1 and active.patterns == ((1,),)


def test_limiting_jacobians_catch_rounded_boundary_points():
    # t*x rounds, so s(t, -t*x) is a few ulps off zero; the default tau still sees both sides
    p = DataPoint(0.1, 1.0)
    th = one(0.3, -(0.3 * 0.1))
    assert len(limiting_jacobians(UpdateMap(0.4, p, ONE), th).jacobians) == 2


def test_limiting_jacobian_matches_fd_two_layer():
    rng = np.random.default_rng(3)
    lay = Layout.two_layer(2, 3)
    checked = 0
    while checked < 50:
        th = sample_params(rng, lay)
        p = DataPoint(tuple(rng.normal(size=2)), rng.normal())
        T = UpdateMap(0.1, p, lay)
        h = 1e-6 * (1 + np.linalg.norm(th.array()))
        if np.min(np.abs(preactivations(th, p))) < 1e3 * h:
            continue
        jset = limiting_jacobians(T, th)
        assert len(jset.jacobians) == 1
        fd = fd_jacobian(lambda a: apply_update(T, ParamVector.from_array(a, lay)).array(), th.array(), h)
        assert rel_err(jset.jacobians[0], fd) <= 1e-6
        checked += 1


def test_two_layer_boundary_enumeration():
    th = ParamVector.two_layer([[1.0, -1.0], [0.0, 0.0], [1.0, 1.0]], [1.0, 2.0, 3.0])
    jset = limiting_jacobians(UpdateMap(0.1, DataPoint((1.0,), 0.5), th.layout), th)
    assert len(jset.jacobians) == 4
    assert sorted(pt[0] for pt in jset.patterns) == [-1, -1, 1, 1]
    assert all(pt[2] == 1 for pt in jset.patterns)


def test_operator_norm_examples():
    assert operator_norm(np.eye(2)) == 1.0
    assert operator_norm(np.zeros((2, 2))) == 0.0
    assert operator_norm(np.eye(2) - 0.4 * np.ones((2, 2))) == pytest.approx(1.0, rel=1e-12)


@given(st.floats(-3, 3), st.floats(1e-3, 5))
def test_operator_norm_rank_one_closed_form(x, eta):
    v = np.array([x, 1.0])
    M = np.eye(2) - eta * np.outer(v, v)
    want = max(1.0, abs(1 - eta * float(v @ v)))
    assert operator_norm(M) == pytest.approx(want, rel=1e-12)


def test_operator_norm_against_svd():
    rng = np.random.default_rng(0)
    for n in (1, 2, 5, 13, 100):
        for _ in range(20):
            M = rng.normal(size=(n, n))
            assert operator_norm(M) == pytest.approx(np.linalg.norm(M, 2), rel=1e-11)


def test_operator_norm_nearly_tied_singular_values():
    Q, _ = np.linalg.qr(np.random.default_rng(2).normal(size=(4, 4)))
    for g in (1e-3, 1e-7, 1e-11, 1e-14, 0.0):
        M = Q @ np.diag([1.0, -(1.0 - g), 0.5, 0.1]) @ Q.T
        assert operator_norm(M) == pytest.approx(1.0, rel=1e-12)


def test_operator_norm_input_checks():
    with pytest.raises(ValueError):
        operator_norm(np.ones((2, 3)))
    with pytest.raises(ValueError):
        operator_norm(np.array([[np.nan]]))


def test_operator_norm_reports_gap():
    M = np.random.default_rng(1).normal(size=(6, 6))
    with pytest.raises(ConvergenceError) as info:
        operator_norm(M, max_iter=2)
    assert info.value.gap > 0


def test_simplex_grid_covers_simplex():
    pts = list(simplex_grid(3, 10))
    assert len(pts) == math.comb(12, 2)
    assert all(abs(w.sum() - 1) < 1e-12 and np.all(w >= 0) for w in pts)


def test_extreme_point_sufficiency():
    rng = np.random.default_rng(8)
    cases = [(UpdateMap(0.4, DataPoint(1.0, 1.0), ONE), one(0.0, 0.0))]
    for _ in range(10):
        x, eta = rng.uniform(-2, 2), rng.uniform(0.05, 2.0)
        cases.append((UpdateMap(eta, DataPoint(x, 1.0), ONE), one(1.0, -x)))
    th = ParamVector.two_layer([[1.0, -1.0], [2.0, -2.0], [0.5, 1.0]], [1.0, -2.0, 0.5])
    cases.append((UpdateMap(0.3, DataPoint((1.0,), 0.7), th.layout), th))
    for T, th in cases:
        jset = limiting_jacobians(T, th)
        assert len(jset.jacobians) >= 2
        assert hull_max_norm(jset, 10) == pytest.approx(jset.max_norm, abs=1e-12)
        assert hull_max_norm(jset, 10) <= jset.max_norm + 1e-12


def _sampler(layout, radius=2.0, count=64, center=None):
    c = ParamVector(center or (0.0,) * layout.size, layout)
    return SamplerSpec(c, radius, count)


def test_rho_examples():
    p = DataPoint(1.0, 1.0)
    T = UpdateMap(0.4, p, ONE)
    pos = rho_over_region(T, RegionSpec(HALF_SPACE_POSITIVE, 0.1), _sampler(ONE))
    assert pos.rho == 1.0 and pos.closed_form_used
    for eta in (0.01, 0.4, 3.0):
        neg = rho_over_region(UpdateMap(eta, p, ONE), RegionSpec(HALF_SPACE_NEGATIVE, 0.1), _sampler(ONE))
        assert neg.rho == 1.0
    big = rho_over_region(UpdateMap(3.0, p, ONE), RegionSpec(HALF_SPACE_POSITIVE, 0.1), _sampler(ONE))
    assert big.rho == pytest.approx(5.0, rel=1e-12)
    fb = Layout.frozen_bias()
    frozen = rho_over_region(
        UpdateMap(0.5, DataPoint(1.0, 0.0), fb), RegionSpec(HALF_SPACE_POSITIVE, 0.1), _sampler(fb)
    )
    assert frozen.rho == 0.5
    assert frozen.sample_count == 64
    assert frozen.to_json()["closed_form_used"] is True


def test_rho_two_layer_is_sampled_max():
    lay = Layout.two_layer(2, 3)
    p = DataPoint((1.0, -0.5), 1.0)
    T = UpdateMap(0.1, p, lay)
    region = RegionSpec(PATTERN_FIXED, 0.05, (1, -1, 1))
    sampler = _sampler(lay, 1.0, 128)
    cert = rho_over_region(T, region, sampler)
    assert not cert.closed_form_used
    pts = region_samples(region, p, sampler)
    norms = [limiting_jacobians(T, q).max_norm for q in pts]
    assert cert.rho == max(norms)
    assert cert.worst_point == pts[norms.index(max(norms))]
    assert all(region.contains(q, p) for q in pts)


def test_region_errors():
    with pytest.raises(RegionError):
        RegionSpec(HALF_SPACE_POSITIVE, 0.0)
    with pytest.raises(RegionError):
        RegionSpec(PATTERN_FIXED, 0.1, (1, 0))
    with pytest.raises(RegionError):
        RegionSpec("elsewhere", 0.1)
    fb = Layout.frozen_bias()
    T = UpdateMap(0.5, DataPoint(0.0, 0.0), fb)
    with pytest.raises(RegionError):
        rho_over_region(T, RegionSpec(HALF_SPACE_POSITIVE, 0.1), _sampler(fb))
    lay = Layout.two_layer(1, 2)
    with pytest.raises(RegionError):
        RegionSpec(PATTERN_FIXED, 0.1, (1, 1, 1)).signs(lay)


def test_check_update_lipschitz_examples():
    p = DataPoint(1.0, 1.0)
    T = UpdateMap(0.4, p, ONE)
    rep = check_update_lipschitz(T, one(-1.0, -1.0), one(-2.0, 0.5), 1.0)
    assert rep.ratio == 1.0 and rep.passed and not rep.crosses_boundary
    rep = check_update_lipschitz(T, one(1.0, 1.0), one(2.0, 0.5), 1.0)
    assert rep.ratio <= 1.0 + 1e-15 and rep.passed
    with pytest.raises(DegeneratePairError):
        check_update_lipschitz(T, one(1.0, 1.0), one(1.0, 1.0), 1.0)


@pytest.mark.parametrize("eps", [1e-2, 1e-4, 1e-6])
def test_crossing_pair_breaks_any_region_rho(eps):
    p = DataPoint(1.0, 1.0)
    eta = 0.4
    T = UpdateMap(eta, p, ONE)
    pair = make_probe_pair(one(0.0, 0.0), p, eps)
    rep = check_update_lipschitz(T, pair.theta_plus, pair.theta_minus, 1.0)
    nrm2 = 2.0
    # theta+ - theta- = 2 eps v and the gradient jump is (eps |v|^2 - y) v
    want = abs(1 - eta * nrm2 / 2 + eta * p.y / (2 * eps))
    assert rep.ratio == pytest.approx(want, rel=1e-9)
    assert rep.crosses_boundary and not rep.passed


def test_segment_crosses_two_layer():
    p = DataPoint((1.0,), 0.0)
    a = ParamVector.two_layer([[1.0, 0.5], [1.0, 1.0]], [1.0, 1.0])
    b = ParamVector.two_layer([[1.0, 0.5], [-3.0, 1.0]], [1.0, 1.0])
    assert segment_crosses(a, b, p)
    assert not segment_crosses(a, a, p)


def test_same_region_pairs_respect_rho():
    p = DataPoint(1.0, 1.0)
    T = UpdateMap(0.4, p, ONE)
    region = RegionSpec(HALF_SPACE_POSITIVE, 0.1)
    reports = region_pair_check(T, region, _sampler(ONE), 1.0, n_pairs=1000, seed=1)
    assert len(reports) == 1000
    assert all(r.passed and not r.crosses_boundary for r in reports)


def test_same_region_pairs_two_layer():
    lay = Layout.two_layer(2, 3)
    p = DataPoint((1.0, -0.5), 1.0)
    T = UpdateMap(0.1, p, lay)
    region = RegionSpec(PATTERN_FIXED, 0.05, (1, -1, 1), fixed_w2=(0.5, -0.3, 0.8))
    sampler = _sampler(lay, 1.0, 256)
    cert = rho_over_region(T, region, sampler)
    reports = region_pair_check(T, region, sampler, cert.rho, n_pairs=1000, seed=2)
    assert sum(not r.passed for r in reports) == 0
    assert not any(r.crosses_boundary for r in reports)


def test_projection_lands_inside_region():
    rng = np.random.default_rng(4)
    lay = Layout.two_layer(3, 4)
    region = RegionSpec(PATTERN_FIXED, 0.2, (1, 1, -1, -1))
    for _ in range(200):
        p = DataPoint(tuple(rng.normal(size=3)), rng.normal())
        q = region.project(sample_params(rng, lay), p)
        assert region.contains(q, p)
        # projecting again is a no-op
        assert region.project(q, p) == q


def test_suggest_sampler_covers_iterates():
    its = [one(0.0, 1.0), one(2.0, -1.0), one(1.0, 3.0)]
    s = suggest_sampler(its, 0.5, 16)
    pts = s.box_points()
    assert np.all(pts.min(axis=0) >= [-0.5, -1.5]) and np.all(pts.max(axis=0) <= [2.5, 3.5])
    assert s.count == 16
