import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from filterproj import operators as ops
from filterproj.filters import (KINDS, FilterSpec, IndicatorKind, apply_filter, apply_G,
                                check_stability_conditions, dense_filter, dissipation_pair,
                                eigen_gain, eval_indicator, filter_details,
                                laplacian_eigenvalue)
from filterproj.grid import FaceVectorField, make_grid, random_divfree_field, random_field

ALL_KINDS = [IndicatorKind.parse(k) for k in
             ("constant", "raw_smagorinsky", "normalized_gradient", "q_criterion", "vreman",
              "geometric_mean(normalized_gradient,q_criterion,vreman)")]


def direct_field(grid, fu, fv):
    """Sample without zeroing wall normals, so the gradient sees the full linear field."""
    xu, yu = grid.u_coords()
    xv, yv = grid.v_coords()
    return FaceVectorField(fu(xu, yu).astype(float), fv(xv, yv).astype(float))


def eigenmode_field(grid, k, m):
    xu, yu = grid.u_coords()
    xv, yv = grid.v_coords()
    u = np.sin(k * math.pi * xu) * np.sin(m * math.pi * yu)
    v = np.sin(k * math.pi * xv) * np.sin(m * math.pi * yv)
    u[[0, -1]] = 0.0
    v[:, [0, -1]] = 0.0
    return FaceVectorField(u, v)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_indicator_on_zero_field(kind, grid8):
    a = eval_indicator(kind, FaceVectorField.zeros(grid8), grid8)
    expected = 1.0 if kind.name == "constant" else 0.0
    assert np.all(a == expected)


def test_normalized_gradient_pure_shear():
    g = make_grid(16, 16)
    w = direct_field(g, lambda x, y: y, lambda x, y: 0 * x)
    a = eval_indicator(IndicatorKind("normalized_gradient"), w, g)
    np.testing.assert_allclose(a, 1.0, atol=1e-9)


def test_q_criterion_rigid_rotation():
    g = make_grid(16, 16)
    w = direct_field(g, lambda x, y: -(y - 0.5), lambda x, y: x - 0.5)
    a = eval_indicator(IndicatorKind("q_criterion"), w, g)
    assert np.abs(a).max() < 1e-9


def test_q_criterion_pure_strain_is_one():
    g = make_grid(16, 16)
    w = direct_field(g, lambda x, y: x - 0.5, lambda x, y: -(y - 0.5))
    a = eval_indicator(IndicatorKind("q_criterion"), w, g)
    np.testing.assert_allclose(a, 1.0, atol=1e-9)


def test_vreman_shear_and_rotation():
    g = make_grid(16, 16)
    shear = direct_field(g, lambda x, y: y, lambda x, y: 0 * x)
    # rank-one gradient: the invariant vanishes
    assert np.abs(eval_indicator(IndicatorKind("vreman"), shear, g)).max() < 1e-9
    rot = direct_field(g, lambda x, y: -y, lambda x, y: x)
    np.testing.assert_allclose(eval_indicator(IndicatorKind("vreman"), rot, g), 0.5, atol=1e-9)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_bounded_indicators_in_unit_interval(kind, rng):
    g = make_grid(16, 16)
    w = random_field(g, rng)
    a = eval_indicator(kind, w, g)
    assert np.all(np.isfinite(a)) and np.all(a >= 0)
    if kind.bounded:
        assert np.all(a <= 1.0)
    else:
        assert a.max() > 1.0  # white noise gradients are O(1/h)


def test_geometric_mean_of_single_is_identity(rng, grid8):
    w = random_field(grid8, rng)
    gm = eval_indicator(IndicatorKind.parse("geometric_mean(vreman)"), w, grid8)
    np.testing.assert_allclose(gm, eval_indicator(IndicatorKind("vreman"), w, grid8), rtol=1e-14)


def test_indicator_kind_parsing():
    k = IndicatorKind.parse("geometric_mean( q_criterion , vreman )")
    assert str(k) == "geometric_mean(q_criterion,vreman)" and k.bounded
    assert not IndicatorKind.parse("geometric_mean(raw_smagorinsky)").bounded
    with pytest.raises(ValueError):
        IndicatorKind.parse("helicity")
    with pytest.raises(ValueError):
        IndicatorKind.parse("geometric_mean()")
    with pytest.raises(ValueError):
        IndicatorKind("vreman", eta=-1.0)
    assert set(KINDS) >= {"constant", "raw_smagorinsky"}


def test_filter_spec_validation():
    with pytest.raises(ValueError):
        FilterSpec(eps_floor=1.0)
    with pytest.raises(ValueError):
        FilterSpec(chi0=-0.1)
    with pytest.raises(ValueError):
        FilterSpec(c_delta=None)
    with pytest.raises(ValueError):
        FilterSpec(delta=-1.0)
    g = make_grid(8, 8)
    assert FilterSpec(c_delta=2.0).delta_max(g) == pytest.approx(0.25)


def test_filter_zero_radius_is_identity(rng, grid8):
    w = random_field(grid8, rng)
    spec = FilterSpec(c_delta=0.0)
    out = apply_filter(w, w, spec, grid8)
    assert np.array_equal(out.u, w.u) and np.array_equal(out.v, w.v)
    gw = apply_G(w, w, spec, grid8)
    assert not np.any(gw.u) and not np.any(gw.v)
    # a = 0 with no floor also disables filtering
    spec = FilterSpec(IndicatorKind("vreman"))
    z = FaceVectorField.zeros(grid8)
    assert filter_details(w, z, spec, grid8).iterations == 0


@pytest.mark.parametrize("k,m", [(1, 1), (2, 3), (5, 7)])
def test_filter_eigenmode_gain(k, m):
    g = make_grid(16, 16)
    delta = 0.1
    spec = FilterSpec(c_delta=None, delta=delta)
    phi = eigenmode_field(g, k, m)
    lam = laplacian_eigenvalue(k, m, g)
    gain = eigen_gain(delta, lam)
    fw = apply_filter(phi, phi, spec, g)
    for got, ref in zip(fw.components(), phi.components()):
        assert np.abs(got - gain * ref).max() <= 1e-8
    gw = apply_G(phi, phi, spec, g)
    for got, ref in zip(gw.components(), phi.components()):
        assert np.abs(got - ref * delta**2 * lam / (1 + delta**2 * lam)).max() <= 1e-8


def test_eigen_gains_monotone():
    g = make_grid(32, 32)
    lams = sorted(laplacian_eigenvalue(k, k, g) for k in range(1, 32))
    gains = [eigen_gain(g.h, lam) for lam in lams]
    assert all(0 < x <= 1 for x in gains)
    assert all(a > b for a, b in zip(gains, gains[1:]))


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_filter_matches_dense_oracle(kind, rng, grid8):
    spec = FilterSpec(kind, solver=FilterSpec().solver.__class__(rel_tol=1e-13, abs_tol=1e-300))
    for _ in range(3):
        w = random_field(grid8, rng)
        res = filter_details(w, w, spec, grid8)
        ref = dense_filter(w, res.coefficient, grid8)
        for a, b in zip(res.filtered.components(), ref.components()):
            assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_g_form_between_zero_and_norm(kind, rng):
    g = make_grid(16, 16)
    spec = FilterSpec(kind)
    for _ in range(20):
        w = random_field(g, rng)
        gw = apply_G(w, w, spec, g)
        gww = ops.inner(gw, w, g)
        w2 = ops.inner(w, w, g)
        assert -1e-12 * w2 <= gww <= w2 * (1 + 1e-10)
        assert ops.l2_norm(w - gw, g) <= ops.l2_norm(w, g) * (1 + 1e-10)


def test_dissipation_pair_zero(grid8):
    z = FaceVectorField.zeros(grid8)
    assert dissipation_pair(z, z, FilterSpec(), grid8) == (0.0, 0.0)


@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_dissipation_upper_bound(kind, rng):
    g = make_grid(16, 16)
    spec = FilterSpec(kind)
    for _ in range(20):
        w = random_divfree_field(g, rng)
        gww, visc = dissipation_pair(w, w, spec, g)
        assert 0 <= gww <= visc * (1 + 1e-10)


def test_dissipation_lower_bound_constant_indicator(rng):
    g = make_grid(16, 16)
    spec = FilterSpec(c_delta=1.0)
    ratios = []
    for _ in range(20):
        w = random_field(g, rng)
        gww, visc = dissipation_pair(w, w, spec, g)
        ratios.append(gww / visc)
    # spectral bound for c_delta = 1 on the 5-point stencil
    assert min(ratios) >= 1 / 9 - 1e-12


def test_distinct_indicator_velocity(rng, grid8):
    w = random_field(grid8, rng)
    u = random_field(grid8, rng)
    spec = FilterSpec(IndicatorKind("vreman"))
    a = filter_details(w, u, spec, grid8)
    b = filter_details(w, w, spec, grid8)
    assert not np.allclose(a.coefficient, b.coefficient)
    np.testing.assert_array_equal(a.coefficient, spec.coefficient(u, grid8))


@pytest.mark.parametrize("chi", [0.0, 0.5, 1.0])
@pytest.mark.parametrize("kind", ALL_KINDS, ids=str)
def test_stability_conditions(chi, kind, rng):
    g = make_grid(16, 16)
    w = random_field(g, rng)
    rep = check_stability_conditions(w, w, FilterSpec(kind), g, chi, rng=rng)
    assert rep.passed, rep
    assert rep.adjoint_defect <= 1e-9 * rep.adjoint_scale
    if chi == 0:
        assert rep.margin_energy == rep.w_norm2


def test_stability_rejects_bad_chi(grid8):
    z = FaceVectorField.zeros(grid8)
    with pytest.raises(ValueError):
        check_stability_conditions(z, z, FilterSpec(), grid8, 1.5)


def test_filter_estimates_on_divfree_fields(rng):
    g = make_grid(32, 32)
    spec = FilterSpec(c_delta=1.0)
    dmax = spec.delta_max(g)
    for _ in range(10):
        w = random_divfree_field(g, rng)
        gw = apply_G(w, w, spec, g)
        grad = ops.h1_seminorm(w, g)
        assert ops.l2_norm(gw, g) <= dmax * grad * (1 + 1e-10)
        dual = math.sqrt(sum(ops.hneg1_norm(c, g) ** 2 for c in gw.components()))
        assert dual <= dmax**2 * grad * 1.1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_frozen_filter_is_linear(seed, a, b):
    g = make_grid(8, 8)
    r = np.random.default_rng(seed)
    x, y, u = random_field(g, r), random_field(g, r), random_field(g, r)
    coef = FilterSpec(IndicatorKind("q_criterion")).coefficient(u, g)
    from filterproj.filters import filter_with_coefficient
    from filterproj.linsolve import SolverConfig
    tight = SolverConfig(rel_tol=1e-13, abs_tol=1e-300)
    lhs = filter_with_coefficient(x * a + y * b, coef, g, tight).filtered
    fx = filter_with_coefficient(x, coef, g, tight).filtered
    fy = filter_with_coefficient(y, coef, g, tight).filtered
    rhs = fx * a + fy * b
    scale = 1 + abs(a) * ops.l2_norm(x, g) + abs(b) * ops.l2_norm(y, g)
    assert ops.l2_norm(lhs - rhs, g) <= 1e-10 * scale
