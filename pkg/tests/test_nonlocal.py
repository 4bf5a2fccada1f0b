import math

import numpy as np
import pytest
from scipy import ndimage

from pinftylab import (
    ConeSpec,
    NodeMask,
    RadialProblem,
    ScalarField,
    build_grid,
    check_approx_consistency,
    check_comparison_with_cones,
    check_nonlocal_max_principle,
    consistency_bound,
    inner_parallel,
    lower_envelope,
    nonlocal_inf_laplacian,
    perturb_positive_slope,
    perturb_strict,
    radial_p_harmonic,
    ring_distance,
    slope_minus,
    slope_plus,
    upper_envelope,
)
from pinftylab.verify import midrange_supersolution, random_subsolution, random_supersolution


def unit_square(h):
    return build_grid([(0.0, 1.0), (0.0, 1.0)], h)


def filter_envelope(grid, values, eps, mode):
    """Independent envelope oracle via scipy's morphological filters."""
    from pinftylab.grid import ball_stencil

    st = ball_stencil(grid.h, eps, grid.dim)
    rad = st.steps
    foot = np.zeros((2 * rad + 1,) * grid.dim, dtype=bool)
    foot[tuple((st.offsets + rad).T)] = True
    fill = -np.inf if mode == "max" else np.inf
    dense = grid.to_dense(values, pad=rad, fill=fill)
    filt = ndimage.maximum_filter if mode == "max" else ndimage.minimum_filter
    out = filt(dense, footprint=foot, mode="constant", cval=fill)
    core = tuple(slice(rad, rad + n) for n in grid.lattice_shape)
    return out[core][tuple(grid.lattice_index.T)]


# ---------------------------------------------------------------------------
# envelopes and slopes


def test_envelopes_constant_field():
    g = unit_square(1 / 16)
    eps = 4 / 16
    u = ScalarField.constant(g, 3.25)
    m = inner_parallel(g, eps).flags
    assert (upper_envelope(u, eps).values[m] == 3.25).all()
    assert (lower_envelope(u, eps).values[m] == 3.25).all()
    assert (slope_plus(u, eps).values[m] == 0.0).all()
    assert (slope_minus(u, eps).values[m] == 0.0).all()


def test_envelope_linear_1d():
    g = build_grid([(0.0, 1.0)], 1 / 32)
    eps = 4 / 32
    u = ScalarField(g, g.coords[:, 0].copy())
    m = inner_parallel(g, eps).flags
    np.testing.assert_allclose(
        upper_envelope(u, eps).values[m], g.coords[m, 0] + eps, atol=1e-15
    )
    np.testing.assert_allclose(slope_plus(u, eps).values[m], 1.0, atol=1e-12)
    np.testing.assert_allclose(slope_minus(u, eps).values[m], 1.0, atol=1e-12)


def test_envelope_random_field_against_filter_oracle():
    g = unit_square(1 / 24)
    eps = 4 / 24
    rng = np.random.default_rng(42)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    m = inner_parallel(g, eps).flags
    up = upper_envelope(u, eps).values
    lo = lower_envelope(u, eps).values
    oracle_up = filter_envelope(g, u.values, eps, "max")
    oracle_lo = filter_envelope(g, u.values, eps, "min")
    np.testing.assert_array_equal(up[m], oracle_up[m])
    np.testing.assert_array_equal(lo[m], oracle_lo[m])
    # defined exactly on the inner parallel set for a fully defined input
    np.testing.assert_array_equal(np.isfinite(up), m)


def test_envelope_duality():
    g = unit_square(1 / 16)
    eps = 3 / 16
    rng = np.random.default_rng(1)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    neg = ScalarField(g, -u.values)
    m = inner_parallel(g, eps).flags
    np.testing.assert_array_equal(
        lower_envelope(u, eps).values[m], -upper_envelope(neg, eps).values[m]
    )


def test_slope_of_far_cone():
    g = unit_square(1 / 32)
    eps = 4 / 32
    apex = np.array([-10.0, -10.0])
    a = 1.3
    u = ScalarField(g, a * np.sqrt(((g.coords - apex) ** 2).sum(axis=1)))
    m = inner_parallel(g, eps).flags
    for fld in (slope_plus(u, eps), slope_minus(u, eps)):
        vals = fld.values[m]
        assert vals.max() <= a * (1 + 1e-10)
        assert vals.min() >= a * (1 - 3 * g.h / eps)


# ---------------------------------------------------------------------------
# finite-difference infinity-Laplacian


def test_operator_affine_exact_zero():
    g = unit_square(1 / 16)
    eps = 4 / 16
    u = ScalarField(g, g.coords @ np.array([0.5, -0.25]) + 0.125)
    m = inner_parallel(g, eps).flags
    lap = nonlocal_inf_laplacian(u, eps)
    assert np.abs(lap.values[m]).max() == 0.0  # dyadic data: exact


def test_operator_quadratic_1d():
    g = build_grid([(0.0, 1.0)], 1 / 8)
    eps = 2 / 8
    u = ScalarField(g, g.coords[:, 0] ** 2)
    m = inner_parallel(g, eps).flags
    with pytest.warns(UserWarning, match="eps < 3h"):
        lap = nonlocal_inf_laplacian(u, eps)
    np.testing.assert_array_equal(lap.values[m], 2.0)


def test_operator_undefined_outside_inner_set():
    g = unit_square(1 / 16)
    eps = 4 / 16
    u = ScalarField(g, g.coords[:, 0].copy())
    lap = nonlocal_inf_laplacian(u, eps)
    m = inner_parallel(g, eps).flags
    assert np.isnan(lap.values[~m]).all()


def test_operator_matches_slope_form():
    g = unit_square(1 / 16)
    eps = 4 / 16
    rng = np.random.default_rng(9)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    m = inner_parallel(g, eps).flags
    lap = nonlocal_inf_laplacian(u, eps).values[m]
    via_slopes = (slope_plus(u, eps).values[m] - slope_minus(u, eps).values[m]) / eps
    np.testing.assert_allclose(lap, via_slopes, atol=1e-12)


def test_operator_sign_flip():
    g = unit_square(1 / 16)
    eps = 3 / 16
    rng = np.random.default_rng(13)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    m = inner_parallel(g, eps).flags
    a = nonlocal_inf_laplacian(u, eps).values[m]
    b = nonlocal_inf_laplacian(ScalarField(g, -u.values), eps).values[m]
    np.testing.assert_array_equal(a, -b)


def test_envelope_of_envelope_lives_on_2eps_set():
    g = unit_square(1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(2)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    env2 = upper_envelope(upper_envelope(u, eps), eps)
    m2 = inner_parallel(g, 2 * eps).flags
    assert np.isfinite(env2.values[m2]).all()


# ---------------------------------------------------------------------------
# comparison with cones


def test_comparison_cone_against_itself():
    g = unit_square(1 / 16)
    apex = np.array([-0.4, 1.3])
    cone = ConeSpec(apex, 1.2, 0.3, 0.5)
    u = ScalarField(
        g, 1.2 * np.sqrt(((g.coords - apex) ** 2).sum(axis=1)) ** 0.5 + 0.3
    )
    region = NodeMask(g, g.is_interior.copy())
    assert check_comparison_with_cones(u, cone, region) <= 1e-12


def test_comparison_radial_solution_with_matching_cones():
    def inside(pts):
        r = np.sqrt((pts**2).sum(axis=1))
        return (r > 0.25) & (r < 1)

    g = build_grid([(-1, 1), (-1, 1)], 1 / 64, inside)
    problem = RadialProblem(2, 3.0)
    u = ScalarField(g, radial_p_harmonic(problem, g.coords))
    r = np.sqrt((g.coords**2).sum(axis=1))
    region = NodeMask(g, g.is_interior & (r > 0.4) & (r < 0.85))
    for shift in ((1.5, 0.0), (0.0, -2.0)):
        cone = ConeSpec(np.array(shift), 0.8, 0.0, problem.exponent)
        violation = check_comparison_with_cones(u, cone, region)
        assert violation <= 8 * g.h


def test_comparison_zero_slope_is_min_max_principle():
    g = unit_square(1 / 16)
    rng = np.random.default_rng(3)
    u = ScalarField(g, rng.normal(size=g.n_nodes))
    region = NodeMask(g, g.is_interior.copy())
    cone = ConeSpec(np.array([5.0, 5.0]), 0.0, 0.0, 1.0)
    violation = check_comparison_with_cones(u, cone, region)
    # a = 0 reduces to how far u escapes its boundary min/max
    rim = ~g.is_interior
    expect = max(
        u.values[rim].min() - u.values[g.is_interior].min(),
        u.values[g.is_interior].max() - u.values[rim].max(),
    )
    assert violation == pytest.approx(expect, abs=1e-14)


def test_comparison_rejects_apex_inside():
    g = unit_square(1 / 16)
    u = ScalarField(g, g.coords[:, 0].copy())
    region = NodeMask(g, g.is_interior.copy())
    cone = ConeSpec(np.array([0.5, 0.5]), 1.0, 0.0, 1.0)
    with pytest.raises(ValueError, match="apex"):
        check_comparison_with_cones(u, cone, region)


# ---------------------------------------------------------------------------
# nonlocal maximum principle


def test_max_principle_equal_fields():
    g = unit_square(1 / 16)
    eps = 4 / 16
    u = ScalarField(g, np.sin(3 * g.coords[:, 0]) + g.coords[:, 1])
    rep = check_nonlocal_max_principle(u, u, 0.0, eps)
    assert rep.conclusion_gap == 0.0


def test_max_principle_hypothesis_filter():
    g = unit_square(1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(4)
    v = random_supersolution(g, eps, rng)
    # u strictly above the operator bound C = -1 fails the filter
    rep = check_nonlocal_max_principle(v, v, -1.0, eps)
    assert not rep.hypothesis_ok


def test_max_principle_seeded_pairs():
    g = unit_square(1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(7)
    for _ in range(5):
        u = random_subsolution(g, eps, rng)
        v = random_supersolution(g, eps, rng)
        rep = check_nonlocal_max_principle(u, v, 0.0, eps)
        assert rep.hypothesis_ok
        scale = 1 + np.abs(u.values).max() + np.abs(v.values).max()
        assert rep.conclusion_gap <= 1e-10 * scale


def test_max_principle_solved_pipeline():
    """Positive-gradient pipeline: strict supersolution from the perturbation
    dominates the upper envelope of the solved field away from the ring."""
    from pinftylab.solvers import BoundaryData, solve_inf_harmonic

    g = unit_square(1 / 32)
    eps = 4 / 32
    apex = np.array([-1.0, -1.0])
    u_inf, _ = solve_inf_harmonic(g, BoundaryData.cone(apex), eps, tol=1e-12, sweep="gauss-seidel")
    up_env = upper_envelope(u_inf, eps)
    lo_env = lower_envelope(u_inf, eps)
    m2 = inner_parallel(g, 2 * eps).flags
    # delta below the gradient floor and the norm cap
    gamma = slope_minus(u_inf, eps).values[m2].min()
    sup = np.abs(lo_env.values[np.isfinite(lo_env.values)]).max()
    delta = min(0.9 * gamma, 1 / (8 * sup))
    w = perturb_strict(lo_env, delta, eps)
    lap_up = nonlocal_inf_laplacian(up_env, eps).values
    cval = max(0.0, float(np.nanmax(-lap_up[m2])))
    rep = check_nonlocal_max_principle(up_env, w, cval, eps)
    assert rep.hypothesis_ok  # strict supersolution margin beats the envelope defect
    scale = 1 + np.abs(up_env.values[np.isfinite(up_env.values)]).max() + np.abs(
        w.values[np.isfinite(w.values)]
    ).max()
    assert rep.conclusion_gap <= 1e-10 * scale


# ---------------------------------------------------------------------------
# perturbations


def test_perturb_strict_constant_one():
    g = unit_square(1 / 16)
    v = ScalarField.constant(g, 1.0)
    w = perturb_strict(v, 0.1, 4 / 16)
    np.testing.assert_allclose(w.values, 0.7, atol=1e-15)
    assert np.abs(v.values - w.values).max() == pytest.approx(0.3, abs=1e-15)


def test_perturb_strict_zero_delta_and_zero_field():
    g = unit_square(1 / 16)
    v = ScalarField(g, np.sin(g.coords[:, 0]))
    w = perturb_strict(v, 0.0, 4 / 16)
    np.testing.assert_array_equal(w.values, v.values)
    z = ScalarField.constant(g, 0.0)
    assert perturb_strict(z, 0.2, 4 / 16) is z


def test_perturb_strict_delta_range():
    g = unit_square(1 / 16)
    v = ScalarField.constant(g, 2.0)
    with pytest.raises(ValueError, match="delta"):
        perturb_strict(v, 0.2, 4 / 16)  # 1/(4*2) = 0.125 < 0.2


def test_perturb_strict_contract_on_midrange_supersolutions():
    g = unit_square(1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(17)
    m2 = inner_parallel(g, 2 * eps).flags
    for _ in range(3):
        v = midrange_supersolution(g, eps, rng)
        sup = np.abs(v.values).max()
        delta = 1 / (8 * sup)
        w = perturb_strict(v, delta, eps)
        lap_v = nonlocal_inf_laplacian(v, eps).values[m2]
        lap_w = nonlocal_inf_laplacian(w, eps).values[m2]
        sm = slope_minus(v, eps).values[m2]
        rhs = -lap_v + delta * sm**2
        assert ((-lap_w) >= rhs - 1e-10 * np.maximum(1.0, np.abs(rhs))).all()
        assert np.abs(v.values - w.values).max() <= 3 * sup**2 * delta * (1 + 1e-10)


def test_perturb_positive_slope_trivial_when_slope_adequate():
    g = unit_square(1 / 32)
    eps = 4 / 32
    apex = np.array([-2.0, -0.7])
    u = ScalarField(g, np.sqrt(((g.coords - apex) ** 2).sum(axis=1)))
    m = inner_parallel(g, eps).flags
    delta = 0.5 * slope_minus(u, eps).values[inner_parallel(g, 2 * eps).flags].min()
    v, margins = perturb_positive_slope(u, delta, eps)
    assert margins.perturbed_nodes == 0
    np.testing.assert_array_equal(v.values[m], u.values[m])


def test_perturb_positive_slope_plateau():
    g = unit_square(1 / 32)
    eps = 4 / 32
    u = ScalarField.constant(g, 0.5)
    delta = 0.04
    v, margins = perturb_positive_slope(u, delta, eps)
    m2 = inner_parallel(g, 2 * eps).flags
    # stencil oracle: lower slope of the landscape reaches delta
    sm = (v.values - filter_envelope(g, v.values, eps, "min")) / eps
    assert sm[m2].min() >= delta - margins.tolerance
    # sandwich on the 2eps set
    rd = ring_distance(g, eps).values
    assert (v.values[m2] >= u.values[m2] - 1e-14).all()
    assert (v.values[m2] <= u.values[m2] + 2 * delta * rd[m2] + 1e-14).all()


def test_perturb_positive_slope_always_above_input():
    g = unit_square(1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(23)
    u = random_supersolution(g, eps, rng)
    m2 = inner_parallel(g, 2 * eps).flags
    sm = slope_minus(u, eps).values[m2]
    v, _ = perturb_positive_slope(u, 1.5 * max(sm.min(), 1e-3), eps)
    assert (v.values[m2] >= u.values[m2]).all()


def test_perturb_positive_slope_rejects_nonsupersolution():
    g = unit_square(1 / 32)
    eps = 4 / 32
    u = ScalarField(g, (g.coords**2).sum(axis=1))  # subsolution: -L < 0
    with pytest.raises(ValueError, match="supersolution"):
        perturb_positive_slope(u, 0.05, eps)


# ---------------------------------------------------------------------------
# approximate consistency


def test_consistency_bound_value():
    val = consistency_bound(1.0, 1.0, 0.25, 3.0, 2)
    assert val == pytest.approx(16 * (2 ** -0.5 - 0.5), rel=1e-14)
    assert val == pytest.approx(3.3137084989847598, rel=1e-12)


def test_consistency_bound_infinity_and_linearity():
    assert consistency_bound(0.5, 1.0, 0.25, math.inf, 2) == 0.0
    a = consistency_bound(0.5, 1.0, 0.25, 3.0, 2)
    b = consistency_bound(0.5, 2.0, 0.25, 3.0, 2)
    assert b == pytest.approx(2 * a, rel=1e-14)


def test_consistency_bound_epsilon_power_law():
    a = consistency_bound(0.5, 1.0, 0.2, 3.0, 2)
    b = consistency_bound(0.5, 1.0, 0.1, 3.0, 2)
    assert b == pytest.approx(a * 2 ** (2 - 0.5), rel=1e-12)


def test_consistency_bound_rejects_bad_args():
    with pytest.raises(ValueError):
        consistency_bound(0.0, 1.0, 0.25, 3.0, 2)
    with pytest.raises(ValueError):
        consistency_bound(0.5, 1.0, 0.75, 3.0, 2)


def test_check_approx_consistency_affine():
    g = unit_square(1 / 32)
    eps = 4 / 32
    u = ScalarField(g, g.coords @ np.array([0.5, -0.25]))
    rep = check_approx_consistency(u, 1.0, eps, 3.0, seminorm=1.0)
    assert rep.sup_upper <= 1e-10
    assert rep.inf_lower >= -1e-10
    assert rep.ok


def test_check_approx_consistency_radial_annulus():
    def inside(pts):
        r = np.sqrt((pts**2).sum(axis=1))
        return (r > 0.25) & (r < 1)

    g = build_grid([(-1, 1), (-1, 1)], 1 / 64, inside)
    eps = 8 / 64
    problem = RadialProblem(2, 3.0)
    u = ScalarField(g, radial_p_harmonic(problem, g.coords))
    rep = check_approx_consistency(u, 0.5, eps, 3.0, seminorm=1.0)
    assert rep.bound == consistency_bound(0.5, 1.0, eps, 3.0, 2)
    assert rep.sup_upper <= rep.bound * 1.1 + rep.slack
    assert rep.inf_lower >= -(rep.bound * 1.1 + rep.slack)


def test_check_approx_consistency_estimates_seminorm():
    g = unit_square(1 / 16)
    u = ScalarField(g, 2.0 * g.coords[:, 0])
    rep = check_approx_consistency(u, 1.0, 3 / 16, 4.0)
    assert rep.seminorm == pytest.approx(2.0, rel=1e-12)
