"""Batch property suites behind the CLI `verify` subcommand.

Each property yields one report line: name, number of nodes checked, worst
margin and pass/fail.  Margins fold the property's tolerance in, so >= 0
passes and more positive is more comfortable.  `tol_scale` multiplies the
float tolerances (not the structural lattice slacks), which gives the CLI a
way to be stricter or looser than the defaults.

The random sub/supersolution generators iterate the obstacle map
u <- max(u0, T u) (resp. min) with T the midrange operator, frozen outside
the eps inner parallel set.  The float fixed point satisfies u >= T u
exactly in double precision, which is what makes the comparison-principle
and perturbation contracts testable at 1e-10 relative tolerances.
"""

from __future__ import annotations

import math

from dataclasses import dataclass

import numpy as np

from . import cones
from .errors import ContractError
from .grid import GridDomain, NodeMask, ScalarField, inner_parallel
from .nonlocal_ops import (
    check_approx_consistency,
    check_comparison_with_cones,
    check_nonlocal_max_principle,
    lower_envelope,
    nonlocal_inf_laplacian,
    perturb_positive_slope,
    perturb_strict,
    slope_minus,
    slope_plus,
    upper_envelope,
    _ball_reduce,
    _stencil,
)
from .solvers import BoundaryData, residual_field, solve_inf_harmonic


@dataclass(frozen=True)
class PropertyResult:
    name: str
    nodes_checked: int
    worst_margin: float

    @property
    def passed(self) -> bool:
        return self.worst_margin >= 0


# ---------------------------------------------------------------------------
# seeded instance generators


def _midrange_obstacle(
    grid: GridDomain, eps: float, u0: np.ndarray, mode: str, max_sweeps: int = 100_000
) -> ScalarField:
    """Exact float fixed point of u = clamp(u0, T u) on the eps inner set."""
    omega = inner_parallel(grid, eps).flags
    stencil = _stencil(grid, eps)
    clamp = np.maximum if mode == "super" else np.minimum
    vals = u0.copy()
    for _ in range(max_sweeps):
        up = _ball_reduce(grid, vals, stencil, "max")
        lo = _ball_reduce(grid, vals, stencil, "min")
        mid = 0.5 * (up + lo)
        new = np.where(omega, clamp(u0, mid), vals)
        if np.array_equal(new, vals):
            return ScalarField(grid, vals)
        vals = new
    raise RuntimeError("obstacle iteration failed to reach a float fixed point")


def random_supersolution(grid: GridDomain, eps: float, rng: np.random.Generator) -> ScalarField:
    """Random field pressed down onto the midrange map: -L u >= 0 exactly."""
    return _midrange_obstacle(grid, eps, rng.random(grid.n_nodes), "super")


def random_subsolution(grid: GridDomain, eps: float, rng: np.random.Generator) -> ScalarField:
    return _midrange_obstacle(grid, eps, rng.random(grid.n_nodes), "sub")


def _random_wave(rng: np.random.Generator, dim: int) -> BoundaryData:
    a = rng.uniform(-1.0, 1.0, 4)
    b = rng.uniform(0.5, 4.0, (4, dim))
    c = rng.uniform(0.0, 2.0 * np.pi, 4)

    def wave(pts):
        return 0.5 + 0.2 * sum(a[k] * np.sin(pts @ b[k] + c[k]) for k in range(4))

    return BoundaryData.from_function(wave, "random-wave")


def midrange_supersolution(grid: GridDomain, eps: float, rng: np.random.Generator) -> ScalarField:
    """Supersolution built by midrange iteration from random boundary data.

    The iteration is run essentially to its fixed point, then projected onto
    the exact float supersolution cone via the obstacle map u = max(s, T u).
    The result satisfies -L u >= 0 exactly in double precision while staying
    within solver residual of a midrange-harmonic field, which is the regime
    the strict-perturbation inequality is sharp in.
    """
    g = _random_wave(rng, grid.dim)
    s, _ = solve_inf_harmonic(grid, g, eps, tol=3e-13, max_iter=300_000, sweep="gauss-seidel")
    return _midrange_obstacle(grid, eps, s.values, "super")


# ---------------------------------------------------------------------------
# individual properties


def prop_envelope_sandwich(grid, eps, rng, ts) -> PropertyResult:
    u = ScalarField(grid, rng.random(grid.n_nodes))
    omega = inner_parallel(grid, eps).flags
    up = upper_envelope(u, eps).values[omega]
    lo = lower_envelope(u, eps).values[omega]
    sp = slope_plus(u, eps).values[omega]
    sm = slope_minus(u, eps).values[omega]
    margin = min(
        (up - u.values[omega]).min(),
        (u.values[omega] - lo).min(),
        sp.min(),
        sm.min(),
    )
    return PropertyResult("envelope_sandwich", int(omega.sum()), float(margin))


def prop_envelope_duality(grid, eps, rng, ts) -> PropertyResult:
    u = ScalarField(grid, rng.random(grid.n_nodes))
    neg = ScalarField(grid, -u.values)
    omega = inner_parallel(grid, eps).flags
    a = lower_envelope(u, eps).values[omega]
    b = -upper_envelope(neg, eps).values[omega]
    return PropertyResult("envelope_duality", int(omega.sum()), float(-np.abs(a - b).max()))


def prop_operator_sign_flip(grid, eps, rng, ts) -> PropertyResult:
    u = ScalarField(grid, rng.random(grid.n_nodes))
    neg = ScalarField(grid, -u.values)
    omega = inner_parallel(grid, eps).flags
    a = nonlocal_inf_laplacian(u, eps).values[omega]
    b = nonlocal_inf_laplacian(neg, eps).values[omega]
    return PropertyResult("operator_sign_flip", int(omega.sum()), float(-np.abs(a + b).max()))


def prop_affine_operator_zero(grid, eps, rng, ts) -> PropertyResult:
    grad = rng.uniform(-1, 1, grid.dim)
    u = ScalarField(grid, grid.coords @ grad + 0.25)
    omega = inner_parallel(grid, eps).flags
    lap = nonlocal_inf_laplacian(u, eps).values[omega]
    tol = ts * 1e-10 * (1 + np.abs(u.values).max()) / eps**2
    return PropertyResult("affine_operator_zero", int(omega.sum()), float(tol - np.abs(lap).max()))


def prop_max_ball(grid, eps, rng, ts) -> PropertyResult:
    """Envelopes of a solved midrange-harmonic field are sub/supersolutions
    up to solver residual and lattice slack."""
    apex = grid.box[:, 0] - 0.33 * (grid.box[:, 1] - grid.box[:, 0])
    u, report = solve_inf_harmonic(grid, BoundaryData.cone(apex), eps, tol=1e-9, sweep="gauss-seidel")
    omega2 = inner_parallel(grid, 2 * eps).flags
    up = nonlocal_inf_laplacian(upper_envelope(u, eps), eps).values[omega2]
    lo = nonlocal_inf_laplacian(lower_envelope(u, eps), eps).values[omega2]
    slack = 10 * report.residual + 4 * grid.h / eps**2  # structural, not scaled
    margin = min(slack - (-up).max(), slack + (-lo).min())
    return PropertyResult("max_ball_envelopes", int(omega2.sum()), float(margin))


def prop_max_principle(grid, eps, rng, ts, samples) -> PropertyResult:
    worst = math.inf
    n_omega = inner_parallel(grid, eps).count
    for _ in range(samples):
        u = random_subsolution(grid, eps, rng)
        v = random_supersolution(grid, eps, rng)
        rep = check_nonlocal_max_principle(u, v, 0.0, eps)
        if not rep.hypothesis_ok:
            return PropertyResult("nonlocal_max_principle", 0, -math.inf)
        scale = 1 + np.abs(u.values).max() + np.abs(v.values).max()
        worst = min(worst, ts * 1e-10 * scale - rep.conclusion_gap)
    return PropertyResult("nonlocal_max_principle", samples * n_omega, float(worst))


def prop_perturb_strict(grid, eps, rng, ts, samples) -> PropertyResult:
    omega2 = inner_parallel(grid, 2 * eps).flags
    worst = math.inf
    for _ in range(samples):
        v = midrange_supersolution(grid, eps, rng)
        sup = np.abs(v.values[v.defined]).max()
        delta = 1.0 / (8.0 * sup)
        w = perturb_strict(v, delta, eps)
        lap_v = nonlocal_inf_laplacian(v, eps).values[omega2]
        lap_w = nonlocal_inf_laplacian(w, eps).values[omega2]
        sm = slope_minus(v, eps).values[omega2]
        rhs = -lap_v + delta * sm**2
        point_margin = ((-lap_w) - rhs + ts * 1e-10 * np.maximum(1.0, np.abs(rhs))).min()
        norm_bound = 3 * sup**2 * delta
        norm_margin = norm_bound - np.abs(v.values - w.values)[v.defined].max() + ts * 1e-10 * max(
            1.0, norm_bound
        )
        worst = min(worst, point_margin, norm_margin)
    return PropertyResult("perturb_strict", samples * int(omega2.sum()), float(worst))


def prop_perturb_positive_slope(grid, eps, rng, ts) -> PropertyResult:
    omega2 = inner_parallel(grid, 2 * eps).flags
    worst = math.inf
    checked = 0
    # plateau: the slope landscape must be manufactured everywhere
    flat = ScalarField(grid, np.full(grid.n_nodes, 0.5))
    # cone solution: slope is already positive, construction must not disturb it
    sloped, _ = solve_inf_harmonic(
        grid, BoundaryData.cone(grid.box[:, 0] - np.ones(grid.dim)), eps, tol=1e-9, sweep="gauss-seidel"
    )
    rough = random_supersolution(grid, eps, rng)
    for u, delta in ((flat, 0.05), (sloped, 0.05), (rough, 0.01)):
        try:
            _, margins = perturb_positive_slope(u, delta, eps)
            worst = min(
                worst,
                margins.supersolution + ts * margins.tolerance,
                margins.slope + ts * margins.tolerance,
                margins.lower + ts * margins.tolerance * eps,
                margins.upper + ts * margins.tolerance * eps,
            )
        except ContractError as err:
            m = err.margins
            worst = min(worst, m.supersolution, m.slope, m.lower, m.upper)
        checked += int(omega2.sum())
    return PropertyResult("perturb_positive_slope", checked, float(worst))


def prop_comparison_with_cones(grid, eps, rng, ts) -> PropertyResult:
    """Sampled radial p-solution against cones with the matching exponent."""
    p = 3.0
    problem = cones.RadialProblem(grid.dim, p)
    u = ScalarField.from_function(grid, lambda pts: cones.radial_p_harmonic(problem, pts))
    r = np.sqrt((grid.coords**2).sum(axis=1))
    region = NodeMask(grid, grid.is_interior & (r > 0.3) & (r < 0.9))
    if region.count == 0:
        return PropertyResult("comparison_with_cones", 0, -math.inf)
    worst = math.inf
    for apex_shift in (1.25, 2.0):
        apex = np.zeros(grid.dim)
        apex[0] = apex_shift
        cone = cones.ConeSpec(apex, slope=0.7, offset=0.0, exponent=problem.exponent)
        violation = check_comparison_with_cones(u, cone, region)
        worst = min(worst, 8 * grid.h - violation)  # lattice slack, structural
    return PropertyResult("comparison_with_cones", region.count, float(worst))


def prop_solver_affine_exact(grid, eps, rng, ts) -> PropertyResult:
    grad = rng.uniform(-1, 1, grid.dim)
    g = BoundaryData.affine(grad, 0.1)
    u, _ = solve_inf_harmonic(grid, g, eps, tol=1e-10, sweep="gauss-seidel")
    err = np.abs(u.values - (grid.coords @ grad + 0.1)).max()
    return PropertyResult("solver_affine_exact", grid.n_nodes, float(ts * 1e-9 - err))


def prop_solver_max_principle(grid, eps, rng, ts) -> PropertyResult:
    coeffs = rng.uniform(0.5, 2.0, grid.dim)
    g = BoundaryData.from_function(lambda pts: np.sin(3.0 * (pts @ coeffs)), "random-wave")
    u, _ = solve_inf_harmonic(grid, g, eps, tol=1e-9, sweep="gauss-seidel")
    bvals = u.values[~grid.is_interior]
    margin = min(
        bvals.max() - u.values.max() + ts * 1e-10,
        u.values.min() - bvals.min() + ts * 1e-10,
    )
    return PropertyResult("solver_max_principle", grid.n_nodes, float(margin))


def prop_residual_defect(grid, eps, rng, ts) -> PropertyResult:
    g = BoundaryData.aronsson() if grid.dim == 2 else BoundaryData.affine(np.ones(grid.dim))
    tol = 1e-8
    u, _ = solve_inf_harmonic(grid, g, eps, tol=tol, sweep="gauss-seidel")
    defect = residual_field(u, eps, math.inf)
    worst = np.abs(defect.values[defect.defined]).max()
    return PropertyResult("residual_defect", int(defect.defined.sum()), float(tol - worst))


def prop_consistency_radial(grid, eps, rng, ts) -> PropertyResult:
    """Envelope operators of a radial sample stay under the bound plus slack."""
    if grid.dim != 2 or eps >= 0.5:
        return PropertyResult("approx_consistency_radial", 0, 0.0)
    p = 3.0
    problem = cones.RadialProblem(2, p)
    u = ScalarField(grid, cones.radial_p_harmonic(problem, grid.coords))
    report = check_approx_consistency(u, alpha=problem.exponent, eps=eps, p=p, seminorm=1.0)
    margin = report.margin + 0.1 * report.bound  # 10% headroom on the bound
    return PropertyResult(
        "approx_consistency_radial", inner_parallel(grid, 2 * eps).count, float(margin)
    )


# ---------------------------------------------------------------------------
# suite driver


def run_property_suite(
    grid: GridDomain,
    eps: float,
    seed: int = 0,
    samples: int = 20,
    tol_scale: float = 1.0,
) -> list[PropertyResult]:
    """Run every property on the given grid; deterministic for fixed seed."""
    rng = np.random.default_rng(seed)
    return [
        prop_envelope_sandwich(grid, eps, rng, tol_scale),
        prop_envelope_duality(grid, eps, rng, tol_scale),
        prop_operator_sign_flip(grid, eps, rng, tol_scale),
        prop_affine_operator_zero(grid, eps, rng, tol_scale),
        prop_max_ball(grid, eps, rng, tol_scale),
        prop_max_principle(grid, eps, rng, tol_scale, samples),
        prop_perturb_strict(grid, eps, rng, tol_scale, samples),
        prop_perturb_positive_slope(grid, eps, rng, tol_scale),
        prop_comparison_with_cones(grid, eps, rng, tol_scale),
        prop_solver_affine_exact(grid, eps, rng, tol_scale),
        prop_solver_max_principle(grid, eps, rng, tol_scale),
        prop_residual_defect(grid, eps, rng, tol_scale),
        prop_consistency_radial(grid, eps, rng, tol_scale),
    ]
