"""Ball envelopes, eps-slopes, the finite-difference infinity-Laplacian,
perturbation constructions and the discrete comparison machinery.

All operators act on ScalarFields and return fields whose defined set is the
eps inner parallel set intersected with "every ball node is defined"; NaN
marks everything else.  Reductions over the working sets (the eps and
2*eps inner parallel sets, the ring between them) are always taken over
explicit masks, never silently over undefined entries.

Conventions kept throughout:
  * discrete balls include the center node;
  * the operator numerator is grouped as (upper + lower) - 2u, which makes
    sign-flip duality exact in floating point;
  * max/min reductions run over stencil offsets in a fixed row-major order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .cones import ConeSpec, holder_exponent
from .errors import ContractError, DomainError
from .grid import (
    BallStencil,
    GridDomain,
    NodeMask,
    ScalarField,
    ball_stencil,
    inner_parallel,
    ring_distance,
    _min_distance,
)


# ---------------------------------------------------------------------------
# envelopes and slopes


def _ball_reduce(grid: GridDomain, values: np.ndarray, stencil: BallStencil, mode: str) -> np.ndarray:
    """Max or min of `values` over the stencil ball at every lattice node.

    NaN entries propagate, so the result is NaN wherever any ball node is
    undefined.  Returns per-node values in grid order.
    """
    rad = stencil.steps
    dense = grid.to_dense(values, pad=rad, fill=np.nan)
    shape = grid.lattice_shape
    acc = np.full(shape, -np.inf if mode == "max" else np.inf)
    op = np.maximum if mode == "max" else np.minimum
    for off in stencil.offsets:
        view = dense[tuple(slice(rad + o, rad + o + n) for o, n in zip(off, shape))]
        acc = op(acc, view)
    return acc[tuple(grid.lattice_index.T)]


def _stencil(grid: GridDomain, eps: float) -> BallStencil:
    key = ("stencil", float(eps))
    if key not in grid._cache:
        grid._cache[key] = ball_stencil(grid.h, eps, grid.dim)
    return grid._cache[key]


def _restrict(grid: GridDomain, values: np.ndarray, eps: float) -> np.ndarray:
    mask = inner_parallel(grid, eps).flags
    out = np.where(mask, values, np.nan)
    return out


def upper_envelope(u: ScalarField, eps: float) -> ScalarField:
    """sup of u over discrete closed eps-balls, on the eps inner parallel set."""
    grid = u.grid
    omega = inner_parallel(grid, eps)
    if omega.count == 0:
        raise DomainError("inner parallel set at eps is empty")
    vals = _ball_reduce(grid, u.values, _stencil(grid, eps), "max")
    return ScalarField(grid, _restrict(grid, vals, eps))


def lower_envelope(u: ScalarField, eps: float) -> ScalarField:
    """inf of u over discrete closed eps-balls, on the eps inner parallel set."""
    grid = u.grid
    omega = inner_parallel(grid, eps)
    if omega.count == 0:
        raise DomainError("inner parallel set at eps is empty")
    vals = _ball_reduce(grid, u.values, _stencil(grid, eps), "min")
    return ScalarField(grid, _restrict(grid, vals, eps))


def slope_plus(u: ScalarField, eps: float) -> ScalarField:
    """(u^eps - u)/eps, the upper eps-slope; nonnegative wherever defined."""
    env = upper_envelope(u, eps)
    return ScalarField(u.grid, (env.values - u.values) / eps)


def slope_minus(u: ScalarField, eps: float) -> ScalarField:
    """(u - u_eps)/eps, the lower eps-slope; nonnegative wherever defined."""
    env = lower_envelope(u, eps)
    return ScalarField(u.grid, (u.values - env.values) / eps)


def nonlocal_inf_laplacian(u: ScalarField, eps: float) -> ScalarField:
    """Finite-difference infinity-Laplacian ((u^eps + u_eps) - 2u)/eps^2.

    Identical to (S_plus - S_minus)/eps by construction.
    """
    grid = u.grid
    stencil = _stencil(grid, eps)
    up = _ball_reduce(grid, u.values, stencil, "max")
    lo = _ball_reduce(grid, u.values, stencil, "min")
    vals = ((up + lo) - 2.0 * u.values) / (eps * eps)
    return ScalarField(grid, _restrict(grid, vals, eps))


# ---------------------------------------------------------------------------
# comparison checks


def check_comparison_with_cones(u: ScalarField, cone: ConeSpec, region: NodeMask) -> float:
    """Worst violation of the two-sided cone comparison over the region.

    For every node x of the region, u(x) - a d(x) must lie between the min
    and max of u - a d over the region's discrete node boundary, where
    d(x) = |x - apex|^exponent.  Returns the largest amount by which either
    inequality fails; <= 0 means the comparison holds.
    """
    grid = u.grid
    if region.grid is not grid:
        raise ValueError("region mask belongs to a different grid")
    flags = region.flags
    if not flags.any():
        raise ValueError("empty region")

    apex_gap = _min_distance(grid.coords[flags], cone.apex[None, :]).min()
    if apex_gap <= 0.5 * grid.h:
        raise ValueError("apex must be outside the comparison region")

    moore = np.ones((3,) * grid.dim, dtype=bool)
    dense = grid.dense_mask(flags)
    rim_dense = ndimage.binary_dilation(dense, structure=moore) & ~dense
    rim = rim_dense[tuple(grid.lattice_index.T)]
    if not rim.any():
        raise ValueError("region has no discrete boundary inside the grid")
    if not (u.defined[flags].all() and u.defined[rim].all()):
        raise ValueError("field undefined on the region or its boundary")

    r = np.sqrt(((grid.coords - cone.apex[None, :]) ** 2).sum(axis=1))
    phi = u.values - cone.slope * r**cone.exponent
    lo, hi = phi[rim].min(), phi[rim].max()
    return float(max(lo - phi[flags].min(), phi[flags].max() - hi))


@dataclass(frozen=True)
class MaxPrincipleReport:
    hypothesis_ok: bool
    conclusion_gap: float


def check_nonlocal_max_principle(
    u: ScalarField, v: ScalarField, bound_const: float, eps: float
) -> MaxPrincipleReport:
    """Discrete comparison principle for the nonlocal operator.

    hypothesis_ok records whether -L u <= C <= -L v holds pointwise on the
    2*eps inner parallel set (with C >= 0).  When it does, the sup of u - v
    over the eps inner parallel set must be attained on the ring, so the
    reported gap (sup over the whole set minus sup over the ring) cannot
    exceed rounding noise.
    """
    grid = u.grid
    omega = inner_parallel(grid, eps)
    omega2 = inner_parallel(grid, 2 * eps)
    ring = omega.flags & ~omega2.flags
    if not ring.any():
        raise DomainError("ring between eps and 2*eps parallel sets is empty")
    if not (u.defined[omega.flags].all() and v.defined[omega.flags].all()):
        raise ValueError("fields must be defined on the closed eps inner parallel set")

    lap_u = nonlocal_inf_laplacian(u, eps).values
    lap_v = nonlocal_inf_laplacian(v, eps).values
    if np.isnan(lap_u[omega2.flags]).any() or np.isnan(lap_v[omega2.flags]).any():
        raise ValueError("operator undefined somewhere on the 2*eps inner parallel set")

    ok = (
        bound_const >= 0
        and bool((-lap_u[omega2.flags] <= bound_const).all())
        and bool((bound_const <= -lap_v[omega2.flags]).all())
    )
    diff = u.values - v.values
    gap = float(diff[omega.flags].max() - diff[ring].max())
    return MaxPrincipleReport(hypothesis_ok=ok, conclusion_gap=gap)


# ---------------------------------------------------------------------------
# perturbations


def perturb_strict(v: ScalarField, delta: float, eps: float) -> ScalarField:
    """Perturb a supersolution into a strict one: w = (1 - 2 delta L) v - delta v^2.

    L is the sup norm of v over its whole defined set.  For delta in
    [0, 1/(4L)] the output satisfies, pointwise on the 2*eps inner parallel
    set, -L w >= -L v + delta (S_minus v)^2, and ||v - w|| <= 3 L^2 delta.
    """
    vals = v.values
    defined = v.defined
    if not defined.any():
        raise ValueError("field is undefined everywhere")
    sup = float(np.abs(vals[defined]).max())
    if sup == 0.0:
        return v
    if delta < 0 or delta > 1.0 / (4.0 * sup):
        raise ValueError("delta exceeds 1/(4*sup-norm)")
    w = (1.0 - 2.0 * delta * sup) * vals - delta * vals * vals
    return ScalarField(v.grid, w)


@dataclass(frozen=True)
class PerturbMargins:
    """Measured contract margins of perturb_positive_slope (>= 0 is clean)."""

    supersolution: float  # min over the 2eps set of -L v, scaled by eps
    slope: float          # min over the 2eps set of S_minus v - delta
    lower: float          # min of v - u over the 2eps set
    upper: float          # min of u + 2 delta ringdist - v over the 2eps set
    tolerance: float
    delta: float
    eps: float
    perturbed_nodes: int

    @property
    def ok(self) -> bool:
        tol = self.tolerance
        return (
            self.supersolution >= -tol
            and self.slope >= -tol
            and self.lower >= -tol * self.eps
            and self.upper >= -tol * self.eps
        )


def perturb_positive_slope(
    u: ScalarField, delta: float, eps: float, slack_factor: float = 4.0
) -> tuple[ScalarField, PerturbMargins]:
    """Raise a supersolution to one whose lower eps-slope is at least delta.

    Construction: where the lower slope of u already reaches delta nothing
    happens.  Otherwise a discrete eikonal landscape is grown over the slack
    set by min-plus sweeps over the eps-ball adjacency graph (cost delta*eps
    per hop, anchored at nodes with adequate slope), clipped above by
    u + 2 delta * ring_distance; on the ring itself the output is allowed to
    dip below u, which is what feeds the slope at nodes near the ring.  The
    three contracts (supersolution, slope floor, sandwich) are verified on
    the 2*eps inner parallel set with tolerance delta * slack_factor * h/eps
    and a ContractError carrying the margins is raised on failure.
    """
    grid = u.grid
    h = grid.h
    if delta <= 0:
        raise ValueError("delta must be positive")
    omega = inner_parallel(grid, eps)
    omega2 = inner_parallel(grid, 2 * eps)
    ring = omega.flags & ~omega2.flags
    if not omega2.flags.any() or not ring.any():
        raise DomainError("need nonempty 2*eps inner parallel set and ring")
    if not u.defined[omega.flags].all():
        raise ValueError("input must be defined on the closed eps inner parallel set")

    # Accept supersolutions up to the same lattice slack the output contracts
    # get: sampled continuum supersolutions carry O(h/eps^2) anisotropy.
    lap_u = nonlocal_inf_laplacian(u, eps).values
    pre_tol = slack_factor * delta * h / (eps * eps) + 1e-10 * (
        1.0 + np.abs(u.values[omega.flags]).max()
    ) / (eps * eps)
    if np.nanmin(-lap_u[omega2.flags]) < -pre_tol:
        raise ValueError("input is not a discrete supersolution on the 2*eps set")

    sm = slope_minus(u, eps).values
    slack_set = omega2.flags & (sm < delta)

    if not slack_set.any():
        vals = np.where(omega.flags, u.values, np.nan)
        v = ScalarField(grid, vals)
    else:
        rd = ring_distance(grid, eps).values
        # Climb delta*eps per ball hop from the adequate-slope set, capped by
        # the sandwich ceiling; anchors carry their raw u values.
        hat = _minplus_landscape(grid, u.values, omega.flags, slack_set, delta * eps, eps)
        vals = np.full(grid.n_nodes, np.nan)
        capped = np.minimum(hat, u.values + 2.0 * delta * rd)
        vals[omega2.flags] = np.maximum(u.values, capped)[omega2.flags]
        # Boundary layer: on the ring the sandwich does not apply, so the
        # output dips below u linearly with the distance into the ring; this
        # is what feeds the lower slope at nodes just inside the 2eps set.
        dip = _min_distance(grid.coords[ring], grid.coords[omega2.flags])
        vals[ring] = u.values[ring] - 2.0 * delta * dip
        v = ScalarField(grid, vals)

    margins = _perturb_margins(u, v, delta, eps, slack_factor, int(slack_set.sum()))
    if not margins.ok:
        raise ContractError("positive-slope perturbation missed its contracts", margins)
    return v, margins


def _minplus_landscape(
    grid: GridDomain,
    base: np.ndarray,
    omega_flags: np.ndarray,
    slack_set: np.ndarray,
    hop_cost: float,
    eps: float,
) -> np.ndarray:
    """min over anchors y of base(y) + hop_cost * hops(x, y) on the ball graph.

    Anchors are the non-slack nodes of the eps inner parallel set; sweeps are
    monotone min-plus relaxations, so the float fixed point is exact.
    """
    stencil = _stencil(grid, eps)
    rad = stencil.steps
    shape = grid.lattice_shape

    work_nodes = np.where(slack_set, np.inf, np.where(omega_flags, base, np.inf))
    dense = grid.to_dense(work_nodes, pad=rad, fill=np.inf)
    mask = grid.dense_mask(omega_flags, pad=rad)

    max_sweeps = 16 + int(8 * grid.diameter / eps) + grid.n_nodes
    core = tuple(slice(rad, rad + n) for n in shape)
    for _ in range(max_sweeps):
        acc = np.full(shape, np.inf)
        for off in stencil.offsets:
            view = dense[tuple(slice(rad + o, rad + o + n) for o, n in zip(off, shape))]
            acc = np.minimum(acc, view)
        cand = acc + hop_cost
        new_core = np.where(mask[core], np.minimum(dense[core], cand), np.inf)
        if np.array_equal(new_core, dense[core]):
            break
        dense[core] = new_core
    else:
        raise RuntimeError("min-plus landscape failed to stabilize")
    return grid.from_dense(dense, pad=rad)


def _perturb_margins(u, v, delta, eps, slack_factor, perturbed) -> PerturbMargins:
    grid = u.grid
    omega2 = inner_parallel(grid, 2 * eps).flags
    tol = delta * slack_factor * grid.h / eps

    lap_v = nonlocal_inf_laplacian(v, eps).values
    sm_v = slope_minus(v, eps).values
    if np.isnan(lap_v[omega2]).any() or np.isnan(sm_v[omega2]).any():
        raise RuntimeError("perturbed field left the operator undefined on the 2*eps set")
    rd = ring_distance(grid, eps).values

    return PerturbMargins(
        supersolution=float((-lap_v[omega2]).min() * eps),
        slope=float(sm_v[omega2].min() - delta),
        lower=float((v.values - u.values)[omega2].min()),
        upper=float((u.values + 2.0 * delta * rd - v.values)[omega2].min()),
        tolerance=tol,
        delta=delta,
        eps=eps,
        perturbed_nodes=perturbed,
    )


# ---------------------------------------------------------------------------
# approximate consistency of p-harmonic samples


def consistency_bound(alpha: float, seminorm: float, eps: float, p: float, d: int) -> float:
    """2^(1+alpha) * seminorm * eps^(alpha-2) * (2^(-beta) - 1/2), beta = (p-d)/(p-1)."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if seminorm < 0:
        raise ValueError("seminorm must be >= 0")
    beta = holder_exponent(p, d)
    return 2.0 ** (1.0 + alpha) * seminorm * eps ** (alpha - 2.0) * (2.0 ** (-beta) - 0.5)


@dataclass(frozen=True)
class ConsistencyReport:
    eps: float
    alpha: float
    seminorm: float
    sup_upper: float   # max over the 2eps set of -L(u^eps)
    inf_lower: float   # min over the 2eps set of -L(u_eps)
    bound: float
    slack: float       # lattice slack 8h/eps^2 added on the comparison side
    margin: float      # min of (bound+slack) -/+ the measured extremes

    @property
    def ok(self) -> bool:
        return self.margin >= 0


def check_approx_consistency(
    u_p: ScalarField, alpha: float, eps: float, p: float, seminorm: float | None = None
) -> ConsistencyReport:
    """Measure how far envelope operators of a p-harmonic sample exceed the bound.

    The upper envelope must satisfy -L u^eps <= B and the lower envelope
    -L u_eps >= -B with B the consistency bound; the report adds the lattice
    slack 8h/eps^2 on the comparison side and the margin is the worst of the
    two sides.
    """
    grid = u_p.grid
    if seminorm is None:
        from .analysis import holder_seminorm

        seminorm = holder_seminorm(u_p, alpha).value
    bound = consistency_bound(alpha, seminorm, eps, p, grid.dim)

    omega2 = inner_parallel(grid, 2 * eps)
    if omega2.count == 0:
        raise DomainError("inner parallel set at 2*eps is empty")
    up = nonlocal_inf_laplacian(upper_envelope(u_p, eps), eps).values
    lo = nonlocal_inf_laplacian(lower_envelope(u_p, eps), eps).values
    if np.isnan(up[omega2.flags]).any() or np.isnan(lo[omega2.flags]).any():
        raise RuntimeError("envelope operator undefined on the 2*eps set")

    sup_upper = float((-up[omega2.flags]).max())
    inf_lower = float((-lo[omega2.flags]).min())
    slack = 8.0 * grid.h / (eps * eps)
    margin = min(bound + slack - sup_upper, bound + slack + inf_lower)
    return ConsistencyReport(
        eps=eps,
        alpha=alpha,
        seminorm=float(seminorm),
        sup_upper=sup_upper,
        inf_lower=inf_lower,
        bound=bound,
        slack=slack,
        margin=float(margin),
    )
