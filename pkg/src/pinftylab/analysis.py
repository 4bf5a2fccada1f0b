"""Hoelder seminorms, sup errors, rate fitting and the closed-form rate bounds.

The bounds follow the explicit-constant chain: with beta = (p-d)/(p-1) and
gap(beta) = 2^(-beta) - 1/2,

    general:    (2 + 2^a) S eps^a + 4 L eps
                + 2^((4+a)/3) (2 diam + 3 M^2) (S eps^(a-2) gap)^(1/3) + bgap,
    pos. grad.: (2 + 2^a) S eps^a + 4 L eps
                + 2^(2+a) (2 diam + 3 M^2) S eps^(a-2) gap / gamma^2 + bgap,

valid for eps in (0, 1/2); the general form additionally needs
gap <= eps^(2-a) / (2^(7+a) M^3 S).  Optimizing eps against p collapses the
eps terms to ((d-1)/(2(p-1)))^(a/(2a+2)) (general) or ^(a/2) (positive
gradient), the p^(-1/4) and p^(-1/2) scalings.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .cones import holder_exponent
from .errors import DomainError
from .grid import NodeMask, ScalarField, inner_parallel
from .nonlocal_ops import slope_minus

_PAIR_SCAN_LIMIT = 20_000


# ---------------------------------------------------------------------------
# measurements


@dataclass(frozen=True)
class HolderEstimate:
    alpha: float
    value: float
    pair: tuple[int, int]
    exact: bool  # False when the pair scan was subsampled (lower estimate)


def holder_seminorm(u: ScalarField, alpha: float, scan_limit: int = _PAIR_SCAN_LIMIT) -> HolderEstimate:
    """max over node pairs of |u(x) - u(y)| / |x - y|^alpha.

    Exact O(N^2) scan up to scan_limit nodes; beyond that a deterministic
    stride subsample is scanned and the result is only a lower estimate.
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    grid = u.grid
    ids = np.flatnonzero(u.defined)
    if len(ids) < 2:
        raise ValueError("need at least two defined nodes")
    exact = len(ids) <= scan_limit
    if not exact:
        stride = int(math.ceil(len(ids) / scan_limit))
        ids = ids[::stride]
    pts = grid.coords[ids]
    vals = u.values[ids]

    best = -1.0
    best_pair = (int(ids[0]), int(ids[1]))
    chunk = max(1, int(2**22) // max(1, len(ids)))
    for start in range(0, len(ids), chunk):
        stop = min(start + chunk, len(ids))
        diff = np.abs(vals[start:stop, None] - vals[None, :])
        dist = np.sqrt(
            ((pts[start:stop, :, None] - pts.T[None, :, :]) ** 2).sum(axis=1)
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = diff / dist**alpha
        ratio[~np.isfinite(ratio)] = -1.0
        k = int(ratio.argmax())
        i, j = divmod(k, ratio.shape[1])
        if ratio[i, j] > best:
            best = float(ratio[i, j])
            best_pair = (int(ids[start + i]), int(ids[j]))
    return HolderEstimate(alpha=alpha, value=max(best, 0.0), pair=best_pair, exact=exact)


def sup_error(u: ScalarField, v: ScalarField, mask: NodeMask | None = None) -> float:
    """max |u - v| over the mask (all nodes when omitted)."""
    if not u.grid.compatible(v.grid):
        raise ValueError("fields live on different grids")
    flags = mask.flags if mask is not None else np.ones(u.grid.n_nodes, dtype=bool)
    flags = flags & u.defined & v.defined
    if not flags.any():
        raise ValueError("no defined nodes under the mask")
    return float(np.abs(u.values[flags] - v.values[flags]).max())


def gradient_floor(u_inf: ScalarField, eps: float) -> float:
    """min over the 2*eps inner parallel set of the lower eps-slope.

    Discrete stand-in for a positive lower bound on |grad u|; this is the
    exact quantity the positive-gradient rate uses.
    """
    grid = u_inf.grid
    omega2 = inner_parallel(grid, 2 * eps)
    if omega2.count == 0:
        raise DomainError("inner parallel set at 2*eps is empty")
    sm = slope_minus(u_inf, eps).values
    if np.isnan(sm[omega2.flags]).any():
        raise ValueError("lower slope undefined on the 2*eps inner parallel set")
    return float(sm[omega2.flags].min())


# ---------------------------------------------------------------------------
# closed-form bounds


def optimal_epsilon(p: float, d: int, alpha: float, positive_gradient: bool = False) -> float:
    """Rate-optimal ball radius ((d-1)/(2(p-1)))^(1/(2 alpha + 2)); sqrt form
    when a positive gradient floor is available."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if math.isinf(p):
        return 0.0
    if not p > d:
        raise ValueError("need p > d")
    base = 0.5 * (d - 1) / (p - 1)
    exponent = 0.5 if positive_gradient else 1.0 / (2.0 * alpha + 2.0)
    return base**exponent


def restriction_check(
    eps: float, p: float, d: int, alpha: float, sup_limit: float, seminorm_p: float
) -> bool:
    """Smallness condition tying p to eps: gap(beta) <= eps^(2-alpha)/(2^(7+alpha) M^3 S)."""
    if not (eps > 0 and sup_limit > 0 and seminorm_p > 0):
        raise ValueError("arguments must be positive")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if not eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    beta = holder_exponent(p, d)
    lhs = 2.0 ** (-beta) - 0.5
    rhs = eps ** (2.0 - alpha) / (2.0 ** (7.0 + alpha) * sup_limit**3 * seminorm_p)
    return lhs <= rhs


def bound_general_rate(
    eps: float,
    p: float,
    d: int,
    alpha: float,
    seminorm_p: float,
    lip_limit: float,
    sup_limit: float,
    diam: float,
    boundary_gap: float = 0.0,
    positive_gradient: bool = False,
    grad_floor: float | None = None,
) -> float:
    """Closed-form sup-error bound at a given ball radius eps.

    Raises when the general form's smallness restriction fails; the
    positive-gradient form instead requires grad_floor > 0.
    """
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 1/2)")
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    if min(seminorm_p, lip_limit, sup_limit, diam) < 0 or boundary_gap < 0:
        raise ValueError("norms, diameter and boundary gap must be >= 0")
    beta = holder_exponent(p, d)
    gap = 2.0 ** (-beta) - 0.5
    ctilde = 2.0 * diam + 3.0 * sup_limit**2
    base = (2.0 + 2.0**alpha) * seminorm_p * eps**alpha + 4.0 * lip_limit * eps
    if positive_gradient:
        if grad_floor is None or not grad_floor > 0:
            raise ValueError("positive-gradient bound needs grad_floor > 0")
        third = 2.0 ** (2.0 + alpha) * ctilde * seminorm_p * eps ** (alpha - 2.0) * gap / grad_floor**2
    else:
        if not restriction_check(eps, p, d, alpha, sup_limit, seminorm_p):
            raise ValueError("p too small for this eps: smallness restriction violated")
        third = 2.0 ** ((4.0 + alpha) / 3.0) * ctilde * (seminorm_p * eps ** (alpha - 2.0) * gap) ** (1.0 / 3.0)
    return base + third + boundary_gap


def bound_explicit_rate(
    p: float,
    d: int,
    alpha: float,
    seminorm_cap: float,
    lip_limit: float,
    sup_limit: float,
    diam: float,
    boundary_gap: float = 0.0,
    positive_gradient: bool = False,
    grad_floor: float | None = None,
) -> float:
    """bound_general_rate evaluated at the rate-optimal eps for this p."""
    eps = optimal_epsilon(p, d, alpha, positive_gradient)
    if math.isinf(p) or eps == 0.0:
        return boundary_gap
    return bound_general_rate(
        eps,
        p,
        d,
        alpha,
        seminorm_cap,
        lip_limit,
        sup_limit,
        diam,
        boundary_gap=boundary_gap,
        positive_gradient=positive_gradient,
        grad_floor=grad_floor,
    )


def morrey_H_bound(p: float, d: int, grad_norm: float, seminorm_g: float) -> float:
    """Asymptotic cap 4 ||grad g||_p + [g] on the solution seminorms, from
    boundary data alone."""
    if math.isinf(p) or not p > d:
        raise ValueError("need d < p < infinity")
    if grad_norm < 0 or seminorm_g < 0:
        raise ValueError("norms must be >= 0")
    return 4.0 * grad_norm + seminorm_g


def morrey_prelimit_factor(p: float, d: int) -> float:
    """Pre-limit embedding factor 2 p d / (p - d)."""
    if math.isinf(p) or not p > d:
        raise ValueError("need d < p < infinity")
    return 2.0 * p * d / (p - d)


# ---------------------------------------------------------------------------
# rate tables and fits


@dataclass(frozen=True)
class RateRow:
    p: float
    epsilon: float
    sup_error: float
    bound_general: float | None
    bound_posgrad: float | None
    boundary_gap: float


@dataclass(frozen=True)
class RateFit:
    exponent: float
    intercept: float
    residual: float
    p_range: tuple[float, float]


def fit_rate(rows: list[RateRow]) -> RateFit:
    """Least-squares slope of log(error) against log(p)."""
    ps, errs = [], []
    for row in rows:
        if row.sup_error <= 0 or not math.isfinite(row.sup_error) or math.isinf(row.p):
            warnings.warn(f"rate fit skips row p={row.p}: nonpositive or non-finite error")
            continue
        ps.append(row.p)
        errs.append(row.sup_error)
    if len(ps) < 3:
        raise ValueError("rate fit needs at least 3 usable rows")
    if len(set(ps)) != len(ps):
        raise ValueError("rate fit needs distinct p values")
    lx = np.log(np.asarray(ps))
    ly = np.log(np.asarray(errs))
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.sqrt(np.mean((slope * lx + intercept - ly) ** 2)))
    return RateFit(
        exponent=float(slope),
        intercept=float(intercept),
        residual=resid,
        p_range=(min(ps), max(ps)),
    )


def rate_table_to_csv(rows: list[RateRow], path, fit: RateFit | None = None) -> None:
    """Write the rate table; the fit goes into `#fit:` comment footer lines."""

    def fmt(x):
        if x is None or (isinstance(x, float) and not math.isfinite(x) and not math.isinf(x)):
            return ""
        if isinstance(x, float) and math.isinf(x):
            return "inf"
        return f"{x:.17g}"

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["p", "epsilon", "sup_error", "bound_general", "bound_posgrad", "boundary_gap"])
        for row in rows:
            writer.writerow(
                [
                    fmt(row.p),
                    fmt(row.epsilon),
                    fmt(row.sup_error),
                    fmt(row.bound_general),
                    fmt(row.bound_posgrad),
                    fmt(row.boundary_gap),
                ]
            )
        if fit is not None:
            fh.write(f"#fit: exponent={fit.exponent:.17g}\n")
            fh.write(f"#fit: intercept={fit.intercept:.17g}\n")
            fh.write(f"#fit: residual={fit.residual:.17g}\n")
            fh.write(f"#fit: p_min={fit.p_range[0]:.17g}\n")
            fh.write(f"#fit: p_max={fit.p_range[1]:.17g}\n")
