"""Closed-form reference objects: Hoelder cones and radial exact solutions.

Everything here is an exact formula, used both as boundary data and as
oracles for the solvers and rate bounds.  The central exponent is
(p - d)/(p - 1): the fundamental solutions of the p-Laplace equation are
cones |x - x0|^((p-d)/(p-1)), degenerating to Lipschitz cones |x - x0| as
p -> infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_LN2 = math.log(2.0)


def holder_exponent(p: float, d: int) -> float:
    """Exponent (p - d)/(p - 1) of the p-fundamental cone; 1 at p = infinity."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if math.isinf(p):
        return 1.0
    if not p > d:
        raise ValueError("need p > d")
    return (p - d) / (p - 1)


@dataclass(frozen=True)
class ConeSpec:
    """Cone x -> slope * |x - apex|^exponent + offset with exponent in (0, 1].

    The exponent is free rather than tied to a particular p, so cones of
    other operator families (e.g. exponent 2s-1) are representable too.
    """

    apex: np.ndarray
    slope: float
    offset: float
    exponent: float

    def __post_init__(self):
        object.__setattr__(self, "apex", np.asarray(self.apex, dtype=float))
        if not 0 < self.exponent <= 1:
            raise ValueError("cone exponent must lie in (0, 1]")
        if self.slope < 0:
            raise ValueError("cone slope must be >= 0")


def cone_eval(cone: ConeSpec, x) -> np.ndarray | float:
    """Evaluate the cone at a point (d,) or batch (N, d) of points."""
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    r = np.sqrt(((pts - cone.apex[None, :]) ** 2).sum(axis=1))
    # r = 0 would make r**exponent raise 0 to a fractional power; it is 0.
    vals = cone.slope * np.where(r > 0, r, 0.0) ** cone.exponent + cone.offset
    return float(vals[0]) if single else vals


@dataclass(frozen=True)
class RadialProblem:
    """Punctured-ball Dirichlet problem with data 1 on the sphere, 0 at the center."""

    dim: int
    p: float

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("radial problem needs dimension >= 2")
        if not (math.isinf(self.p) or self.p > self.dim):
            raise ValueError("need p > d")

    @property
    def exponent(self) -> float:
        return holder_exponent(self.p, self.dim)


def radial_p_harmonic(problem: RadialProblem, x) -> np.ndarray | float:
    """|x|^((p-d)/(p-1)); the exact solution of the punctured-ball problem."""
    cone = ConeSpec(np.zeros(problem.dim), 1.0, 0.0, problem.exponent)
    return cone_eval(cone, x)


def radial_exact_error(p: float, d: int) -> float:
    """Sup distance between the radial p-solution and its limit |x|.

    Equals max over t in [0, 1] of t^beta - t with beta = (p-d)/(p-1),
    attained at t = beta^(1/(1-beta)).  Evaluated through log1p so that
    the near-cancellation at large p keeps full precision.
    """
    if d < 2:
        raise ValueError("dimension must be >= 2")
    if math.isinf(p) or not p > d:
        raise ValueError("need d < p < infinity")
    u = (d - 1) / (p - 1)  # = 1 - beta
    log_beta = math.log1p(-u)
    return math.exp((1 - u) / u * log_beta) - math.exp(log_beta / u)


def radial_lower_bound(p: float, d: int) -> float:
    """Pointwise radial error at radius 1/2: 2^(-beta) - 1/2.

    This is at least (ln 2 / 2) * (d - 1)/(p - 1), which pins the best
    possible uniform rate at order 1/p.
    """
    if math.isinf(p):
        return 0.0
    beta = holder_exponent(p, d)
    value = math.exp(-beta * _LN2) - 0.5
    floor = 0.5 * _LN2 * (d - 1) / (p - 1)
    if value < floor * (1 - 1e-12):
        raise RuntimeError("half-point radial bound fell below its linear floor")
    return value


def squeeze_bounds(exponent: float) -> tuple[float, float]:
    """Linear envelopes of beta -> 2^(-beta) - 1/2 on (0, 1).

    Returns (lower, upper) = ((ln 2 / 2)(1 - beta), (1 - beta)/2); the
    middle quantity 2^(-beta) - 1/2 always lies between them.
    """
    if not 0 < exponent < 1:
        raise ValueError("exponent must lie in (0, 1)")
    return 0.5 * _LN2 * (1 - exponent), 0.5 * (1 - exponent)


def aronsson(x) -> np.ndarray | float:
    """Classical exact infinity-harmonic function x1^(4/3) - x2^(4/3) in 2-d.

    Odd powers follow the real convention sign(t) |t|^(4/3).
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if pts.shape[1] != 2:
        raise ValueError("aronsson is defined in dimension 2")
    vals = np.cbrt(pts[:, 0]) * np.abs(pts[:, 0]) - np.cbrt(pts[:, 1]) * np.abs(pts[:, 1])
    return float(vals[0]) if single else vals
