"""Discrete Dirichlet solvers: ball-mean / midrange fixed points and the
variational p-energy minimizer.

The fixed-point family iterates

    u(x) <- (alpha/2) (max_B u + min_B u) + (1 - alpha) mean_B u,
    alpha = (p - 2)/(p + d),

over discrete eps-balls B.  alpha = 0 is the ball average (p = 2), alpha = 1
the midrange map whose fixed points annihilate the finite-difference
infinity-Laplacian.  Boundary data are evaluated on a collar: every
non-interior lattice node within eps of an interior node, so every interior
node sees a full, symmetric ball (affine data are then exact fixed points).
Iterations run until the max pointwise update and the fixed-point defect
both drop below tol.

The energy solver minimizes sum_cells |grad_h u|^p h^d over interior values
(forward-difference cell gradients), driven through log-energy so large p
stays well scaled.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numba import njit
from scipy import ndimage, sparse
from scipy.optimize import minimize
from scipy.sparse.linalg import spsolve
from scipy.spatial.distance import cdist

from . import cones
from .errors import SolveError
from .grid import GridDomain, ScalarField, ball_stencil, field_from_csv

_DEF_TOL = 1e-8
_DEF_MAX_ITER = 1_000_000
_PLATEAU_WINDOW = 10_000
_P_MAX_ENERGY = 64.0


# ---------------------------------------------------------------------------
# boundary data


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet datum, evaluable at boundary nodes and on solver collars."""

    descriptor: str
    func: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :]
        vals = np.asarray(self.func(pts), dtype=float).reshape(-1)
        if len(vals) != len(pts):
            raise ValueError(f"boundary source {self.descriptor!r} returned a bad shape")
        if not np.isfinite(vals).all():
            raise ValueError(f"boundary source {self.descriptor!r} produced non-finite values")
        return vals

    @classmethod
    def from_function(cls, func, descriptor: str = "function") -> "BoundaryData":
        return cls(descriptor, func)

    @classmethod
    def affine(cls, gradient, offset: float = 0.0) -> "BoundaryData":
        grad = np.asarray(gradient, dtype=float)
        return cls(
            f"affine(gradient={grad.tolist()},offset={offset})",
            lambda pts: pts @ grad + offset,
        )

    @classmethod
    def cone(cls, apex, slope: float = 1.0, offset: float = 0.0, exponent: float = 1.0) -> "BoundaryData":
        spec = cones.ConeSpec(np.asarray(apex, float), slope, offset, exponent)
        return cls(
            f"cone(apex={spec.apex.tolist()},slope={slope},offset={offset},exponent={exponent})",
            lambda pts: cones.cone_eval(spec, pts),
        )

    @classmethod
    def radial(cls, p: float, d: int) -> "BoundaryData":
        problem = cones.RadialProblem(d, p)
        return cls(f"radial(p={p},d={d})", lambda pts: cones.radial_p_harmonic(problem, pts))

    @classmethod
    def aronsson(cls) -> "BoundaryData":
        return cls("aronsson", cones.aronsson)

    @classmethod
    def from_expression(cls, text: str) -> "BoundaryData":
        from .expressions import parse_boundary_expr

        expr = parse_boundary_expr(text)
        return cls(f"expr({text})", expr.evaluate)

    @classmethod
    def from_file(cls, path, grid: GridDomain) -> "BoundaryData":
        """Node values from a field CSV, extended by nearest defined node."""
        fld = field_from_csv(grid, path)
        defined = fld.defined
        if not defined.any():
            raise ValueError("boundary file holds no defined values")
        sites = grid.coords[defined]
        vals = fld.values[defined]

        def nearest(pts):
            idx = cdist(pts, sites).argmin(axis=1)
            return vals[idx]

        return cls(f"file({path})", nearest)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    residual: float
    converged: bool
    seconds: float


# ---------------------------------------------------------------------------
# numba sweep kernels (single-threaded, deterministic)


@njit(cache=True)
def _gs_sweep(values, idx, offs, alpha, forward):
    n = idx.shape[0]
    k = offs.shape[0]
    inv_k = 1.0 / k
    maxupd = 0.0
    for t in range(n):
        pos = t if forward else n - 1 - t
        i = idx[pos]
        mx = -1.0e300
        mn = 1.0e300
        s = 0.0
        for j in range(k):
            val = values[i + offs[j]]
            if val > mx:
                mx = val
            if val < mn:
                mn = val
            s += val
        new = 0.5 * alpha * (mx + mn) + (1.0 - alpha) * (s * inv_k)
        d = abs(new - values[i])
        if d > maxupd:
            maxupd = d
        values[i] = new
    return maxupd


@njit(cache=True)
def _jacobi_sweep(src, dst, idx, offs, alpha):
    k = offs.shape[0]
    inv_k = 1.0 / k
    maxupd = 0.0
    for t in range(idx.shape[0]):
        i = idx[t]
        mx = -1.0e300
        mn = 1.0e300
        s = 0.0
        for j in range(k):
            val = src[i + offs[j]]
            if val > mx:
                mx = val
            if val < mn:
                mn = val
            s += val
        new = 0.5 * alpha * (mx + mn) + (1.0 - alpha) * (s * inv_k)
        d = abs(new - src[i])
        if d > maxupd:
            maxupd = d
        dst[i] = new
    return maxupd


@njit(cache=True)
def _defect_max(values, idx, offs, alpha):
    k = offs.shape[0]
    inv_k = 1.0 / k
    worst = 0.0
    for t in range(idx.shape[0]):
        i = idx[t]
        mx = -1.0e300
        mn = 1.0e300
        s = 0.0
        for j in range(k):
            val = values[i + offs[j]]
            if val > mx:
                mx = val
            if val < mn:
                mn = val
            s += val
        new = 0.5 * alpha * (mx + mn) + (1.0 - alpha) * (s * inv_k)
        d = abs(new - values[i])
        if d > worst:
            worst = d
    return worst


# ---------------------------------------------------------------------------
# workspace: extended lattice with a boundary collar


class _Workspace:
    def __init__(self, grid: GridDomain, g: BoundaryData, eps: float):
        self.grid = grid
        self.eps = float(eps)
        stencil = ball_stencil(grid.h, eps, grid.dim)
        rad = stencil.steps
        self.rad = rad
        ext_shape = tuple(n + 2 * rad for n in grid.lattice_shape)
        self.ext_shape = ext_shape

        interior_dense = grid.dense_mask(grid.is_interior, pad=rad)
        footprint = np.zeros((2 * rad + 1,) * grid.dim, dtype=bool)
        footprint[tuple((stencil.offsets + rad).T)] = True
        collar = ndimage.binary_dilation(interior_dense, structure=footprint) & ~interior_dense

        self.values = np.zeros(ext_shape)
        collar_idx = np.argwhere(collar)
        collar_coords = grid.box[:, 0][None, :] + (collar_idx - rad) * grid.h
        self.values[tuple(collar_idx.T)] = g.evaluate(collar_coords)

        strides = np.array(
            [int(np.prod(ext_shape[k + 1 :], dtype=np.int64)) for k in range(grid.dim)],
            dtype=np.int64,
        )
        self.interior_flat = np.ravel_multi_index(
            tuple((grid.lattice_index[grid.is_interior] + rad).T), ext_shape
        ).astype(np.int64)
        self.offsets_flat = (stencil.offsets @ strides).astype(np.int64)
        self.n_stencil = len(stencil.offsets)

        # interior ordinal lookup over the flat extended lattice
        self.ordinal = np.full(int(np.prod(ext_shape)), -1, dtype=np.int64)
        self.ordinal[self.interior_flat] = np.arange(len(self.interior_flat))

    def set_interior(self, vals: np.ndarray) -> None:
        self.values.ravel()[self.interior_flat] = vals

    def get_interior(self) -> np.ndarray:
        return self.values.ravel()[self.interior_flat].copy()

    def harmonic_init(self) -> np.ndarray:
        """Solve the ball-mean (p = 2) equation directly; used as the smooth start."""
        flat = self.values.ravel()
        n = len(self.interior_flat)
        offs = self.offsets_flat[self.offsets_flat != 0]
        inv = 1.0 / len(offs)
        rows = [np.arange(n)]
        cols = [np.arange(n)]
        data = [np.ones(n)]
        rhs = np.zeros(n)
        for off in offs:
            nb = self.interior_flat + off
            j = self.ordinal[nb]
            inside = j >= 0
            rows.append(np.flatnonzero(inside))
            cols.append(j[inside])
            data.append(np.full(int(inside.sum()), -inv))
            np.add.at(rhs, np.flatnonzero(~inside), inv * flat[nb[~inside]])
        mat = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        ).tocsr()
        return spsolve(mat, rhs)


def _mixing(p: float, d: int) -> float:
    if math.isinf(p):
        return 1.0
    if p < 2:
        raise ValueError("p-harmonious iteration needs p >= 2")
    return (p - 2.0) / (p + d)


# ---------------------------------------------------------------------------
# fixed-point solvers


def solve_p_harmonious(
    grid: GridDomain,
    g: BoundaryData,
    eps: float,
    p: float,
    tol: float = _DEF_TOL,
    max_iter: int = _DEF_MAX_ITER,
    sweep: str = "jacobi",
) -> tuple[ScalarField, SolveReport]:
    """Fixed point of the midrange/mean blend; midrange solver at p = infinity."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if sweep not in ("jacobi", "gauss-seidel"):
        raise ValueError("sweep must be 'jacobi' or 'gauss-seidel'")
    alpha = _mixing(p, grid.dim)
    start = time.perf_counter()
    ws = _Workspace(grid, g, eps)
    ws.set_interior(ws.harmonic_init())

    flat = ws.values.ravel()
    idx, offs = ws.interior_flat, ws.offsets_flat
    converged = False
    residual = math.inf
    upd = math.inf
    upd_checkpoint = math.inf
    it = 0

    if sweep == "jacobi":
        other = ws.values.copy().ravel()
    while it < max_iter:
        if sweep == "jacobi":
            upd = _jacobi_sweep(flat, other, idx, offs, alpha)
            flat, other = other, flat
        else:
            upd = _gs_sweep(flat, idx, offs, alpha, it % 2 == 0)
        it += 1
        if upd <= tol:
            residual = _defect_max(flat, idx, offs, alpha)
            if residual <= tol:
                converged = True
                break
        if it % _PLATEAU_WINDOW == 0:
            # stalled: less than 1% reduction across the window
            if upd_checkpoint < math.inf and upd > 0.99 * upd_checkpoint:
                break
            upd_checkpoint = upd
    if not converged:
        residual = _defect_max(flat, idx, offs, alpha)

    values = np.empty(grid.n_nodes)
    values[grid.is_interior] = flat[idx]
    bids = grid.boundary_ids
    values[bids] = g.evaluate(grid.coords[bids])
    field = ScalarField(grid, values)
    report = SolveReport(
        iterations=it,
        residual=float(residual),
        converged=converged,
        seconds=time.perf_counter() - start,
    )
    return field, report


def solve_inf_harmonic(
    grid: GridDomain,
    g: BoundaryData,
    eps: float,
    tol: float = _DEF_TOL,
    max_iter: int = _DEF_MAX_ITER,
    sweep: str = "jacobi",
) -> tuple[ScalarField, SolveReport]:
    """Midrange fixed point u = (max_B u + min_B u)/2, i.e. L_inf^eps u = 0.

    The reported residual is the fixed-point defect max |u - Tu|, which
    equals max |L_inf^eps u| eps^2 / 2.
    """
    return solve_p_harmonious(grid, g, eps, math.inf, tol=tol, max_iter=max_iter, sweep=sweep)


def residual_field(u: ScalarField, eps: float, p: float) -> ScalarField:
    """Pointwise defect u - Tu of the p-harmonious map (midrange at p = inf).

    Computed from grid nodes only, so it is defined where the ball stays
    among kept nodes; NaN elsewhere.
    """
    grid = u.grid
    alpha = _mixing(p, grid.dim)
    stencil = ball_stencil(grid.h, eps, grid.dim)
    rad = stencil.steps
    dense = grid.to_dense(u.values, pad=rad, fill=np.nan)
    shape = grid.lattice_shape
    mx = np.full(shape, -np.inf)
    mn = np.full(shape, np.inf)
    sm = np.zeros(shape)
    for off in stencil.offsets:
        view = dense[tuple(slice(rad + o, rad + o + n) for o, n in zip(off, shape))]
        mx = np.maximum(mx, view)
        mn = np.minimum(mn, view)
        sm = sm + view
    tmap = 0.5 * alpha * (mx + mn) + (1.0 - alpha) * (sm / len(stencil.offsets))
    defect = u.values - tmap[tuple(grid.lattice_index.T)]
    return ScalarField(grid, defect)


# ---------------------------------------------------------------------------
# variational p-energy solver


def _cells(grid: GridDomain) -> np.ndarray:
    """Multi-indices c with c and c + e_k kept for every axis; the energy cells."""
    kept = grid.dense_mask(np.ones(grid.n_nodes, dtype=bool))
    base = tuple(slice(0, n - 1) for n in grid.lattice_shape)
    valid = kept[base].copy()
    for k in range(grid.dim):
        shifted = tuple(
            slice(1, n) if j == k else slice(0, n - 1) for j, n in enumerate(grid.lattice_shape)
        )
        valid &= kept[shifted]
    return np.argwhere(valid)


def _cell_gradients(grid: GridDomain, values: np.ndarray, cells: np.ndarray):
    dense = grid.to_dense(values)
    base = tuple(cells.T)
    g = np.empty((len(cells), grid.dim))
    for k in range(grid.dim):
        shifted = tuple(cells[:, j] + (1 if j == k else 0) for j in range(grid.dim))
        g[:, k] = (dense[shifted] - dense[base]) / grid.h
    return g


def p_energy(u: ScalarField, p: float) -> float:
    """Discrete Dirichlet p-energy sum_cells |grad_h u|^p h^d.

    The max cell gradient is factored out so the sum stays scaled for
    large p.
    """
    grid = u.grid
    cells = _cells(grid)
    g = _cell_gradients(grid, u.values, cells)
    gnorm = np.sqrt((g**2).sum(axis=1))
    m = gnorm.max()
    if m == 0.0:
        return 0.0
    return float(m**p * ((gnorm / m) ** p).sum() * grid.h**grid.dim)


def p_energy_gradient(u: ScalarField, p: float) -> np.ndarray:
    """Analytic gradient of p_energy with respect to every node value."""
    grid = u.grid
    cells = _cells(grid)
    g = _cell_gradients(grid, u.values, cells)
    gnorm = np.sqrt((g**2).sum(axis=1))
    with np.errstate(invalid="ignore"):
        w = np.where(gnorm[:, None] > 0, gnorm[:, None] ** (p - 2.0) * g, 0.0)
    w *= p * grid.h ** (grid.dim - 1)
    return _scatter_cell_gradient(grid, cells, w)


def _scatter_cell_gradient(grid: GridDomain, cells: np.ndarray, w: np.ndarray) -> np.ndarray:
    dense = np.zeros(grid.lattice_shape)
    base = tuple(cells.T)
    for k in range(grid.dim):
        shifted = tuple(cells[:, j] + (1 if j == k else 0) for j in range(grid.dim))
        np.add.at(dense, shifted, w[:, k])
        np.add.at(dense, base, -w[:, k])
    return dense[tuple(grid.lattice_index.T)]


def _laplace_init(grid: GridDomain, boundary_vals: np.ndarray) -> np.ndarray:
    """Minimizer of the quadratic (p = 2) cell energy; the energy solver's start."""
    cells = _cells(grid)
    n = grid.n_nodes
    interior = grid.is_interior
    dof = np.full(n, -1, dtype=np.int64)
    dof[interior] = np.arange(interior.sum())
    node_id = np.full(grid.lattice_shape, -1, dtype=np.int64)
    node_id[tuple(grid.lattice_index.T)] = np.arange(n)

    full = np.zeros(n)
    full[~interior] = boundary_vals

    rows, cols, data = [], [], []
    rhs = np.zeros(int(interior.sum()))
    diag = np.zeros(int(interior.sum()))

    def add_edge(a_ids, b_ids):
        for s, t in ((a_ids, b_ids), (b_ids, a_ids)):
            si, ti = dof[s], dof[t]
            own = si >= 0
            np.add.at(diag, si[own], 1.0)
            nb_int = own & (ti >= 0)
            rows.append(si[nb_int])
            cols.append(ti[nb_int])
            data.append(np.full(int(nb_int.sum()), -1.0))
            nb_bdry = own & (ti < 0)
            np.add.at(rhs, si[nb_bdry], full[t[nb_bdry]])

    base = tuple(cells.T)
    a_ids = node_id[base]
    for k in range(grid.dim):
        shifted = tuple(cells[:, j] + (1 if j == k else 0) for j in range(grid.dim))
        add_edge(a_ids, node_id[shifted])

    ndof = int(interior.sum())
    rows.append(np.arange(ndof))
    cols.append(np.arange(ndof))
    data.append(np.maximum(diag, 1e-30))
    mat = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(ndof, ndof)
    ).tocsr()
    return spsolve(mat, rhs)


def solve_p_energy(
    grid: GridDomain,
    g: BoundaryData,
    p: float,
    tol: float = 1e-8,
    max_iter: int = 2000,
    p_max: float = _P_MAX_ENERGY,
) -> tuple[ScalarField, SolveReport]:
    """Minimize the discrete p-energy over interior values with fixed boundary.

    Descent runs on log-energy (same minimizer, scale-free), so the stopping
    tolerance applies to the relative projected gradient grad E / E.  Large
    exponents are rejected: the midrange blend is the stable tool there.
    """
    if math.isinf(p) or not p > grid.dim:
        raise ValueError("energy solver needs d < p < infinity")
    if p > p_max:
        raise ValueError("use p_harmonious for p beyond the energy solver's range")
    start = time.perf_counter()

    boundary_vals = g.evaluate(grid.coords[grid.boundary_ids])
    cells = _cells(grid)
    interior = grid.is_interior
    h = grid.h

    full = np.zeros(grid.n_nodes)
    full[~interior] = boundary_vals

    def objective(x):
        full[interior] = x
        gvec = _cell_gradients(grid, full, cells)
        gnorm = np.sqrt((gvec**2).sum(axis=1))
        m = gnorm.max()
        if m == 0.0:
            return -math.inf, np.zeros_like(x)
        scaled = gnorm / m
        t = (scaled**p).sum()
        logE = p * math.log(m) + math.log(t) + grid.dim * math.log(h)
        with np.errstate(invalid="ignore"):
            w = np.where(gnorm[:, None] > 0, scaled[:, None] ** (p - 2.0) * (gvec / m), 0.0)
        w *= p / (h * m * t)
        gradF = _scatter_cell_gradient(grid, cells, w)
        return logE, gradF[interior]

    x0 = _laplace_init(grid, boundary_vals)
    f0, g0 = objective(x0)
    if not np.isfinite(f0):
        # constant data: the initializer already is the global minimizer
        full[interior] = x0
        field = ScalarField(grid, full.copy())
        return field, SolveReport(0, 0.0, True, time.perf_counter() - start)

    res = minimize(
        objective,
        x0,
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "gtol": tol, "ftol": 0.0, "maxcor": 25},
    )
    message = res.message if isinstance(res.message, str) else res.message.decode()
    _, grad_final = objective(res.x)
    residual = float(np.abs(grad_final).max()) if len(grad_final) else 0.0
    converged = residual <= tol
    if "LNSRCH" in message.upper() and not converged:
        raise SolveError(f"line search failure in p-energy descent: {message}")

    full[interior] = res.x
    field = ScalarField(grid, full.copy())
    report = SolveReport(
        iterations=int(res.nit),
        residual=residual,
        converged=converged,
        seconds=time.perf_counter() - start,
    )
    return field, report


# ---------------------------------------------------------------------------
# run log


RUNLOG_HEADER = ["run_id", "solver", "p", "epsilon", "h", "iterations", "residual", "converged", "seconds"]


def append_runlog(path, run_id: str, solver: str, p: float, eps: float, h: float, report: SolveReport) -> None:
    import os

    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(RUNLOG_HEADER)
        writer.writerow(
            [
                run_id,
                solver,
                f"{p:.17g}" if not math.isinf(p) else "inf",
                f"{eps:.17g}",
                f"{h:.17g}",
                report.iterations,
                f"{report.residual:.17g}",
                int(report.converged),
                f"{report.seconds:.3f}",
            ]
        )
