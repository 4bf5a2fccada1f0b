"""Uniform-lattice discretization of bounded domains.

A domain is described by a bounding box, a lattice spacing h and a point
predicate.  Lattice nodes strictly inside the box where the predicate holds
are *interior*; non-interior lattice nodes within one lattice step (diagonals
included) of an interior node are *boundary*.  Only interior and boundary
nodes are kept; they are numbered 0..n-1 in row-major lattice order.

Set geometry used by the ball-based operators lives here as well: discrete
closed balls of radius eps (integer offset stencils), inner parallel sets
(nodes farther than eps from every boundary node) and distances to the ring
between two inner parallel sets.  Distances are exhaustive scans over node
sets; node counts stay small enough that correctness wins over speed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .errors import DomainError, StencilError

# Relative slack for "is this coordinate on the lattice" decisions.
_SNAP_TOL = 1e-9


@dataclass(frozen=True)
class GridDomain:
    """Immutable uniform grid over a bounding box.

    Attributes:
        dim: spatial dimension d >= 1.
        h: lattice spacing > 0.
        box: (d, 2) array of [low, high] per axis.
        lattice_shape: number of lattice nodes per axis on the box.
        lattice_index: (n_nodes, d) integer multi-indices of kept nodes,
            sorted in row-major order (this order defines node ids).
        is_interior: (n_nodes,) boolean; False entries are boundary nodes.
    """

    dim: int
    h: float
    box: np.ndarray
    lattice_shape: tuple
    lattice_index: np.ndarray
    is_interior: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise DomainError("dimension must be >= 1")
        if not self.h > 0:
            raise DomainError("spacing h must be > 0")
        if not self.is_interior.any():
            raise DomainError("degenerate domain: no interior nodes")

    # -- basic queries ----------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.lattice_index)

    @property
    def coords(self) -> np.ndarray:
        """(n_nodes, dim) node coordinates."""
        if "coords" not in self._cache:
            lo = self.box[:, 0]
            self._cache["coords"] = lo[None, :] + self.lattice_index * self.h
        return self._cache["coords"]

    @property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_interior)

    @property
    def boundary_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.is_interior)

    @property
    def n_interior(self) -> int:
        return int(self.is_interior.sum())

    @property
    def n_boundary(self) -> int:
        return self.n_nodes - self.n_interior

    @property
    def diameter(self) -> float:
        """Diameter of the bounding box (upper bound for the domain)."""
        side = self.box[:, 1] - self.box[:, 0]
        return float(np.sqrt((side**2).sum()))

    @property
    def distance_to_boundary(self) -> np.ndarray:
        """Per node, Euclidean distance to the nearest boundary node."""
        if "dist_bdry" not in self._cache:
            bdry = self.coords[self.boundary_ids]
            self._cache["dist_bdry"] = _min_distance(self.coords, bdry)
        return self._cache["dist_bdry"]

    def compatible(self, other: "GridDomain") -> bool:
        """Same lattice structure; fields on compatible grids are comparable."""
        return (
            self is other
            or (
                self.dim == other.dim
                and self.lattice_shape == other.lattice_shape
                and abs(self.h - other.h) <= 1e-12 * self.h
                and np.array_equal(self.is_interior, other.is_interior)
                and np.array_equal(self.lattice_index, other.lattice_index)
            )
        )

    # -- dense lattice views ----------------------------------------------

    def to_dense(self, values: np.ndarray, pad: int = 0, fill: float = np.nan) -> np.ndarray:
        """Scatter per-node values onto the padded dense lattice array."""
        shape = tuple(n + 2 * pad for n in self.lattice_shape)
        dense = np.full(shape, fill, dtype=float)
        dense[tuple((self.lattice_index + pad).T)] = values
        return dense

    def from_dense(self, dense: np.ndarray, pad: int = 0) -> np.ndarray:
        """Gather per-node values from a padded dense lattice array."""
        return dense[tuple((self.lattice_index + pad).T)]

    def dense_mask(self, flags: np.ndarray, pad: int = 0) -> np.ndarray:
        shape = tuple(n + 2 * pad for n in self.lattice_shape)
        dense = np.zeros(shape, dtype=bool)
        dense[tuple((self.lattice_index + pad).T)] = flags
        return dense


@dataclass(frozen=True)
class NodeMask:
    """Boolean selection of grid nodes."""

    grid: GridDomain
    flags: np.ndarray

    def __post_init__(self):
        if len(self.flags) != self.grid.n_nodes:
            raise ValueError("mask length must equal node count")

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    def __and__(self, other: "NodeMask") -> "NodeMask":
        return NodeMask(self.grid, self.flags & other.flags)

    def __invert__(self) -> "NodeMask":
        return NodeMask(self.grid, ~self.flags)


@dataclass(frozen=True)
class ScalarField:
    """Real values on grid nodes.

    NaN is the explicit "not defined at this node" marker used by the
    ball-based operators, whose outputs live only on inner parallel sets.
    NaN poisons any reduction that accidentally reads an undefined node,
    which is exactly the failure mode we want to be loud.  Infinities are
    rejected outright.
    """

    grid: GridDomain
    values: np.ndarray

    def __post_init__(self):
        if len(self.values) != self.grid.n_nodes:
            raise ValueError("value count must equal node count")
        vals = np.asarray(self.values, dtype=float)
        if np.isinf(vals).any():
            raise ValueError("field values must be finite (NaN marks undefined)")
        object.__setattr__(self, "values", vals)

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    def defined_on(self, mask: NodeMask) -> bool:
        return bool(self.defined[mask.flags].all())

    @classmethod
    def from_function(cls, grid: GridDomain, f) -> "ScalarField":
        return cls(grid, np.asarray(f(grid.coords), dtype=float))

    @classmethod
    def constant(cls, grid: GridDomain, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.n_nodes, float(value)))


@dataclass(frozen=True)
class BallStencil:
    """Integer offsets o with |o| * h <= eps, i.e. a discrete closed ball."""

    radius: float
    spacing: float
    offsets: np.ndarray  # (k, dim) int64, sorted row-major

    @property
    def steps(self) -> int:
        """Maximum per-axis offset; also the dense padding this stencil needs."""
        return int(np.abs(self.offsets).max())

    def __len__(self) -> int:
        return len(self.offsets)


# ---------------------------------------------------------------------------
# construction


def build_grid(box, h: float, inside=None) -> GridDomain:
    """Discretize the domain described by `inside` on the given box.

    Args:
        box: sequence of (low, high) pairs, or a flat sequence of 2d reals.
        h: lattice spacing; box side lengths should be integer multiples of h.
        inside: predicate taking a length-d point (or an (N, d) array) and
            returning truth values.  None means "everything inside the box".

    Nodes on the box faces are never interior, so a trivially-true
    predicate yields the open box as the domain.
    """
    box = _as_box(box)
    dim = len(box)
    if not h > 0:
        raise DomainError("spacing h must be > 0")
    steps = []
    for lo, hi in box:
        if not hi > lo:
            raise DomainError("degenerate domain: empty box side")
        n = (hi - lo) / h
        n_round = round(n)
        if n_round < 2 or abs(n - n_round) > 1e-6 * max(1.0, n):
            if n_round < 2:
                raise DomainError("degenerate domain: box side shorter than 2h")
            warnings.warn("box side not an integer multiple of h; lattice snapped")
        steps.append(int(n_round))
    lattice_shape = tuple(n + 1 for n in steps)

    idx = np.indices(lattice_shape).reshape(dim, -1).T  # row-major order
    coords = box[:, 0][None, :] + idx * h
    on_face = (idx == 0).any(axis=1) | (idx == np.array(steps)[None, :]).any(axis=1)

    if inside is None:
        inside_flags = np.ones(len(idx), dtype=bool)
    else:
        inside_flags = _eval_predicate(inside, coords)

    interior_dense = (inside_flags & ~on_face).reshape(lattice_shape)
    moore = np.ones((3,) * dim, dtype=bool)
    boundary_dense = ndimage.binary_dilation(interior_dense, structure=moore) & ~interior_dense
    kept_dense = interior_dense | boundary_dense

    if not interior_dense.any():
        raise DomainError("degenerate domain: no interior nodes")

    kept_flat = np.flatnonzero(kept_dense.ravel())  # ascending == row-major order
    lattice_index = np.stack(np.unravel_index(kept_flat, lattice_shape), axis=1)
    is_interior = interior_dense.ravel()[kept_flat]

    return GridDomain(
        dim=dim,
        h=float(h),
        box=box,
        lattice_shape=lattice_shape,
        lattice_index=lattice_index.astype(np.int64),
        is_interior=is_interior,
    )


def _as_box(box) -> np.ndarray:
    arr = np.asarray(box, dtype=float)
    if arr.ndim == 1:
        if len(arr) % 2:
            raise DomainError("box must hold 2d reals")
        arr = arr.reshape(-1, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise DomainError("box must be a sequence of (low, high) pairs")
    return arr


def _eval_predicate(inside, coords: np.ndarray) -> np.ndarray:
    # Accept vectorized predicates; fall back to a row-major point loop.
    try:
        out = np.asarray(inside(coords))
        if out.shape == (len(coords),):
            return out.astype(bool)
    except Exception:
        pass
    return np.fromiter((bool(inside(pt)) for pt in coords), dtype=bool, count=len(coords))


def ball_stencil(h: float, eps: float, dim: int) -> BallStencil:
    """Offsets of the discrete closed ball of radius eps on an h-lattice.

    eps < h leaves only the zero offset, which makes every slope degenerate,
    so it is a hard error.  eps < 3h resolves directions too coarsely for
    the cone comparisons downstream and only warns.
    """
    if dim < 1:
        raise StencilError("dimension must be >= 1")
    if not (h > 0 and eps > 0):
        raise StencilError("h and eps must be positive")
    if eps < h:
        raise StencilError("stencil too small: eps < h")
    if eps < 3 * h:
        warnings.warn("eps < 3h: discrete balls resolve directions coarsely")
    rad = int(math.floor(eps / h + _SNAP_TOL))
    rng = np.arange(-rad, rad + 1)
    offs = np.stack(np.meshgrid(*([rng] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    r2 = (eps / h) ** 2 * (1 + 4 * _SNAP_TOL)
    offs = offs[(offs**2).sum(axis=1) <= r2]
    order = np.lexsort(tuple(offs[:, k] for k in range(dim - 1, -1, -1)))
    return BallStencil(radius=float(eps), spacing=float(h), offsets=offs[order].astype(np.int64))


def inner_parallel(grid: GridDomain, eps: float) -> NodeMask:
    """Interior nodes whose distance to every boundary node exceeds eps."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    key = ("inner", float(eps))
    if key not in grid._cache:
        flags = grid.is_interior & (grid.distance_to_boundary > eps)
        grid._cache[key] = NodeMask(grid, flags)
    return grid._cache[key]


def ring_distance(grid: GridDomain, eps: float) -> ScalarField:
    """Distance from nodes of the eps inner parallel set to its outer ring.

    The ring is the difference between the eps and 2*eps inner parallel
    sets; the returned field is zero on the ring, positive deeper inside,
    and undefined (NaN) outside the eps inner parallel set.
    """
    key = ("ringdist", float(eps))
    if key in grid._cache:
        return grid._cache[key]
    omega = inner_parallel(grid, eps)
    omega2 = inner_parallel(grid, 2 * eps)
    if omega2.count == 0:
        raise DomainError("inner parallel set at 2*eps is empty")
    ring = omega.flags & ~omega2.flags
    if not ring.any():
        raise DomainError("ring between eps and 2*eps parallel sets is empty")
    values = np.full(grid.n_nodes, np.nan)
    values[omega.flags] = _min_distance(grid.coords[omega.flags], grid.coords[ring])
    out = ScalarField(grid, values)
    grid._cache[key] = out
    return out


def _min_distance(points: np.ndarray, sites: np.ndarray, chunk: int = 4096) -> np.ndarray:
    """Exhaustive min Euclidean distance from each point to the site set."""
    if len(sites) == 0:
        raise ValueError("empty site set")
    out = np.empty(len(points))
    for start in range(0, len(points), chunk):
        block = points[start : start + chunk]
        out[start : start + chunk] = cdist(block, sites).min(axis=1)
    return out


# ---------------------------------------------------------------------------
# serialization

_KINDS = ("interior", "boundary")


def grid_to_csv(grid: GridDomain, path) -> None:
    """Write `node_id,x1,...,xd,kind` rows in node-id order."""
    coords = grid.coords
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id"] + [f"x{k + 1}" for k in range(grid.dim)] + ["kind"])
        for i in range(grid.n_nodes):
            kind = "interior" if grid.is_interior[i] else "boundary"
            writer.writerow([i] + [f"{c:.17g}" for c in coords[i]] + [kind])


def grid_from_csv(path) -> GridDomain:
    """Rebuild a GridDomain from its CSV serialization.

    The spacing is inferred as the smallest positive coordinate gap and the
    box as the coordinate extremes, so the file must contain at least two
    distinct coordinates per axis.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        dim = len(header) - 2
        coords, kinds = [], []
        for row in reader:
            if not row:
                continue
            coords.append([float(v) for v in row[1 : 1 + dim]])
            kinds.append(row[1 + dim].strip())
    coords = np.asarray(coords)
    if len(coords) == 0:
        raise DomainError("degenerate domain: empty grid file")
    for kind in kinds:
        if kind not in _KINDS:
            raise DomainError(f"unknown node kind {kind!r} in grid file")

    gaps = []
    for k in range(dim):
        uniq = np.unique(coords[:, k])
        if len(uniq) > 1:
            gaps.append(np.diff(uniq).min())
    if not gaps:
        raise DomainError("cannot infer spacing from single-column grid file")
    h = float(min(gaps))

    lo = coords.min(axis=0)
    hi = coords.max(axis=0)
    idx = np.rint((coords - lo) / h).astype(np.int64)
    if np.abs(coords - (lo + idx * h)).max() > 1e-6 * h:
        raise DomainError("grid file coordinates are not on a uniform lattice")
    shape = tuple(int(i) + 1 for i in idx.max(axis=0))

    # Row-major reorder in case the file was permuted.
    flat = np.ravel_multi_index(idx.T, shape)
    order = np.argsort(flat)
    return GridDomain(
        dim=dim,
        h=h,
        box=np.stack([lo, hi], axis=1),
        lattice_shape=shape,
        lattice_index=idx[order],
        is_interior=np.array([kinds[i] == "interior" for i in order]),
    )


def field_to_csv(fld: ScalarField, path) -> None:
    """Write `node_id,value`; undefined entries serialize as empty strings."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id", "value"])
        for i, v in enumerate(fld.values):
            writer.writerow([i, f"{v:.17g}" if np.isfinite(v) else ""])


def field_from_csv(grid: GridDomain, path) -> ScalarField:
    values = np.full(grid.n_nodes, np.nan)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            if not row:
                continue
            if row[1] != "":
                values[int(row[0])] = float(row[1])
    return ScalarField(grid, values)
