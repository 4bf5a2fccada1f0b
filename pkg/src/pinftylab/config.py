"""Flat key=value run configuration with dotted sections.

Example::

    domain.kind = box
    domain.box = -1,1,-1,1
    domain.h = 0.03125
    solver.epsilon = auto
    solver.p = 4,8,16,inf
    boundary.kind = expr
    boundary.expr = x1^2 - abs(x2)
    rates.mode = numeric
    seed = 7

Unknown keys are rejected, every field is validated before any compute, and
the normalized text (sorted keys) is what the manifest hashes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .expressions import parse_boundary_expr, probe_validate
from .grid import GridDomain, build_grid, grid_from_csv
from .solvers import BoundaryData

_DOMAIN_KINDS = ("box", "annulus", "punctured_ball", "file")
_BOUNDARY_KINDS = ("affine", "cone", "radial", "aronsson", "expr", "file")
_SOLVER_KINDS = ("inf", "p_harmonious", "p_energy")
_RATE_MODES = ("analytic", "numeric")
_SWEEPS = ("jacobi", "gauss-seidel")

_KNOWN_KEYS = {
    "domain.kind",
    "domain.box",
    "domain.h",
    "domain.file",
    "domain.center",
    "domain.r_inner",
    "domain.r_outer",
    "solver.kind",
    "solver.epsilon",
    "solver.p",
    "solver.tol",
    "solver.max_iter",
    "solver.sweep",
    "boundary.kind",
    "boundary.expr",
    "boundary.file",
    "boundary.gradient",
    "boundary.offset",
    "boundary.apex",
    "boundary.slope",
    "boundary.exponent",
    "analysis.alpha",
    "rates.mode",
    "consistency.p",
    "consistency.alpha",
    "consistency.seminorm",
    "verify.samples",
    "verify.tolerance_scale",
    "output.plot",
    "seed",
}


def load_config_text(path) -> str:
    with open(path) as fh:
        return fh.read()


def parse_pairs(text: str) -> dict[str, str]:
    pairs = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in pairs:
            raise ConfigError(f"{key}: duplicate key")
        pairs[key] = value.strip()
    return pairs


def config_hash(pairs: dict[str, str]) -> str:
    normalized = "\n".join(f"{k}={pairs[k]}" for k in sorted(pairs))
    return hashlib.sha256(normalized.encode()).hexdigest()


@dataclass
class RunConfig:
    pairs: dict[str, str]
    domain_kind: str
    box: np.ndarray
    h: float
    domain_file: str | None
    center: np.ndarray | None
    r_inner: float
    r_outer: float
    solver_kind: str
    epsilon: float | None  # None means "auto"
    p_list: list[float]
    tol: float
    max_iter: int
    sweep: str
    boundary_kind: str
    boundary_params: dict
    alpha: float | None  # None means "auto" = 1 - d/p
    rates_mode: str
    consistency_p: float
    consistency_alpha: float | None
    consistency_seminorm: float | None
    verify_samples: int
    verify_tolerance_scale: float
    plot: bool
    seed: int

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def hash(self) -> str:
        return config_hash(self.pairs)


def _get(pairs, key, default=None, required=False):
    if key in pairs:
        return pairs[key]
    if required:
        raise ConfigError(f"{key}: missing required key")
    return default


def _as_float(key, value):
    try:
        return float(value)
    except ValueError as err:
        raise ConfigError(f"{key}: not a number: {value!r}") from err


def _as_floats(key, value):
    try:
        return [float(v) for v in value.split(",") if v.strip() != ""]
    except ValueError as err:
        raise ConfigError(f"{key}: not a comma-separated number list: {value!r}") from err


def _as_p(key, token):
    token = token.strip().lower()
    if token in ("inf", "infinity"):
        return math.inf
    try:
        return float(token)
    except ValueError as err:
        raise ConfigError(f"{key}: bad p value {token!r}") from err


def parse_run_config(text: str) -> RunConfig:
    pairs = parse_pairs(text)
    for key in pairs:
        if key not in _KNOWN_KEYS:
            raise ConfigError(f"{key}: unknown key")

    domain_kind = _get(pairs, "domain.kind", "box")
    if domain_kind not in _DOMAIN_KINDS:
        raise ConfigError(f"domain.kind: must be one of {_DOMAIN_KINDS}")
    domain_file = _get(pairs, "domain.file")
    if domain_kind == "file" and not domain_file:
        raise ConfigError("domain.file: required when domain.kind=file")

    box_vals = _as_floats("domain.box", _get(pairs, "domain.box", "0,1,0,1"))
    if len(box_vals) % 2 or len(box_vals) < 2:
        raise ConfigError("domain.box: need 2d reals (lo,hi per axis)")
    box = np.asarray(box_vals).reshape(-1, 2)
    if not (box[:, 1] > box[:, 0]).all():
        raise ConfigError("domain.box: each hi must exceed its lo")

    h = _as_float("domain.h", _get(pairs, "domain.h", "0.0625"))
    if not h > 0:
        raise ConfigError("domain.h: must be positive")

    center = None
    if "domain.center" in pairs:
        center = np.asarray(_as_floats("domain.center", pairs["domain.center"]))
        if len(center) != len(box):
            raise ConfigError("domain.center: dimension mismatch with domain.box")
    r_inner = _as_float("domain.r_inner", _get(pairs, "domain.r_inner", "0.25"))
    r_outer = _as_float("domain.r_outer", _get(pairs, "domain.r_outer", "1.0"))
    if domain_kind == "annulus" and not 0 <= r_inner < r_outer:
        raise ConfigError("domain.r_inner/r_outer: need 0 <= r_inner < r_outer")

    solver_kind = _get(pairs, "solver.kind", "inf")
    if solver_kind not in _SOLVER_KINDS:
        raise ConfigError(f"solver.kind: must be one of {_SOLVER_KINDS}")

    eps_raw = _get(pairs, "solver.epsilon", "auto")
    if eps_raw == "auto":
        epsilon = None
    else:
        epsilon = _as_float("solver.epsilon", eps_raw)
        if not epsilon > 0:
            raise ConfigError("solver.epsilon: must be positive or 'auto'")

    p_list = [_as_p("solver.p", tok) for tok in _get(pairs, "solver.p", "inf").split(",")]
    if not p_list:
        raise ConfigError("solver.p: empty p list")

    tol = _as_float("solver.tol", _get(pairs, "solver.tol", "1e-8"))
    if not tol > 0:
        raise ConfigError("solver.tol: must be positive")
    try:
        max_iter = int(_get(pairs, "solver.max_iter", "1000000"))
    except ValueError as err:
        raise ConfigError("solver.max_iter: not an integer") from err
    sweep = _get(pairs, "solver.sweep", "jacobi")
    if sweep not in _SWEEPS:
        raise ConfigError(f"solver.sweep: must be one of {_SWEEPS}")

    boundary_kind = _get(pairs, "boundary.kind", "affine")
    if boundary_kind not in _BOUNDARY_KINDS:
        raise ConfigError(f"boundary.kind: must be one of {_BOUNDARY_KINDS}")
    boundary_params = {
        "expr": _get(pairs, "boundary.expr"),
        "file": _get(pairs, "boundary.file"),
        "gradient": _get(pairs, "boundary.gradient"),
        "offset": _as_float("boundary.offset", _get(pairs, "boundary.offset", "0")),
        "apex": _get(pairs, "boundary.apex"),
        "slope": _as_float("boundary.slope", _get(pairs, "boundary.slope", "1")),
        "exponent": _as_float("boundary.exponent", _get(pairs, "boundary.exponent", "1")),
    }
    if boundary_kind == "expr":
        if not boundary_params["expr"]:
            raise ConfigError("boundary.expr: required when boundary.kind=expr")
        expr = parse_boundary_expr(boundary_params["expr"])
        probe_validate(expr, box, len(box))
    if boundary_kind == "file" and not boundary_params["file"]:
        raise ConfigError("boundary.file: required when boundary.kind=file")
    if boundary_kind == "aronsson" and len(box) != 2:
        raise ConfigError("boundary.kind: aronsson data needs a 2-d domain")

    alpha_raw = _get(pairs, "analysis.alpha", "auto")
    alpha = None if alpha_raw == "auto" else _as_float("analysis.alpha", alpha_raw)
    if alpha is not None and not 0 < alpha <= 1:
        raise ConfigError("analysis.alpha: must lie in (0, 1] or be 'auto'")

    rates_mode = _get(pairs, "rates.mode", "analytic")
    if rates_mode not in _RATE_MODES:
        raise ConfigError(f"rates.mode: must be one of {_RATE_MODES}")

    consistency_p = _as_p("consistency.p", _get(pairs, "consistency.p", "3"))
    ca_raw = _get(pairs, "consistency.alpha", "auto")
    consistency_alpha = None if ca_raw == "auto" else _as_float("consistency.alpha", ca_raw)
    cs_raw = _get(pairs, "consistency.seminorm", "auto")
    consistency_seminorm = None if cs_raw == "auto" else _as_float("consistency.seminorm", cs_raw)

    try:
        verify_samples = int(_get(pairs, "verify.samples", "10"))
    except ValueError as err:
        raise ConfigError("verify.samples: not an integer") from err
    if verify_samples < 1:
        raise ConfigError("verify.samples: must be >= 1")
    verify_tol_scale = _as_float(
        "verify.tolerance_scale", _get(pairs, "verify.tolerance_scale", "1")
    )
    if not verify_tol_scale >= 0:
        raise ConfigError("verify.tolerance_scale: must be >= 0")

    plot_raw = _get(pairs, "output.plot", "false").lower()
    if plot_raw not in ("true", "false", "0", "1"):
        raise ConfigError("output.plot: must be true/false")
    try:
        seed = int(_get(pairs, "seed", "0"))
    except ValueError as err:
        raise ConfigError("seed: not an integer") from err

    return RunConfig(
        pairs=pairs,
        domain_kind=domain_kind,
        box=box,
        h=h,
        domain_file=domain_file,
        center=center,
        r_inner=r_inner,
        r_outer=r_outer,
        solver_kind=solver_kind,
        epsilon=epsilon,
        p_list=p_list,
        tol=tol,
        max_iter=max_iter,
        sweep=sweep,
        boundary_kind=boundary_kind,
        boundary_params=boundary_params,
        alpha=alpha,
        rates_mode=rates_mode,
        consistency_p=consistency_p,
        consistency_alpha=consistency_alpha,
        consistency_seminorm=consistency_seminorm,
        verify_samples=verify_samples,
        verify_tolerance_scale=verify_tol_scale,
        plot=plot_raw in ("true", "1"),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# realizing the configured objects


def make_domain(cfg: RunConfig) -> GridDomain:
    if cfg.domain_kind == "file":
        return grid_from_csv(cfg.domain_file)
    if cfg.domain_kind == "box":
        return build_grid(cfg.box, cfg.h)
    center = cfg.center if cfg.center is not None else np.zeros(cfg.dim)
    if cfg.domain_kind == "annulus":
        lo, hi = cfg.r_inner, cfg.r_outer

        def inside(pts):
            r = np.sqrt(((pts - center[None, :]) ** 2).sum(axis=1))
            return (r > lo) & (r < hi)

        return build_grid(cfg.box, cfg.h, inside)
    # punctured unit ball: 0 < |x - center| < 1
    def inside(pts):
        r = np.sqrt(((pts - center[None, :]) ** 2).sum(axis=1))
        return (r > 0) & (r < 1)

    return build_grid(cfg.box, cfg.h, inside)


def make_boundary(cfg: RunConfig, p: float) -> BoundaryData:
    params = cfg.boundary_params
    kind = cfg.boundary_kind
    if kind == "affine":
        grad_raw = params["gradient"]
        grad = (
            np.asarray(_as_floats("boundary.gradient", grad_raw))
            if grad_raw
            else np.eye(cfg.dim)[0]
        )
        if len(grad) != cfg.dim:
            raise ConfigError("boundary.gradient: dimension mismatch")
        return BoundaryData.affine(grad, params["offset"])
    if kind == "cone":
        apex_raw = params["apex"]
        apex = (
            np.asarray(_as_floats("boundary.apex", apex_raw))
            if apex_raw
            else cfg.box[:, 0] - np.ones(cfg.dim)
        )
        if len(apex) != cfg.dim:
            raise ConfigError("boundary.apex: dimension mismatch")
        return BoundaryData.cone(apex, params["slope"], params["offset"], params["exponent"])
    if kind == "radial":
        return BoundaryData.radial(p, cfg.dim)
    if kind == "aronsson":
        return BoundaryData.aronsson()
    if kind == "expr":
        return BoundaryData.from_expression(params["expr"])
    raise ConfigError("boundary.kind: file sources need a grid; use make_boundary_on_grid")


def make_boundary_on_grid(cfg: RunConfig, p: float, grid: GridDomain) -> BoundaryData:
    if cfg.boundary_kind == "file":
        return BoundaryData.from_file(cfg.boundary_params["file"], grid)
    return make_boundary(cfg, p)
