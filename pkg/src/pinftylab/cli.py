"""Batch front-end.

Subcommands:
    solve           run the configured solver for each p, write field CSVs
    rates           p-sweep of sup errors and theoretical bounds
    verify          seeded property-suite battery; nonzero exit on failure
    consistency     envelope-operator bound check for a p-harmonic sample
    example-radial  closed-form punctured-ball error table, no PDE solve

Common flags: --config <path>, --out <dir>, --threads <n>, --plot.
Exit codes: 0 success, 1 config error, 2 verification failure,
3 solver non-convergence.  Numeric output is printed with 17 significant
digits.  CSV data artifacts are byte-identical across reruns and thread
counts; the manifest and the run log carry wall times and are exempt.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    RateFit,
    RateRow,
    bound_explicit_rate,
    fit_rate,
    gradient_floor,
    holder_seminorm,
    optimal_epsilon,
    rate_table_to_csv,
    sup_error,
)
from .cones import (
    RadialProblem,
    holder_exponent,
    radial_exact_error,
    radial_lower_bound,
    radial_p_harmonic,
    squeeze_bounds,
)
from .config import (
    RunConfig,
    load_config_text,
    make_boundary_on_grid,
    make_domain,
    parse_run_config,
)
from .errors import ConfigError, DomainError, ExprError, SolveError
from .grid import ScalarField, field_to_csv, grid_to_csv
from .nonlocal_ops import check_approx_consistency
from .solvers import (
    append_runlog,
    solve_inf_harmonic,
    solve_p_energy,
    solve_p_harmonious,
)
from .verify import run_property_suite

_FMT = "%.17g"


def _fmt(x: float) -> str:
    if isinstance(x, float) and math.isinf(x):
        return "inf"
    return _FMT % x


def _p_tag(p: float) -> str:
    return "inf" if math.isinf(p) else _FMT % p


# ---------------------------------------------------------------------------
# shared plumbing


def _load_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("--config: required for this subcommand")
    return parse_run_config(load_config_text(args.config))


def _resolve_alpha(cfg: RunConfig, p: float, d: int) -> float:
    if cfg.alpha is not None:
        return cfg.alpha
    if math.isinf(p):
        return 1.0
    return max(1.0 - d / p, 1e-6)


def _resolve_eps(cfg: RunConfig, p: float, d: int, h: float) -> float:
    """Explicit eps, or the rate-optimal one snapped to the lattice.

    Auto mode uses the general-rate optimum for finite p and falls back to
    4h at p = infinity (where the optimum degenerates to 0).
    """
    if cfg.epsilon is not None:
        return cfg.epsilon
    if math.isinf(p):
        return 4.0 * h
    alpha = _resolve_alpha(cfg, p, d)
    eps = optimal_epsilon(p, d, alpha)
    return max(3.0 * h, round(eps / h) * h)


def _write_manifest(out: Path, command: str, cfg_hash: str, wall: float, extra: dict | None = None) -> None:
    lines = {
        "command": command,
        "config_hash": cfg_hash,
        "package_version": __version__,
        "python_version": sys.version.split()[0],
        "numpy_version": np.__version__,
        "wall_seconds": f"{wall:.3f}",
    }
    if extra:
        lines.update({k: str(v) for k, v in extra.items()})
    with open(out / "manifest.txt", "w") as fh:
        for key in sorted(lines):
            fh.write(f"{key}={lines[key]}\n")


def _solve_one(cfg: RunConfig, grid, g, p: float, eps: float):
    if cfg.solver_kind == "p_energy" and not math.isinf(p):
        return solve_p_energy(grid, g, p, tol=cfg.tol, max_iter=min(cfg.max_iter, 20_000)), "p_energy"
    if math.isinf(p):
        field_report = solve_inf_harmonic(
            grid, g, eps, tol=cfg.tol, max_iter=cfg.max_iter, sweep=cfg.sweep
        )
        return field_report, "inf"
    field_report = solve_p_harmonious(
        grid, g, eps, p, tol=cfg.tol, max_iter=cfg.max_iter, sweep=cfg.sweep
    )
    return field_report, "p_harmonious"


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_domain(cfg)
    grid_to_csv(grid, out / "grid.csv")

    p_values = [math.inf] if cfg.solver_kind == "inf" else cfg.p_list
    failed = False
    for i, p in enumerate(p_values):
        g = make_boundary_on_grid(cfg, p, grid)
        eps = _resolve_eps(cfg, p, grid.dim, grid.h)
        (field, report), solver_name = _solve_one(cfg, grid, g, p, eps)
        tag = _p_tag(p)
        field_to_csv(field, out / f"field_p{tag}.csv")
        append_runlog(out / "runlog.csv", f"solve-{i:03d}", solver_name, p, eps, grid.h, report)
        print(
            f"solve p={tag}: iterations={report.iterations} "
            f"residual={_fmt(report.residual)} converged={report.converged}"
        )
        if not report.converged:
            failed = True
        if (args.plot or cfg.plot) and grid.dim == 2:
            from .plotting import save_field_heatmap

            save_field_heatmap(grid, field, out / f"field_p{tag}.svg", title=f"p={tag}")
    _write_manifest(out, "solve", cfg.hash, time.perf_counter() - t0)
    return 3 if failed else 0


def _rates_analytic(cfg: RunConfig, out: Path) -> list[RateRow]:
    d = cfg.dim
    if d < 2:
        raise ConfigError("solver.p: analytic rates need a domain dimension >= 2")
    rows = []
    for p in cfg.p_list:
        if math.isinf(p):
            continue
        if not p > d:
            raise ConfigError(f"solver.p: need p > d, got p={p} with d={d}")
        beta = holder_exponent(p, d)
        alpha = beta if cfg.alpha is None else cfg.alpha
        eps = optimal_epsilon(p, d, alpha)
        err = radial_exact_error(p, d)
        try:
            bound_gen = bound_explicit_rate(p, d, alpha, 1.0, 1.0, 1.0, 2.0)
        except ValueError:
            bound_gen = None
        try:
            bound_pos = bound_explicit_rate(
                p, d, alpha, 1.0, 1.0, 1.0, 2.0, positive_gradient=True, grad_floor=1.0
            )
        except ValueError:
            bound_pos = None
        rows.append(
            RateRow(
                p=p,
                epsilon=eps,
                sup_error=err,
                bound_general=bound_gen,
                bound_posgrad=bound_pos,
                boundary_gap=0.0,
            )
        )
    return rows


def _rates_numeric(cfg: RunConfig, out: Path) -> list[RateRow]:
    grid = make_domain(cfg)
    d = grid.dim
    finite_ps = sorted(p for p in cfg.p_list if not math.isinf(p))
    if not finite_ps:
        raise ConfigError("solver.p: numeric rates need at least one finite p")
    eps = _resolve_eps(cfg, finite_ps[-1], d, grid.h)

    g_inf = make_boundary_on_grid(cfg, math.inf, grid)
    u_inf, rep_inf = solve_inf_harmonic(
        grid, g_inf, eps, tol=cfg.tol, max_iter=cfg.max_iter, sweep=cfg.sweep
    )
    append_runlog(out / "runlog.csv", "rates-inf", "inf", math.inf, eps, grid.h, rep_inf)
    if not rep_inf.converged:
        raise SolveError("midrange solver did not converge in the rate sweep")

    lip_inf = holder_seminorm(u_inf, 1.0).value
    sup_inf = float(np.abs(u_inf.values).max())
    try:
        gamma = gradient_floor(u_inf, eps)
    except (DomainError, ValueError):
        gamma = 0.0  # no 2*eps inner set: positive-gradient bound unavailable
    bvals_inf = g_inf.evaluate(grid.coords[grid.boundary_ids])

    rows = []
    for i, p in enumerate(finite_ps):
        g_p = make_boundary_on_grid(cfg, p, grid)
        u_p, rep = solve_p_harmonious(
            grid, g_p, eps, p, tol=cfg.tol, max_iter=cfg.max_iter, sweep=cfg.sweep
        )
        append_runlog(out / "runlog.csv", f"rates-{i:03d}", "p_harmonious", p, eps, grid.h, rep)
        if not rep.converged:
            raise SolveError(f"p-harmonious solver did not converge at p={p}")
        err = sup_error(u_p, u_inf)
        gap = float(np.abs(g_p.evaluate(grid.coords[grid.boundary_ids]) - bvals_inf).max())
        alpha = _resolve_alpha(cfg, p, d)
        seminorm_p = holder_seminorm(u_p, alpha).value
        bound_gen = bound_pos = None
        if 0 < eps < 0.5 and seminorm_p > 0 and sup_inf > 0:
            try:
                bound_gen = bound_explicit_rate(
                    p, d, alpha, seminorm_p, lip_inf, sup_inf, grid.diameter, boundary_gap=gap
                )
            except ValueError:
                bound_gen = None
            if gamma > 0:
                bound_pos = bound_explicit_rate(
                    p,
                    d,
                    alpha,
                    seminorm_p,
                    lip_inf,
                    sup_inf,
                    grid.diameter,
                    boundary_gap=gap,
                    positive_gradient=True,
                    grad_floor=gamma,
                )
        rows.append(
            RateRow(
                p=p,
                epsilon=eps,
                sup_error=err,
                bound_general=bound_gen,
                bound_posgrad=bound_pos,
                boundary_gap=gap,
            )
        )
    return rows


def cmd_rates(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if cfg.rates_mode == "analytic":
        rows = _rates_analytic(cfg, out)
    else:
        rows = _rates_numeric(cfg, out)

    fit: RateFit | None
    try:
        fit = fit_rate(rows)
    except ValueError:
        fit = None
    rate_table_to_csv(rows, out / "rates.csv", fit)
    for row in rows:
        print(f"rates p={_fmt(row.p)}: sup_error={_fmt(row.sup_error)}")
    if fit is not None:
        print(f"rates fit: exponent={_fmt(fit.exponent)} residual={_fmt(fit.residual)}")
    if args.plot or cfg.plot:
        from .plotting import save_rate_plot

        save_rate_plot(rows, fit, out / "rates.svg")
    _write_manifest(out, "rates", cfg.hash, time.perf_counter() - t0, {"mode": cfg.rates_mode})
    return 0


def cmd_verify(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_domain(cfg)
    eps = _resolve_eps(cfg, math.inf, grid.dim, grid.h)
    results = run_property_suite(
        grid,
        eps,
        seed=cfg.seed,
        samples=cfg.verify_samples,
        tol_scale=cfg.verify_tolerance_scale,
    )
    with open(out / "verify.csv", "w", newline="") as fh:
        fh.write("property,nodes_checked,worst_margin,pass\n")
        for res in results:
            fh.write(
                f"{res.name},{res.nodes_checked},{_fmt(res.worst_margin)},"
                f"{'pass' if res.passed else 'FAIL'}\n"
            )
    all_ok = True
    for res in results:
        status = "pass" if res.passed else "FAIL"
        print(
            f"verify {res.name}: nodes={res.nodes_checked} "
            f"worst_margin={_fmt(res.worst_margin)} {status}"
        )
        all_ok &= res.passed
    _write_manifest(out, "verify", cfg.hash, time.perf_counter() - t0, {"seed": cfg.seed})
    return 0 if all_ok else 2


def cmd_consistency(args) -> int:
    t0 = time.perf_counter()
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = make_domain(cfg)
    d = grid.dim
    p = cfg.consistency_p
    if math.isinf(p) or not p > d:
        raise ConfigError("consistency.p: need d < p < infinity")
    eps = _resolve_eps(cfg, p, d, grid.h)
    if not 0 < eps < 0.5:
        raise ConfigError("solver.epsilon: consistency checks need eps in (0, 1/2)")
    alpha = cfg.consistency_alpha if cfg.consistency_alpha is not None else holder_exponent(p, d)

    if cfg.boundary_kind == "radial":
        problem = RadialProblem(d, p)
        u_p = ScalarField(grid, radial_p_harmonic(problem, grid.coords))
        source = "radial-sample"
    else:
        g = make_boundary_on_grid(cfg, p, grid)
        u_p, rep = solve_p_harmonious(
            grid, g, eps, p, tol=cfg.tol, max_iter=cfg.max_iter, sweep=cfg.sweep
        )
        append_runlog(out / "runlog.csv", "consistency-000", "p_harmonious", p, eps, grid.h, rep)
        if not rep.converged:
            raise SolveError("p-harmonious solver did not converge for the consistency check")
        source = "numeric-solve"

    report = check_approx_consistency(u_p, alpha, eps, p, seminorm=cfg.consistency_seminorm)
    # pass rule: measured operator extremes under 1.1 * bound + lattice slack
    headroom = 0.1 * report.bound
    ok = report.margin + headroom >= 0
    with open(out / "consistency.csv", "w", newline="") as fh:
        fh.write("p,alpha,epsilon,seminorm,sup_upper,inf_lower,bound,slack,margin,pass\n")
        fh.write(
            ",".join(
                [
                    _fmt(p),
                    _fmt(alpha),
                    _fmt(eps),
                    _fmt(report.seminorm),
                    _fmt(report.sup_upper),
                    _fmt(report.inf_lower),
                    _fmt(report.bound),
                    _fmt(report.slack),
                    _fmt(report.margin),
                    "pass" if ok else "FAIL",
                ]
            )
            + "\n"
        )
    print(
        f"consistency p={_fmt(p)} ({source}): sup_upper={_fmt(report.sup_upper)} "
        f"bound={_fmt(report.bound)} slack={_fmt(report.slack)} "
        f"{'pass' if ok else 'FAIL'}"
    )
    _write_manifest(out, "consistency", cfg.hash, time.perf_counter() - t0)
    return 0 if ok else 2


def cmd_example_radial(args) -> int:
    t0 = time.perf_counter()
    if args.config:
        cfg = parse_run_config(load_config_text(args.config))
        d = cfg.dim
        ps = [p for p in cfg.p_list if not math.isinf(p)]
        cfg_hash = cfg.hash
        plot = args.plot or cfg.plot
    else:
        d = 2
        ps = [10.0, 20.0, 40.0, 80.0, 160.0]
        cfg_hash = "builtin-defaults"
        plot = args.plot
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    errors, lowers, bounds = [], [], []
    with open(out / "radial.csv", "w", newline="") as fh:
        fh.write("p,beta,exact_error,halfpoint_value,squeeze_lower,squeeze_upper,bound_posgrad\n")
        for p in ps:
            beta = holder_exponent(p, d)
            err = radial_exact_error(p, d)
            half = radial_lower_bound(p, d)
            lo, hi = squeeze_bounds(beta)
            try:
                bound = bound_explicit_rate(
                    p, d, beta, 1.0, 1.0, 1.0, 2.0, positive_gradient=True, grad_floor=1.0
                )
            except ValueError:
                bound = None  # optimal eps leaves (0, 1/2) at small p
            row = [_fmt(v) for v in (p, beta, err, half, lo, hi)]
            row.append(_fmt(bound) if bound is not None else "")
            fh.write(",".join(row) + "\n")
            errors.append(err)
            lowers.append(half)
            bounds.append(bound)
            print(
                f"example-radial p={_fmt(p)}: exact_error={_fmt(err)}"
                + (f" bound={_fmt(bound)}" if bound is not None else "")
            )
    if plot:
        from .plotting import save_radial_example_plot

        save_radial_example_plot(ps, errors, lowers, bounds, out / "radial.svg")
    _write_manifest(out, "example-radial", cfg_hash, time.perf_counter() - t0)
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinftylab",
        description="Grid solvers and rate experiments for the p->infinity limit "
        "of p-harmonic Dirichlet problems.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, needs_config in (
        ("solve", cmd_solve, True),
        ("rates", cmd_rates, True),
        ("verify", cmd_verify, True),
        ("consistency", cmd_consistency, True),
        ("example-radial", cmd_example_radial, False),
    ):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=False, help="key=value config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=1, help="worker threads (results are thread-count independent)")
        sp.add_argument("--plot", action="store_true", help="also write SVG figures")
        sp.set_defaults(func=func, needs_config=needs_config)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ExprError, DomainError, OSError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except SolveError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return 3
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
