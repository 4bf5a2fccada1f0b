"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Run with `pytest tests/test_acceptance.py -v -s` to see the lines.
"""

import math
import time

import numpy as np
import pytest

from pinftylab import (
    RadialProblem,
    RateRow,
    ScalarField,
    aronsson,
    bound_explicit_rate,
    build_grid,
    fit_rate,
    holder_exponent,
    inner_parallel,
    lower_envelope,
    nonlocal_inf_laplacian,
    p_energy,
    p_energy_gradient,
    perturb_strict,
    radial_exact_error,
    radial_p_harmonic,
    slope_minus,
    solve_inf_harmonic,
    solve_p_harmonious,
    squeeze_bounds,
    sup_error,
    upper_envelope,
)
from pinftylab.cli import main
from pinftylab.solvers import BoundaryData
from pinftylab.verify import midrange_supersolution, random_subsolution, random_supersolution


def report(k, ok, detail):
    print(f"ACCEPTANCE {k:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {k}: {detail}"


def punctured_ball(h):
    def inside(pts):
        r = np.sqrt((pts**2).sum(axis=1))
        return (r > 0) & (r < 1)

    return build_grid([(-1, 1), (-1, 1)], h, inside)


def test_criterion_01_radial_exact_error_brute_force():
    t0 = time.perf_counter()
    t = np.linspace(0.0, 1.0, 10**6)
    worst = 0.0
    for d, p in ((2, 3.0), (2, 10.0), (3, 10.0), (5, 50.0)):
        beta = holder_exponent(p, d)
        brute = float((t**beta - t).max())
        worst = max(worst, abs(radial_exact_error(p, d) - brute))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 1.0
    report(1, ok, f"max |formula - brute| = {worst:.3e}, runtime {elapsed:.2f}s")


def test_criterion_02_asymptotic_inverse_p_constant():
    p = 10**4 + 1
    val = abs(math.e * p * radial_exact_error(float(p), 2) - 1.0)
    report(2, val <= 1e-2, f"|e*p*error - 1| = {val:.3e} at p = {p}")


def test_criterion_03_analytic_rate_fit():
    t0 = time.perf_counter()
    ps = [10.0, 20.0, 40.0, 80.0, 160.0]
    rows = [RateRow(p, 0.1, radial_exact_error(p, 2), None, None, 0.0) for p in ps]
    fit = fit_rate(rows)
    elapsed = time.perf_counter() - t0
    ok = -1.1 <= fit.exponent <= -0.9 and elapsed < 1.0
    report(3, ok, f"fitted exponent = {fit.exponent:.4f}, runtime {elapsed:.2f}s")


def test_criterion_04_theoretical_dominance():
    worst = -math.inf
    for p in np.geomspace(1e2, 1e5, 50):
        beta = holder_exponent(p, 2)
        bound = bound_explicit_rate(
            p, 2, beta, 1.0, 1.0, 1.0, 2.0, positive_gradient=True, grad_floor=1.0
        )
        worst = max(worst, radial_exact_error(p, 2) - bound)
    report(4, worst <= 0.0, f"max (error - bound) = {worst:.3e} over 50 log-spaced p")


def test_criterion_05_perturb_strict_exact_contract():
    t0 = time.perf_counter()
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    eps = 4 / 32
    m2 = inner_parallel(g, 2 * eps).flags
    rng = np.random.default_rng(2024)
    worst = math.inf
    for _ in range(100):
        v = midrange_supersolution(g, eps, rng)
        sup = np.abs(v.values).max()
        delta = 1.0 / (8.0 * sup)
        w = perturb_strict(v, delta, eps)
        lap_v = nonlocal_inf_laplacian(v, eps).values[m2]
        lap_w = nonlocal_inf_laplacian(w, eps).values[m2]
        sm = slope_minus(v, eps).values[m2]
        rhs = -lap_v + delta * sm**2
        point = (((-lap_w) - rhs) / np.maximum(1.0, np.abs(rhs))).min()
        norm_bound = 3 * sup**2 * delta
        norm = (norm_bound - np.abs(v.values - w.values).max()) / max(1.0, norm_bound)
        worst = min(worst, point, norm)
    elapsed = time.perf_counter() - t0
    ok = worst >= -1e-10 and elapsed < 30.0
    report(5, ok, f"worst relative margin = {worst:.3e} over 100 fields, runtime {elapsed:.1f}s")


def test_criterion_06_nonlocal_max_principle_contract():
    from pinftylab import check_nonlocal_max_principle

    g = build_grid([(0.0, 1.0), (0.0, 1.0)], 1 / 32)
    eps = 4 / 32
    rng = np.random.default_rng(99)
    worst = -math.inf
    accepted = 0
    while accepted < 100:
        u = random_subsolution(g, eps, rng)
        v = random_supersolution(g, eps, rng)
        rep = check_nonlocal_max_principle(u, v, 0.0, eps)
        if not rep.hypothesis_ok:
            continue
        accepted += 1
        scale = 1 + np.abs(u.values).max() + np.abs(v.values).max()
        worst = max(worst, rep.conclusion_gap - 1e-10 * scale)
    report(6, worst <= 0.0, f"worst gap excess = {worst:.3e} over 100 triples")


def test_criterion_07_approx_consistency_with_slack():
    def inside(pts):
        r = np.sqrt((pts**2).sum(axis=1))
        return (r > 0.25) & (r < 1)

    h = 1 / 128
    eps = 8 * h
    g = build_grid([(-1, 1), (-1, 1)], h, inside)
    problem = RadialProblem(2, 3.0)
    u = ScalarField(g, radial_p_harmonic(problem, g.coords))
    from pinftylab import consistency_bound

    bound = consistency_bound(0.5, 1.0, eps, 3.0, 2)
    slack = 8 * h / eps**2
    m2 = inner_parallel(g, 2 * eps).flags
    up = nonlocal_inf_laplacian(upper_envelope(u, eps), eps).values[m2]
    lo = nonlocal_inf_laplacian(lower_envelope(u, eps), eps).values[m2]
    upper_excess = (-up).max() - (bound * 1.1 + slack)
    lower_excess = -(bound * 1.1 + slack) - (-lo).min()
    ok = upper_excess <= 0 and lower_excess <= 0
    report(
        7,
        ok,
        f"upper excess {upper_excess:.3e}, lower excess {lower_excess:.3e} "
        f"(bound {bound:.3f}, slack {slack:.3f})",
    )


def test_criterion_08_max_ball_realized():
    h = 1 / 64
    eps = 4 * h
    g = build_grid([(-1, 1), (-1, 1)], h)
    u, rep = solve_inf_harmonic(g, BoundaryData.aronsson(), eps, tol=1e-8, sweep="gauss-seidel")
    assert rep.converged
    m2 = inner_parallel(g, 2 * eps).flags
    up = nonlocal_inf_laplacian(upper_envelope(u, eps), eps).values[m2]
    lo = nonlocal_inf_laplacian(lower_envelope(u, eps), eps).values[m2]
    cap = 1e-6 + 4 * h / eps**2
    ok = (-up).max() <= cap and (-lo).min() >= -cap
    report(
        8,
        ok,
        f"max -L(u^eps) = {(-up).max():.3e}, min -L(u_eps) = {(-lo).min():.3e}, cap {cap:.3f}",
    )


def test_criterion_09_solver_oracles_refinement():
    errs_inf = []
    for n in (32, 64):
        g = build_grid([(-1, 1), (-1, 1)], 1 / n)
        u, rep = solve_inf_harmonic(g, BoundaryData.aronsson(), 4 / n, tol=1e-8, sweep="gauss-seidel")
        assert rep.converged
        errs_inf.append(np.abs(u.values - aronsson(g.coords)).max())
    problem = RadialProblem(2, 10.0)
    errs_p = []
    for n in (32, 64):
        g = punctured_ball(1 / n)
        u, rep = solve_p_harmonious(
            g, BoundaryData.radial(10.0, 2), 4 / n, 10.0, tol=1e-8, sweep="gauss-seidel"
        )
        assert rep.converged
        errs_p.append(np.abs(u.values - radial_p_harmonic(problem, g.coords))[g.is_interior].max())
    ok = errs_inf[0] > errs_inf[1] and errs_p[0] > errs_p[1]
    report(
        9,
        ok,
        f"aronsson {errs_inf[0]:.4f} > {errs_inf[1]:.4f}; radial p=10 {errs_p[0]:.4f} > {errs_p[1]:.4f}",
    )


def test_criterion_10_numeric_rate_trend():
    t0 = time.perf_counter()
    h = 1 / 64
    eps = 4 * h
    g = build_grid([(-1, 1), (-1, 1)], h)
    gb = BoundaryData.aronsson()
    u_inf, rep = solve_inf_harmonic(g, gb, eps, tol=1e-8, sweep="gauss-seidel")
    assert rep.converged
    rows = []
    for p in (4.0, 8.0, 16.0, 32.0, 64.0):
        u_p, rp = solve_p_harmonious(g, gb, eps, p, tol=1e-8, sweep="gauss-seidel")
        assert rp.converged
        rows.append(RateRow(p, eps, sup_error(u_p, u_inf), None, None, 0.0))
    errs = [r.sup_error for r in rows]
    fit = fit_rate(rows)
    elapsed = time.perf_counter() - t0
    nonincreasing = all(a >= b for a, b in zip(errs, errs[1:]))
    ok = nonincreasing and fit.exponent <= -0.2 and elapsed < 600.0
    report(
        10,
        ok,
        f"errors {['%.4f' % e for e in errs]}, exponent {fit.exponent:.3f}, runtime {elapsed:.0f}s",
    )


def test_criterion_11_energy_gradient_oracle():
    g = build_grid([(0.0, 1.0), (0.0, 1.0)], 1 / 4)
    rng = np.random.default_rng(7)
    step = 1e-6
    worst = 0.0
    for _ in range(5):
        vals = rng.random(g.n_nodes)
        fld = ScalarField(g, vals)
        grad = p_energy_gradient(fld, 4.0)
        fd = np.empty(g.n_nodes)
        for i in range(g.n_nodes):
            vp, vm = vals.copy(), vals.copy()
            vp[i] += step
            vm[i] -= step
            fd[i] = (
                p_energy(ScalarField(g, vp), 4.0) - p_energy(ScalarField(g, vm), 4.0)
            ) / (2 * step)
        worst = max(worst, np.abs(fd - grad).max() / max(1.0, np.abs(grad).max()))
    report(11, worst <= 1e-6, f"worst relative gradient mismatch = {worst:.3e}")


def test_criterion_12_squeeze_inequality():
    betas = np.linspace(0.0, 1.0, 1002)[1:-1]
    ok = True
    worst = math.inf
    for beta in betas:
        lo, hi = squeeze_bounds(beta)
        mid = 2.0 ** (-beta) - 0.5
        worst = min(worst, mid - lo, hi - mid)
        ok &= lo <= mid <= hi
    report(12, ok, f"squeeze margins >= {worst:.3e} over {len(betas)} exponents")


RATES_DETERMINISM_CFG = """
domain.kind = box
domain.box = -1,1,-1,1
domain.h = 0.125
solver.epsilon = 0.375
solver.p = 4,8,16
solver.tol = 1e-9
solver.sweep = gauss-seidel
boundary.kind = aronsson
rates.mode = numeric
seed = 11
"""


def test_criterion_13_determinism(tmp_path):
    cfg = tmp_path / "rates.cfg"
    cfg.write_text(RATES_DETERMINISM_CFG.strip() + "\n")
    outputs = []
    for tag, threads in (("a", "1"), ("b", "4"), ("c", "1")):
        out = tmp_path / tag
        code = main(["rates", "--config", str(cfg), "--out", str(out), "--threads", threads])
        assert code == 0
        outputs.append((out / "rates.csv").read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    report(13, ok, f"rates.csv identical across reruns and thread counts ({len(outputs[0])} bytes)")
