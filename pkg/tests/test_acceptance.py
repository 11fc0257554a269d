"""Acceptance criteria 1-9, runnable under pytest or as a script.

Each ``criterion_N`` returns ``(passed, detail)``; the pytest wrapper
records one summary line per criterion, and running this file directly
prints the same lines.
"""
import math
import sys
import time

import numpy as np

from fannoflow.background import (
    FannoFlow,
    choking_length_from_ode,
    construct_transonic_shock,
    downstream_mach,
    integrate_background,
    max_length,
)
from fannoflow.elliptic import analyze, assemble_coefficients, check_s_condition, solve_nonlocal_elliptic, sub_threshold_intervals, sweep_mu
from fannoflow.gas import GasModel
from fannoflow.iteration import (
    BoundaryData,
    IterationConfig,
    PerturbationState,
    SolverContext,
    euler_residual,
    nonlinear_terms,
    reconstruct,
    robin_terms,
    solve_fixed_point,
)
from fannoflow.spectral import DuctSpec, basis_mask, synthesize
from fannoflow.transport import march, trace_characteristics

from helpers import basis, elliptic_setup, manufactured


def _slopes(hs, errs):
    return np.log(np.array(errs[:-1]) / errs[1:]) / np.log(np.array(hs[:-1]) / hs[1:])


def criterion_1():
    t0 = time.perf_counter()
    gas = GasModel(gamma=1.4, mu=0.01)
    M0 = 0.5
    L = 0.9 * max_length(M0, gas)
    prof = integrate_background(M0, L, gas, n_steps=2000, p_exit=1.0)
    M = prof.M
    relation = 1 / M**2 + np.log(M**2) - (1 / M0**2 + math.log(M0**2) - gas.mu * 2.4 * prof.x0)
    worst = float(np.abs(relation).max())
    L_ode = choking_length_from_ode(M0, gas)
    L_formula = max_length(M0, gas)
    rel = abs(L_ode / L_formula - 1)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and rel <= 1e-3 and elapsed < 1.0
    return ok, f"implicit residual {worst:.2e}, L_M0 {L_formula:.6f} vs ODE {L_ode:.6f} (rel {rel:.1e}), {elapsed:.2f}s"


def criterion_2():
    gas = GasModel(gamma=1.4, mu=0.01)
    hs, errs, drifts = [], [], []
    for n in (250, 500, 1000, 2000):
        prof = integrate_background(0.5, 60.0, gas, n_steps=n, p_exit=1.0)
        inv = prof.invariants()
        drifts.append(max(inv["mass_flux_drift"], inv["entropy_drift"]))
        h = prof.x0[1]
        dE = (prof.E[2:] - prof.E[:-2]) / (2 * h)
        hs.append(h)
        errs.append(float(np.abs(dE + gas.mu * prof.u[1:-1] ** 2).max()))
    slopes = _slopes(hs, errs)
    ok = max(drifts) <= 1e-8 and np.all(np.abs(slopes - 2.0) <= 0.1)
    return ok, f"max drift {max(drifts):.1e}, energy residual slopes {np.round(slopes, 3).tolist()}"


def criterion_3():
    gas = GasModel(gamma=1.4, mu=0.01)
    err = abs(downstream_mach(2.0, gas) - math.sqrt(1 / 3))
    sol = construct_transonic_shock(2.0, 4.0, 10.0, gas, p_entry=1.0, n_steps=1000)
    jumps = sol.jump_residuals()
    ok = err <= 1e-12 and max(jumps.values()) <= 1e-8 and sol.M_plus < sol.M_minus
    return ok, (f"|M+ - sqrt(1/3)| = {err:.1e}, jump residuals max {max(jumps.values()):.1e}, "
                f"M- = {sol.M_minus:.4f} > M+ = {sol.M_plus:.4f}")


def criterion_4():
    t0 = time.perf_counter()
    n, mode_cut = 500, 16
    x = DuctSpec.from_steps(1.0, n, 32, mode_cut).x0
    gas = GasModel(gamma=1.4, mu=0.0)

    def coeffs(mu):
        g = gas.with_mu(mu)
        return assemble_coefficients(FannoFlow.through(g, 0.5, 1.0, 1.0).sample(x), g)

    base = check_s_condition(coeffs(0.0), mode_cut=mode_cut)
    mus = np.linspace(0.001, 0.1, 100)
    reports = sweep_mu(coeffs, mus, mode_cut=mode_cut)
    intervals = sub_threshold_intervals(mus, reports)
    isolated = all(count <= 2 for _, _, count in intervals) and len(intervals) <= 10
    elapsed = time.perf_counter() - t0
    ok = base.verdict == "satisfied" and isolated and elapsed < 30
    where = ", ".join(f"[{a:.4f}, {b:.4f}]" for a, b, _ in intervals) or "none"
    return ok, (f"mu=0 {base.verdict} over {base.scanned_modes} modes (min |theta| {base.min_abs_vartheta:.2e}); "
                f"sweep of 100 mu: {len(intervals)} sub-threshold intervals ({where}); {elapsed:.1f}s")


def criterion_5():
    gas, spec, flow, c = elliptic_setup(2000)
    p_star, h_half, g0, g1 = manufactured(spec, flow, c)
    p = solve_nonlocal_elliptic(None, g0, g1, c, spec, h_half=h_half)
    err = float(np.abs(p - p_star).max())
    zero = np.zeros((spec.n_t, spec.n_t))
    p0 = solve_nonlocal_elliptic(np.zeros(spec.shape), zero, zero, c, spec)
    ok = err <= 1e-6 and not np.any(p0)
    return ok, f"manufactured error {err:.2e} (5 modes, n_steps=2000), homogeneous output max {np.abs(p0).max():.1e}"


def criterion_6():
    gas, spec, flow, c = elliptic_setup(200)
    rng = np.random.default_rng(6)
    mask = basis_mask(spec.mode_cut)
    x = spec.x0[:, None, None]

    def data():
        h = synthesize(rng.standard_normal(mask.shape + (spec.n0,)) * mask[..., None], spec) * (1 + x)
        return h, synthesize(rng.standard_normal(mask.shape) * mask, spec), synthesize(rng.standard_normal(mask.shape) * mask, spec)

    d1, d2 = data(), data()
    a, b = 1.7, -0.6
    combo = solve_nonlocal_elliptic(*(a * u + b * v for u, v in zip(d1, d2)), c, spec)
    sup = a * solve_nonlocal_elliptic(*d1, c, spec) + b * solve_nonlocal_elliptic(*d2, c, spec)
    lin = float(np.abs(combo - sup).max() / max(1.0, np.abs(combo).max()))
    X1, X2 = spec.cross_section()
    leak = 0.0
    for i, m in ((1, (0, 0)), (2, (3, 0)), (3, (1, 4)), (4, (8, 8))):
        shape = basis(i, m, X1, X2)
        p = solve_nonlocal_elliptic(np.cos(x) * shape, shape, 0.5 * shape, c, spec)
        coef = analyze(p, spec).coeffs
        coef[i - 1, m[0], m[1]] = 0.0
        leak = max(leak, float(np.abs(coef).max()))
    ok = lin <= 1e-10 and leak <= 1e-12
    return ok, f"superposition error {lin:.1e}, foreign-mode leakage {leak:.1e}"


def criterion_7():
    rng = np.random.default_rng(7)
    spec = DuctSpec.from_steps(1.0, 50, 32, 8)
    x0, X1, X2 = spec.mesh()
    worst = 0.0
    for _ in range(20):
        amp = rng.uniform(1e-3, 5e-2)
        u0 = np.broadcast_to(0.8 + 0.2 * rng.random() + 0.1 * np.cos(X1 + rng.uniform(0, 6)) * (1 + x0), spec.shape)
        ut = []
        for _ in range(2):
            m1, m2 = rng.integers(0, 4, size=2)
            ut.append(np.broadcast_to(amp * np.sin(m1 * X1 + m2 * X2 + rng.uniform(0, 6) + x0), spec.shape))
        cm = trace_characteristics((u0, *ut), spec)
        C = spec.length / u0.min()
        worst = max(worst, cm.max_displacement / (C * np.sqrt(ut[0] ** 2 + ut[1] ** 2).max()))
    # pure advection under a constant drift, and damped marching with a variable source
    a = 0.05
    one = np.ones(spec.shape)
    drift = trace_characteristics((one, a * one, 0 * one), spec)
    b = (np.sin(X1) * np.cos(2 * X2))[0]
    adv = float(np.abs(drift.pull_back(b) - np.sin(X1 - a * x0) * np.cos(2 * X2)).max())
    kappa = 0.2
    hs, errs = [], []
    for n in (40, 80, 160):
        s = DuctSpec.from_steps(1.0, n, 16, 4)
        y0, Y1, Y2 = s.mesh()
        src = np.broadcast_to(np.cos(3 * y0) * np.sin(Y1), s.shape)
        I = march(None, src, kappa, np.sin(Y1)[0], spec=s)
        # I' = -kappa I + cos(3x) sin(x1), I(0) = sin(x1)
        w = 3.0
        particular = (kappa * np.cos(w * y0) + w * np.sin(w * y0)) / (kappa**2 + w**2)
        exact = (np.exp(-kappa * y0) * (1 - kappa / (kappa**2 + w**2)) + particular) * np.sin(Y1)
        hs.append(s.h)
        errs.append(float(np.abs(I - exact).max()))
    order = _slopes(hs, errs)
    ok = worst <= 1.0 and adv <= 1e-12 and np.all(order > 3.7)
    return ok, (f"max displacement / (C |u'|) = {worst:.3f} over 20 fields; advection error {adv:.1e}; "
                f"damped march orders {np.round(order, 2).tolist()}")


def _context(n, mu=0.1):
    gas = GasModel(gamma=1.4, mu=mu)
    prof = integrate_background(0.5, 1.0, gas, n_steps=n, p_exit=1.0)
    return SolverContext(prof, gas, DuctSpec.from_steps(1.0, n, 32, 8))


def criterion_8():
    t0 = time.perf_counter()
    ctx = _context(500)
    spec = ctx.spec
    _, report0 = solve_fixed_point(BoundaryData.from_deviations(ctx), ctx)
    zero_ok = report0.iters == 1 and report0.solution_norm <= 1e-12
    X1, X2 = spec.cross_section()
    rows = []
    for eps in (1e-3, 5e-4, 2.5e-4):
        bd = BoundaryData.from_deviations(ctx, dp1=eps * np.cos(X1))
        U, rep = solve_fixed_point(bd, ctx, IterationConfig(eps=eps))
        rows.append((eps, max(rep.ratio_estimates), rep.solution_norm / eps, rep.iters))
    ratios = [r[1] for r in rows]
    scaled = [r[2] for r in rows]
    ratio_ok = all(a > b for a, b in zip(ratios, ratios[1:]))
    stable = max(scaled) / min(scaled) <= 1.2
    solve_time = time.perf_counter() - t0
    # grid refinement of the converged state at eps = 1e-3
    hs, errs = [], []
    for n in (50, 100, 200):
        c = _context(n)
        bd = BoundaryData.from_deviations(c, dp1=1e-3 * np.cos(c.spec.cross_section()[0]))
        U, _ = solve_fixed_point(bd, c, IterationConfig(eps=1e-3))
        _, norms = euler_residual(reconstruct(U, c), c.gas, c.spec)
        hs.append(c.spec.h)
        errs.append(max(v["max"] for v in norms.values()))
    order = _slopes(hs, errs)
    elapsed = time.perf_counter() - t0
    ok = zero_ok and ratio_ok and stable and np.all(np.abs(order - 2.0) <= 0.2) and solve_time < 300
    table = "; ".join(f"eps {e:.2e}: ratio {r:.2e}, |U|/eps {s:.3f}, {k} iters" for e, r, s, k in rows)
    return ok, (f"zero data -> {report0.iters} iteration; {table}; residual orders {np.round(order, 2).tolist()}; "
                f"n_steps=500 runs {solve_time:.0f}s, total {elapsed:.0f}s")


def criterion_9():
    ctx = _context(100)
    spec = ctx.spec
    x0, X1, X2 = spec.mesh()
    full = lambda f: np.broadcast_to(f, spec.shape).copy()
    base = PerturbationState(
        full(np.cos(X1) * (1 + x0) + 0.5 * np.sin(X2) * x0**2),
        full(0.3 * np.cos(X1 + X2) * (1 - x0)),
        full(0.2 * np.sin(X1) + 0 * x0),
        np.stack([full(0.5 * np.sin(X2) * np.cos(x0) + 0 * X1), full(0.4 * np.cos(X1) * (1 + x0) + 0 * X2)]),
    )
    S1, S2 = spec.cross_section()
    sizes = {"F": [], "H": [], "G2": [], "F6": []}
    epss = (1e-2, 1e-3, 1e-4)
    for e in epss:
        U = base.scaled(e)
        fs = reconstruct(U, ctx)
        terms = nonlinear_terms(U, ctx, trace_characteristics(tuple(fs.u), spec), fs)
        bd = BoundaryData.from_deviations(ctx, dE0=e * 0.3 * np.cos(S1 + S2), dA0=e * 0.2 * np.sin(S1),
                                          u_t=e * np.stack([0.5 * np.sin(S2), 0.4 * np.cos(S1)]))
        G2 = robin_terms(U, bd, ctx)[1]
        for k, v in (("F", terms["F5"] + terms["F6"]), ("H", terms["H"]), ("G2", G2), ("F6", terms["F6"])):
            sizes[k].append(float(np.abs(v).max()))
    slopes = {k: float(np.polyfit(np.log(epss), np.log(v), 1)[0]) for k, v in sizes.items()}
    ok = all(abs(s - 2.0) <= 0.2 for s in slopes.values())
    return ok, "log-log slopes " + ", ".join(f"{k} {s:.3f}" for k, s in slopes.items())


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7, criterion_8, criterion_9]


def _line(k, ok, detail):
    return f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}"


def _check(k, acceptance_log):
    ok, detail = CRITERIA[k - 1]()
    line = _line(k, ok, detail)
    acceptance_log.append(line)
    print(line)
    assert ok, line


def test_criterion_1(acceptance_log):
    _check(1, acceptance_log)


def test_criterion_2(acceptance_log):
    _check(2, acceptance_log)


def test_criterion_3(acceptance_log):
    _check(3, acceptance_log)


def test_criterion_4(acceptance_log):
    _check(4, acceptance_log)


def test_criterion_5(acceptance_log):
    _check(5, acceptance_log)


def test_criterion_6(acceptance_log):
    _check(6, acceptance_log)


def test_criterion_7(acceptance_log):
    _check(7, acceptance_log)


def test_criterion_8(acceptance_log):
    _check(8, acceptance_log)


def test_criterion_9(acceptance_log):
    _check(9, acceptance_log)


if __name__ == "__main__":
    failed = 0
    for k, fn in enumerate(CRITERIA, start=1):
        ok, detail = fn()
        failed += not ok
        print(_line(k, ok, detail), flush=True)
    sys.exit(1 if failed else 0)
