"""Command-line front end.

Usage: ``fannoflow <command> --config run.json --out DIR [options]``.
Every command validates the whole configuration before computing and
writes its outputs atomically: on failure nothing reaches ``--out``.

Exit codes: 0 success, 1 other solver failure, 2 choking, 3 regime
(supersonic background where a subsonic one is needed, S-Condition not
satisfied), 4 divergence, 64 configuration error.
"""
import argparse
import json
import os
import sys

import numpy as np

from . import io
from .background import (
    CSV_COLUMNS,
    choking_length_from_ode,
    construct_transonic_shock,
    integrate_background,
    max_length,
)
from .config import ConfigError, load_config
from .elliptic import assemble_coefficients, check_s_condition, sub_threshold_intervals, sweep_mu
from .errors import ChokingError, DivergenceError, DomainError, FannoError, NearResonanceError, NotSubsonicError, StageError
from .iteration import (
    BoundaryData,
    IterationConfig,
    PerturbationState,
    SolverContext,
    background_state,
    discrete_norm,
    euler_residual,
    reconstruct,
    solve_fixed_point,
)

EXIT_OK, EXIT_FAIL, EXIT_CHOKING, EXIT_REGIME, EXIT_DIVERGENCE, EXIT_CONFIG = 0, 1, 2, 3, 4, 64
FIELD_NAMES = ("p", "E", "A", "u1", "u2")


class RegimeError(FannoError):
    pass


def build_background(cfg, gas=None, n_steps=None):
    gas = cfg.gas if gas is None else gas
    n = cfg.n_steps if n_steps is None else n_steps
    return integrate_background(cfg.M0, cfg.length, gas, n_steps=n, s0=cfg.s0, **cfg.anchors())


def _write_table(out, stem, columns, rows, fmt):
    if fmt == "csv":
        io.write_csv(os.path.join(out, stem + ".csv"), columns, rows)
    else:
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        io.write_json(os.path.join(out, stem + ".json"), {c: rows[:, k] for k, c in enumerate(columns)})


def _invariants_summary(profile, cfg, gas):
    summary = {
        "regime": profile.regime,
        "M0": cfg.M0,
        "length": cfg.length,
        "gamma": gas.gamma,
        "mu": gas.mu,
        "choking_length": max_length(cfg.M0, gas),
        "invariants": profile.invariants(),
    }
    if gas.mu > 0:
        summary["choking_length_ode"] = choking_length_from_ode(cfg.M0, gas)
    return summary


def cmd_background(cfg, args, out, supersonic=False):
    if supersonic and not cfg.M0 > 1.0:
        raise RegimeError(f"command 'supersonic' needs M0 > 1, got {cfg.M0}")
    profile = build_background(cfg)
    _write_table(out, "profile", CSV_COLUMNS, profile.table(), args.format)
    io.write_json(os.path.join(out, "invariants.json"), _invariants_summary(profile, cfg, cfg.gas))


def cmd_shock(cfg, args, out):
    sol = construct_transonic_shock(cfg.M0, cfg.shock_position, cfg.length, cfg.gas,
                                    p_entry=cfg.p_entry or 1.0, s0=cfg.s0, n_steps=cfg.n_steps)
    _write_table(out, "upstream", CSV_COLUMNS, sol.upstream.table(), args.format)
    _write_table(out, "downstream", CSV_COLUMNS, sol.downstream.table(), args.format)
    io.write_json(os.path.join(out, "shock.json"), {
        "position": sol.shock_pos,
        "M_minus": sol.M_minus,
        "M_plus": sol.M_plus,
        "entropy_condition": bool(sol.M_plus < sol.M_minus),
        "jump_residuals": sol.jump_residuals(),
    })


def _threshold(cfg, args):
    return args.threshold if getattr(args, "threshold", None) is not None else cfg.threshold


def _subsonic_coeffs(cfg, gas):
    if not cfg.M0 < 1.0:
        raise NotSubsonicError("the S-Condition needs a subsonic background")
    profile = build_background(cfg, gas)
    return assemble_coefficients(profile, gas)


def _mu_values(cfg, args):
    if getattr(args, "mu_sweep", None):
        try:
            a, b, n = args.mu_sweep.split(":")
            return list(np.linspace(float(a), float(b), int(n)))
        except ValueError as exc:
            raise ConfigError(f"--mu-sweep expects START:STOP:COUNT, got {args.mu_sweep!r}") from exc
    return list(cfg.mu_values)


def run_mu_sweep(cfg, mus, threshold, out):
    reports = sweep_mu(lambda mu: _subsonic_coeffs(cfg, cfg.gas.with_mu(mu)), mus, cfg.mode_cut, threshold)
    for k, rep in enumerate(reports):
        io.write_json(os.path.join(out, f"s_condition_mu_{k:03d}.json"), rep.to_json())
    rows = [[r.mu, r.min_abs_vartheta, float(r.verdict == "satisfied")] + list(r.worst_mode) for r in reports]
    io.write_csv(os.path.join(out, "s_condition_sweep.csv"),
                 ("mu", "min_abs_vartheta", "satisfied", "worst_i", "worst_m1", "worst_m2"), rows)
    intervals = sub_threshold_intervals(mus, reports)
    io.write_json(os.path.join(out, "s_condition_sweep.json"), {
        "points": len(mus),
        "sub_threshold_intervals": [{"mu_start": a, "mu_stop": b, "points": n} for a, b, n in intervals],
    })
    return reports, intervals


def cmd_s_condition(cfg, args, out):
    threshold = _threshold(cfg, args)
    mus = _mu_values(cfg, args) if args.mu_sweep else []
    if mus:
        run_mu_sweep(cfg, mus, threshold, out)
        return
    rep = check_s_condition(_subsonic_coeffs(cfg, cfg.gas), mode_cut=cfg.mode_cut, threshold=threshold)
    io.write_json(os.path.join(out, "s_condition.json"), rep.to_json())


def boundary_from_config(cfg, ctx, scale=1.0):
    b = cfg.boundary
    zero = np.zeros((ctx.spec.n_t, ctx.spec.n_t))
    dA0 = b.get("A0", zero)
    if "s0" in b:
        dA0 = cfg.gas.A(cfg.s0 + scale * b["s0"]) - ctx.A
        scale_A = 1.0
    else:
        scale_A = scale
    u_t = np.stack([b.get("u1", zero), b.get("u2", zero)])
    return BoundaryData.from_deviations(ctx, dE0=scale * b.get("E0", zero), dA0=scale_A * dA0,
                                        dp1=scale * b.get("p1", zero), u_t=scale * u_t)


def _check_s(ctx, cfg, args, out):
    if args.skip_s_check:
        return
    rep = check_s_condition(ctx.coeffs, mode_cut=cfg.mode_cut, threshold=_threshold(cfg, args))
    io.write_json(os.path.join(out, "s_condition.json"), rep.to_json())
    if rep.verdict != "satisfied":
        raise RegimeError(f"S-Condition {rep.verdict} (min |vartheta| = {rep.min_abs_vartheta:.3e}); "
                          "rerun with --skip-s-check to force")


def _solve(cfg, ctx, bd, threads):
    config = IterationConfig(eps=bd.magnitude(ctx), max_iters=cfg.max_iters, tol_update=cfg.tol_update,
                             contraction_window=cfg.contraction_window, workers=threads)
    U, report = solve_fixed_point(bd, ctx, config)
    return U, report, config


def write_fields(out, state, spec, fmt):
    fields = state.fields()
    if fmt == "json":
        io.write_json(os.path.join(out, "fields.json"), {
            "shape": list(spec.shape),
            "x0": spec.x0,
            "xt": spec.xt,
            "fields": {k: v.ravel() for k, v in fields.items()},
        })
        return
    x0, X1, X2 = spec.mesh()
    coords = [np.broadcast_to(c, spec.shape).ravel() for c in (x0, X1, X2)]
    for name, v in fields.items():
        io.write_csv(os.path.join(out, f"field_{name}.csv"), ("x0", "x1", "x2", "value"),
                     np.column_stack(coords + [v.ravel()]))


def read_fields(path, spec):
    """Perturbation state from a directory written by :func:`write_fields`."""
    js = os.path.join(path, "fields.json")
    data = {}
    if os.path.exists(js):
        with open(js) as fh:
            raw = json.load(fh)
        if tuple(raw["shape"]) != spec.shape:
            raise ConfigError(f"fields shape {raw['shape']} does not match the configured grid {spec.shape}")
        data = {k: np.asarray(v, dtype=float).reshape(spec.shape) for k, v in raw["fields"].items()}
    else:
        for name in FIELD_NAMES:
            _, arr = io.read_csv(os.path.join(path, f"field_{name}.csv"))
            if arr.shape[0] != np.prod(spec.shape):
                raise ConfigError(f"field_{name}.csv does not match the configured grid")
            data[name] = arr[:, 3].reshape(spec.shape)
    return PerturbationState(data["p"], data["E"], data["A"], np.stack([data["u1"], data["u2"]]))


def residual_summary(ctx, state):
    spec, gas = ctx.spec, ctx.gas
    full, norms = euler_residual(reconstruct(state, ctx), gas, spec)
    bg, bg_norms = euler_residual(background_state(ctx), gas, spec)
    pert = {k: float(np.abs(full[k] - bg[k]).max()) for k in full}
    return {"n_steps": spec.n0 - 1, "h": spec.h, "full": norms, "background": bg_norms, "perturbation_max": pert}


def cmd_solve(cfg, args, out):
    spec = cfg.spec()
    ctx = SolverContext(build_background(cfg), cfg.gas, spec)
    _check_s(ctx, cfg, args, out)
    scales = [float(v) for v in args.eps_sweep.split(",")] if getattr(args, "eps_sweep", None) else []
    if scales:
        run_eps_sweep(cfg, ctx, scales, args.threads, out)
        return
    bd = boundary_from_config(cfg, ctx)
    U, report, config = _solve(cfg, ctx, bd, args.threads)
    write_fields(out, U, spec, args.format)
    io.write_json(os.path.join(out, "contraction.json"),
                  dict(report.to_json(), eps=config.eps, tol_update=config.tolerance))
    io.write_json(os.path.join(out, "residuals.json"), residual_summary(ctx, U))


def run_eps_sweep(cfg, ctx, scales, threads, out):
    rows = []
    for scale in scales:
        bd = boundary_from_config(cfg, ctx, scale)
        U, report, config = _solve(cfg, ctx, bd, threads)
        ratio = max(report.ratio_estimates) if report.ratio_estimates else 0.0
        norm = discrete_norm(U, 2, ctx.spec)
        rows.append([scale, config.eps, norm, norm / config.eps if config.eps > 0 else 0.0, report.iters, ratio])
    rows = np.asarray(rows)
    io.write_csv(os.path.join(out, "eps_sweep.csv"),
                 ("scale", "eps", "solution_norm", "norm_over_eps", "iters", "max_ratio"), rows)
    good = (rows[:, 1] > 0) & (rows[:, 2] > 0)
    slope = float(np.polyfit(np.log(rows[good, 1]), np.log(rows[good, 2]), 1)[0]) if good.sum() >= 2 else None
    io.write_json(os.path.join(out, "eps_sweep.json"), {"points": len(rows), "loglog_slope": slope})
    return rows, slope


def cmd_residual(cfg, args, out):
    spec = cfg.spec()
    ctx = SolverContext(build_background(cfg), cfg.gas, spec)
    state = read_fields(args.fields, spec) if args.fields else PerturbationState.zeros(spec)
    io.write_json(os.path.join(out, "residuals.json"), residual_summary(ctx, state))


def cmd_sweep(cfg, args, out):
    kind = args.kind or ("mu" if cfg.mu_values and not cfg.eps_scales else "eps")
    if kind == "mu":
        mus = _mu_values(cfg, args)
        if not mus:
            raise ConfigError("no mu values: set sweep.mu or --mu-sweep")
        run_mu_sweep(cfg, mus, _threshold(cfg, args), out)
        return
    if not cfg.eps_scales:
        raise ConfigError("no eps scales: set sweep.eps")
    spec = cfg.spec()
    ctx = SolverContext(build_background(cfg), cfg.gas, spec)
    _check_s(ctx, cfg, args, out)
    run_eps_sweep(cfg, ctx, cfg.eps_scales, args.threads, out)


COMMANDS = {
    "background": cmd_background,
    "supersonic": lambda cfg, args, out: cmd_background(cfg, args, out, supersonic=True),
    "shock": cmd_shock,
    "s-condition": cmd_s_condition,
    "solve": cmd_solve,
    "residual": cmd_residual,
    "sweep": cmd_sweep,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="fannoflow", description="Steady Fanno duct flow and 3-D perturbation solver.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, default=1, help="worker threads for the mode solver")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    helps = {
        "background": "subsonic or supersonic Fanno profile",
        "supersonic": "supersonic Fanno profile anchored at the entry",
        "shock": "transonic normal-shock solution",
        "s-condition": "per-mode solvability check",
        "solve": "3-D perturbation by Picard iteration",
        "residual": "Euler residual of the background or of saved fields",
        "sweep": "mu sweep of the S-Condition or eps sweep of the solver",
    }
    parsers = {name: sub.add_parser(name, parents=[common], help=text) for name, text in helps.items()}
    for name in ("s-condition", "solve", "sweep"):
        parsers[name].add_argument("--threshold", type=float, help="near-resonance threshold on |vartheta|")
    for name in ("s-condition", "sweep"):
        parsers[name].add_argument("--mu-sweep", metavar="START:STOP:COUNT")
    for name in ("solve", "sweep"):
        parsers[name].add_argument("--skip-s-check", action="store_true")
    parsers["solve"].add_argument("--eps-sweep", metavar="S1,S2,...", help="scale factors for the boundary data")
    parsers["sweep"].add_argument("--kind", choices=("mu", "eps"))
    parsers["residual"].add_argument("--fields", metavar="DIR", help="directory written by 'solve'")
    return parser


def exit_code(exc):
    if isinstance(exc, StageError):
        return exit_code(exc.cause)
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, ChokingError):
        return EXIT_CHOKING
    if isinstance(exc, (NotSubsonicError, RegimeError, NearResonanceError)):
        return EXIT_REGIME
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGENCE
    return EXIT_FAIL


def _report_failure(exc):
    print(f"fannoflow: error: {exc}", file=sys.stderr)
    if isinstance(exc, ChokingError) and exc.max_length is not None:
        print(f"fannoflow: choking length L_M0 = {exc.max_length:.12g}", file=sys.stderr)
    if isinstance(exc, DivergenceError) and exc.report is not None:
        print("fannoflow: contraction trace " + json.dumps(exc.report.to_json()), file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("fannoflow: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        cfg.require(args.command)
        with io.atomic_directory(args.out) as scratch:
            COMMANDS[args.command](cfg, args, scratch)
    except (FannoError, DomainError) as exc:
        _report_failure(exc)
        return exit_code(exc)
    return EXIT_OK
