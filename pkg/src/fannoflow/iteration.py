"""Nonlinear remainders, the Picard map and the Euler residual.

A perturbation state stores the deviations (p_hat, E_hat, A_hat, u')
from the background. One application of the map runs four stages in a
fixed order: transport A_hat, solve the nonlocal elliptic problem for
p_hat, march E_hat, march the tangential velocity. All nonlinear terms
are evaluated from the frozen iterate.
"""
import json
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundProfile
from .elliptic import _flow_of, assemble_coefficients, ck_norm, solve_nonlocal_elliptic
from .errors import DegeneracyError, DivergenceError, DomainError, FannoError, StageError
from .spectral import d0, d00, spectral_derivative, tangential_laplacian
from .transport import march, solve_entropy, solve_f6_correction, solve_tangential_velocity, trace_characteristics

STAGES = ("entropy", "pressure", "bernoulli", "velocity")
EQUATIONS = ("mass", "momentum0", "momentum1", "momentum2", "energy")
SONIC_DELTA = 1e-10


class SolverContext:
    """Background, coefficients and grid shared by every stage.

    Background quantities are stored with shape (n0, 1, 1) so that they
    broadcast against 3-D fields.
    """

    def __init__(self, profile, gas, spec):
        if not isinstance(profile, BackgroundProfile):
            raise TypeError("profile must be a BackgroundProfile")
        flow = _flow_of(profile)
        if abs(spec.length - (profile.x0[-1] - profile.x0[0])) > 1e-12 * max(1.0, spec.length):
            raise DomainError("grid length differs from the background length")
        self.gas, self.spec, self.flow = gas, spec, flow
        x = spec.x0 + profile.x0[0]
        self.profile = flow.sample(x)
        self.coeffs = assemble_coefficients(self.profile, gas)
        st, dv = flow.state(x), flow.derivatives(x)
        col = lambda a: np.asarray(a, dtype=float)[:, None, None]
        self.p, self.rho, self.u, self.E = col(st["p"]), col(st["rho"]), col(st["u"]), col(st["E"])
        self.c2, self.t = col(st["c2"]), col(st["t"])
        self.A = float(flow.A)
        self.dp, self.d2p = col(dv["p"]), col(dv["p2"])
        self.drho, self.du = col(dv["rho"]), col(dv["u"])
        self.d = {k: col(self.coeffs.at_nodes(k)) for k in ("d1", "d2", "d3", "d4", "e5")}

    def inlet(self, name):
        return float(getattr(self, name)[0, 0, 0])

    def outlet(self, name):
        return float(getattr(self, name)[-1, 0, 0])


@dataclass
class PerturbationState:
    """Deviations from the background; ``u`` stacks (u1, u2) on axis 0."""

    p: np.ndarray
    E: np.ndarray
    A: np.ndarray
    u: np.ndarray

    @classmethod
    def zeros(cls, spec):
        return cls(spec.zeros(), spec.zeros(), spec.zeros(), np.zeros((2,) + spec.shape))

    def fields(self):
        return {"p": self.p, "E": self.E, "A": self.A, "u1": self.u[0], "u2": self.u[1]}

    def __sub__(self, other):
        return PerturbationState(self.p - other.p, self.E - other.E, self.A - other.A, self.u - other.u)

    def __add__(self, other):
        return PerturbationState(self.p + other.p, self.E + other.E, self.A + other.A, self.u + other.u)

    def scaled(self, a):
        return PerturbationState(a * self.p, a * self.E, a * self.A, a * self.u)


@dataclass(frozen=True)
class BoundaryData:
    """Inlet Bernoulli constant E0, inlet A(s0), inlet tangential velocity and exit pressure p1."""

    E0: np.ndarray
    A0: np.ndarray
    u_t: np.ndarray
    p1: np.ndarray

    @classmethod
    def from_deviations(cls, ctx, dE0=0.0, dA0=0.0, dp1=0.0, u_t=None):
        n = ctx.spec.n_t
        full = lambda base, dev: base + np.broadcast_to(np.asarray(dev, dtype=float), (n, n))
        u_t = np.zeros((2, n, n)) if u_t is None else np.broadcast_to(np.asarray(u_t, dtype=float), (2, n, n))
        return cls(full(ctx.inlet("E"), dE0), full(ctx.A, dA0), np.array(u_t), full(ctx.outlet("p"), dp1))

    def deviations(self, ctx):
        return {
            "E0": np.asarray(self.E0, dtype=float) - ctx.inlet("E"),
            "A0": np.asarray(self.A0, dtype=float) - ctx.A,
            "p1": np.asarray(self.p1, dtype=float) - ctx.outlet("p"),
        }

    def magnitude(self, ctx, k=3):
        """Sum of tangential C^k sup-norms of all boundary deviations."""
        dev = self.deviations(ctx)
        total = sum(ck_norm(v, k) for v in dev.values())
        return total + sum(ck_norm(v, k) for v in np.asarray(self.u_t))


@dataclass(frozen=True)
class IterationConfig:
    eps: float = 0.0
    K: float = 10.0
    max_iters: int = 50
    tol_update: float = None
    contraction_window: int = 3
    workers: int = 1
    stage_order: tuple = STAGES

    def __post_init__(self):
        if self.max_iters < 2:
            raise DomainError("max_iters must be at least 2")
        if self.tol_update is not None and not self.tol_update > 0:
            raise DomainError("tol_update must be positive")
        if sorted(self.stage_order) != sorted(STAGES):
            raise DomainError(f"stage_order must be a permutation of {STAGES}")

    @property
    def tolerance(self):
        return self.tol_update if self.tol_update is not None else 1e-10 * max(1.0, self.eps)


@dataclass
class FlowState:
    """Full state reconstructed from a perturbation; ``u`` stacks (u0, u1, u2)."""

    p: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    E: np.ndarray
    A: np.ndarray
    gamma: float = 1.4

    @property
    def c2(self):
        return self.gamma * self.p / self.rho


def reconstruct(state, ctx):
    """Full (p, rho, u, E, A) with the subsonic root for u0."""
    g = ctx.gas.gamma
    p = ctx.p + state.p
    A = ctx.A + state.A
    E = ctx.E + state.E
    if not (np.all(p > 0) and np.all(A > 0)):
        raise DomainError("reconstructed pressure or entropy function is not positive")
    rho = (p / A) ** (1.0 / g)
    c2 = g * p / rho
    u0sq = 2.0 * E - (state.u**2).sum(axis=0) - 2.0 * c2 / (g - 1.0)
    if not np.all(u0sq > 0):
        raise DomainError("Bernoulli constant too small for a positive axial velocity")
    u = np.concatenate([np.sqrt(u0sq)[None], state.u])
    return FlowState(p, rho, u, E, A, g)


def background_state(ctx):
    shape = ctx.spec.shape
    full = lambda a: np.broadcast_to(a, shape).copy()
    u = np.zeros((3,) + shape)
    u[0] = full(ctx.u)
    return FlowState(full(ctx.p), full(ctx.rho), u, full(ctx.E), np.full(shape, ctx.A), ctx.gas.gamma)


def _grad(background, dbackground, hat, h):
    """(d0, d1, d2) of background + hat, with the exact background derivative."""
    return [dbackground + d0(hat, h), spectral_derivative(hat, 1, 0), spectral_derivative(hat, 0, 1)]


def _tangential_grad(f):
    return [spectral_derivative(f, 1, 0), spectral_derivative(f, 0, 1)]


class _Derivatives:
    """Derivatives of the full state, background parts taken in closed form."""

    def __init__(self, state, fs, ctx):
        h = ctx.spec.h
        self.p1 = _grad(ctx.p, ctx.dp, state.p, h)
        p_hat = state.p
        dp0_hat = d0(p_hat, h)
        self.p2 = [[None] * 3 for _ in range(3)]
        self.p2[0][0] = ctx.d2p + d00(p_hat, h)
        for b, g in enumerate(_tangential_grad(dp0_hat)):
            self.p2[0][b + 1] = self.p2[b + 1][0] = g
        self.p2[1][1] = spectral_derivative(p_hat, 2, 0)
        self.p2[2][2] = spectral_derivative(p_hat, 0, 2)
        self.p2[1][2] = self.p2[2][1] = spectral_derivative(p_hat, 1, 1)
        self.lap_p = self.p2[1][1] + self.p2[2][2]
        # du[k][j] = d_j u^k
        u0_hat = fs.u[0] - ctx.u
        self.du = [_grad(ctx.u, ctx.du, u0_hat, h)]
        self.du += [_grad(0.0, 0.0, state.u[b], h) for b in range(2)]
        self.drho = _grad(ctx.rho, ctx.drho, fs.rho - ctx.rho, h)
        self.dA = _tangential_grad(state.A)
        self.dE = _tangential_grad(state.E)


def pressure_operator(p, E, c2, dp0, d2p0, lap_p, gas):
    """Left side of the second-order pressure equation."""
    g, mu = gas.gamma, gas.mu
    kin = E - c2 / (g - 1.0)
    return (
        (2.0 * E - (g + 1.0) / (g - 1.0) * c2) * d2p0
        - c2 * lap_p
        - 2.0 * mu * kin * dp0
        - 2.0 / p * (kin + c2**2 / (4.0 * g) / kin) * dp0**2
        + 2.0 * mu**2 * g * p * kin
    )


def _first_remainder(fs, D, gamma):
    p, rho, u = fs.p, fs.rho, fs.u
    gp = gamma * p
    out = 0.0
    for k in range(3):
        for j in range(3):
            if k == 0 and j == 0:
                continue
            term = (
                u[k] * u[j] / gp * D.p2[j][k]
                + u[k] / gp * D.du[j][k] * D.p1[j]
                - u[k] * u[j] * D.p1[k] * D.p1[j] / (gp * p)
                - D.du[k][j] * D.du[j][k]
            )
            if k == j:
                term = term + D.drho[k] * D.p1[j] / rho**2
            out = out + term
    return out


def _second_remainder(fs, D, gamma, mu):
    p, rho, E = fs.p, fs.rho, fs.E
    u0, ut = fs.u[0], fs.u[1:]
    c2 = fs.c2
    q = (ut**2).sum(axis=0)
    dp0, d2p0 = D.p1[0], D.p2[0][0]
    kin2 = 2.0 * E - 2.0 * c2 / (gamma - 1.0)
    adv_u0 = ut[0] * D.du[0][1] + ut[1] * D.du[0][2]
    adv_A = ut[0] * D.dA[0] + ut[1] * D.dA[1]
    return (
        -q * (d2p0 / (gamma * p) + dp0**2 / (gamma * p**2) * (-1.0 + c2**2 / gamma / kin2 / (kin2 - q)))
        + ((mu * q - adv_u0) * dp0 + rho ** (gamma - 1.0) * dp0 * adv_A / u0) / (gamma * p)
        - adv_u0 / u0**2 * (adv_u0 + 2.0 * dp0 / rho)
        - mu**2 * q
    )


def linear_pressure_operator(state, ctx):
    """c_b^-2-normalised linearisation of the pressure equation about the background."""
    h, mu, g = ctx.spec.h, ctx.gas.mu, ctx.gas.gamma
    d = ctx.d
    return (
        (ctx.t - 1.0) * d00(state.p, h)
        - tangential_laplacian(state.p)
        + mu * d["d1"] * d0(state.p, h)
        + mu**2 * d["d2"] * state.p
        + mu**2 * ctx.rho * d["d3"] * state.E
        + mu**2 * ctx.rho**g * d["d4"] * state.A
    )


def bernoulli_remainder(state, fs, ctx):
    """H: exact Bernoulli source minus its linear part."""
    g, mu = ctx.gas.gamma, ctx.gas.mu
    q = (state.u**2).sum(axis=0)
    return 2.0 * mu / (g - 1.0) * (
        fs.c2 - ctx.c2 - (g - 1.0) * state.p / ctx.rho - ctx.rho ** (g - 1.0) * state.A
    ) + mu * q


def nonlinear_terms(state, ctx, cmap, fs=None):
    """All interior remainders F1..F6 and H of a state (dict of 3-D fields)."""
    g, mu = ctx.gas.gamma, ctx.gas.mu
    fs = reconstruct(state, ctx) if fs is None else fs
    D = _Derivatives(state, fs, ctx)
    F1 = _first_remainder(fs, D, g)
    F2 = _second_remainder(fs, D, g, mu)
    F3 = -g * fs.p * (F1 + F2)
    N = pressure_operator(fs.p, fs.E, fs.c2, D.p1[0], D.p2[0][0], D.lap_p, ctx.gas)
    Nb = pressure_operator(ctx.p, ctx.E, ctx.c2, ctx.dp, ctx.d2p, 0.0, ctx.gas)
    F4 = ctx.c2 * linear_pressure_operator(state, ctx) - (N - Nb)
    F5 = (F3 + F4) / ctx.c2
    H = bernoulli_remainder(state, fs, ctx)
    F6 = solve_f6_correction(cmap, state.p, H, ctx.profile, ctx.d["d3"][:, 0, 0], ctx.gas)
    return {"F1": F1, "F2": F2, "F3": F3, "F4": F4, "F5": F5, "F6": F6, "H": H}


def assemble_F(state, ctx, cmap):
    """F = F5 + F6, the right-hand side carried from the iterate."""
    terms = nonlinear_terms(state, ctx, cmap)
    return terms["F5"] + terms["F6"]


def assemble_H(state, ctx):
    return bernoulli_remainder(state, reconstruct(state, ctx), ctx)


def assemble_F0(A_hat, E0_dev, ctx, cmap):
    """Source from the entropy deviation and the inlet Bernoulli data."""
    g, mu = ctx.gas.gamma, ctx.gas.mu
    S = 2.0 * mu / (g - 1.0) * ctx.rho ** (g - 1.0) * A_hat
    carried = march(cmap, S, 2.0 * mu, E0_dev)
    return ctx.d["e5"] * A_hat - mu**2 * ctx.rho * ctx.d["d3"] * carried


def _robin_flux(p, u0, c2):
    return p * u0**2 / (u0**2 - c2)


def robin_terms(state, boundary, ctx):
    """(G1, G2, G3) on the inlet face.

    Pressure comes from the iterate; E, A and u' are the boundary data.
    """
    g, mu = ctx.gas.gamma, ctx.gas.mu
    p_hat = state.p[0]
    p = ctx.inlet("p") + p_hat
    A = np.asarray(boundary.A0, dtype=float)
    E = np.asarray(boundary.E0, dtype=float)
    ut = np.asarray(boundary.u_t, dtype=float)
    if not (np.all(p > 0) and np.all(A > 0)):
        raise DomainError("inlet pressure or entropy function is not positive")
    rho = (p / A) ** (1.0 / g)
    c2 = g * p / rho
    u0sq = 2.0 * E - (ut**2).sum(axis=0) - 2.0 * c2 / (g - 1.0)
    if not np.all(u0sq > 0):
        raise DomainError("inlet Bernoulli data too small for a positive axial velocity")
    u0 = np.sqrt(u0sq)
    gap = u0sq / c2 - 1.0
    if np.abs(gap).min() < SONIC_DELTA:
        raise DegeneracyError("inlet flow is sonic; the Robin condition degenerates")
    dp = _tangential_grad(p_hat)
    dA = _tangential_grad(A)
    dE = _tangential_grad(E)
    du = [_tangential_grad(ut[s]) for s in range(2)]  # du[s][b] = d_b u^s
    G1 = -rho * u0 * (du[0][0] + du[1][1]) / gap
    bracket = 0.0
    for b in range(2):
        bracket = bracket + u0 * ut[b] * (1.0 / c2 + 1.0 / u0sq) * dp[b]
        bracket = bracket + ut[b] / u0 * rho**g * dA[b] / (g - 1.0)
        bracket = bracket + rho / u0 * sum(ut[s] * ut[b] * du[s][b] for s in range(2))
        bracket = bracket - rho * ut[b] / u0 * dE[b]
    G2 = -bracket / gap
    fb = _robin_flux(ctx.inlet("p"), ctx.inlet("u"), ctx.inlet("c2"))
    G3 = mu * g * (_robin_flux(p, u0, c2) - fb) + ctx.coeffs.gamma0 * p_hat
    return G1, G2, G3


def assemble_G(state, boundary, ctx):
    G1, G2, G3 = robin_terms(state, boundary, ctx)
    return G1 + G2 + G3


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except FannoError as exc:
        raise StageError(name, exc) from exc


def apply_T(state, boundary, ctx, config=None):
    """One application of the Picard map to a perturbation state."""
    config = IterationConfig() if config is None else config
    spec = ctx.spec
    fs = _stage("reconstruct", reconstruct, state, ctx)
    cmap = _stage("trace", trace_characteristics, tuple(fs.u), spec)
    dev = boundary.deviations(ctx)
    latest = {"A": state.A, "p": state.p, "E": state.E, "u": state.u}
    frozen = {}

    def remainders():
        if "terms" not in frozen:
            frozen["terms"] = nonlinear_terms(state, ctx, cmap, fs)
        return frozen["terms"]

    def entropy():
        latest["A"] = solve_entropy(cmap, dev["A0"])

    def pressure():
        terms = remainders()
        rhs = assemble_F0(latest["A"], dev["E0"], ctx, cmap) + terms["F5"] + terms["F6"]
        G = assemble_G(state, boundary, ctx)
        latest["p"] = solve_nonlocal_elliptic(rhs, G, dev["p1"], ctx.coeffs, spec, workers=config.workers)

    def bernoulli():
        H = remainders()["H"]
        g, mu = ctx.gas.gamma, ctx.gas.mu
        S = 2.0 * mu / (g - 1.0) * ctx.rho ** (g - 1.0) * latest["A"] + 2.0 * mu / ctx.rho * latest["p"] + H
        latest["E"] = march(cmap, S, 2.0 * mu, dev["E0"])

    def velocity():
        latest["u"] = solve_tangential_velocity(cmap, fs.rho, fs.u[0], ctx.p + latest["p"], boundary.u_t)

    table = {"entropy": entropy, "pressure": pressure, "bernoulli": bernoulli, "velocity": velocity}
    for name in config.stage_order:
        _stage(name, table[name])
    return PerturbationState(latest["p"], latest["E"], latest["A"], np.asarray(latest["u"]))


def discrete_norm(state, k, spec):
    """C^k sup-norm of p_hat plus C^(k-1) norms of the other fields."""
    h = spec.h
    total = ck_norm(state.p, k, h) + ck_norm(state.A, k - 1, h) + ck_norm(state.E, k - 1, h)
    return total + sum(ck_norm(c, k - 1, h) for c in state.u)


def _div(fields, h):
    """Divergence of a 3-vector field (d0 by differences, d1 d2 spectral)."""
    return d0(fields[0], h) + spectral_derivative(fields[1], 1, 0) + spectral_derivative(fields[2], 0, 1)


def euler_residual(fs, gas, spec):
    """Residual fields of the steady Euler system with wall friction.

    Returns (fields, norms) with ``norms[eq] = {"max": ..., "l2": ...}``.
    """
    h, mu = spec.h, gas.mu
    rho, p, u, E = fs.rho, fs.p, fs.u, fs.E
    mass_flux = rho * u
    out = {"mass": _div(mass_flux, h)}
    grad = [d0(p, h), spectral_derivative(p, 1, 0), spectral_derivative(p, 0, 1)]
    for k in range(3):
        r = _div(mass_flux * u[k], h) + grad[k]
        if k == 0:
            r = r + mu * rho * u[0] ** 2
        out[f"momentum{k}"] = r
    out["energy"] = _div(mass_flux * E, h) + mu * rho * u[0] ** 3
    cell = h * (2.0 * np.pi / spec.n_t) ** 2
    norms = {
        name: {"max": float(np.abs(r).max()), "l2": float(np.sqrt(cell * (r**2).sum()))}
        for name, r in out.items()
    }
    return out, norms


@dataclass
class ContractionReport:
    iters: int = 0
    update_norms: list = field(default_factory=list)
    ratio_estimates: list = field(default_factory=list)
    converged: bool = False
    final_residuals: dict = field(default_factory=dict)
    solution_norm: float = None

    def to_json(self):
        out = {
            "iters": self.iters,
            "update_norms": [float(v) for v in self.update_norms],
            "ratio_estimates": [float(v) for v in self.ratio_estimates],
            "converged": bool(self.converged),
            "final_residuals": dict(self.final_residuals),
        }
        if self.solution_norm is not None:
            out["solution_norm"] = float(self.solution_norm)
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def solve_fixed_point(boundary, ctx, config=None, initial=None, callback=None):
    """Picard iteration from the zero perturbation.

    Stops when the C^2 update norm drops below the tolerance. Raises
    :class:`DivergenceError` (carrying the report) when every ratio in the
    contraction window is >= 1 or the iteration budget runs out.
    """
    config = IterationConfig() if config is None else config
    spec = ctx.spec
    U = PerturbationState.zeros(spec) if initial is None else initial
    report = ContractionReport()
    tol = config.tolerance
    for it in range(1, config.max_iters + 1):
        U_new = apply_T(U, boundary, ctx, config)
        step = discrete_norm(U_new - U, 2, spec)
        report.iters = it
        report.update_norms.append(step)
        if len(report.update_norms) > 1:
            prev = report.update_norms[-2]
            report.ratio_estimates.append(step / prev if prev > 0 else 0.0)
        U = U_new
        if callback is not None:
            callback(it, U, step)
        if not np.isfinite(step):
            raise DivergenceError("update norm is not finite", report)
        if step < tol:
            report.converged = True
            break
        window = report.ratio_estimates[-config.contraction_window:]
        if len(window) == config.contraction_window and min(window) >= 1.0:
            raise DivergenceError(f"no contraction over {len(window)} iterates: ratios {window}", report)
    fs = reconstruct(U, ctx)
    _, norms = euler_residual(fs, ctx.gas, spec)
    report.final_residuals = {k: v["max"] for k, v in norms.items()}
    report.solution_norm = discrete_norm(U, 2, spec)
    if not report.converged:
        raise DivergenceError(f"no convergence in {config.max_iters} iterations", report)
    return U, report
