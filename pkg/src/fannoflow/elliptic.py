"""Nonlocal elliptic pressure problem and its per-mode third-order reduction.

The operator acting on the pressure perturbation is

    Lp = e1 p_00 - p_11 - p_22 + e2 p_0 + e3 p + e4 * int_0^x0 b(tau) p(tau) dtau

with a Robin condition ``p_0 + gamma0 p = g0`` at the entry and Dirichlet
data ``p = g1`` at the exit. Writing ``P = int_0^x0 b p`` turns each
Fourier mode into a local third-order ODE for P, solved by linear
shooting with RK4 on the axial grid (midpoint coefficients come from the
closed-form background).
"""
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .background import BackgroundProfile, FannoFlow
from .errors import FannoError, NearResonanceError, NotSubsonicError, ShapeError
from .spectral import (
    FourierField,
    analyze,
    basis_mask,
    cumulative_simpson,
    d0,
    d00,
    spectral_derivative,
    synthesize,
    tangential_laplacian,
)

RESONANCE_FACTOR = 1e-8


def d_coefficients(t, gamma):
    """Coefficient functions d1..d4 of the linearized pressure operator."""
    t = np.asarray(t, dtype=float)
    g = gamma
    tm1 = t - 1.0
    cubic = g * t**2 + 3.0 * t - 2.0
    d1 = -((2.0 * g + 1.0) * t**2 - t + 2.0) / tm1
    d2 = (g * (g + 1.0) * t**4 - 2.0 * g * (g + 1.0) * t**3 - (g - 3.0) * t**2 - 8.0 * t + 4.0) / tm1**3
    d3 = 2.0 * cubic / tm1**3
    d4 = -((g - 1.0) * t + 2.0) * cubic / ((g - 1.0) * tm1**3)
    return d1, d2, d3, d4


def robin_constant(M0, gas):
    """gamma0 = -mu (gamma M0**4 - M0**2 + 2) / (M0**2 - 1)**2 (negative for mu > 0)."""
    M2 = M0 * M0
    return -gas.mu * (gas.gamma * M2 * M2 - M2 + 2.0) / (M2 - 1.0) ** 2


@dataclass(frozen=True)
class EllipticCoefficients:
    """Operator coefficients sampled on the half grid ``x`` (nodes at even indices)."""

    x: np.ndarray
    t: np.ndarray
    rho: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    d3: np.ndarray
    d4: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    e3: np.ndarray
    e4: np.ndarray
    e5: np.ndarray
    e6: np.ndarray
    b: np.ndarray
    db: np.ndarray
    d2b: np.ndarray
    gamma0: float
    mu: float
    gamma: float

    @property
    def length(self):
        return float(self.x[-1] - self.x[0])

    @property
    def n0(self):
        return (len(self.x) + 1) // 2

    def at_nodes(self, name):
        return getattr(self, name)[::2]

    def tilde(self, msq):
        """(te1, te2, te3) for squared wavenumber(s) ``msq``; te3 broadcasts over modes."""
        b, db, d2b, e1, e2, e3 = self.b, self.db, self.d2b, self.e1, self.e2, self.e3
        te1 = e1 / b
        te2 = e2 / b - 2.0 * e1 * db / b**2
        base = e3 / b - (e2 * db + e1 * d2b) / b**2 + 2.0 * e1 * db**2 / b**3
        msq = np.asarray(msq, dtype=float)
        te3 = base[:, None] + msq[None, :] / b[:, None] if msq.ndim else base + msq / b
        return te1, te2, te3


def _flow_of(profile):
    if profile.flow is not None:
        return profile.flow
    A = float(profile.p[0] / profile.rho[0] ** profile.gas.gamma)
    return FannoFlow.through(profile.gas, float(profile.M[0]), float(profile.p[0]), A, float(profile.x0[0]))


def assemble_coefficients(profile, gas):
    """Sample all operator coefficients from the closed-form background.

    ``b'`` and ``b''`` are differentiated analytically through
    ``rho_b' = mu rho_b t/(t-1)`` and ``t' = mu (gamma+1) t**2/(1-t)``.
    """
    if not isinstance(profile, BackgroundProfile):
        raise TypeError("profile must be a BackgroundProfile")
    if not (np.all(profile.t > 0) and np.all(profile.t < 1)):
        raise NotSubsonicError("the elliptic problem needs a subsonic background (0 < t < 1)")
    flow = _flow_of(profile)
    mu, g = gas.mu, gas.gamma
    x = np.linspace(profile.x0[0], profile.x0[-1], 2 * len(profile.x0) - 1)
    st = flow.state(x)
    t, rho = st["t"], st["rho"]
    d1, d2, d3, d4 = d_coefficients(t, g)
    decay = np.exp(-2.0 * mu * x)
    b = 1.0 / (decay * rho)
    q = mu * t / (t - 1.0)
    dt = mu * (g + 1.0) * t * t / (1.0 - t)
    dq = -mu * dt / (t - 1.0) ** 2
    db = b * (2.0 * mu - q)
    d2b = db * (2.0 * mu - q) - b * dq
    return EllipticCoefficients(
        x=x, t=t, rho=rho, d1=d1, d2=d2, d3=d3, d4=d4,
        e1=t - 1.0,
        e2=mu * d1,
        e3=mu**2 * d2,
        e4=2.0 * mu**3 * decay * rho * d3,
        e5=-(mu**2) * rho**g * d4,
        e6=-(mu**2) * decay * rho * d3,
        b=b, db=db, d2b=d2b,
        gamma0=robin_constant(math.sqrt(t[0]), gas),
        mu=mu, gamma=g,
    )


def apply_operator(p_hat, coeffs, spec):
    """Evaluate the nonlocal operator on a grid field (O(h**2) in x0, spectral in x')."""
    p = spec.check_field(p_hat, "p_hat")
    h = spec.h
    nodes = lambda name: coeffs.at_nodes(name)[:, None, None]
    integral = cumulative_simpson(nodes("b") * p, h)
    return (
        nodes("e1") * d00(p, h)
        - tangential_laplacian(p)
        + nodes("e2") * d0(p, h)
        + nodes("e3") * p
        + nodes("e4") * integral
    )


@dataclass(frozen=True)
class ModeBVPSystem:
    """Data of the third-order problem for a batch of modes sharing one grid.

    rhs has shape (2 n0 - 1, k) on the half grid; msq, robin_value and
    dirichlet_value have shape (k,). The Robin value is the raw g0
    coefficient; the factor b(0) is applied by the solver.
    """

    coeffs: EllipticCoefficients
    msq: np.ndarray
    rhs: np.ndarray
    robin_value: np.ndarray
    dirichlet_value: np.ndarray
    modes: tuple = field(default=())

    def __post_init__(self):
        if self.rhs.shape != (len(self.coeffs.x), len(self.msq)):
            raise ShapeError(f"rhs shape {self.rhs.shape} does not match the coefficient grid")


@dataclass(frozen=True)
class ModeSolution:
    """Shooting result at the axial nodes, one column per mode."""

    p: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    ddP: np.ndarray
    vartheta: np.ndarray


def _shoot(coeffs, msq, rhs, y0):
    """RK4 for (P, P', P'') with half-grid coefficients; y0 shape (3, k)."""
    te1, te2, te3 = coeffs.tilde(msq)
    e4 = coeffs.e4
    n_half = len(coeffs.x)
    n0 = (n_half + 1) // 2
    h = coeffs.x[2] - coeffs.x[0]
    y = np.array(y0, dtype=float)
    out = np.empty((n0,) + y.shape)
    out[0] = y

    def f(y, i):
        third = (rhs[i] - te2[i] * y[2] - te3[i] * y[1] - e4[i] * y[0]) / te1[i]
        return np.stack([y[1], y[2], third])

    for j in range(n0 - 1):
        i = 2 * j
        k1 = f(y, i)
        k2 = f(y + 0.5 * h * k1, i + 1)
        k3 = f(y + 0.5 * h * k2, i + 1)
        k4 = f(y + h * k3, i + 2)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[j + 1] = y
    return out


def _coefficient_scale(coeffs, msq):
    te1, te2, te3 = coeffs.tilde(msq)
    base = max(np.abs(te1).max(), np.abs(te2).max(), np.abs(coeffs.e4).max())
    return np.maximum(base, np.abs(te3).max(axis=0))


def resonance_threshold(coeffs, msq):
    """Smallest admissible |vartheta| per mode."""
    scale = np.maximum(1.0, _coefficient_scale(coeffs, np.atleast_1d(msq)))
    return RESONANCE_FACTOR * coeffs.b[-1] * scale


def homogeneous_sensitivity(coeffs, msq):
    """vartheta = W'(L) for the Cauchy problem W(0)=0, W'(0)=b(0), W''(0)=b'(0)-gamma0 b(0)."""
    msq = np.atleast_1d(np.asarray(msq, dtype=float))
    b0, db0 = coeffs.b[0], coeffs.db[0]
    y0 = np.zeros((3, len(msq)))
    y0[1] = b0
    y0[2] = db0 - coeffs.gamma0 * b0
    sol = _shoot(coeffs, msq, np.zeros((len(coeffs.x), len(msq))), y0)
    return sol[-1, 1]


def solve_mode_bvp(system, check_resonance=True):
    """Solve a batch of third-order mode problems by linear shooting.

    Returns a :class:`ModeSolution`; ``p = P'/b`` is the pressure
    coefficient function.
    """
    c = system.coeffs
    msq = np.asarray(system.msq, dtype=float)
    k = len(msq)
    b0, db0, bL = c.b[0], c.db[0], c.b[-1]
    y_part = np.zeros((3, k))
    y_part[2] = b0 * np.asarray(system.robin_value, dtype=float)
    y_hom = np.zeros((3, k))
    y_hom[1] = 1.0
    y_hom[2] = db0 / b0 - c.gamma0
    both = _shoot(
        c,
        np.concatenate([msq, msq]),
        np.concatenate([system.rhs, np.zeros_like(system.rhs)], axis=1),
        np.concatenate([y_part, y_hom], axis=1),
    )
    part, hom = both[:, :, :k], both[:, :, k:]
    slope_L = hom[-1, 1]
    vartheta = b0 * slope_L
    if check_resonance:
        thr = resonance_threshold(c, msq)
        bad = np.nonzero(~(np.abs(vartheta) > thr))[0]
        if bad.size:
            j = bad[np.argmin(np.abs(vartheta[bad]))]
            mode = system.modes[j] if system.modes else int(j)
            raise NearResonanceError(
                f"mode {mode} violates the S-Condition: |vartheta|={abs(vartheta[j]):.3e}",
                mode=mode, vartheta=float(vartheta[j]),
            )
    sigma = (bL * np.asarray(system.dirichlet_value, dtype=float) - part[-1, 1]) / slope_L
    Y = part + sigma[None, None, :] * hom
    b_nodes = c.b[::2][:, None]
    return ModeSolution(p=Y[:, 1] / b_nodes, P=Y[:, 0], dP=Y[:, 1], ddP=Y[:, 2], vartheta=vartheta)


def mode_residual(p, msq, rhs_nodes, coeffs, h):
    """Residual of e1 p'' + e2 p' + (e3 + |m|^2) p + e4 int b p - rhs on the nodes (O(h**2))."""
    nodes = lambda name: coeffs.at_nodes(name)[:, None]
    p = np.asarray(p).reshape(len(coeffs.x[::2]), -1)
    rhs_nodes = np.asarray(rhs_nodes).reshape(p.shape)
    msq = np.atleast_1d(msq)[None, :]
    integral = cumulative_simpson(nodes("b") * p, h)
    return (nodes("e1") * d00(p, h) + nodes("e2") * d0(p, h) + (nodes("e3") + msq) * p
            + nodes("e4") * integral - rhs_nodes)


@dataclass(frozen=True)
class SConditionReport:
    mu: float
    scanned_modes: int
    min_abs_vartheta: float
    verdict: str
    worst_mode: tuple
    threshold: float
    scan_bound_msq: float
    vartheta: dict = field(default_factory=dict, repr=False)

    def to_json(self):
        return {
            "mu": self.mu,
            "scanned_modes": self.scanned_modes,
            "min_abs_vartheta": self.min_abs_vartheta,
            "verdict": self.verdict,
            "worst_mode": list(self.worst_mode),
            "threshold": self.threshold,
            "scan_bound_msq": self.scan_bound_msq,
            "scan_note": "modes beyond scan_bound_msq are assumed non-resonant (dominant |m|^2/b term)",
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def scan_modes(mode_cut):
    """All (i, (m1, m2)) with non-trivial basis functions in the mode box."""
    mask = basis_mask(mode_cut)
    return [(int(i) + 1, (int(m1), int(m2))) for i, m1, m2 in zip(*np.nonzero(mask))]


def check_s_condition(coeffs, modes=None, mode_cut=8, threshold=None):
    """Integrate the homogeneous Cauchy problem per distinct |m|^2 and classify.

    ``threshold`` overrides the default near-resonance threshold; it only
    changes the verdict, never the computed vartheta values.
    """
    modes = scan_modes(mode_cut) if modes is None else list(modes)
    msq_of = {mode: float(mode[1][0] ** 2 + mode[1][1] ** 2) for mode in modes}
    distinct = np.array(sorted(set(msq_of.values())))
    try:
        with np.errstate(over="raise", invalid="raise"):
            theta = homogeneous_sensitivity(coeffs, distinct)
        ok = np.all(np.isfinite(theta))
    except FloatingPointError:
        ok = False
    if not ok:
        return SConditionReport(coeffs.mu, len(modes), float("nan"), "inconclusive", (0, 0, 0),
                                float("nan"), float(distinct.max()) if len(distinct) else 0.0)
    thr = resonance_threshold(coeffs, distinct) if threshold is None else np.full(len(distinct), float(threshold))
    by_msq = dict(zip(distinct.tolist(), theta.tolist()))
    thr_by_msq = dict(zip(distinct.tolist(), thr.tolist()))
    values = {mode: by_msq[msq_of[mode]] for mode in modes}
    worst = min(modes, key=lambda m: (abs(values[m]) / thr_by_msq[msq_of[m]], m))
    min_abs = min(abs(v) for v in values.values())
    satisfied = all(abs(values[m]) > thr_by_msq[msq_of[m]] for m in modes)
    return SConditionReport(
        mu=coeffs.mu,
        scanned_modes=len(modes),
        min_abs_vartheta=float(min_abs),
        verdict="satisfied" if satisfied else "violated",
        worst_mode=(worst[0], worst[1][0], worst[1][1]),
        threshold=float(thr_by_msq[msq_of[worst]]),
        scan_bound_msq=float(distinct.max()),
        vartheta=values,
    )


def _half_grid_coefficients(h, spec, h_half=None):
    """Mode coefficients of the right-hand side on the half grid, shape (4, N+1, N+1, 2 n0 - 1)."""
    if h_half is not None:
        h_half = np.asarray(h_half, dtype=float)
        if h_half.shape != (2 * spec.n0 - 1, spec.n_t, spec.n_t):
            raise ShapeError(f"half-grid rhs has shape {h_half.shape}")
        half_spec = type(spec)(spec.length, 2 * spec.n0 - 1, spec.n_t, spec.mode_cut)
        return analyze(h_half, half_spec).coeffs
    from scipy.interpolate import CubicSpline

    c = analyze(spec.check_field(h, "rhs"), spec).coeffs
    x = spec.x0
    out = np.empty(c.shape[:3] + (2 * spec.n0 - 1,))
    out[..., ::2] = c
    out[..., 1::2] = CubicSpline(x, c, axis=-1)(0.5 * (x[:-1] + x[1:]))
    return out


def solve_nonlocal_elliptic(h, g0, g1, coeffs, spec, h_half=None, workers=1, check_resonance=True):
    """Solve the nonlocal mixed problem mode by mode and synthesize p_hat.

    ``h`` lives on the grid nodes (its midpoint values are interpolated
    by cubic splines in x0) unless ``h_half`` supplies it on the half
    grid. ``workers`` > 1 splits the mode batch across threads; the
    result is bit-identical for any worker count.
    """
    if coeffs.n0 != spec.n0:
        raise ShapeError("coefficients and grid disagree on the number of axial nodes")
    rhs = _half_grid_coefficients(h, spec, h_half)
    gc0 = analyze(spec.check_section(g0, "g0"), spec).coeffs
    gc1 = analyze(spec.check_section(g1, "g1"), spec).coeffs
    modes = scan_modes(spec.mode_cut)
    idx = tuple(np.array(v) for v in zip(*[(i - 1, m1, m2) for i, (m1, m2) in modes]))
    msq = (idx[1] ** 2 + idx[2] ** 2).astype(float)
    rhs_cols = rhs[idx].T  # (n_half, k)
    chunks = np.array_split(np.arange(len(modes)), max(1, int(workers)))

    def run(sel):
        system = ModeBVPSystem(coeffs, msq[sel], rhs_cols[:, sel], gc0[idx][sel], gc1[idx][sel],
                               tuple(modes[j] for j in sel))
        return solve_mode_bvp(system, check_resonance).p

    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    p_modes = np.concatenate(parts, axis=1)
    coef = np.zeros((4, spec.mode_cut + 1, spec.mode_cut + 1, spec.n0))
    coef[idx] = p_modes.T
    return synthesize(FourierField(coef, spec.mode_cut), spec)


def ck_norm(f, k, h=None):
    """Sum of sup-norms of all derivatives of order <= k.

    3-D fields use second-order differences in x0 (needs ``h``) and
    spectral derivatives in x'; 2-D boundary fields are tangential only.
    """
    f = np.asarray(f, dtype=float)
    if k < 0:
        return 0.0
    total = 0.0
    axial = [f]
    if f.ndim == 3:
        for _ in range(k):
            axial.append(d0(axial[-1], h))
    for a0, g in enumerate(axial):
        for a1 in range(k - a0 + 1):
            for a2 in range(k - a0 - a1 + 1):
                total += float(np.abs(spectral_derivative(g, a1, a2)).max())
    return total


def apriori_bound_check(solution, h, g0, g1, spec, k=2):
    """Empirical ratio ||p||_k / (||h||_{k-2} + ||g0||_{k-1} + ||g1||_k)."""
    data = ck_norm(h, k - 2, spec.h) + ck_norm(g0, k - 1) + ck_norm(g1, k)
    sol = ck_norm(solution, k, spec.h)
    if data == 0.0:
        if sol > 0.0:
            raise FannoError("zero data produced a nonzero solution (solver defect)")
        return 0.0
    return sol / data


def sweep_mu(coeffs_for_mu, mus, mode_cut=8, threshold=None):
    """S-Condition reports over a list of friction coefficients.

    ``coeffs_for_mu(mu)`` must return the operator coefficients of the
    background at that mu.
    """
    return [check_s_condition(coeffs_for_mu(float(mu)), mode_cut=mode_cut, threshold=threshold) for mu in mus]


def sub_threshold_intervals(mus, reports):
    """Maximal runs of consecutive sweep points whose verdict is not 'satisfied'."""
    out, start = [], None
    for k, (mu, rep) in enumerate(zip(mus, reports)):
        bad = rep.verdict != "satisfied"
        if bad and start is None:
            start = k
        if start is not None and (not bad or k == len(mus) - 1):
            stop = k if bad else k - 1
            out.append((float(mus[start]), float(mus[stop]), stop - start + 1))
            start = None
    return out
