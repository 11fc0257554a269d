"""One-dimensional Fanno flows: subsonic, supersonic and transonic-shock backgrounds.

Along a friction duct the Mach number obeys the decoupled ODE

    dM/dx = mu (gamma + 1) M**3 / (2 (1 - M**2))

whose first integral is ``1/M**2 + ln M**2 + mu (gamma + 1) x = const``.
Given M, the mass flux ``j = rho u`` and the entropy function ``A`` fix
the whole state, which gives the closed form used by :class:`FannoFlow`.
:func:`integrate_background` solves the primitive ODE system with RK4
instead and serves as the independent check of the closed form.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ChokingError, DomainError, SonicSingularityError
from .gas import GasModel

SONIC_GUARD = 1e-6
CSV_COLUMNS = ("x0", "p", "rho", "u", "E", "s", "M", "theta")


def mach_ode_rhs(M, gas):
    """dM/dx0 for the Fanno Mach equation."""
    M = float(M)
    if not M > 0:
        raise DomainError(f"Mach number must be positive, got {M}")
    if abs(1.0 - M * M) < SONIC_GUARD:
        raise SonicSingularityError(f"Mach number {M} is within the sonic guard")
    return gas.mu * (gas.gamma + 1.0) * M**3 / (2.0 * (1.0 - M * M))


def _fanno_potential(M):
    M2 = np.asarray(M, dtype=float) ** 2
    return 1.0 / M2 + np.log(M2)


def max_length(M0, gas):
    """Choking length L_{M0}; ``math.inf`` when there is no friction."""
    if not M0 > 0:
        raise DomainError("entry Mach number must be positive")
    num = float(_fanno_potential(M0)) - 1.0
    if gas.mu == 0.0:
        return 0.0 if M0 == 1.0 else math.inf
    return num / (gas.mu * (gas.gamma + 1.0))


def mach_at(x0, M0, gas):
    """Mach number at distance x0 from the entry, on the same side of 1 as M0.

    Solves ``1/M**2 + ln M**2 = 1/M0**2 + ln M0**2 - mu (gamma+1) x0`` by
    vectorized bisection on the monotone branch, polished by Newton steps.
    Accepts scalars or arrays.
    """
    x = np.asarray(x0, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    if not M0 > 0:
        raise DomainError("entry Mach number must be positive")
    if np.any(x < 0):
        raise DomainError("x0 must be non-negative")
    L = max_length(M0, gas)
    if M0 == 1.0 or np.any(x >= L):
        raise ChokingError(f"x0 reaches the choking length L_M0={L:.12g}", max_length=L)
    if gas.mu == 0.0:
        M = np.full_like(x, float(M0))
        return float(M[0]) if scalar else M
    target = float(_fanno_potential(M0)) - gas.mu * (gas.gamma + 1.0) * x
    sub = M0 < 1.0
    lo = np.full_like(x, M0 if sub else 1.0)
    hi = np.full_like(x, 1.0 if sub else M0)
    # potential decreases in M below 1 and increases above 1
    sign = -1.0 if sub else 1.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        above = sign * (_fanno_potential(mid) - target) > 0
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    M = 0.5 * (lo + hi)
    for _ in range(2):
        g = _fanno_potential(M) - target
        dg = 2.0 * (M * M - 1.0) / M**3
        step = np.where(dg != 0, g / np.where(dg != 0, dg, 1.0), 0.0)
        M_new = M - step
        M = np.where((M_new > np.minimum(lo, hi) - 1e-15) & (M_new < np.maximum(lo, hi) + 1e-15), M_new, M)
    return float(M[0]) if scalar else M


def downstream_mach(M_minus, gas):
    """Mach number behind a normal shock. M_minus = 1 is the degenerate shock."""
    if not M_minus >= 1.0:
        raise DomainError(f"upstream Mach number must be >= 1, got {M_minus}")
    g = gas.gamma
    M2 = M_minus * M_minus
    return math.sqrt((1.0 + 0.5 * (g - 1.0) * M2) / (g * M2 - 0.5 * (g - 1.0)))


def shock_ratios(M_minus, gamma):
    """Downstream/upstream ratios (u, rho, p) across a normal shock."""
    M2 = M_minus * M_minus
    u_ratio = ((gamma - 1.0) * M2 + 2.0) / ((gamma + 1.0) * M2)
    p_ratio = (2.0 * gamma * M2 - (gamma - 1.0)) / (gamma + 1.0)
    return u_ratio, 1.0 / u_ratio, p_ratio


@dataclass(frozen=True)
class FannoFlow:
    """Closed-form Fanno flow through a reference point.

    The flow has Mach number ``M_start`` at ``x_start``, mass flux
    ``mass_flux`` and entropy function ``A``. All state functions accept
    arrays of positions.
    """

    gas: GasModel
    M_start: float
    A: float
    mass_flux: float
    x_start: float = 0.0

    def __post_init__(self):
        if abs(1.0 - self.M_start**2) < SONIC_GUARD:
            raise SonicSingularityError("reference Mach number is sonic")
        if not (self.A > 0 and self.mass_flux > 0 and self.M_start > 0):
            raise DomainError("A, mass flux and Mach number must be positive")

    @classmethod
    def through(cls, gas, M_start, p, A, x_start=0.0):
        """Flow with Mach ``M_start`` and pressure ``p`` at ``x_start``."""
        if not p > 0:
            raise DomainError("anchor pressure must be positive")
        rho = (p / A) ** (1.0 / gas.gamma)
        u = M_start * math.sqrt(gas.gamma * p / rho)
        return cls(gas, float(M_start), float(A), rho * u, float(x_start))

    @property
    def subsonic(self):
        return self.M_start < 1.0

    @property
    def regime(self):
        return "subsonic" if self.subsonic else "supersonic"

    @property
    def choking_length(self):
        return max_length(self.M_start, self.gas)

    def mach(self, x):
        return mach_at(np.asarray(x, dtype=float) - self.x_start, self.M_start, self.gas)

    def state(self, x):
        """Dictionary of p, rho, u, E, M, t, c2 at positions x."""
        g = self.gas.gamma
        M = np.asarray(self.mach(x), dtype=float)
        rho = (self.mass_flux**2 / (g * self.A)) ** (1.0 / (g + 1.0)) * M ** (-2.0 / (g + 1.0))
        p = self.A * rho**g
        u = self.mass_flux / rho
        c2 = g * p / rho
        E = 0.5 * u * u + c2 / (g - 1.0)
        return {"p": p, "rho": rho, "u": u, "E": E, "M": M, "t": M * M, "c2": c2}

    def derivatives(self, x):
        """Exact x0-derivatives of p, rho, u, E and t, plus ``p2`` = p''."""
        s = self.state(x)
        mu, g, t = self.gas.mu, self.gas.gamma, s["t"]
        q = t / (t - 1.0)
        dt = mu * (g + 1.0) * t * t / (1.0 - t)
        dp = mu * g * s["p"] * q
        return {
            "p": dp,
            "p2": mu * g * (dp * q - s["p"] * dt / (t - 1.0) ** 2),
            "rho": mu * s["rho"] * q,
            "u": -mu * s["u"] * q,
            "E": -mu * s["u"] ** 2,
            "t": dt,
        }

    def sample(self, x0):
        x0 = np.asarray(x0, dtype=float)
        s = self.state(x0)
        entropy = float(self.gas.entropy(self.A))
        return BackgroundProfile(
            x0=x0, p=s["p"], rho=s["rho"], u=s["u"], E=s["E"],
            s=np.full_like(x0, entropy), M=s["M"], gas=self.gas, flow=self,
        )


@dataclass(frozen=True)
class BackgroundProfile:
    """Sampled 1-D background on an x0 grid."""

    x0: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    u: np.ndarray
    E: np.ndarray
    s: np.ndarray
    M: np.ndarray
    gas: GasModel
    flow: FannoFlow = field(default=None, repr=False)

    @property
    def t(self):
        return self.M**2

    @property
    def c2(self):
        return self.gas.gamma * self.p / self.rho

    @property
    def c(self):
        return np.sqrt(self.c2)

    @property
    def theta(self):
        return self.p / (self.rho * self.gas.R)

    @property
    def regime(self):
        return "subsonic" if np.all(self.M < 1.0) else "supersonic"

    @property
    def length(self):
        return float(self.x0[-1] - self.x0[0])

    def invariants(self):
        """Relative drifts of the quantities that must stay constant."""
        flux = self.rho * self.u
        mu, g = self.gas.mu, self.gas.gamma
        implicit = _fanno_potential(self.M) + mu * (g + 1.0) * (self.x0 - self.x0[0])
        return {
            "mass_flux_drift": float(np.ptp(flux) / abs(flux[0])),
            "entropy_drift": float(np.ptp(self.s) / max(1.0, abs(self.s[0]))),
            "implicit_relation_drift": float(np.ptp(implicit)),
        }

    def table(self):
        return np.column_stack([self.x0, self.p, self.rho, self.u, self.E, self.s, self.M, self.theta])

    def to_csv(self, path):
        from .io import write_csv

        write_csv(path, CSV_COLUMNS, self.table())


def _primitive_rhs(y, mu, g):
    u, rho, p = y[0], y[1], y[2]
    t = u * u * rho / (g * p)
    if abs(1.0 - t) < SONIC_GUARD:
        raise SonicSingularityError("background integration reached the sonic guard")
    q = t / (t - 1.0)
    return np.array([-mu * u * q, mu * rho * q, mu * g * p * q, -mu * u * u, 0.0])


def _rk4(f, y0, h, n):
    ys = np.empty((n + 1, len(y0)))
    ys[0] = y = np.asarray(y0, dtype=float)
    for k in range(n):
        k1 = f(y)
        k2 = f(y + 0.5 * h * k1)
        k3 = f(y + 0.5 * h * k2)
        k4 = f(y + h * k3)
        y = y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        ys[k + 1] = y
    return ys


def integrate_background(M0, L, gas, n_steps=1000, p_exit=None, p_entry=None, s0=0.0):
    """Integrate the primitive Fanno ODE system on ``[0, L]`` with RK4.

    Subsonic flows are anchored by the exit pressure ``p_exit``, supersonic
    ones by ``p_entry`` (the two are mutually exclusive); ``s0`` is the
    entropy at the entry. The system is invariant under
    ``(u, rho, p) -> (l**a u, l**b rho, l**(b gamma) p)`` with fixed Mach
    number and A, so the profile is integrated once from a provisional
    entry state and rescaled to meet the pressure anchor exactly.
    """
    if abs(1.0 - M0 * M0) < SONIC_GUARD:
        raise SonicSingularityError("entry Mach number is sonic")
    if (p_exit is None) == (p_entry is None):
        raise DomainError("give exactly one of p_exit or p_entry")
    anchor = p_exit if p_exit is not None else p_entry
    if not anchor > 0:
        raise DomainError("anchor pressure must be positive")
    if not L > 0 or n_steps < 1:
        raise DomainError("need L > 0 and n_steps >= 1")
    Lmax = max_length(M0, gas)
    if L >= Lmax * (1.0 - SONIC_GUARD):
        raise ChokingError(f"duct length {L:.12g} reaches the choking length L_M0={Lmax:.12g}", max_length=Lmax)
    g, mu = gas.gamma, gas.mu
    A = float(gas.A(s0))
    rho0 = 1.0
    p0 = A * rho0**g
    u0 = M0 * math.sqrt(g * p0 / rho0)
    E0 = 0.5 * u0 * u0 + g * p0 / ((g - 1.0) * rho0)
    h = L / n_steps
    ys = _rk4(lambda y: _primitive_rhs(y, mu, g), [u0, rho0, p0, E0, s0], h, n_steps)
    u, rho, p, E, s = ys.T
    lam_p = anchor / (p[-1] if p_exit is not None else p[0])
    lam = lam_p ** ((g + 1.0) / (2.0 * g))  # scaling of the mass flux
    p = p * lam_p
    rho = rho * lam ** (2.0 / (g + 1.0))
    u = u * lam ** ((g - 1.0) / (g + 1.0))
    E = E * lam ** (2.0 * (g - 1.0) / (g + 1.0))
    M = u / np.sqrt(g * p / rho)
    x0 = np.linspace(0.0, L, n_steps + 1)
    flow = FannoFlow.through(gas, M0, p[0], A)
    return BackgroundProfile(x0=x0, p=p, rho=rho, u=u, E=E, s=s, M=M, gas=gas, flow=flow)


def integrate_mach(M0, L, gas, n_steps=1000):
    """RK4 solution of the decoupled Mach ODE on ``[0, L]``."""
    h = L / n_steps
    ys = _rk4(lambda y: np.array([mach_ode_rhs(y[0], gas)]), [M0], h, n_steps)
    return np.linspace(0.0, L, n_steps + 1), ys[:, 0]


def choking_length_from_ode(M0, gas, margin=1e-4, n_steps=2000, frac=0.02, max_steps=200000):
    """Distance at which the RK4 Mach solution first reaches ``1 -/+ margin``.

    The step is capped so one step moves M by at most ``frac`` of the
    remaining gap, which keeps RK4 accurate as dM/dx0 blows up. Steps that
    would cross the target (or enter the sonic guard) are rejected and
    retried with half the step.
    """
    if gas.mu == 0.0:
        return math.inf
    sub = M0 < 1.0
    target = 1.0 - margin if sub else 1.0 + margin
    if (sub and M0 >= target) or (not sub and M0 <= target):
        return 0.0
    h = abs(target - M0) / abs(mach_ode_rhs(M0, gas)) / n_steps
    x, M = 0.0, float(M0)
    for _ in range(max_steps):
        try:
            k1 = mach_ode_rhs(M, gas)
            h = min(h, frac * abs(target - M) / abs(k1)) if abs(target - M) > 1e-10 else h
            k2 = mach_ode_rhs(M + 0.5 * h * k1, gas)
            k3 = mach_ode_rhs(M + 0.5 * h * k2, gas)
            k4 = mach_ode_rhs(M + h * k3, gas)
            M_new = M + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            crossed = (M_new >= target) if sub else (M_new <= target)
        except (SonicSingularityError, DomainError):
            crossed = True
        if crossed:
            h *= 0.5
            if h < 1e-15 * max(1.0, x):
                return x
            continue
        x, M = x + h, M_new
        if abs(M - target) < 1e-13:
            return x
    raise DomainError("choking length search did not terminate")


@dataclass(frozen=True)
class TransonicShockSolution:
    shock_pos: float
    upstream: BackgroundProfile
    downstream: BackgroundProfile
    M_minus: float
    M_plus: float

    def jump_residuals(self):
        """Relative residuals of the mass, momentum and energy jump conditions."""
        up, dn = self.upstream, self.downstream
        rm, um, pm, Em = up.rho[-1], up.u[-1], up.p[-1], up.E[-1]
        rp, upl, pp, Ep = dn.rho[0], dn.u[0], dn.p[0], dn.E[0]
        return {
            "mass": abs(rm * um - rp * upl) / abs(rm * um),
            "momentum": abs(rm * um**2 + pm - rp * upl**2 - pp) / abs(rm * um**2 + pm),
            "energy": abs(Em - Ep) / abs(Em),
        }


def construct_transonic_shock(M0, L1, L, gas, p_entry=1.0, s0=0.0, n_steps=1000):
    """Supersonic flow on [0, L1], a normal shock at L1, subsonic flow on [L1, L]."""
    if not M0 > 1.0:
        raise DomainError("the entry flow must be supersonic")
    if not 0.0 < L1 < L:
        raise DomainError("need 0 < L1 < L")
    L_up = max_length(M0, gas)
    if L1 >= L_up:
        raise ChokingError(f"shock position {L1:.12g} beyond the upstream choking length {L_up:.12g}", max_length=L_up)
    A = float(gas.A(s0))
    upstream_flow = FannoFlow.through(gas, M0, p_entry, A)
    M_minus = float(upstream_flow.mach(L1))
    M_plus = downstream_mach(M_minus, gas)
    L2 = max_length(M_plus, gas)
    if L - L1 >= L2:
        raise ChokingError(f"downstream length {L - L1:.12g} reaches L_M+={L2:.12g}", max_length=L1 + L2)
    up = upstream_flow.state(L1)
    u_ratio, rho_ratio, p_ratio = shock_ratios(M_minus, gas.gamma)
    rho_p = float(up["rho"]) * rho_ratio
    p_p = float(up["p"]) * p_ratio
    A_plus = p_p / rho_p**gas.gamma
    downstream_flow = FannoFlow(gas, M_plus, A_plus, rho_p * float(up["u"]) * u_ratio, L1)
    n_up = max(2, int(round(n_steps * L1 / L)))
    n_dn = max(2, n_steps - n_up)
    return TransonicShockSolution(
        shock_pos=float(L1),
        upstream=upstream_flow.sample(np.linspace(0.0, L1, n_up + 1)),
        downstream=downstream_flow.sample(np.linspace(L1, L, n_dn + 1)),
        M_minus=M_minus,
        M_plus=M_plus,
    )
