"""Shared builders for the test suite."""
import functools

import numpy as np
from scipy.integrate import solve_ivp

from fannoflow.background import FannoFlow, integrate_background
from fannoflow.elliptic import assemble_coefficients
from fannoflow.gas import GasModel
from fannoflow.iteration import SolverContext
from fannoflow.spectral import DuctSpec

# the 3-D test configuration: subsonic, L well below the choking length
GAMMA, M0, MU, LENGTH, P_EXIT = 1.4, 0.5, 0.1, 1.0, 1.0


@functools.lru_cache(maxsize=None)
def context(n_steps, mu=MU, n_t=32, mode_cut=8):
    gas = GasModel(gamma=GAMMA, mu=mu)
    profile = integrate_background(M0, LENGTH, gas, n_steps=n_steps, p_exit=P_EXIT)
    return SolverContext(profile, gas, DuctSpec.from_steps(LENGTH, n_steps, n_t, mode_cut))


@functools.lru_cache(maxsize=None)
def elliptic_setup(n_steps, mu=MU, mode_cut=8, n_t=32):
    gas = GasModel(gamma=GAMMA, mu=mu)
    spec = DuctSpec.from_steps(LENGTH, n_steps, n_t, mode_cut)
    flow = FannoFlow.through(gas, M0, 1.0, 1.0)
    coeffs = assemble_coefficients(flow.sample(spec.x0), gas)
    return gas, spec, flow, coeffs


def basis(i, m, X1, X2):
    a = np.cos(m[0] * X1) if i in (1, 3) else np.sin(m[0] * X1)
    b = np.cos(m[1] * X2) if i in (1, 2) else np.sin(m[1] * X2)
    return a * b


# (profile, profile', profile'', parity, (m1, m2), amplitude)
MANUFACTURED_TERMS = (
    (lambda x: x**2, lambda x: 2 * x, lambda x: 2 + 0 * x, 1, (1, 0), 0.7),
    (np.cos, lambda x: -np.sin(x), lambda x: -np.cos(x), 4, (1, 3), 0.3),
    (lambda x: 1 + x, lambda x: 1 + 0 * x, lambda x: 0 * x, 1, (0, 0), 0.5),
    (np.exp, np.exp, np.exp, 2, (2, 1), -0.2),
    (lambda x: x**3, lambda x: 3 * x**2, lambda x: 6 * x, 3, (0, 2), 0.4),
)


def manufactured(spec, flow, coeffs, terms=MANUFACTURED_TERMS):
    """Band-limited p* with its exact right-hand side on the half grid and its traces.

    The nonlocal integral of each axial profile is computed by an
    independent adaptive ODE integration.
    """
    mu = coeffs.mu
    X1, X2 = spec.cross_section()
    xh = coeffs.x
    b = lambda x: np.exp(2.0 * mu * x) / flow.state(np.atleast_1d(x))["rho"]
    h_half = np.zeros((len(xh), spec.n_t, spec.n_t))
    p_star = np.zeros(spec.shape)
    g0 = np.zeros((spec.n_t, spec.n_t))
    g1 = np.zeros_like(g0)
    for f, df, ddf, i, m, amp in terms:
        sol = solve_ivp(lambda x, y: [b(x)[0] * f(x)], [xh[0], xh[-1]], [0.0], t_eval=xh, rtol=1e-13, atol=1e-15)
        msq = m[0] ** 2 + m[1] ** 2
        axial = coeffs.e1 * ddf(xh) + coeffs.e2 * df(xh) + (coeffs.e3 + msq) * f(xh) + coeffs.e4 * sol.y[0]
        shape = basis(i, m, X1, X2)
        h_half += amp * axial[:, None, None] * shape
        p_star += amp * f(spec.x0)[:, None, None] * shape
        g0 += amp * (df(0.0) + coeffs.gamma0 * f(0.0)) * shape
        g1 += amp * f(spec.length) * shape
    return p_star, h_half, g0, g1
