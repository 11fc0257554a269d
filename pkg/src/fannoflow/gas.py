"""Polytropic gas model and pointwise thermodynamic relations.

All helpers accept scalars or numpy arrays and broadcast.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GasModel:
    """Constants of the polytropic gas p = A(s) rho**gamma with friction mu.

    ``A(s) = k0 * exp(s / c_v)``; ``R`` only enters the temperature.
    """

    gamma: float = 1.4
    mu: float = 0.01
    c_v: float = 2.5
    k0: float = 1.0
    R: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if not self.mu >= 0.0:
            raise DomainError(f"mu must be non-negative, got {self.mu}")
        for name in ("c_v", "k0", "R"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")

    def A(self, s):
        """Entropy function A(s)."""
        return self.k0 * np.exp(np.asarray(s, dtype=float) / self.c_v)

    def entropy(self, A):
        """Inverse of :meth:`A`."""
        A = np.asarray(A, dtype=float)
        if np.any(A <= 0):
            raise DomainError("A(s) must be positive")
        return self.c_v * np.log(A / self.k0)

    def with_mu(self, mu):
        return GasModel(self.gamma, mu, self.c_v, self.k0, self.R)


def _positive(name, value):
    value = np.asarray(value, dtype=float)
    if np.any(~(value > 0)):
        raise DomainError(f"{name} must be positive")
    return value


def c_squared(p, rho, gamma):
    """c**2 = gamma p / rho."""
    return gamma * _positive("pressure", p) / _positive("density", rho)


def bernoulli(p, rho, speed_sq, gamma):
    """E = |u|**2 / 2 + gamma p / ((gamma - 1) rho)."""
    return 0.5 * speed_sq + c_squared(p, rho, gamma) / (gamma - 1.0)


def density_from(p, A, gamma):
    """rho = (p / A)**(1/gamma)."""
    return (_positive("pressure", p) / _positive("A(s)", A)) ** (1.0 / gamma)


@dataclass(frozen=True)
class ThermoState:
    """A (possibly array-valued) gas state with tangential velocity ``u_t``."""

    p: object
    rho: object
    u0: object
    u_t: tuple = field(default=(0.0, 0.0))

    def __post_init__(self):
        _positive("pressure", self.p)
        _positive("density", self.rho)
        _positive("normal velocity u0", self.u0)

    def speed_sq(self):
        u1, u2 = self.u_t
        return np.asarray(self.u0) ** 2 + np.asarray(u1) ** 2 + np.asarray(u2) ** 2

    def c2(self, gas):
        return c_squared(self.p, self.rho, gas.gamma)

    def mach(self, gas):
        return np.sqrt(self.speed_sq() / self.c2(gas))

    def bernoulli(self, gas):
        return bernoulli(self.p, self.rho, self.speed_sq(), gas.gamma)

    def temperature(self, gas):
        return np.asarray(self.p) / (np.asarray(self.rho) * gas.R)

    def A(self, gas):
        return np.asarray(self.p) / np.asarray(self.rho) ** gas.gamma

    def entropy(self, gas):
        return gas.entropy(self.A(gas))


def sound_speed_sq(state, gas):
    """Squared sound speed gamma p / rho of a :class:`ThermoState`."""
    return state.c2(gas)
