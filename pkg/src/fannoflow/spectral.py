"""Duct grid, 4-parity Fourier transform on the torus and axial stencils.

Fields live on the uniform tensor grid ``x0 x x1 x x2`` with shape
``(n0, n_t, n_t)``; boundary fields on a cross-section have shape
``(n_t, n_t)``. The tangential period is 2*pi in both directions.

The Fourier representation uses the real basis

    f = sum_m lambda_m [ f1 cos cos + f2 sin cos + f3 cos sin + f4 sin sin ]

with ``lambda_m`` = 1/4, 1/2 or 1 depending on how many of ``m1, m2``
vanish, and coefficients ``f_i = pi**-2 * integral(f * basis_i)``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, ShapeError

PARITIES = (1, 2, 3, 4)


@dataclass(frozen=True)
class DuctSpec:
    """Grid for the duct ``[0, L] x T^2``.

    n0 is the number of axial samples (n_steps + 1), n_t the number of
    tangential samples per direction and mode_cut the Fourier truncation.
    """

    length: float
    n0: int
    n_t: int = 32
    mode_cut: int = 8

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError("duct length must be positive")
        if self.n0 < 2:
            raise DomainError("need at least 2 axial samples")
        if self.n_t < 4 or self.n_t & (self.n_t - 1):
            raise DomainError("n_t must be a power of two >= 4")
        if not 0 <= self.mode_cut <= self.n_t // 2:
            raise DomainError("mode_cut must lie in [0, n_t/2]")

    @classmethod
    def from_steps(cls, length, n_steps, n_t=32, mode_cut=8):
        return cls(float(length), int(n_steps) + 1, int(n_t), int(mode_cut))

    @property
    def h(self):
        return self.length / (self.n0 - 1)

    @property
    def x0(self):
        return np.linspace(0.0, self.length, self.n0)

    @property
    def x0_half(self):
        """Axial nodes plus midpoints, as used by the RK4 mode solver."""
        return np.linspace(0.0, self.length, 2 * self.n0 - 1)

    @property
    def xt(self):
        return 2.0 * np.pi * np.arange(self.n_t) / self.n_t

    @property
    def shape(self):
        return (self.n0, self.n_t, self.n_t)

    def mesh(self):
        """Broadcastable coordinate arrays (x0, x1, x2)."""
        x1, x2 = np.meshgrid(self.xt, self.xt, indexing="ij")
        return self.x0[:, None, None], x1[None], x2[None]

    def cross_section(self):
        return np.meshgrid(self.xt, self.xt, indexing="ij")

    def zeros(self):
        return np.zeros(self.shape)

    def check_field(self, f, name="field"):
        f = np.asarray(f, dtype=float)
        if f.shape != self.shape:
            raise ShapeError(f"{name} has shape {f.shape}, expected {self.shape}")
        return f

    def check_section(self, f, name="boundary field"):
        f = np.asarray(f, dtype=float)
        if f.shape != (self.n_t, self.n_t):
            raise ShapeError(f"{name} has shape {f.shape}, expected {(self.n_t, self.n_t)}")
        return f


def mode_weights(mode_cut):
    """lambda_m on the (mode_cut+1)**2 index box."""
    lam = np.ones((mode_cut + 1, mode_cut + 1))
    lam[0, :] *= 0.5
    lam[:, 0] *= 0.5
    return lam


def basis_mask(mode_cut):
    """Boolean (4, N+1, N+1) mask of basis functions that are not identically zero."""
    mask = np.ones((4, mode_cut + 1, mode_cut + 1), dtype=bool)
    mask[1, 0, :] = mask[3, 0, :] = False  # sin(0 x1)
    mask[2, :, 0] = mask[3, :, 0] = False  # sin(0 x2)
    return mask


def _trig_tables(spec):
    m = np.arange(spec.mode_cut + 1)
    arg = np.outer(m, spec.xt)
    return np.cos(arg), np.sin(arg)


@dataclass(frozen=True)
class FourierField:
    """Per-mode coefficients ``coeffs[i-1, m1, m2, ...]`` of a field.

    Trailing axes (if any) run over the axial grid.
    """

    coeffs: np.ndarray
    mode_cut: int

    @property
    def weights(self):
        return mode_weights(self.mode_cut)

    def mode(self, i, m1, m2):
        return self.coeffs[i - 1, m1, m2]

    def modes(self):
        """Iterate over (i, (m1, m2)) for the non-trivial basis functions."""
        mask = basis_mask(self.mode_cut)
        for i, m1, m2 in zip(*np.nonzero(mask)):
            yield int(i) + 1, (int(m1), int(m2))


def analyze(samples, spec):
    """Coefficients of a grid field in the 4-parity basis.

    ``samples`` has shape (n0, n_t, n_t) or (n_t, n_t); the returned
    coefficient array has shape (4, N+1, N+1[, n0]).
    """
    f = np.asarray(samples, dtype=float)
    if f.shape[-2:] != (spec.n_t, spec.n_t) or f.ndim not in (2, 3):
        raise ShapeError(f"cannot analyze array of shape {f.shape} on a {spec.n_t}^2 section")
    if f.ndim == 3 and f.shape[0] != spec.n0:
        raise ShapeError(f"axial size {f.shape[0]} does not match n0={spec.n0}")
    C, S = _trig_tables(spec)
    scale = 4.0 / spec.n_t**2
    if spec.mode_cut == spec.n_t // 2:
        # discrete orthogonality doubles the Nyquist self-product
        C = C.copy()
        C[-1] *= 0.5
    out = np.empty((4, spec.mode_cut + 1, spec.mode_cut + 1) + f.shape[:-2])
    for k, (A, B) in enumerate(((C, C), (S, C), (C, S), (S, S))):
        out[k] = np.moveaxis(scale * (A @ f @ B.T), (-2, -1), (0, 1))
    out[~basis_mask(spec.mode_cut)] = 0.0
    return FourierField(out, spec.mode_cut)


def synthesize(field, spec):
    """Evaluate the truncated 4-parity series on the grid."""
    coeffs = field.coeffs if isinstance(field, FourierField) else np.asarray(field)
    N = coeffs.shape[1] - 1
    if coeffs.shape[:3] != (4, N + 1, N + 1) or N != spec.mode_cut:
        raise ShapeError(f"coefficient array {coeffs.shape} does not match mode_cut={spec.mode_cut}")
    C, S = _trig_tables(spec)
    w = coeffs * mode_weights(N).reshape((1, N + 1, N + 1) + (1,) * (coeffs.ndim - 3))
    out = 0.0
    for k, (A, B) in enumerate(((C, C), (S, C), (C, S), (S, S))):
        wk = np.moveaxis(w[k], (0, 1), (-2, -1))
        out = out + A.T @ wk @ B
    return np.asarray(out)


def spectral_derivative(f, a1=0, a2=0):
    """Tangential derivative d1**a1 d2**a2 along the last two axes (full resolution)."""
    f = np.asarray(f, dtype=float)
    if a1 == 0 and a2 == 0:
        return f.copy()
    n = f.shape[-1]
    k = np.fft.fftfreq(n, d=1.0 / n)
    F = np.fft.fft2(f, axes=(-2, -1))
    k1 = (1j * k) ** a1
    k2 = (1j * k) ** a2
    if a1 % 2:
        k1[n // 2] = 0.0
    if a2 % 2:
        k2[n // 2] = 0.0
    F = F * k1[:, None] * k2[None, :]
    return np.real(np.fft.ifft2(F, axes=(-2, -1)))


def tangential_laplacian(f):
    return spectral_derivative(f, 2, 0) + spectral_derivative(f, 0, 2)


def truncate(f, mode_cut):
    """Project a field (…, n_t, n_t) onto |k1|, |k2| <= mode_cut."""
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    k = np.abs(np.fft.fftfreq(n, d=1.0 / n))
    w = (k <= mode_cut).astype(float)
    F = np.fft.fft2(f, axes=(-2, -1)) * w[:, None] * w[None, :]
    return np.real(np.fft.ifft2(F, axes=(-2, -1)))


def trig_coefficients(f, mode_cut):
    """Complex coefficients c[..., k1+K, k2+K] of f = sum c exp(i k.x), |k| <= K."""
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    K = mode_cut
    F = np.fft.fft2(f, axes=(-2, -1)) / n**2
    idx = np.arange(-K, K + 1) % n
    c = F[..., idx[:, None], idx[None, :]]
    if 2 * K == n:
        w = np.ones(2 * K + 1)
        w[0] = w[-1] = 0.5
        c = c * w[:, None] * w[None, :]
    return c


def evaluate_trig(coefs, points):
    """Evaluate truncated trigonometric series at scattered points.

    coefs: (..., 2K+1, 2K+1) complex; points: (..., P, 2). Leading axes
    broadcast. Returns (..., P) real values.
    """
    K = (coefs.shape[-1] - 1) // 2
    k = np.arange(-K, K + 1)
    e1 = np.exp(1j * points[..., 0, None] * k)
    e2 = np.exp(1j * points[..., 1, None] * k)
    return np.real(np.einsum("...pk,...pl,...kl->...p", e1, e2, coefs, optimize=True))


def d0(f, h):
    """Second-order first derivative along axis 0 (one-sided at the ends)."""
    return np.gradient(np.asarray(f, dtype=float), h, axis=0, edge_order=2)


def d00(f, h):
    """Second-order second derivative along axis 0 (one-sided at the ends)."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[1:-1] = (f[:-2] - 2.0 * f[1:-1] + f[2:]) / h**2
    if f.shape[0] >= 4:
        out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h**2
        out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / h**2
    elif f.shape[0] == 3:
        out[0] = out[1]
        out[-1] = out[1]
    else:
        out[:] = 0.0
    return out


def cumulative_simpson(f, h):
    """Cumulative integral from x0=0 along axis 0, fourth order.

    Even nodes use composite Simpson; odd nodes add the integral of the
    quadratic through three neighbouring samples over one interval.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    out = np.zeros_like(f)
    if n == 2:
        out[1] = 0.5 * h * (f[0] + f[1])
        return out
    for j in range(1, n):
        if j % 2 == 0:
            out[j] = out[j - 2] + h / 3.0 * (f[j - 2] + 4.0 * f[j - 1] + f[j])
        elif j + 1 < n:
            out[j] = out[j - 1] + h / 12.0 * (5.0 * f[j - 1] + 8.0 * f[j] - f[j + 1])
        else:
            out[j] = out[j - 1] + h / 12.0 * (-f[j - 2] + 8.0 * f[j - 1] + 5.0 * f[j])
    return out
