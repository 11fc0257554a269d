"""Characteristics of u'/u0 and transport solves along them.

Characteristics are traced backward from every grid node with RK4, one
and two axial levels deep. The cross-section velocity at the half levels
comes from cubic Lagrange interpolation (in x0) of per-level
trigonometric coefficients. A transport problem

    d/dx0 I + (u'/u0) . grad' I + kappa I = S,   I = I0 at x0 = 0

is then marched level by level with Simpson's rule along the two-level
characteristic segments; values off the grid come from trigonometric
interpolation truncated at ``mode_cut``.
"""
import numpy as np

from .errors import DegeneracyError, FannoError
from .spectral import spectral_derivative, trig_coefficients

LEVEL_CHUNK = 64
TAYLOR_ORDER = 4
TAYLOR_RADIUS = 0.05


def _coefs(f, K):
    return trig_coefficients(f, K)


def _eval(coefs, pts):
    """Batched trig evaluation: coefs (n, k, k), pts (n, P, 2) -> (n, P)."""
    K = (coefs.shape[-1] - 1) // 2
    k = np.arange(-K, K + 1)
    out = np.empty(pts.shape[:-1])
    for s in range(0, len(pts), LEVEL_CHUNK):
        c = coefs[s:s + LEVEL_CHUNK]
        x = pts[s:s + LEVEL_CHUNK]
        e1 = np.exp(1j * x[..., 0, None] * k)
        e2 = np.exp(1j * x[..., 1, None] * k)
        out[s:s + LEVEL_CHUNK] = np.real(np.einsum("npk,npk->np", e1 @ c, e2))
    return out


def _axis_multipliers(n, K, order, real_axis=False):
    """Per-axis derivative multipliers of the truncated interpolant, orders 0..order.

    The Nyquist line (present when 2K = n) belongs to cos(n x / 2), whose
    odd derivatives vanish at the nodes and even ones are real.
    """
    k = np.fft.rfftfreq(n, d=1.0 / n) if real_axis else np.fft.fftfreq(n, d=1.0 / n)
    nyq = np.abs(k) == n // 2
    keep = (np.abs(k) <= K).astype(float)
    rows = []
    for a in range(order + 1):
        m = (1j * k) ** a
        if 2 * K == n:
            m[nyq] = 0.5 * ((0.5j * n) ** a + (-0.5j * n) ** a)
        rows.append(m * keep)
    return rows


_MULTIPLIERS = {}


def _taylor_multipliers(n, K, order):
    """Stacked multipliers d1^a1 d2^a2 / (a1! a2!) for the rfft2 layout, with their (a1, a2) indices."""
    key = (n, K, order)
    if key not in _MULTIPLIERS:
        m1 = _axis_multipliers(n, K, order)
        m2 = _axis_multipliers(n, K, order, real_axis=True)
        fact = np.cumprod([1.0] + list(range(1, order + 1)))
        index = [(a1, a2) for a1 in range(order + 1) for a2 in range(order + 1 - a1)]
        stack = np.stack([m1[a1][:, None] * m2[a2][None, :] / (fact[a1] * fact[a2]) for a1, a2 in index])
        _MULTIPLIERS[key] = (stack, index)
    return _MULTIPLIERS[key]


def taylor_order(max_disp, K, tol=1e-15, cap=TAYLOR_ORDER):
    """Smallest degree whose next Taylor term, (K r)^(q+1)/(q+1)!, is below ``tol``."""
    x = K * max_disp
    term = x
    for q in range(cap + 1):
        if term < tol:
            return q
        term *= x / (q + 2)
    return cap


class TaylorField:
    """Derivative stack of the truncated trig interpolant of a field on its grid nodes.

    Evaluating at ``nodes + disp`` sums the Taylor polynomial of degree
    ``order`` (Horner form); accurate while |disp| * mode_cut is small.
    """

    def __init__(self, f, K, order=TAYLOR_ORDER):
        f = np.asarray(f, dtype=float)
        n = f.shape[-1]
        F = np.fft.rfft2(f, axes=(-2, -1))
        mult, index = _taylor_multipliers(n, K, order)
        mult = mult.reshape((len(index),) + (1,) * (f.ndim - 2) + mult.shape[1:])
        stack = np.fft.irfft2(F[None] * mult, s=(n, n), axes=(-2, -1))
        self.order = order
        # terms[a1][a2] = d1^a1 d2^a2 f / (a1! a2!)
        self.terms = [[None] * (order + 1 - a1) for a1 in range(order + 1)]
        for k, (a1, a2) in enumerate(index):
            self.terms[a1][a2] = stack[k]

    def levels(self, sl):
        out = TaylorField.__new__(TaylorField)
        out.order = self.order
        out.terms = [[t[sl] for t in row] for row in self.terms]
        return out

    def at(self, disp):
        d1, d2 = disp[..., 0], disp[..., 1]
        out = 0.0
        for row in reversed(self.terms):
            inner = row[-1]
            for t in reversed(row[:-1]):
                inner = t + d2 * inner
            out = inner + d1 * out
        return out


def local_interp(f, disp, K, order=None):
    """Truncated trig interpolant of ``f`` (n, n_t, n_t) at ``nodes + disp`` for small ``disp``.

    The Taylor degree adapts to the displacement unless ``order`` is
    given. Falls back to direct evaluation when the displacement exceeds
    ``TAYLOR_RADIUS``.
    """
    f = np.asarray(f, dtype=float)
    r = float(np.abs(disp).max())
    if r > TAYLOR_RADIUS:
        n_t = f.shape[-1]
        x = 2.0 * np.pi * np.arange(n_t) / n_t
        X1, X2 = np.meshgrid(x, x, indexing="ij")
        pts = np.stack([X1, X2], axis=-1)[None] + disp
        return _eval(_coefs(f, K), pts.reshape(len(f), -1, 2)).reshape(f.shape)
    if r == 0.0:
        return f.copy()
    return TaylorField(f, K, taylor_order(r, K) if order is None else order).at(disp)


def _interp(tf, f, disp, K):
    """Evaluate a precomputed TaylorField, or fall back for large displacements."""
    if np.abs(disp).max() > TAYLOR_RADIUS:
        return local_interp(f, disp, K)
    return tf.at(disp)


def _midpoint_weights(j, n):
    """Cubic (or lower) Lagrange weights for the midpoint between nodes j and j+1."""
    m = min(4, n)
    lo = min(max(j - 1, 0), n - m)
    nodes = np.arange(lo, lo + m, dtype=float)
    x = j + 0.5
    w = np.array([np.prod([(x - nodes[b]) / (nodes[a] - nodes[b]) for b in range(m) if b != a]) for a in range(m)])
    return lo, w


def _half_levels(c):
    n = len(c)
    out = np.empty((n - 1,) + c.shape[1:], dtype=c.dtype)
    for j in range(n - 1):
        lo, w = _midpoint_weights(j, n)
        out[j] = np.tensordot(w, c[lo:lo + len(w)], axes=1)
    return out


def _grid_nodes(spec):
    X1, X2 = spec.cross_section()
    return np.stack([X1, X2], axis=-1)


class CharacteristicMap:
    """Traced characteristics of the cross-section field w = u'/u0.

    Attributes
    ----------
    back1, back2 : (n0, n_t, n_t, 2)
        Position one (two) levels upstream of each grid node; rows that
        would reach below x0 = 0 are NaN.
    ahead1 : (n_t, n_t, 2)
        Position at level 2 of the characteristics through level-1 nodes.
    inverse : (n0, n_t, n_t, 2)
        Entry point on the inlet face of the characteristic through each
        node, unwrapped so that ``inverse - nodes`` is the displacement.
    """

    def __init__(self, spec, ratio, back1, back2, ahead1, inverse, min_u0, max_ut):
        self.spec = spec
        self.ratio = ratio
        self.back1 = back1
        self.back2 = back2
        self.ahead1 = ahead1
        self.inverse = inverse
        self.min_u0 = min_u0
        self.max_ut = max_ut
        self._forward = None

    @property
    def nodes(self):
        return _grid_nodes(self.spec)

    @property
    def displacement_bound(self):
        """L * max|u'| / min u0, the bound on |inverse - x'|."""
        return self.spec.length * self.max_ut / self.min_u0

    @property
    def max_displacement(self):
        return float(np.abs(self.inverse - self.nodes[None]).max())

    @property
    def forward(self):
        """Positions phi(x0_j, xbar) of the characteristics leaving every inlet node."""
        if self._forward is None:
            self._forward = self._trace_forward()
        return self._forward

    def _trace_forward(self):
        spec = self.spec
        n0, h, K = spec.n0, spec.h, spec.mode_cut
        W = np.stack([_coefs(self.ratio[0], K), _coefs(self.ratio[1], K)], axis=1)
        Wh = _half_levels(W)

        def vel(c, x):
            return np.stack([_eval(c[None, 0], x), _eval(c[None, 1], x)], axis=-1)

        X = self.nodes.reshape(1, -1, 2)
        out = np.empty((n0,) + X.shape[1:])
        out[0] = X[0]
        for j in range(n0 - 1):
            k1 = vel(W[j], X)
            k2 = vel(Wh[j], X + 0.5 * h * k1)
            k3 = vel(Wh[j], X + 0.5 * h * k2)
            k4 = vel(W[j + 1], X + h * k3)
            X = X + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[j + 1] = X[0]
        return out.reshape((n0,) + self.nodes.shape)

    def pull_back(self, boundary):
        """Field constant along characteristics with the given inlet values."""
        boundary = self.spec.check_section(boundary)
        n0 = self.spec.n0
        c = _coefs(boundary, self.spec.mode_cut)
        pts = self.inverse.reshape(n0, -1, 2)
        return _eval(np.broadcast_to(c, (n0,) + c.shape), pts).reshape(self.spec.shape)

    def evaluate_at(self, f, level, positions):
        """Truncated trig interpolant of level ``level`` of ``f`` at arbitrary positions (..., 2)."""
        c = _coefs(np.asarray(f, dtype=float)[level], self.spec.mode_cut)
        shp = positions.shape[:-1]
        return _eval(c[None], positions.reshape(1, -1, 2)).reshape(shp)


class _VelocityField:
    def __init__(self, w, K):
        self.w, self.K = w, K
        self.tf = [TaylorField(w[:, 0], K), TaylorField(w[:, 1], K)]

    def __call__(self, sl, disp):
        return np.stack([_interp(tf.levels(sl), self.w[sl, b], disp, self.K) for b, tf in enumerate(self.tf)], axis=-1)


def _rk4_step(vel_nodes, vel_half, sl_from, sl_mid, sl_to, start_disp, h):
    """RK4 step of dx'/dx0 = w with signed step ``h``; positions given as node displacements."""
    k1 = vel_nodes(sl_from, start_disp)
    k2 = vel_half(sl_mid, start_disp + 0.5 * h * k1)
    k3 = vel_half(sl_mid, start_disp + 0.5 * h * k2)
    k4 = vel_nodes(sl_to, start_disp + h * k3)
    return start_disp + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def trace_characteristics(velocity, spec, delta=1e-12):
    """Trace the characteristics of ``velocity`` = (u0, u1, u2) on the grid.

    Raises :class:`DegeneracyError` when u0 < delta somewhere and
    :class:`FannoError` if the traced inverse map violates the
    displacement bound ``L max|u'| / min u0``.
    """
    u0, u1, u2 = (spec.check_field(v, "velocity component") for v in velocity)
    min_u0 = float(u0.min())
    if not (min_u0 >= delta and min_u0 > 0):
        raise DegeneracyError(f"normal velocity drops to {min_u0:.3e} (< {delta:.1e})")
    n0, h, K = spec.n0, spec.h, spec.mode_cut
    w = np.stack([u1 / u0, u2 / u0], axis=1)  # (n0, 2, n_t, n_t)
    wh = _half_levels(w)
    nodes = _grid_nodes(spec)
    vn, vh = _VelocityField(w, K), _VelocityField(wh, K)
    zero = np.zeros((n0 - 1, spec.n_t, spec.n_t, 2))
    d1 = _rk4_step(vn, vh, slice(1, None), slice(None), slice(None, -1), zero, -h)
    back1 = np.full((n0, spec.n_t, spec.n_t, 2), np.nan)
    back2 = np.full_like(back1, np.nan)
    back1[1:] = nodes + d1
    if n0 > 2:
        back2[2:] = nodes + _rk4_step(vn, vh, slice(1, -1), slice(None, -1), slice(None, -2), d1[1:], -h)
        ahead1 = nodes + _rk4_step(vn, vh, slice(1, 2), slice(1, 2), slice(2, 3), zero[:1], h)[0]
    else:
        ahead1 = np.full((spec.n_t, spec.n_t, 2), np.nan)
    disp = np.zeros((n0, spec.n_t, spec.n_t, 2))
    for j in range(1, n0):
        prev = np.moveaxis(disp[j - 1], -1, 0)  # (2, n_t, n_t)
        dj = d1[j - 1]
        disp[j] = dj + np.moveaxis(local_interp(prev, np.broadcast_to(dj, (2,) + dj.shape), K), 0, -1)
    max_ut = float(np.sqrt(u1**2 + u2**2).max())
    cmap = CharacteristicMap(spec, np.stack([w[:, 0], w[:, 1]]), back1, back2, ahead1,
                             nodes[None] + disp, min_u0, max_ut)
    bound = cmap.displacement_bound
    if cmap.max_displacement > bound * (1.0 + 1e-6) + 1e-13:
        raise FannoError(f"inverse map displacement {cmap.max_displacement:.3e} exceeds the bound {bound:.3e}")
    return cmap


def march(cmap, source, decay=0.0, initial=None, spec=None):
    """Solve the damped transport problem by two-level Simpson marching.

    ``cmap=None`` marches along the straight lines x' = const (``spec`` is
    then required) with exactly the same quadrature weights.
    """
    spec = cmap.spec if cmap is not None else spec
    S = spec.check_field(source, "source")
    n0, h, K = spec.n0, spec.h, spec.mode_cut
    I = np.zeros(spec.shape)
    if initial is not None:
        I[0] = spec.check_section(initial, "initial value")
    a, a2 = np.exp(-decay * h), np.exp(-2.0 * decay * h)
    if cmap is None:
        S_b1, S_b2 = S[:-1], S[:-2]
        S_ahead = S[2] if n0 > 2 else None
        I0_b1 = I[0]
    else:
        nodes = cmap.nodes
        tf = TaylorField(S, K)
        S_b1 = _interp(tf.levels(slice(None, -1)), S[:-1], cmap.back1[1:] - nodes, K)
        S_b2 = _interp(tf.levels(slice(None, -2)), S[:-2], cmap.back2[2:] - nodes, K)
        S_ahead = _interp(tf.levels(slice(2, 3)), S[2:3], (cmap.ahead1 - nodes)[None], K)[0] if n0 > 2 else None
        I0_b1 = local_interp(I[:1], (cmap.back1[1] - nodes)[None], K)[0]
    if n0 == 2:
        I[1] = a * I0_b1 + 0.5 * h * (a * S_b1[0] + S[1])
        return I
    I[1] = a * I0_b1 + h / 12.0 * (5.0 * a * S_b1[0] + 8.0 * S[1] - S_ahead / a)
    for j in range(2, n0):
        if cmap is None:
            prev = I[j - 2]
        else:
            prev = local_interp(I[j - 2:j - 1], (cmap.back2[j] - nodes)[None], K)[0]
        I[j] = a2 * prev + h / 3.0 * (a2 * S_b2[j - 2] + 4.0 * a * S_b1[j - 1] + S[j])
    return I


def solve_entropy(cmap, boundary):
    """A-hat: constant along characteristics, equal to the inlet deviation."""
    return cmap.pull_back(boundary)


def solve_bernoulli(cmap, boundary, A_hat, p_hat, H, profile_nodes, gas):
    """E-hat with damping 2 mu and sources from A-hat, p-hat and H.

    ``profile_nodes`` is the background sampled on the axial nodes.
    """
    g, mu = gas.gamma, gas.mu
    rho = np.asarray(profile_nodes.rho)[:, None, None]
    S = 2.0 * mu / (g - 1.0) * rho ** (g - 1.0) * A_hat + 2.0 * mu / rho * p_hat + H
    return march(cmap, S, 2.0 * mu, boundary)


def solve_tangential_velocity(cmap, rho, u0, p_tilde, boundary):
    """Tangential velocity driven by the cross-section pressure gradient."""
    spec = cmap.spec
    p_tilde = spec.check_field(p_tilde, "p_tilde")
    out = []
    for beta, axis in ((0, (1, 0)), (1, (0, 1))):
        dp = spectral_derivative(p_tilde, *axis)
        out.append(march(cmap, -dp / (rho * u0), 0.0, boundary[beta]))
    return np.stack(out)


def solve_f6_correction(cmap, p_hat, H, profile_nodes, d3_nodes, gas):
    """Higher-order correction comparing p-hat along characteristics with p-hat on axial lines."""
    mu = gas.mu
    rho = np.asarray(profile_nodes.rho)[:, None, None]
    q = 2.0 * mu / rho * p_hat
    along = march(cmap, q + H, 2.0 * mu)
    axial = march(None, q, 2.0 * mu, spec=cmap.spec)
    return -(mu**2) * rho * np.asarray(d3_nodes)[:, None, None] * (along - axial)
