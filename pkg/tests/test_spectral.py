import numpy as np
import pytest
from hypothesis import given, strategies as st

from fannoflow.errors import DomainError, ShapeError
from fannoflow.spectral import (
    DuctSpec,
    FourierField,
    analyze,
    basis_mask,
    cumulative_simpson,
    d0,
    d00,
    evaluate_trig,
    mode_weights,
    spectral_derivative,
    synthesize,
    tangential_laplacian,
    trig_coefficients,
    truncate,
)


def section(n_t=16, mode_cut=4):
    return DuctSpec(1.0, 3, n_t, mode_cut)


@pytest.mark.parametrize(
    "args",
    [(0.0, 3), (-1.0, 3), (1.0, 1), (1.0, 3, 12), (1.0, 3, 2), (1.0, 3, 16, 9), (1.0, 3, 16, -1)],
)
def test_duct_spec_validation(args):
    with pytest.raises(DomainError):
        DuctSpec(*args)


def test_duct_spec_grid():
    spec = DuctSpec.from_steps(2.0, 4, 8, 4)
    assert spec.n0 == 5 and spec.h == 0.5
    assert spec.shape == (5, 8, 8)
    assert np.allclose(spec.x0_half, np.linspace(0, 2, 9))
    assert spec.xt[1] == pytest.approx(np.pi / 4)


def test_weights_table():
    lam = mode_weights(3)
    assert lam[0, 0] == 0.25
    assert lam[0, 2] == lam[1, 0] == 0.5
    assert lam[2, 3] == 1.0


def test_mask_drops_vanishing_sines():
    mask = basis_mask(3)
    assert not mask[1, 0].any() and not mask[3, 0].any()
    assert not mask[2, :, 0].any() and not mask[3, :, 0].any()
    assert mask[0, 0, 0] and mask[3, 1, 1]


@pytest.mark.parametrize(
    "make, index",
    [
        (lambda X1, X2: np.ones_like(X1), (0, 0, 0)),
        (lambda X1, X2: np.cos(2 * X1), (0, 2, 0)),
        (lambda X1, X2: np.sin(X1) * np.sin(3 * X2), (3, 1, 3)),
    ],
)
def test_analyze_single_modes(make, index):
    # a basis function appears with coefficient 1/lambda_m, i.e. weighted amplitude 1
    spec = section()
    X1, X2 = spec.cross_section()
    c = analyze(make(X1, X2), spec).coeffs
    lam = mode_weights(spec.mode_cut)
    assert lam[index[1:]] * c[index] == pytest.approx(1.0, abs=1e-13)
    others = c.copy()
    others[index] = 0.0
    assert np.abs(others).max() < 1e-13


def test_analyze_integral_normalisation():
    spec = section()
    X1, X2 = spec.cross_section()
    assert analyze(np.ones_like(X1), spec).coeffs[0, 0, 0] == pytest.approx(4.0)
    assert analyze(np.cos(2 * X1), spec).coeffs[0, 2, 0] == pytest.approx(2.0)


def test_synthesize_examples():
    spec = section()
    coef = np.zeros((4, 5, 5))
    assert np.all(synthesize(coef, spec) == 0.0)
    coef[0, 0, 0] = 4.0
    assert np.allclose(synthesize(coef, spec), 1.0, atol=1e-15)


def random_coefficients(rng, mode_cut, n0=None):
    shape = (4, mode_cut + 1, mode_cut + 1) + (() if n0 is None else (n0,))
    c = rng.standard_normal(shape)
    c[~basis_mask(mode_cut)] = 0.0
    return c


@given(seed=st.integers(0, 2**32 - 1), n_t=st.sampled_from([8, 16, 32]), data=st.data())
def test_round_trip(seed, n_t, data):
    mode_cut = data.draw(st.integers(0, n_t // 2))
    spec = DuctSpec(1.0, 3, n_t, mode_cut)
    rng = np.random.default_rng(seed)
    c = random_coefficients(rng, mode_cut, spec.n0)
    if mode_cut == n_t // 2:
        # sin(N x) vanishes on the grid at the Nyquist index
        c[1, mode_cut] = c[3, mode_cut] = 0.0
        c[2, :, mode_cut] = c[3, :, mode_cut] = 0.0
    f = synthesize(c, spec)
    back = analyze(f, spec).coeffs
    assert np.abs(back - c).max() <= 1e-10 * max(1.0, np.abs(c).max())
    assert np.abs(synthesize(back, spec) - f).max() <= 1e-10 * max(1.0, np.abs(f).max())


def test_synthesize_keeps_axial_axis():
    spec = DuctSpec(1.0, 6, 16, 4)
    c = random_coefficients(np.random.default_rng(1), 4, 6)
    f = synthesize(FourierField(c, 4), spec)
    assert f.shape == spec.shape
    assert np.allclose(f[2], synthesize(c[..., 2], spec))


def test_shape_errors():
    spec = section()
    with pytest.raises(ShapeError):
        analyze(np.zeros((8, 8)), spec)
    with pytest.raises(ShapeError):
        analyze(np.zeros((4, 16, 16)), spec)
    with pytest.raises(ShapeError):
        synthesize(np.zeros((4, 3, 3)), spec)
    with pytest.raises(ShapeError):
        spec.check_field(np.zeros((2, 16, 16)))


def test_fourier_field_modes_skip_trivial():
    field = FourierField(np.zeros((4, 2, 2)), 1)
    modes = list(field.modes())
    assert (2, (0, 1)) not in modes and (1, (0, 0)) in modes
    assert len(modes) == int(basis_mask(1).sum())


def test_spectral_derivatives_exact_for_trig():
    spec = section(32, 8)
    X1, X2 = spec.cross_section()
    f = np.sin(3 * X1) * np.cos(2 * X2)
    assert np.allclose(spectral_derivative(f, 1, 0), 3 * np.cos(3 * X1) * np.cos(2 * X2), atol=1e-12)
    assert np.allclose(spectral_derivative(f, 1, 1), -6 * np.cos(3 * X1) * np.sin(2 * X2), atol=1e-12)
    assert np.allclose(tangential_laplacian(f), -13 * f, atol=1e-11)


def test_truncate_removes_high_modes():
    spec = section(32, 8)
    X1, X2 = spec.cross_section()
    f = np.cos(2 * X1) + np.sin(11 * X2)
    assert np.allclose(truncate(f, 8), np.cos(2 * X1), atol=1e-13)


def test_trig_series_matches_grid_and_shifts():
    spec = section(32, 8)
    X1, X2 = spec.cross_section()
    f = np.cos(X1 + 2 * X2) + 0.3 * np.sin(3 * X1)
    c = trig_coefficients(f, 8)
    pts = np.array([[0.1, 0.2], [4.0, 5.5], [2 * np.pi + 0.1, 0.2]])
    exact = np.cos(pts[:, 0] + 2 * pts[:, 1]) + 0.3 * np.sin(3 * pts[:, 0])
    assert np.allclose(evaluate_trig(c, pts), exact, atol=1e-13)


@pytest.mark.parametrize("n", [20, 40, 80])
def test_axial_stencils_second_order(n):
    x = np.linspace(0, 1, n + 1)
    h = x[1]
    f = np.exp(x)
    err1 = np.abs(d0(f, h) - f).max()
    err2 = np.abs(d00(f, h) - f).max()
    assert err1 < 2.0 * h**2 and err2 < 4.0 * h**2


def test_axial_stencils_exact_for_quadratics():
    x = np.linspace(0, 1, 11)
    f = 3 * x**2 - x
    assert np.allclose(d0(f, x[1]), 6 * x - 1, atol=1e-12)
    assert np.allclose(d00(f, x[1]), 6.0, atol=1e-9)


def test_second_derivative_on_tiny_grids():
    assert np.array_equal(d00(np.array([1.0, 3.0]), 0.5), np.zeros(2))
    x = np.linspace(0, 1, 3)
    assert np.allclose(d00(3 * x**2 - x, x[1]), 6.0)


@pytest.mark.parametrize("n", [2, 3, 8, 9])
def test_cumulative_simpson(n):
    x = np.linspace(0, 1, n + 1)
    f = np.cos(x)
    I = cumulative_simpson(f, x[1])
    assert I[0] == 0.0
    h = x[1]
    tol = 0.1 * h**2 if n == 2 else 0.1 * h**4
    assert np.abs(I - np.sin(x)).max() < tol


def test_cumulative_simpson_exact_for_cubics_and_fourth_order():
    x = np.linspace(0, 2, 9)
    assert np.allclose(cumulative_simpson(x**2, x[1]), x**3 / 3, atol=1e-13)
    errs = []
    for n in (16, 32, 64):
        x = np.linspace(0, 1, n + 1)
        errs.append(np.abs(cumulative_simpson(np.exp(x), x[1]) - (np.exp(x) - 1)).max())
    slopes = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(slopes > 3.7)
