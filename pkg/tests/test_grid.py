import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import sph_harm_y

from thinshell.errors import InvalidParameter, ShapeError
from thinshell.fields import random_coeffs
from thinshell.grid import (
    SphCoeffs,
    analysis,
    barycentric_diff_matrix,
    barycentric_interp_matrix,
    chebyshev_diff,
    clenshaw_curtis,
    enforce_real,
    make_shell_grid,
    make_sphere_grid,
    radial_forward,
    radial_inverse,
    resize_coeffs,
    sht_forward,
    sht_inverse,
    synthesis,
)


def monomial_sphere_integral(a, b, c):
    """Closed form of the integral of x^a y^b z^c over the unit sphere."""
    if a % 2 or b % 2 or c % 2:
        return 0.0
    g = math.gamma
    return 2.0 * g((a + 1) / 2) * g((b + 1) / 2) * g((c + 1) / 2) / g((a + b + c + 3) / 2)


def test_grid_sizes():
    g = make_sphere_grid(10)
    assert (g.nlat, g.nlon) == (17, 34)
    assert g.lspec == 16
    assert np.isclose(g.weights.sum(), 4 * np.pi, rtol=1e-14)


@pytest.mark.parametrize("lmax", [1, 0, 2.5])
def test_grid_rejects_small_degree(lmax):
    with pytest.raises(InvalidParameter):
        make_sphere_grid(lmax)


def test_harmonics_match_scipy():
    g = make_sphere_grid(7)
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    L = g.lspec
    for l in range(L + 1):
        for m in range(-l, l + 1):
            c = np.zeros((L + 1, 2 * L + 1), complex)
            c[l, m + L] = 1.0
            assert np.max(np.abs(synthesis(g, c, real=False) - sph_harm_y(l, m, th, ph))) < 1e-12


def test_analysis_is_orthonormal_projection():
    g = make_sphere_grid(6)
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    c = analysis(g, sph_harm_y(4, -3, th, ph))
    expect = np.zeros_like(c)
    expect[4, -3 + g.lspec] = 1.0
    assert np.max(np.abs(c - expect)) < 1e-13


@given(a=st.integers(0, 6), b=st.integers(0, 6), c=st.integers(0, 6))
def test_quadrature_exact_for_monomials(a, b, c):
    g = make_sphere_grid(8)
    x, y, z = g.xyz
    assert abs(g.integrate(x**a * y**b * z**c) - monomial_sphere_integral(a, b, c)) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), lmax=st.integers(2, 12))
def test_transform_round_trip(seed, lmax):
    g = make_sphere_grid(lmax)
    c = random_coeffs(np.random.default_rng(seed), lmax)
    f = sht_inverse(g, SphCoeffs(lmax, c))
    back = sht_forward(g, f)
    assert back.is_real_symmetric(1e-12)
    assert np.max(np.abs(back.data - c)) < 1e-11 * max(1.0, np.max(np.abs(c)))


def test_enforce_real_is_idempotent_and_gives_real_fields(rng):
    c = rng.standard_normal((7, 13)) + 1j * rng.standard_normal((7, 13))
    r = enforce_real(c)
    assert np.allclose(enforce_real(r), r)
    g = make_sphere_grid(6)
    assert np.max(np.abs(synthesis(g, r, real=False).imag)) < 1e-12


def test_resize_coeffs_pads_and_truncates(rng):
    c = rng.standard_normal((4, 7)).astype(complex)
    up = resize_coeffs(c, 6)
    assert up.shape == (7, 13)
    assert np.array_equal(resize_coeffs(up, 3), c)
    assert SphCoeffs(3, c)[2, -1] == c[2, 2]


def test_shape_errors(grid8):
    with pytest.raises(ShapeError):
        analysis(grid8, np.zeros((3, 4)))
    with pytest.raises(ShapeError):
        grid8.integrate(np.zeros((5, 5)))


@pytest.mark.parametrize("n", [2, 3, 8, 9, 16])
def test_clenshaw_curtis_exact_on_polynomials(n):
    x, w = clenshaw_curtis(n)
    assert np.all(np.diff(x) > 0)
    for k in range(n):
        exact = 0.0 if k % 2 else 2.0 / (k + 1)
        assert abs(w @ x**k - exact) < 1e-13


def test_barycentric_operators_exact_on_polynomials():
    x, _ = clenshaw_curtis(9)
    p = np.polynomial.Polynomial([0.3, -1.0, 2.0, 0.5, -0.25, 1.5, 0.0, 0.1, -0.7])
    D = barycentric_diff_matrix(x)
    assert np.max(np.abs(D @ p(x) - p.deriv()(x))) < 1e-11
    xn = np.array([-0.9, -0.123, x[3], 0.77])
    A = barycentric_interp_matrix(x, xn)
    assert np.max(np.abs(A @ p(x) - p(xn))) < 1e-12


@given(p=st.integers(-4, 6), eps=st.floats(0.01, 0.9))
def test_shell_quadrature_radial_powers(p, eps):
    g = make_sphere_grid(4)
    for nodes in ("lobatto", "gauss"):
        sh = make_shell_grid(g, eps, 12, nodes)
        f = np.broadcast_to(sh.r ** p, sh.shape)
        exact = 4 * np.pi * ((1 + eps) ** (p + 3) - 1) / (p + 3) if p != -3 else 4 * np.pi * math.log1p(eps)
        assert abs(sh.integrate(f) - exact) < 1e-10 * abs(exact)


def test_shell_grid_rejects_bad_input(grid8):
    for eps in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidParameter):
            make_shell_grid(grid8, eps, 8)
    with pytest.raises(InvalidParameter):
        make_shell_grid(grid8, 0.1, 1)
    with pytest.raises(InvalidParameter):
        make_shell_grid(grid8, 0.1, 8, "uniform")


def test_radial_transform_and_derivative(rng):
    g = make_sphere_grid(6)
    sh = make_shell_grid(g, 0.2, 8)
    ang = synthesis(g, random_coeffs(rng, 6))
    r = sh.r
    f = (r**3 - 2 * r) * ang
    df = (3 * r**2 - 2) * ang
    c = radial_forward(sh, f)
    assert np.max(np.abs(radial_inverse(sh, c) - f)) < 1e-11
    assert np.max(np.abs(radial_inverse(sh, chebyshev_diff(c)) - df)) < 1e-9
    assert np.max(np.abs(np.einsum("jk,kab->jab", sh.dr, f) - df)) < 1e-9
