import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinshell.errors import DataError, InvariantViolation
from thinshell.fields import harmonic, random_scalar, random_solenoidal, random_tangent
from thinshell.grid import make_shell_grid, make_sphere_grid
from thinshell.surfcalc import (
    covariant_derivative,
    divergence_shell,
    full_gradient_shell,
    h1_sphere,
    inner_shell,
    inner_sphere,
    l2_shell,
    l2_sphere,
    leray_project_sphere,
    poisson_sphere,
    probe_inequality,
    projector,
    remove_rotations,
    rotation_basis,
    rotation_field,
    strain_shell,
    surface_curl,
    surface_divergence,
    surface_laplacian,
    surface_strain,
    tangential_gradient,
    trilinear_shell,
    trilinear_sphere,
    velocity_from_streamfunction,
    weak_gradient_coeffs,
)

seeds = st.integers(0, 2**32 - 1)


def test_coordinate_gradients(grid8):
    n = grid8.xyz
    G = tangential_gradient(grid8, n)
    assert np.max(np.abs(G - projector(grid8))) < 1e-12
    assert np.max(np.abs(surface_divergence(grid8, n) - 2.0)) < 1e-12


@pytest.mark.parametrize("l,m", [(1, 0), (2, 1), (3, -2), (5, 4)])
def test_harmonic_norms_closed_form(grid8, l, m):
    lam = l * (l + 1.0)
    Y = harmonic(grid8, l, m)
    assert np.isclose(l2_sphere(grid8, Y), 1.0, atol=1e-12)
    assert np.max(np.abs(surface_laplacian(grid8, Y) + lam * Y)) < 1e-11
    gY = tangential_gradient(grid8, Y)
    v = velocity_from_streamfunction(grid8, Y)
    assert np.isclose(l2_sphere(grid8, gY) ** 2, lam, rtol=1e-12)
    assert np.isclose(l2_sphere(grid8, v) ** 2, lam, rtol=1e-12)
    # Bochner on the unit sphere: Hessian, strain of the rotated gradient, Cartesian gradient
    assert np.isclose(l2_sphere(grid8, surface_strain(grid8, gY)) ** 2, lam * lam - lam, rtol=1e-10)
    assert np.isclose(l2_sphere(grid8, surface_strain(grid8, v)) ** 2, lam * (lam - 2) / 2, atol=1e-10)
    assert np.isclose(l2_sphere(grid8, tangential_gradient(grid8, v)) ** 2, lam * lam, rtol=1e-10)
    assert np.max(np.abs(surface_curl(grid8, v) + lam * Y)) < 1e-10
    assert np.max(np.abs(surface_divergence(grid8, v))) < 1e-10


def test_weak_gradient_of_harmonic(grid8):
    l, m = 3, 2
    Y = harmonic(grid8, l, m, real=False)
    c = weak_gradient_coeffs(grid8, tangential_gradient(grid8, Y), 6)
    expect = np.zeros_like(c)
    expect[l, m + 6] = l * (l + 1)
    assert np.max(np.abs(c - expect)) < 1e-10


def test_rotation_field_is_killing(grid8):
    a = np.array([0.2, -1.0, 0.7])
    r = rotation_field(grid8.xyz, a)
    assert np.max(np.abs(surface_strain(grid8, r))) < 1e-12
    assert np.max(np.abs(surface_divergence(grid8, r))) < 1e-12
    # covariant derivative along itself: P[(a.x) a - |a|^2 x] = (a.x)(a - (a.n) n)
    an = np.einsum("i,i...->...", a, grid8.xyz)
    expect = an * (a[:, None, None] - an * grid8.xyz)
    assert np.max(np.abs(covariant_derivative(grid8, r, r) - expect)) < 1e-12


def test_rotation_basis_orthogonal(grid8, shell8):
    for g in (grid8, shell8):
        B = rotation_basis(g.xyz)
        gram = np.array([[g.integrate(np.sum(a * b, axis=0)) for b in B] for a in B])
        assert np.max(np.abs(gram - np.diag(np.diag(gram)))) < 1e-12


@given(seed=seeds)
def test_integration_by_parts(seed):
    g = make_sphere_grid(8)
    rng = np.random.default_rng(seed)
    v = random_tangent(g, rng, 6)
    f = random_scalar(g, rng, 6)
    lhs = g.integrate(surface_divergence(g, v) * f)
    rhs = -inner_sphere(g, v, tangential_gradient(g, f))
    assert abs(lhs - rhs) < 1e-11 * l2_sphere(g, v) * h1_sphere(g, f)


@given(seed=seeds)
def test_leray_projection(seed):
    g = make_sphere_grid(8)
    rng = np.random.default_rng(seed)
    v = random_tangent(g, rng, 6)
    w, eta = leray_project_sphere(g, v, return_potential=True)
    assert l2_sphere(g, surface_divergence(g, w)) < 1e-10 * l2_sphere(g, v)
    assert l2_sphere(g, leray_project_sphere(g, w) - w) < 1e-10 * l2_sphere(g, v)
    assert abs(inner_sphere(g, w, tangential_gradient(g, eta))) < 1e-10 * l2_sphere(g, v) ** 2


@given(seed=seeds)
def test_poisson_inverts_laplacian(seed):
    g = make_sphere_grid(8)
    f = random_scalar(g, np.random.default_rng(seed), 6, lmin=1)
    assert np.max(np.abs(surface_laplacian(g, poisson_sphere(g, f)) - f)) < 1e-10 * np.max(np.abs(f))


@given(seed=seeds)
def test_trilinear_antisymmetry(seed):
    g = make_sphere_grid(10)
    rng = np.random.default_rng(seed)
    v = random_solenoidal(g, rng, 4)
    w = random_tangent(g, rng, 4)
    z = random_tangent(g, rng, 4)
    scale = l2_sphere(g, v) * h1_sphere(g, w) * h1_sphere(g, z)
    assert abs(trilinear_sphere(g, v, w, z) + trilinear_sphere(g, v, z, w)) < 1e-10 * scale


@given(seed=seeds)
def test_remove_rotations_projects(seed):
    g = make_sphere_grid(6)
    rng = np.random.default_rng(seed)
    v = random_tangent(g, rng, 4) + rotation_field(g.xyz, rng.standard_normal(3))
    w = remove_rotations(v, g.xyz, g.integrate)
    for r in rotation_basis(g.xyz):
        assert abs(inner_sphere(g, w, r)) < 1e-12 * l2_sphere(g, v)
    assert np.allclose(remove_rotations(w, g.xyz, g.integrate), w, atol=1e-13)


def test_covariant_derivative_checks_tangency(grid8):
    with pytest.raises(InvariantViolation):
        covariant_derivative(grid8, grid8.xyz, grid8.xyz)


def test_non_finite_input_rejected(grid8):
    f = np.zeros(grid8.shape)
    f[0, 0] = np.nan
    with pytest.raises(DataError):
        tangential_gradient(grid8, f)


@given(seed=seeds)
def test_shell_gradient_of_linear_field(seed):
    """u(x) = A x has constant gradient d_i u_j = A_ji and divergence tr A."""
    g = make_sphere_grid(4)
    sh = make_shell_grid(g, 0.3, 6)
    A = np.random.default_rng(seed).standard_normal((3, 3))
    u = np.einsum("ij,j...->i...", A, sh.xyz)
    G = full_gradient_shell(sh, u)
    assert np.max(np.abs(G - A.T[:, :, None, None, None])) < 1e-11 * np.abs(A).max()
    assert np.max(np.abs(divergence_shell(sh, u) - np.trace(A))) < 1e-11 * np.abs(A).max()
    dudr = np.einsum("ij,j...->i...", A, np.broadcast_to(g.xyz[:, None], u.shape))
    assert np.max(np.abs(full_gradient_shell(sh, u, dudr) - G)) < 1e-11 * np.abs(A).max()


def test_shell_rotation_and_position(shell8):
    r = rotation_field(shell8.xyz, [1.0, 2.0, -0.5])
    assert np.max(np.abs(strain_shell(shell8, r))) < 1e-11
    assert np.max(np.abs(divergence_shell(shell8, shell8.xyz) - 3.0)) < 1e-11
    # ((x . grad) r_a, r_a) = (r_a, r_a) by homogeneity, with x the position field
    x = shell8.xyz
    assert np.isclose(trilinear_shell(shell8, x, r, r), inner_shell(shell8, r, r), rtol=1e-11)
    assert l2_shell(shell8, r) > 0


def test_korn_probe_flags_rotation(grid8):
    rep = probe_inequality("korn_sphere", [rotation_field(grid8.xyz, [0, 0, 1])], grid=grid8, orthogonalize=False)
    assert rep.flagged and np.isinf(rep.max_ratio)
    v = velocity_from_streamfunction(grid8, harmonic(grid8, 2, 0))
    rep = probe_inequality("korn_sphere", [v], grid=grid8)
    lam = 6.0
    # H1 norm^2 = Lam + Lam^2, strain norm^2 = Lam (Lam - 2) / 2
    assert np.isclose(rep.max_ratio, np.sqrt((lam + lam * lam) / (lam * (lam - 2) / 2)), rtol=1e-10)


def test_probe_unknown_kind():
    with pytest.raises(ValueError):
        probe_inequality("nope", [])
