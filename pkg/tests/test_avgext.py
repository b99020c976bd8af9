import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinshell.avgext import (
    AverageOp,
    DualForcing,
    ExtensionOp,
    avg_gradient_identity_check,
    average,
    constant_extension,
    extend_forcing,
    identity_suite,
    unfold_pairing_check,
    weighted_extension,
)
from thinshell.errors import InvalidParameter, InvariantViolation, ShapeError
from thinshell.fields import random_potential_field, random_scalar, random_slip_field, random_solenoidal, random_tangent
from thinshell.grid import make_shell_grid, make_sphere_grid
from thinshell.surfcalc import inner_shell, inner_sphere, l2_shell, l2_sphere

HEADLINE = (
    "TGr_Nor", "Vec_Tan", "VT_str", "Gauss", "TGr_Dec", "Const", "Mat_Inn", "Ave_TGr",
    "Ave_div", "Atan_div", "Ext_Grad", "Ext_div", "Ext_str", "Ext_CoDe", "ExAv_L2",
)


def radial_moment(eps, p):
    """(1/eps) * integral of r^p over [1, 1 + eps]."""
    if p == -1:
        return np.log1p(eps) / eps
    return ((1 + eps) ** (p + 1) - 1) / ((p + 1) * eps)


def test_identity_suite_small():
    res = identity_suite(lmax=8, nrad=8, eps=0.2, seed=3)
    names = [r.name for r in res]
    assert set(HEADLINE) <= set(names)
    bad = [r.as_dict() for r in res if not r.passed]
    assert not bad


@given(k=st.integers(0, 5), p=st.integers(-2, 4), eps=st.floats(0.01, 0.5), seed=st.integers(0, 1000))
def test_average_of_radial_power(k, p, eps, seed):
    g = make_sphere_grid(4)
    sh = make_shell_grid(g, eps, 8, "gauss")
    eta = random_scalar(g, np.random.default_rng(seed), 4)
    phi = sh.r**p * constant_extension(sh, eta)
    assert np.max(np.abs(average(AverageOp(k, sh), phi) - radial_moment(eps, p + k) * eta)) < 1e-12 * max(1, np.abs(eta).max())


@given(eps=st.floats(0.005, 0.9), seed=st.integers(0, 1000))
def test_extension_norms_closed_form(eps, seed):
    g = make_sphere_grid(5)
    sh = make_shell_grid(g, eps, 6, "gauss")
    v = random_tangent(g, np.random.default_rng(seed), 5)
    nv2 = l2_sphere(g, v) ** 2
    bar2 = l2_shell(sh, constant_extension(sh, v)) ** 2
    gap2 = l2_shell(sh, weighted_extension(sh, v) - constant_extension(sh, v)) ** 2
    assert np.isclose(bar2, ((1 + eps) ** 3 - 1) / 3 * nv2, rtol=1e-12)
    assert np.isclose(gap2, (eps**3 / 3 + eps**4 / 2 + eps**5 / 5) * nv2, rtol=1e-10)


@given(k=st.integers(0, 6), seed=st.integers(0, 10_000))
def test_average_commutation_identities(k, seed):
    g = make_sphere_grid(8)
    sh = make_shell_grid(g, 0.15, 8)
    rng = np.random.default_rng(seed)
    s = (sh.rnodes - 1) / sh.eps
    phi = (1 + s - s**3)[:, None, None] * constant_extension(sh, random_scalar(g, rng, 5))
    u = random_slip_field(sh, rng, 5)
    res = avg_gradient_identity_check(AverageOp(k, sh), phi=phi, u=u)
    assert max(res.values()) < 1e-10


@given(seed=st.integers(0, 10_000))
def test_unfolding_of_pairing(seed):
    g = make_sphere_grid(8)
    sh = make_shell_grid(g, 0.1, 8)
    rng = np.random.default_rng(seed)
    assert unfold_pairing_check(sh, random_solenoidal(g, rng, 5), random_slip_field(sh, rng, 5)) < 1e-10


def test_unfolding_needs_solenoidal_field(grid8, shell8, rng):
    with pytest.raises(InvariantViolation):
        unfold_pairing_check(shell8, random_tangent(grid8, rng, 4), random_slip_field(shell8, rng, 4))


@pytest.mark.parametrize("mode", ["constant", "weighted"])
def test_volume_representative_reproduces_pairing(mode, rng):
    g = make_sphere_grid(8)
    sh = make_shell_grid(g, 0.1, 10, "gauss")
    f = DualForcing.on_sphere(g, random_tangent(g, rng, 5), profile=lambda t: 1.0 + t)
    fs = extend_forcing(f, mode, sh)
    assert fs.weight_power == {"constant": 2, "weighted": 3}[mode]
    psi, _ = random_potential_field(sh, rng, 5)
    lhs = inner_shell(sh, fs.volume_riesz(t=0.5), psi)
    assert np.isclose(lhs, fs.pairing(psi, t=0.5), rtol=1e-10, atol=1e-12)


def test_sphere_forcing_pairing_and_errors(grid8, shell8, rng):
    v = random_solenoidal(grid8, rng, 4)
    f = DualForcing.on_sphere(grid8, v, profile=lambda t: 2.0)
    assert np.isclose(f.pairing(v), 2.0 * inner_sphere(grid8, v, v), rtol=1e-10)
    assert np.allclose(f.at(3.0), 2.0 * f.riesz)
    assert np.all(DualForcing.zero(grid8).riesz == 0)
    with pytest.raises(InvalidParameter):
        f.volume_riesz(shell8)
    with pytest.raises(InvalidParameter):
        extend_forcing(f, "cubic", shell8)
    with pytest.raises(InvalidParameter):
        extend_forcing(extend_forcing(f, "constant", shell8), "weighted", shell8)


def test_operator_validation(grid8, shell8):
    with pytest.raises(InvalidParameter):
        AverageOp(-1, shell8)
    with pytest.raises(InvalidParameter):
        ExtensionOp("linear", shell8)
    with pytest.raises(ShapeError):
        average(AverageOp(0, shell8), np.zeros((3, 4, 5)))
    with pytest.raises(ShapeError):
        constant_extension(shell8, np.zeros((2, 2)))
