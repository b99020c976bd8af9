import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinshell.errors import InvalidParameter, StepRejected
from thinshell.fields import random_tangent
from thinshell.grid import make_sphere_grid
from thinshell.presets import make_preset, random_decaying, rotation, single_mode, two_mode
from thinshell.sphere_ns import (
    courant_number,
    energy_report,
    init_sphere_solver,
    run,
    run_to_times,
    spectral_energy,
    spectral_h1_norm2,
    spectral_strain_norm2,
    step,
    velocity,
)
from thinshell.surfcalc import h1_sphere, l2_sphere, surface_strain


def rel_err(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


@pytest.mark.parametrize("l", [2, 3, 5])
def test_single_mode_decay(l):
    g = make_sphere_grid(8)
    data = single_mode(g, 1.0, l=l, m=1)
    st_ = init_sphere_solver(data.v0, 1.0, None, 1e-3, grid=g)
    tr = run(st_, 0.1)
    assert np.isclose(tr.times[-1], 0.1)
    # a linear mode evolves by the Crank-Nicolson amplification factor exactly
    lam, h = l * (l + 1) - 2.0, 1e-3
    growth = ((1 - 0.5 * h * lam) / (1 + 0.5 * h * lam)) ** 100
    assert rel_err(tr.omega[-1], growth * tr.omega[0]) < 1e-12
    # and differs from the continuous decay by the CN truncation error t lam^3 h^2 / 12
    err = rel_err(tr.omega[-1], data.exact_omega(0.1))
    assert err < 1.05 * 0.1 * lam**3 * h**2 / 12
    if l == 2:
        assert err < 1e-6


def test_two_mode_second_order_against_exact():
    g = make_sphere_grid(8)
    errs = []
    for dt in (0.02, 0.01, 0.005):
        data = two_mode(g, 1.0)
        tr = run(init_sphere_solver(data.v0, 1.0, data.forcing, dt, grid=g), 0.2)
        errs.append(rel_err(tr.omega[-1], data.exact_omega(0.2)))
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5


def test_spectral_norms_match_quadrature(grid8, rng):
    data = random_decaying(grid8, rng, 6, with_rotation=True)
    st_ = init_sphere_solver(data.v0, 1.0, None, 1e-3, grid=grid8)
    v = st_.velocity()
    assert np.isclose(spectral_energy(st_.omega), l2_sphere(grid8, v) ** 2, rtol=1e-10)
    assert np.isclose(spectral_h1_norm2(st_.omega), h1_sphere(grid8, v) ** 2, rtol=1e-10)
    assert np.isclose(spectral_strain_norm2(st_.omega), l2_sphere(grid8, surface_strain(grid8, v)) ** 2, rtol=1e-10)
    assert np.max(np.abs(velocity(grid8, st_.omega) - data.v0)) < 1e-10


@given(axis=st.tuples(*(st.floats(-1, 1) for _ in range(3))).filter(lambda a: np.linalg.norm(a) > 0.1))
@settings(max_examples=10)
def test_rotation_is_stationary(axis):
    g = make_sphere_grid(6)
    data = rotation(g, axis)
    st_ = init_sphere_solver(data.v0, 1.0, None, 0.05, grid=g)
    tr = run(st_, 1.0)
    assert rel_err(tr.omega[-1], tr.omega[0]) < 1e-12
    assert energy_report(st_)["momentum_drift"] < 1e-12


@given(seed=st.integers(0, 10_000))
@settings(max_examples=10)
def test_momenta_conserved(seed):
    g = make_sphere_grid(8)
    data = random_decaying(g, np.random.default_rng(seed), 6, with_rotation=True)
    st_ = init_sphere_solver(data.v0, 0.5, None, 0.01, grid=g)
    run(st_, 0.1)
    rep = energy_report(st_)
    assert rep["momentum_drift"] < 1e-12 * max(1.0, np.sqrt(rep["energy_initial"]))


def test_energy_residual_second_order():
    g = make_sphere_grid(8)
    res = []
    for dt in (0.02, 0.01):
        data = two_mode(g, 1.0)
        st_ = init_sphere_solver(data.v0, 1.0, data.forcing, dt, grid=g)
        run(st_, 0.5)
        res.append(energy_report(st_)["max_abs_residual"])
    assert res[0] / res[1] > 3.5


def test_courant_rejection(grid8, rng):
    data = random_decaying(grid8, rng, 6, amplitude=50.0)
    st_ = init_sphere_solver(data.v0, 1.0, None, 0.5, grid=grid8)
    assert courant_number(st_) > 1.0
    with pytest.raises(StepRejected):
        step(st_)


def test_non_solenoidal_data_is_projected(grid8, rng):
    with pytest.warns(RuntimeWarning):
        st_ = init_sphere_solver(random_tangent(grid8, rng, 4), 1.0, None, 1e-3, grid=grid8)
    assert st_.omega[0, grid8.lmax] == 0


def test_parameter_validation(grid8):
    data = make_preset("zero", grid8, 1.0)
    for kw in ({"nu": 0.0, "dt": 0.1}, {"nu": 1.0, "dt": -1.0}):
        with pytest.raises(InvalidParameter):
            init_sphere_solver(data.v0, kw["nu"], None, kw["dt"], grid=grid8)
    with pytest.raises(InvalidParameter):
        init_sphere_solver(data.v0, 1.0, None, 0.1)
    st_ = init_sphere_solver(data.v0, 1.0, None, 0.1, grid=grid8)
    with pytest.raises(InvalidParameter):
        energy_report(st_)
    with pytest.raises(InvalidParameter):
        run_to_times(st_, [0.5, 1.0])
    with pytest.raises(InvalidParameter):
        make_preset("vortex", grid8, 1.0)


def test_run_to_times_hits_samples(grid8):
    data = two_mode(grid8, 1.0)
    st_ = init_sphere_solver(data.v0, 1.0, data.forcing, 0.01, grid=grid8)
    times = np.array([0.0, 0.01, 0.015, 0.03])
    tr = run_to_times(st_, times)
    assert np.array_equal(tr.times, times) and tr.omega.shape[0] == 4
    assert st_.dt == 0.01
