import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thinshell import harness
from thinshell.avgext import DualForcing, constant_extension, extend_forcing, weighted_extension
from thinshell.errors import ConfigurationError, InvalidParameter, InvariantViolation, PreconditionError, ShapeError, StepRejected
from thinshell.fields import harmonic, random_solenoidal, random_tangent
from thinshell.grid import make_shell_grid, make_sphere_grid
from thinshell.harness import (
    CSV_COLUMNS,
    SCHEMA_VERSION,
    GlobalConfig,
    NodalShellTrajectory,
    SweepConfig,
    compute_diff,
    dual_norm_surrogate,
    explicit_constant_check,
    fit_slope,
    global_constants,
    global_mode_check,
    korn_probes,
    run_sweep,
)
from thinshell.presets import random_decaying, rotation
from thinshell.shell_ns import ShellTrajectory, build_dual_space, build_model, extension_coeffs
from thinshell.sphere_ns import Trajectory2D, init_sphere_solver, run
from thinshell.surfcalc import inner_sphere, l2_sphere, tangential_gradient, velocity_from_streamfunction


def sphere_run(grid, rng, t_final=0.1, dt=0.02, lmax=None):
    data = random_decaying(grid, rng, 5)
    return run(init_sphere_solver(data.v0, 1.0, None, dt, grid=grid, lmax=lmax), t_final)


def small_sweep(**kw):
    base = dict(eps_list=(0.2, 0.1, 0.05), lmax=4, nrad=8, dt=0.01, t_final=0.05, mode="manufactured", sample_every=1)
    base.update(kw)
    return SweepConfig(**base)


# ----------------------------------------------------------------------------
# difference functionals


def test_constant_extension_closed_forms(rng):
    """u = vbar: no L2 gap; the gradient terms are eps^3/3 |grad v|^2 and ((1+eps)^3 - 1)/3 |v|^2."""
    g = make_sphere_grid(8)
    eps = 0.1
    sh = make_shell_grid(g, eps, 8, "gauss")
    vt = sphere_run(g, rng)
    samples = [(constant_extension(sh, vt.velocity(i)), np.zeros((3,) + sh.shape)) for i in range(len(vt.times))]
    df = compute_diff(NodalShellTrajectory(sh, vt.times, samples), vt, 1.0)
    assert np.max(np.abs(df.sol_l2)) < 1e-28
    assert df.D_data[0] == 0.0
    for i in range(len(vt.times)):
        v = vt.velocity(i)
        gv2 = l2_sphere(g, tangential_gradient(g, v)) ** 2
        assert np.isclose(df.grad_tan[i], eps**3 / 3 * gv2, rtol=1e-10)
        assert np.isclose(df.grad_rad[i], ((1 + eps) ** 3 - 1) / 3 * l2_sphere(g, v) ** 2, rtol=1e-10)
    assert df.grad_split_defect < 1e-9
    df.check()


def test_rotation_extension_two_ways():
    """u = v_E with v = r_a stationary: D_sol(t) = (1/eps) ||v_E - vbar||^2 and no gradient terms."""
    g = make_sphere_grid(6)
    eps = 0.2
    data = rotation(g, (0.3, -0.4, 1.0))
    vt = run(init_sphere_solver(data.v0, 1.0, None, 0.05, grid=g, lmax=5), 0.2)
    m = build_model(g, eps, 8, 1.0, lmax=5)
    cts = np.array([extension_coeffs(m, w)[0] for w in vt.omega])
    tr = ShellTrajectory(m, vt.times, cts, np.zeros(cts.shape[:-1] + (m.nbp,), complex))
    df = compute_diff(tr, vt, 1.0)
    qs = m.qshell
    raw = np.sum(qs.weights * np.sum((weighted_extension(qs, data.v0) - constant_extension(qs, data.v0)) ** 2, axis=0)) / eps
    closed = (eps**3 / 3 + eps**4 / 2 + eps**5 / 5) * l2_sphere(g, data.v0) ** 2 / eps
    assert np.isclose(raw, closed, rtol=1e-10)
    assert np.allclose(df.D_sol, closed, rtol=1e-10, atol=0)
    assert np.max(df.grad_tan) < 1e-20 and np.max(df.grad_rad) < 1e-20


def test_zero_trajectories_and_F_v(grid8):
    sh = make_shell_grid(grid8, 0.1, 8, "gauss")
    times = np.linspace(0, 1, 11)
    sph = Trajectory2D(grid8, times, np.zeros((11, 9, 17), complex), 0.5)
    zeros = [(np.zeros((3,) + sh.shape), np.zeros((3,) + sh.shape))] * 11
    df = compute_diff(NodalShellTrajectory(sh, times, zeros), sph, 0.5)
    for name in ("D_data", "D_sol", "grad_tan", "grad_rad", "G_v", "eta_v", "avg_error", "extra_term"):
        assert np.all(getattr(df, name) == 0), name
    assert np.allclose(df.F_v, np.exp(0.5 * times), rtol=1e-14)
    assert np.all(df.F_v >= 1) and np.all(np.diff(df.F_v) > 0)
    assert df.local_constant() == 0.0
    head = compute_diff(NodalShellTrajectory(sh, times, zeros), sph, 0.5, t=0.3)
    assert head.times.size == 4


def test_compute_diff_rejects_mismatch(grid8, rng):
    vt = sphere_run(grid8, rng)
    other = make_shell_grid(make_sphere_grid(6), 0.1, 8)
    samples = [(np.zeros((3,) + other.shape),) * 2] * len(vt.times)
    with pytest.raises(ShapeError):
        compute_diff(NodalShellTrajectory(other, vt.times, samples), vt, 1.0)
    sh = make_shell_grid(grid8, 0.1, 8)
    samples = [(np.zeros((3,) + sh.shape),) * 2] * len(vt.times)
    with pytest.raises(ShapeError):
        compute_diff(NodalShellTrajectory(sh, vt.times + 0.01, samples), vt, 1.0)
    with pytest.raises(InvalidParameter):
        compute_diff(NodalShellTrajectory(sh, vt.times, samples), vt, 1.0, t=-1.0)


def test_functionals_check_flags_negative(grid8, rng):
    vt = sphere_run(grid8, rng)
    sh = make_shell_grid(grid8, 0.1, 8)
    samples = [(constant_extension(sh, vt.velocity(i)), None) for i in range(len(vt.times))]
    df = compute_diff(NodalShellTrajectory(sh, vt.times, samples), vt, 1.0)
    df.check()
    df.D_sol[1] = -1.0
    with pytest.raises(InvariantViolation):
        df.check()


@given(e1=st.floats(0, 50), e2=st.floats(0, 50), nu=st.floats(0.1, 10))
def test_global_constants_monotone(e1, e2, nu):
    lo, hi = sorted((e1, e2))
    F_lo, G_lo = global_constants(lo, nu)
    F_hi, G_hi = global_constants(hi, nu)
    assert 1.0 <= F_lo <= F_hi and 0.0 <= G_lo <= G_hi


# ----------------------------------------------------------------------------
# dual norms


def test_dual_norm_trivial_and_single_mode(grid8):
    assert dual_norm_surrogate(None) == 0.0
    assert dual_norm_surrogate(DualForcing.zero(grid8)) == 0.0
    for l in (1, 2, 5):
        lam = l * (l + 1.0)
        g = velocity_from_streamfunction(grid8, harmonic(grid8, l, 1))
        f = DualForcing.on_sphere(grid8, g)
        assert np.isclose(dual_norm_surrogate(f), np.sqrt(lam / (1 + lam)), rtol=1e-10)


def test_dual_norm_dense_gram_oracle(rng):
    """Explicit H1 Gram matrix of the solenoidal modes up to degree 3, built by quadrature."""
    g = make_sphere_grid(6)
    basis = [velocity_from_streamfunction(g, harmonic(g, l, m)) for l in range(1, 4) for m in range(-l, l + 1)]
    grads = [tangential_gradient(g, b) for b in basis]
    gram = np.array([[inner_sphere(g, a, b) + inner_sphere(g, ga, gb) for b, gb in zip(basis, grads)]
                     for a, ga in zip(basis, grads)])
    for _ in range(5):
        coef = rng.standard_normal(len(basis))
        field = sum(c * b for c, b in zip(coef, basis)) + tangential_gradient(g, harmonic(g, 2, 0))
        loads = np.array([inner_sphere(g, field, b) for b in basis])
        oracle = np.sqrt(loads @ np.linalg.solve(gram, loads))
        f = DualForcing.on_sphere(g, field, project=False)
        assert np.isclose(dual_norm_surrogate(f), oracle, rtol=1e-10)


@given(seed=st.integers(0, 10_000))
def test_dual_norm_below_l2(seed):
    g = make_sphere_grid(6)
    vec = random_tangent(g, np.random.default_rng(seed), 6, decay=0.0)
    f = DualForcing.on_sphere(g, vec, project=False)
    assert dual_norm_surrogate(f) <= l2_sphere(g, vec) * (1 + 1e-12)


def test_shell_dual_norm(rng):
    g = make_sphere_grid(6)
    m = build_model(g, 0.1, 8, 1.0, lmax=5)
    dual = build_dual_space(m)
    f = DualForcing.on_sphere(g, random_solenoidal(g, rng, 4))
    with pytest.raises(InvalidParameter):
        dual_norm_surrogate(f, "V_eps", dual=dual)
    fb = extend_forcing(f, "constant", m.qshell)
    with pytest.raises(InvalidParameter):
        dual_norm_surrogate(fb, "V_eps")
    with pytest.raises(InvalidParameter):
        dual_norm_surrogate(fb, "H2")
    n = dual_norm_surrogate(fb, "V_eps", dual=dual)
    assert 0 < n <= np.sqrt(np.sum(m.qshell.weights * np.sum(fb.volume_riesz() ** 2, axis=0)))


# ----------------------------------------------------------------------------
# sweeps


def test_fit_slope():
    x = np.array([0.2, 0.1, 0.05, 0.025])
    assert np.isclose(fit_slope(x, 3 * x**2), 2.0)
    assert fit_slope(x[:2], x[:2]) is None
    assert fit_slope(x, [1.0, 0.0, -1.0, np.nan]) is None


@pytest.mark.parametrize("bad", [
    dict(eps_list=(0.1,)), dict(eps_list=(0.2, 0.1, 0.1)), dict(eps_list=(0.2, 0.1, 1e-3)),
    dict(mode="magic"), dict(nrad=6), dict(dt=0.0), dict(initial="random"), dict(workers=0),
])
def test_sweep_config_validation(bad):
    with pytest.raises(ConfigurationError):
        run_sweep(small_sweep(**bad))


def test_manufactured_sweep_report_and_determinism():
    a = run_sweep(small_sweep())
    b = run_sweep(small_sweep())
    assert a.to_csv() == b.to_csv()
    assert a.to_json(timing=False) == b.to_json(timing=False)
    assert a.slopes["D_sol"] > 1.8 and a.slopes["avg_error"] > 0.9
    rows = list(csv.reader(io.StringIO(a.to_csv(), newline="")))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 4
    assert a.to_csv().count("\r\n") == 4
    d = json.loads(a.to_json())
    assert d["schema"] == SCHEMA_VERSION and d["meta"]["failed"] == []
    assert all(e.functionals.grad_split_defect < 1e-9 for e in a.entries)
    assert a.rate_table().startswith("# " + SCHEMA_VERSION)


def test_enlarging_eps_list_keeps_entries():
    small = run_sweep(small_sweep())
    big = run_sweep(small_sweep(eps_list=(0.2, 0.1, 0.05, 0.025)))
    for e in small.entries:
        match = next(x for x in big.entries if x.eps == e.eps)
        assert match.functionals.final() == e.functionals.final()


def test_partial_failure_is_annotated(monkeypatch):
    real = harness._manufactured_entry

    def flaky(cfg, eps):
        if eps == 0.05:
            raise StepRejected("Courant number too large")
        return real(cfg, eps)

    monkeypatch.setattr(harness, "_manufactured_entry", flaky)
    rep = run_sweep(small_sweep(eps_list=(0.2, 0.1, 0.05, 0.025)))
    assert [e.ok for e in rep.entries] == [True, True, False, True]
    assert rep.meta["failed"] == [0.05]
    assert "StepRejected" in rep.entries[2].status
    assert rep.slopes["D_sol"] is not None
    row = rep.rows()[2]
    assert row["D_sol"] == "" and row["status"].startswith("failed")


def test_timestep_sweep_runs():
    rep = run_sweep(small_sweep(mode="timestep", dt=0.01, t_final=0.03))
    assert all(e.ok for e in rep.entries)
    for e in rep.entries:
        assert e.diagnostics["max_normal_trace"] < 1e-10
        assert e.diagnostics["min_relative_slack"] > -1e-6


# ----------------------------------------------------------------------------
# global mode and probes


def test_global_mode_unforced_decay():
    rep = global_mode_check(GlobalConfig(lmax=6, long_dt=0.05, preset="random"), run_shell=False)
    assert rep["orthogonality_defect"] < 1e-10
    assert rep["max_bound_ratio"] <= 1.01 and rep["bound_ok"]
    grid = make_sphere_grid(7)
    v0 = random_decaying(grid, np.random.default_rng(0), 6).v0
    assert np.isclose(rep["E0"], l2_sphere(grid, v0) ** 2, rtol=1e-8)


def test_global_mode_rejects_rotation():
    with pytest.raises(PreconditionError):
        global_mode_check(GlobalConfig(preset="rotation"), run_shell=False)


def test_explicit_constants_small():
    rep = explicit_constant_check(nsamples=10, lmax=6)
    assert rep["CoEx_L2"]["violations"] == 0 and rep["DfEx_L2"]["violations"] == 0
    assert 0 < rep["CoEx_L2"]["max_ratio"] < 1


def test_korn_probes_small():
    rep = korn_probes(nsamples=5, lmax=4, nrad=8)
    assert rep["killing_flagged"]
    assert np.isfinite(rep["sphere_constant"]) and np.isfinite(rep["shell_constant"])
    assert rep["shell_variation"] < 0.25
