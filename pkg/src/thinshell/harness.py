"""Shell-versus-sphere comparison: difference functionals, eps-sweeps and inequality probes.

The central object is :class:`DiffFunctionals`, evaluated from a pair of
trajectories sampled at common times. :func:`run_sweep` produces those
pairs for a list of thicknesses and fits log-log slopes; the remaining
entry points measure empirical constants of the thin-shell inequalities.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .avgext import (
    AverageOp,
    DualForcing,
    average,
    average_tangential,
    constant_extension,
    extend_forcing,
    weighted_extension,
)
from .errors import ConfigurationError, InvalidParameter, PreconditionError, ShapeError, ThinShellError
from .fields import (
    random_potential_field,
    random_scalar,
    random_shell_scalar,
    random_slip_field,
    random_solenoidal,
    random_tangent,
)
from .grid import ShellGrid, SphereGrid, degree_array, make_shell_grid, make_sphere_grid
from .presets import make_preset
from .shell_ns import (
    ShellTrajectory,
    build_dual_space,
    build_model,
    energy_report3d,
    init_shell_solver,
    manufacture,
    manufactured_dual_loads,
    run3d,
)
from .sphere_ns import (
    Trajectory2D,
    init_sphere_solver,
    run,
    run_to_times,
    spectral_energy,
    spectral_h1_norm2,
    spectral_strain_norm2,
)
from .surfcalc import (
    full_gradient_shell,
    h1_shell,
    h1_sphere,
    inner_shell,
    inner_sphere,
    l2_shell,
    l2_sphere,
    leray_project_sphere,
    probe_inequality,
    projector,
    rotation_basis,
    rotation_field,
    surface_divergence,
    tangential_gradient,
    weak_gradient_coeffs,
)

__all__ = [
    "SCHEMA_VERSION",
    "DiffFunctionals",
    "DataTerms",
    "NodalShellTrajectory",
    "compute_diff",
    "global_constants",
    "dual_norm_surrogate",
    "SweepConfig",
    "SweepEntry",
    "SweepReport",
    "run_sweep",
    "fit_slope",
    "GlobalConfig",
    "global_mode_check",
    "InequalityRatios",
    "scaling_suite",
    "explicit_constant_check",
    "korn_probes",
    "SCALING_INEQUALITIES",
]

log = logging.getLogger(__name__)

SCHEMA_VERSION = "thinshell.sweep/1"
CSV_COLUMNS = (
    "eps", "t_final", "D_data", "D_sol", "Dsol_grad_tan", "Dsol_grad_rad", "F_v", "G_v",
    "sup_avg_error", "extra_term", "status", "slope_D_sol", "slope_avg_error", "slope_extra_term",
)


# ----------------------------------------------------------------------------
# dual norms


def dual_norm_surrogate(g: DualForcing | None, space: str = "V0", t: float = 0.0, dual=None) -> float:
    """Discrete Riesz dual norm of a forcing functional.

    ``space='V0'``: expansion in the orthonormal solenoidal harmonics
    n x grad Y / sqrt(Lam), whose H1 form is diagonal with eigenvalue Lam,
    gives sqrt(sum |g_lm|^2 / (1 + Lam)). ``space='V_eps'`` uses the shell
    dual basis ``dual`` (see :func:`thinshell.shell_ns.build_dual_space`).
    Both never exceed the L2 norm of the Riesz vector.
    """
    if g is None:
        return 0.0
    if space == "V0":
        grid = g.grid
        vec = g.at(t)
        L = grid.lmax
        coeff = weak_gradient_coeffs(grid, np.cross(vec, grid.xyz, axis=0), L)
        lam = (degree_array(L) * (degree_array(L) + 1.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(lam > 0, 1.0 / (lam * (1.0 + lam)), 0.0)
        return float(np.sqrt(np.sum(w * np.abs(coeff) ** 2)))
    if space == "V_eps":
        if dual is None:
            raise InvalidParameter("a shell dual basis is required for the V_eps norm")
        if g.mode == "sphere":
            raise InvalidParameter("extend the functional into the shell before taking its V_eps norm")
        return dual.field_norm(g.volume_riesz(dual.model.qshell, t))
    raise InvalidParameter(f"unknown dual space {space!r}")


# ----------------------------------------------------------------------------
# difference functionals


@dataclass
class DiffFunctionals:
    """Per-sample difference functionals between a shell and a sphere trajectory.

    Time integrals use the trapezoid rule on the sample grid. Gradient
    integrands are stored before division by eps so that the gradient
    split can be checked directly.
    """

    eps: float
    nu: float
    times: np.ndarray
    D_data: np.ndarray
    D_sol: np.ndarray
    sol_l2: np.ndarray
    grad_tan: np.ndarray
    grad_rad: np.ndarray
    F_v: np.ndarray
    G_v: np.ndarray
    eta_v: np.ndarray
    avg_error: np.ndarray
    extra_term: np.ndarray
    v_l2: np.ndarray
    v_h1: np.ndarray
    sigma: float
    R_eps: float
    grad_split_defect: float
    E0: float | None = None
    F0: float | None = None
    G0: float | None = None

    def final(self) -> dict:
        return {
            "eps": self.eps,
            "t_final": float(self.times[-1]),
            "D_data": float(self.D_data[-1]),
            "D_sol": float(self.D_sol[-1]),
            "Dsol_grad_tan": float(self.nu / self.eps * np.trapezoid(self.grad_tan, self.times)),
            "Dsol_grad_rad": float(self.nu / self.eps * np.trapezoid(self.grad_rad, self.times)),
            "F_v": float(self.F_v[-1]),
            "G_v": float(self.G_v[-1]),
            "sup_avg_error": float(np.max(self.avg_error)),
            "extra_term": float(self.extra_term[-1]),
            "sigma": self.sigma,
            "R_eps": self.R_eps,
            "grad_split_defect": self.grad_split_defect,
        }

    def local_constant(self) -> float:
        """Smallest C1 for which the local estimate holds at every sample."""
        rhs = self.F_v * (self.D_data + self.eps**2 * self.G_v)
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(rhs > 0, self.D_sol / rhs, np.where(self.D_sol > 0, np.inf, 0.0))
        return float(np.max(q))

    def check(self, tol: float = 1e-12) -> None:
        from .errors import InvariantViolation

        for name in ("D_data", "D_sol", "grad_tan", "grad_rad", "G_v", "eta_v", "avg_error", "extra_term"):
            if np.min(getattr(self, name)) < -tol:
                raise InvariantViolation(f"{name} became negative")
        if np.min(self.F_v) < 1.0 or np.any(np.diff(self.F_v) < -tol * self.F_v[1:]):
            raise InvariantViolation("F_v must be >= 1 and nondecreasing")


@dataclass
class DataTerms:
    """Optional inputs for the data functional.

    ``forcing_gap2`` holds ||f_eps - fbar||^2 in the V_eps dual norm and
    ``forcing_v0_2`` holds ||f||^2 in the V_0 dual norm, both per sample.
    """

    forcing_gap2: np.ndarray | None = None
    forcing_v0_2: np.ndarray | None = None


@dataclass
class NodalShellTrajectory:
    """Shell samples on ``qshell`` as (u, du/dr) pairs; a missing du/dr is taken along the radial nodes."""

    qshell: ShellGrid
    times: np.ndarray
    samples: list

    def velocity(self, i: int, with_derivative: bool = True):
        u, dudr = self.samples[i]
        return (u, dudr) if with_derivative else (u, None)


def _check_compatible(shell, sphere: Trajectory2D) -> None:
    sg, bg = shell.qshell.base, sphere.grid
    if (sg.nlat, sg.nlon) != (bg.nlat, bg.nlon) or not np.allclose(sg.theta, bg.theta):
        raise ShapeError("shell angular grid and sphere grid differ")
    if len(shell.times) != len(sphere.times) or not np.allclose(shell.times, sphere.times, rtol=0, atol=1e-12):
        raise ShapeError("trajectories are not sampled at common times")


def compute_diff(
    shell: ShellTrajectory | NodalShellTrajectory,
    sphere: Trajectory2D,
    nu: float,
    t: float | None = None,
    data: DataTerms | None = None,
) -> DiffFunctionals:
    """Evaluate the difference functionals on every common sample up to time ``t``.

    ``shell`` is any trajectory exposing ``qshell``, ``times`` and
    ``velocity(i) -> (u, du/dr)`` on ``qshell``; the sphere trajectory must
    live on the angular factor of that grid.
    """
    _check_compatible(shell, sphere)
    data = data or DataTerms()
    times = np.asarray(shell.times, dtype=float)
    n = times.size
    if t is not None:
        n = int(np.searchsorted(times, t + 1e-12 * max(1.0, abs(t)), side="right"))
        if n == 0:
            raise InvalidParameter("requested time precedes the first sample")
    times = times[:n]
    qs = shell.qshell
    grid = qs.base
    eps = qs.eps
    P = projector(grid)[:, :, None]
    nrm = grid.xyz[:, None]
    avg0 = AverageOp(0, qs)

    sol_l2 = np.empty(n)
    gtan = np.empty(n)
    grad = np.empty(n)
    avg_err = np.empty(n)
    v_l2 = np.empty(n)
    v_h1 = np.empty(n)
    v_d = np.empty(n)
    u_l2 = np.empty(n)
    u_h1 = np.empty(n)
    split = 0.0
    for i in range(n):
        u, dudr = shell.velocity(i)
        if dudr is None:
            dudr = np.moveaxis(np.tensordot(qs.dr, u, axes=([1], [u.ndim - 3])), 0, -3)
        v = sphere.velocity(i)
        om = sphere.omega[i]
        vb = constant_extension(qs, v)
        G = full_gradient_shell(qs, u, dudr)
        gv = tangential_gradient(grid, v)
        A = np.einsum("ik...,kj...->ij...", P, G) - gv[:, :, None]
        a = dudr - vb
        diff = u - vb
        sol_l2[i] = inner_shell(qs, diff, diff)
        gtan[i] = inner_shell(qs, A, A)
        grad[i] = inner_shell(qs, a, a)
        # gradient of w = u - v_E, assembled independently of the split
        gw = G - nrm[:, None] * vb[None] - gv[:, :, None]
        full = inner_shell(qs, gw, gw)
        split = max(split, abs(full - gtan[i] - grad[i]) / max(inner_shell(qs, G, G), full, 1e-300))
        m0 = average(avg0, u)
        avg_err[i] = l2_sphere(grid, m0 - v)
        v_l2[i] = spectral_energy(om)
        v_h1[i] = spectral_h1_norm2(om)
        v_d[i] = spectral_strain_norm2(om)
        u_l2[i] = inner_shell(qs, u, u)
        u_h1[i] = u_l2[i] + inner_shell(qs, G, G)

    cumt = lambda y: cumulative_trapezoid(y, times, initial=0.0)  # noqa: E731
    gap2 = np.zeros(n) if data.forcing_gap2 is None else np.asarray(data.forcing_gap2, float)[:n]
    f02 = np.zeros(n) if data.forcing_v0_2 is None else np.asarray(data.forcing_v0_2, float)[:n]
    D_data = sol_l2[0] / eps + cumt(gap2) / (eps * nu)
    D_sol = sol_l2 / eps + nu / eps * cumt(gtan + grad)
    F_v = np.exp(cumt(nu + v_l2 * v_h1 / nu**3))
    G_v = v_l2[0] + v_l2 + cumt(f02 + (nu**2 + v_l2) * v_h1) / nu
    eta = 2.0 * nu * np.sqrt(v_d) + np.sqrt(v_l2 * v_h1)
    sigma = float(np.sqrt(np.sqrt(np.max(v_l2)) * np.sqrt(np.trapezoid(v_h1, times))))
    R_eps = float(np.max(u_l2) ** 0.25 * np.trapezoid(u_h1, times) ** 0.75)
    extra = nu / eps * cumt(sol_l2)
    return DiffFunctionals(
        eps, nu, times, D_data, D_sol, sol_l2 / eps, gtan, grad, F_v, G_v, eta, avg_err, extra,
        v_l2, v_h1, sigma, R_eps, float(split),
    )


def global_constants(E0: float, nu: float) -> tuple[float, float]:
    """F0 and G0 of the global estimate with the exponent constant set to one (F0 may overflow to inf)."""
    with np.errstate(over="ignore"):
        return float(np.exp(E0**2 / nu**2)), float(E0 + E0**2 / nu**2)


# ----------------------------------------------------------------------------
# sweeps


@dataclass
class SweepConfig:
    eps_list: tuple = (0.2, 0.1, 0.05, 0.025)
    lmax: int = 10
    nrad: int = 8
    nu: float = 1.0
    dt: float = 2e-3
    t_final: float = 0.5
    mode: str = "timestep"
    preset: str = "two_mode"
    initial: str = "constant"
    forcing_extension: str = "constant"
    ramp: bool = True
    sample_every: int = 5
    grid_pad: int = 1
    seed: int = 0
    workers: int = 1

    def validate(self) -> None:
        if len(self.eps_list) < 3:
            raise ConfigurationError("a sweep needs at least three eps values to fit a slope")
        for e in self.eps_list:
            if not (1.0 / 256 <= e < 1.0):
                raise ConfigurationError(f"eps={e} outside the supported range [1/256, 1)")
        if len(set(self.eps_list)) != len(self.eps_list):
            raise ConfigurationError("eps values must be distinct")
        if self.mode not in ("timestep", "manufactured"):
            raise ConfigurationError(f"unknown sweep mode {self.mode!r}")
        if self.initial not in ("constant", "weighted"):
            raise ConfigurationError("initial data must be 'constant' or 'weighted'")
        if self.forcing_extension not in ("constant", "weighted"):
            raise ConfigurationError("forcing extension must be 'constant' or 'weighted'")
        if self.lmax < 2 or self.nrad < 8:
            raise ConfigurationError("need lmax >= 2 and nrad >= 8")
        if not (self.nu > 0 and self.dt > 0 and self.t_final > 0):
            raise ConfigurationError("nu, dt and t_final must be positive")
        if self.sample_every < 1 or self.workers < 1 or self.grid_pad < 1:
            raise ConfigurationError("sample_every, workers and grid_pad must be positive")


@dataclass
class SweepEntry:
    eps: float
    status: str
    functionals: DiffFunctionals | None = None
    diagnostics: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def fit_slope(x, y) -> float | None:
    """Least-squares slope of log y against log x; None with fewer than 3 usable points."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    keep = (x > 0) & (y > 0) & np.isfinite(y)
    if keep.sum() < 3:
        return None
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


@dataclass
class SweepReport:
    config: SweepConfig
    entries: list[SweepEntry]
    slopes: dict
    constants: dict
    meta: dict = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for e in self.entries:
            row = {k: "" for k in CSV_COLUMNS}
            row["eps"] = e.eps
            row["status"] = e.status
            if e.ok:
                row.update({k: v for k, v in e.functionals.final().items() if k in row})
            row["slope_D_sol"] = self.slopes.get("D_sol")
            row["slope_avg_error"] = self.slopes.get("avg_error")
            row["slope_extra_term"] = self.slopes.get("extra_term")
            out.append(row)
        return out

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "config": asdict(self.config),
            "slopes": self.slopes,
            "constants": self.constants,
            "meta": self.meta,
            "entries": [
                {
                    "eps": e.eps,
                    "status": e.status,
                    "runtime": e.runtime,
                    "diagnostics": e.diagnostics,
                    "final": e.functionals.final() if e.ok else None,
                    "series": None if not e.ok else {
                        "times": e.functionals.times.tolist(),
                        "D_sol": e.functionals.D_sol.tolist(),
                        "avg_error": e.functionals.avg_error.tolist(),
                    },
                }
                for e in self.entries
            ],
        }

    def to_json(self, path=None, timing: bool = True) -> str:
        d = self.to_dict()
        if not timing:
            for e in d["entries"]:
                e.pop("runtime")
        text = json.dumps(d, indent=2, sort_keys=True, default=_json_default)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(CSV_COLUMNS), lineterminator="\r\n")
        w.writeheader()
        for row in self.rows():
            w.writerow({k: _fmt(v) for k, v in row.items()})
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text

    def rate_table(self) -> str:
        """Whitespace-separated table for gnuplot: eps D_sol sup_avg_error extra_term."""
        lines = [f"# {SCHEMA_VERSION} mode={self.config.mode} slope_D_sol={_fmt(self.slopes.get('D_sol'))}",
                 "# eps D_sol sup_avg_error extra_term"]
        for e in self.entries:
            if e.ok:
                f = e.functionals.final()
                lines.append(f"{_fmt(e.eps)} {_fmt(f['D_sol'])} {_fmt(f['sup_avg_error'])} {_fmt(f['extra_term'])}")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if v is None or v == "":
        return ""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


def _sphere_forcing_series(f: DualForcing | None, times: np.ndarray) -> np.ndarray:
    if f is None:
        return np.zeros(times.size)
    base = dual_norm_surrogate(f, "V0") ** 2
    return np.array([base * f.scale(t) ** 2 for t in times])


def _setup(cfg: SweepConfig, eps: float):
    grid = make_sphere_grid(cfg.lmax + cfg.grid_pad)
    rng = np.random.default_rng(cfg.seed)
    data = make_preset(cfg.preset, grid, cfg.nu, rng, lmax=cfg.lmax)
    model = build_model(grid, eps, cfg.nrad, cfg.nu, lmax=cfg.lmax)
    return grid, data, model


def _timestep_entry(cfg: SweepConfig, eps: float):
    grid, data, model = _setup(cfg, eps)
    qs = model.qshell
    ext = constant_extension if cfg.initial == "constant" else weighted_extension
    u0 = ext(qs, data.v0)
    f_shell = None if data.forcing is None else extend_forcing(data.forcing, cfg.forcing_extension, qs)
    state = init_shell_solver(u0, cfg.nu, f_shell, cfg.dt, qs, model=model, ramp=cfg.ramp)
    traj = run3d(state, cfg.t_final)
    sph = init_sphere_solver(data.v0, cfg.nu, data.forcing, cfg.dt, lmax=cfg.lmax, grid=grid)
    vtraj = run_to_times(sph, traj.times)
    gap2 = np.zeros(traj.times.size)
    if f_shell is not None and cfg.forcing_extension != "constant":
        dual = build_dual_space(model)
        fbar = extend_forcing(data.forcing, "constant", qs)
        gap2 = np.array([dual.field_norm(f_shell.volume_riesz(qs, t) - fbar.volume_riesz(qs, t)) ** 2 for t in traj.times])
    terms = DataTerms(gap2, _sphere_forcing_series(data.forcing, traj.times))
    df = compute_diff(traj, vtraj, cfg.nu, data=terms)
    rep = energy_report3d(state)
    diag = {
        "steps": int(state.steps),
        "projection_defect": state.meta.get("projection_defect"),
        "min_relative_slack": rep.get("min_relative_slack"),
        "momentum_drift": rep.get("momentum_drift"),
        "max_divergence": rep["max_divergence"],
        "max_normal_trace": rep["max_normal_trace"],
        "max_tangential_stress": rep["max_tangential_stress"],
    }
    return df, diag


def _manufactured_entry(cfg: SweepConfig, eps: float):
    grid, data, model = _setup(cfg, eps)
    qs = model.qshell
    sph = init_sphere_solver(data.v0, cfg.nu, data.forcing, cfg.dt, lmax=cfg.lmax, grid=grid)
    vtraj = run(sph, cfg.t_final, sample_every=cfg.sample_every)
    mf = manufacture(vtraj, model)
    dual = build_dual_space(model)
    fbar = None if data.forcing is None else extend_forcing(data.forcing, "constant", qs)
    gap2 = np.empty(mf.times.size)
    for i, t in enumerate(mf.times):
        bt, bp = manufactured_dual_loads(mf, dual, i)
        if fbar is not None:
            ft, fp = dual.loads(fbar.volume_riesz(qs, t))
            bt, bp = bt - ft, bp - fp
        gap2[i] = dual.norm(bt, bp) ** 2
    terms = DataTerms(gap2, _sphere_forcing_series(data.forcing, mf.times))
    df = compute_diff(mf.trajectory(), vtraj, cfg.nu, data=terms)
    diag = {"bc_defect": mf.bc_defect, "normal_defect": mf.normal_defect, "samples": int(mf.times.size)}
    return df, diag


def _sweep_job(args) -> SweepEntry:
    cfg, eps = args
    start = time.perf_counter()
    try:
        job = _timestep_entry if cfg.mode == "timestep" else _manufactured_entry
        df, diag = job(cfg, eps)
        df.check()
        entry = SweepEntry(eps, "ok", df, diag)
    except (ThinShellError, FloatingPointError, np.linalg.LinAlgError) as exc:
        log.warning("eps=%s failed: %s", eps, exc)
        entry = SweepEntry(eps, f"failed: {type(exc).__name__}: {exc}")
    entry.runtime = time.perf_counter() - start
    return entry


def run_sweep(cfg: SweepConfig) -> SweepReport:
    """Solve the shell and sphere problems for every eps and fit the convergence slopes."""
    cfg.validate()
    jobs = [(cfg, float(e)) for e in cfg.eps_list]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            entries = list(pool.map(_sweep_job, jobs))
    else:
        entries = [_sweep_job(j) for j in jobs]
    good = [e for e in entries if e.ok]
    eps = [e.eps for e in good]
    finals = [e.functionals.final() for e in good]
    slopes = {
        "D_sol": fit_slope(eps, [f["D_sol"] for f in finals]),
        "avg_error": fit_slope(eps, [f["sup_avg_error"] for f in finals]),
        "extra_term": fit_slope(eps, [f["extra_term"] for f in finals]),
    }
    constants = {
        "C1_local": max((e.functionals.local_constant() for e in good), default=None),
        "avg_error_over_eps": max((f["sup_avg_error"] / e for f, e in zip(finals, eps)), default=None),
    }
    meta = {"lmax": cfg.lmax, "nrad": cfg.nrad, "dt": cfg.dt, "nu": cfg.nu, "T": cfg.t_final,
            "failed": [e.eps for e in entries if not e.ok]}
    return SweepReport(cfg, entries, slopes, constants, meta)


# ----------------------------------------------------------------------------
# global mode


@dataclass
class GlobalConfig:
    eps_list: tuple = (0.2, 0.1, 0.05, 0.025)
    lmax: int = 8
    nrad: int = 8
    nu: float = 1.0
    dt: float = 2e-3
    t_final: float = 0.5
    horizon: float = 50.0
    long_dt: float = 1e-2
    preset: str = "random"
    seed: int = 0
    orth_tol: float = 1e-10
    bound_factor: float = 4.0
    workers: int = 1


def _orthogonality_defect(grid: SphereGrid, v: np.ndarray) -> float:
    basis = rotation_basis(grid.xyz)
    return float(max(abs(inner_sphere(grid, v, r)) for r in basis))


def global_mode_check(cfg: GlobalConfig, run_shell: bool = True) -> dict:
    """Long-horizon sphere bound and the extra dissipation term of the global estimate."""
    grid = make_sphere_grid(cfg.lmax + 1)
    rng = np.random.default_rng(cfg.seed)
    data = make_preset(cfg.preset, grid, cfg.nu, rng, lmax=cfg.lmax)
    scale = max(l2_sphere(grid, data.v0), 1.0)
    d_v = _orthogonality_defect(grid, data.v0)
    d_f = 0.0 if data.forcing is None else _orthogonality_defect(grid, data.forcing.riesz)
    if d_v > cfg.orth_tol * scale or d_f > cfg.orth_tol * scale:
        raise PreconditionError(
            f"data not orthogonal to rotations: |(v0, r_a)| = {d_v:.3g}, |<f, r_a>| = {d_f:.3g}"
        )
    horizon = cfg.horizon / cfg.nu
    st = init_sphere_solver(data.v0, cfg.nu, data.forcing, cfg.long_dt, lmax=cfg.lmax, grid=grid)
    traj = run(st, horizon)
    energy = np.array([spectral_energy(w) for w in traj.omega])
    h1 = np.array([spectral_h1_norm2(w) for w in traj.omega])
    f2 = _sphere_forcing_series(data.forcing, traj.times)
    forcing_int = float(np.trapezoid(f2, traj.times))
    rate = (data.forcing.meta.get("rate") if data.forcing is not None else None)
    if rate:
        forcing_int += f2[-1] / (2.0 * rate)
    E0 = float(energy[0] + forcing_int / cfg.nu)
    bound = energy + cfg.nu * cumulative_trapezoid(h1, traj.times, initial=0.0)
    ratio = float(np.max(bound) / E0) if E0 > 0 else 0.0
    F0, G0 = global_constants(E0, cfg.nu)
    out = {
        "E0": E0, "F0": F0, "G0": G0,
        "horizon": horizon,
        "max_bound_ratio": ratio,
        "bound_ok": ratio <= cfg.bound_factor,
        "orthogonality_defect": max(d_v, d_f),
    }
    if run_shell:
        sweep = run_sweep(SweepConfig(
            eps_list=tuple(cfg.eps_list), lmax=cfg.lmax, nrad=cfg.nrad, nu=cfg.nu, dt=cfg.dt,
            t_final=cfg.t_final, mode="timestep", preset=cfg.preset, seed=cfg.seed, workers=cfg.workers,
        ))
        consts = []
        for e in sweep.entries:
            if e.ok:
                f = e.functionals
                lhs = f.D_sol + f.extra_term
                rhs = F0 * (f.D_data + e.eps**2 * G0)
                consts.append(float(np.max(lhs / rhs)))
        out.update({
            "extra_term": {str(e.eps): (e.functionals.final()["extra_term"] if e.ok else None) for e in sweep.entries},
            "slope_extra_term": sweep.slopes["extra_term"],
            "slope_D_sol": sweep.slopes["D_sol"],
            "C3_global": max(consts, default=None),
            "failed": sweep.meta["failed"],
        })
    return out


# ----------------------------------------------------------------------------
# scaling-ratio suite


SCALING_INEQUALITIES = (
    "Ave_L2", "AvDf_L2", "AvCo_Df", "Ave_NC", "Atan_Con", "Atdiv_L2",
    "Ave_HL", "Func_Ext", "InTr_v2", "Quad_Thin", "Nor_Thin",
)


@dataclass
class InequalityRatios:
    """Largest empirical ratio LHS / (eps power x norms) at each thickness."""

    name: str
    eps: list[float]
    ratios: list[float]
    spread: float = math.nan
    slope: float | None = None
    passed: bool = False

    def finish(self, max_spread: float = 4.0) -> "InequalityRatios":
        r = np.asarray(self.ratios, float)
        finite = bool(np.all(np.isfinite(r)) and np.all(r > 0))
        self.spread = float(r.max() / r.min()) if finite else math.inf
        self.slope = fit_slope(self.eps, r) if finite else None
        self.passed = finite and self.spread < max_spread
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def _ratio(lhs: float, rhs: float) -> float:
    return lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)


def _scale_band(eps: float, factor: float) -> int:
    return max(3, int(math.ceil(factor / eps)))


def _sample_sets(shell, rng, nsamples, lmax_low, l_high):
    """Scalar and vector sample families: O(1) and thickness radial scales, low and eps-scale degrees."""
    scalars, slips, solenoidal = [], [], []
    bands = ((0, lmax_low), (max(l_high - 1, 1), l_high))
    for scale in ("thin", "unit"):
        for lo, hi in bands:
            for _ in range(nsamples):
                scalars.append(random_shell_scalar(shell, rng, hi, lo, scale=scale))
                solenoidal.append(random_potential_field(shell, rng, hi, max(lo, 1), scale=scale))
    for _ in range(nsamples):
        u = random_slip_field(shell, rng, lmax_low)
        slips.append((u, None))
    return scalars, slips + solenoidal, solenoidal


def scaling_suite(
    eps_list=(0.2, 0.1, 0.05, 0.025),
    nsamples: int = 3,
    lmax_low: int = 4,
    band_factor: float = 0.5,
    nrad: int = 10,
    seed: int = 0,
    max_spread: float = 4.0,
) -> dict[str, InequalityRatios]:
    """Empirical ratios of the thin-shell inequalities across eps.

    Each thickness gets fields varying on an O(1) radial scale and on the
    thickness scale, with low angular degree and with degree near
    ``band_factor / eps``; the latter are the fields for which the
    eps^(1/2) bounds on averaged divergences are attained.
    """
    eps_list = [float(e) for e in eps_list]
    results = {k: [] for k in SCALING_INEQUALITIES}
    func_parts = {k: [] for k in ("bar", "ext", "gap")}
    seeds = np.random.SeedSequence(seed).spawn(len(eps_list))
    for eps, ss in zip(eps_list, seeds):
        rng = np.random.default_rng(ss)
        l_high = _scale_band(eps, band_factor)
        grid = make_sphere_grid(max(l_high, lmax_low) + 2)
        shell = make_shell_grid(grid, eps, nrad, "gauss")
        scalars, vectors, solenoidal = _sample_sets(shell, rng, nsamples, lmax_low, l_high)
        best = {k: 0.0 for k in SCALING_INEQUALITIES}
        ops = {k: AverageOp(k, shell) for k in (0, 3)}
        nb = grid.xyz[:, None]

        for phi in scalars:
            n0 = l2_shell(shell, phi)
            nh = h1_shell(shell, phi)
            m = {k: average(op, phi) for k, op in ops.items()}
            best["Ave_L2"] = max(best["Ave_L2"], max(_ratio(l2_sphere(grid, m[k]), eps**-0.5 * n0) for k in m))
            best["AvDf_L2"] = max(best["AvDf_L2"], _ratio(l2_sphere(grid, m[0] - m[3]), eps**0.5 * n0))
            best["AvCo_Df"] = max(best["AvCo_Df"], max(
                _ratio(l2_shell(shell, phi - constant_extension(shell, m[k])), eps * nh) for k in m))

        for u, du in vectors:
            G = full_gradient_shell(shell, u, du)
            nh = h1_shell(shell, u, G)
            un = np.einsum("i...,i...->...", nb, u)
            best["Nor_Thin"] = max(best["Nor_Thin"], _ratio(l2_shell(shell, un), eps * nh))
            for k, op in ops.items():
                best["Ave_NC"] = max(best["Ave_NC"], _ratio(l2_sphere(grid, average(op, un)), eps**0.5 * nh))
                mt = average_tangential(op, u)
                best["Atan_Con"] = max(best["Atan_Con"], _ratio(l2_shell(shell, u - constant_extension(shell, mt)), eps * nh))

        for u, du in solenoidal:
            nh = h1_shell(shell, u, full_gradient_shell(shell, u, du))
            for k, op in ops.items():
                mt = average_tangential(op, u)
                best["Atdiv_L2"] = max(best["Atdiv_L2"], _ratio(l2_sphere(grid, surface_divergence(grid, mt)), eps**0.5 * nh))
                best["Ave_HL"] = max(best["Ave_HL"], _ratio(h1_sphere(grid, mt - leray_project_sphere(grid, mt)), eps**0.5 * nh))

        # trilinear bound: a fixed low-degree surface field against all test fields
        for _ in range(nsamples):
            v = random_solenoidal(grid, rng, lmax_low)
            vE = weighted_extension(shell, v)
            GE = full_gradient_shell(shell, vE, constant_extension(shell, v))
            conv = np.einsum("i...,ij...->j...", vE, GE)
            vn = l2_sphere(grid, v) * h1_sphere(grid, v)
            # the convection term itself is the most aligned test field
            for u, du in vectors + [(conv, None)]:
                lhs = abs(inner_shell(shell, conv, u))
                nh = h1_shell(shell, u, full_gradient_shell(shell, u, du))
                best["InTr_v2"] = max(best["InTr_v2"], _ratio(lhs, eps**0.25 * vn * nh))
            for eta_band in ((0, lmax_low), (max(l_high - 1, 0), l_high)):
                eta = random_scalar(grid, rng, eta_band[1], eta_band[0])
                en = np.sqrt(l2_sphere(grid, eta) * h1_sphere(grid, eta))
                for phi in scalars:
                    lhs = l2_shell(shell, constant_extension(shell, eta) * phi)
                    rhs = en * np.sqrt(l2_shell(shell, phi) * h1_shell(shell, phi))
                    best["Quad_Thin"] = max(best["Quad_Thin"], _ratio(lhs, rhs))

        # forcing functionals: exact discrete dual norms over the solver's slip space
        lf = lmax_low
        fgrid = make_sphere_grid(lf + 2)
        model = build_model(fgrid, eps, 8, 1.0, lmax=lf + 1)
        dual = build_dual_space(model)
        parts = {"bar": 0.0, "ext": 0.0, "gap": 0.0}
        for _ in range(2 * nsamples):
            f = DualForcing.on_sphere(fgrid, random_tangent(fgrid, rng, lf))
            f0 = dual_norm_surrogate(f, "V0")
            fbar = extend_forcing(f, "constant", model.qshell)
            fext = extend_forcing(f, "weighted", model.qshell)
            rb = fbar.volume_riesz()
            re = fext.volume_riesz()
            parts["bar"] = max(parts["bar"], _ratio(dual.field_norm(rb), eps**0.5 * f0))
            parts["ext"] = max(parts["ext"], _ratio(dual.field_norm(re), eps**0.5 * f0))
            parts["gap"] = max(parts["gap"], _ratio(dual.field_norm(re - rb), eps**1.5 * f0))
        for k in parts:
            func_parts[k].append(parts[k])
        best["Func_Ext"] = max(parts.values())
        for k in SCALING_INEQUALITIES:
            results[k].append(best[k])
        log.info("scaling suite eps=%s done (degree band %s)", eps, l_high)

    out = {k: InequalityRatios(k, eps_list, results[k]).finish(max_spread) for k in SCALING_INEQUALITIES}
    # the functional bound is three inequalities; each must be uniform on its own
    subs = [InequalityRatios(f"Func_Ext[{k}]", eps_list, v).finish(max_spread) for k, v in func_parts.items()]
    fe = out["Func_Ext"]
    fe.passed = fe.passed and all(s.passed for s in subs)
    for s in subs:
        out[s.name] = s
    return out


# ----------------------------------------------------------------------------
# explicit constants and Korn probes


def explicit_constant_check(eps_list=(0.2, 0.1, 0.05), nsamples: int = 100, lmax: int = 8, nrad: int = 6, seed: int = 0) -> dict:
    """Count violations of the two extension bounds with their literal constant 2."""
    rng = np.random.default_rng(seed)
    grid = make_sphere_grid(lmax + 1)
    out = {"CoEx_L2": {"violations": 0, "max_ratio": 0.0}, "DfEx_L2": {"violations": 0, "max_ratio": 0.0}}
    for eps in eps_list:
        shell = make_shell_grid(grid, eps, nrad, "gauss")
        for _ in range(nsamples):
            eta = random_scalar(grid, rng, lmax)
            q = l2_shell(shell, constant_extension(shell, eta)) / (2.0 * eps**0.5 * l2_sphere(grid, eta))
            v = np.stack([random_scalar(grid, rng, lmax) for _ in range(3)])
            p = l2_shell(shell, weighted_extension(shell, v) - constant_extension(shell, v)) / (2.0 * eps**1.5 * l2_sphere(grid, v))
            for key, val in (("CoEx_L2", q), ("DfEx_L2", p)):
                out[key]["max_ratio"] = max(out[key]["max_ratio"], float(val))
                out[key]["violations"] += int(val > 1.0)
    out["samples_per_eps"] = nsamples
    out["eps"] = list(eps_list)
    return out


def korn_probes(eps_list=(0.2, 0.1, 0.05), nsamples: int = 50, lmax: int = 6, nrad: int = 10, seed: int = 0) -> dict:
    """Empirical Korn constants on the sphere and on shells, plus the rotation counterexample.

    Shell samples are fixed in the normalised radius, so the same shapes
    are compared at every thickness.
    """
    grid = make_sphere_grid(lmax + 2)
    rng = np.random.default_rng(seed)
    sphere_samples = [random_tangent(grid, rng, lmax, decay=0.5) for _ in range(nsamples)]
    sphere = probe_inequality("korn_sphere", sphere_samples, grid=grid)
    axis = np.array([0.3, -0.5, 0.8])
    killing_sphere = probe_inequality("korn_sphere", [rotation_field(grid.xyz, axis)], grid=grid, orthogonalize=False)

    seeds = np.random.SeedSequence(seed + 1).spawn(nsamples)

    def make(ss):
        return lambda shell: random_slip_field(shell, np.random.default_rng(ss), lmax, decay=0.5)

    shells = [make_shell_grid(grid, e, nrad) for e in eps_list]
    shell = probe_inequality("korn_shell_uniform", [make(ss) for ss in seeds], shells=shells)
    killing_shell = probe_inequality(
        "korn_shell_uniform", [lambda sh: rotation_field(sh.xyz, axis)], shells=shells[:1], orthogonalize=False
    )
    per = np.array(list(shell.per_eps.values()))
    variation = float(per.max() / per.min() - 1.0)
    return {
        "sphere": sphere.as_dict(),
        "shell": shell.as_dict(),
        "shell_constant": float(per.max()),
        "sphere_constant": sphere.max_ratio,
        "shell_variation": variation,
        "killing_flagged": bool(killing_sphere.flagged) and bool(killing_shell.flagged),
        "killing_reports": [killing_sphere.as_dict(), killing_shell.as_dict()],
    }
