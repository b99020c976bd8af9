"""Incompressible Navier-Stokes on the unit sphere in vorticity-streamfunction form.

The tangent velocity is ``v = n x grad_S psi`` and the scalar vorticity is
``omega = div_S(v x n) = Laplace psi``. Vorticity obeys

    d_t omega + v . grad_S omega = nu (Laplace omega + 2 omega) + curl_S f,

so every harmonic of degree l relaxes at rate nu (l(l+1) - 2); the l = 1
modes (rigid rotations) are undamped. Time stepping is Crank-Nicolson for
the diagonal viscous term with second-order Adams-Bashforth for advection.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .avgext import DualForcing
from .errors import InvalidParameter, StepRejected
from .grid import SphereGrid, analysis, degree_array, enforce_real, make_sphere_grid, resize_coeffs
from .surfcalc import (
    gradient_from_coeffs,
    inner_sphere,
    l2_sphere,
    leray_project_sphere,
    rotation_basis,
    surface_curl,
    surface_divergence,
)

__all__ = [
    "EnergyLedger2D",
    "SolverState2D",
    "Trajectory2D",
    "init_sphere_solver",
    "init_from_vorticity",
    "step",
    "run",
    "run_to_times",
    "courant_number",
    "energy_report",
    "velocity",
    "streamfunction_coeffs",
    "spectral_energy",
    "spectral_strain_norm2",
    "spectral_h1_norm2",
]


def _lam(L: int) -> np.ndarray:
    l = degree_array(L).astype(float)
    return l * (l + 1.0)


def _inv_lam(L: int) -> np.ndarray:
    lam = _lam(L)
    out = np.zeros_like(lam)
    out[1:] = 1.0 / lam[1:]
    return out


def streamfunction_coeffs(omega: np.ndarray) -> np.ndarray:
    return -omega * _inv_lam(omega.shape[-2] - 1)


def velocity(grid: SphereGrid, omega: np.ndarray) -> np.ndarray:
    """Nodal tangent velocity from vorticity coefficients."""
    return np.cross(grid.xyz, gradient_from_coeffs(grid, streamfunction_coeffs(omega)), axis=0)


def spectral_energy(omega: np.ndarray) -> float:
    """||v||^2 = sum |omega_lm|^2 / (l(l+1))."""
    return float(np.sum(np.abs(omega) ** 2 * _inv_lam(omega.shape[-2] - 1)))


def spectral_strain_norm2(omega: np.ndarray) -> float:
    """||D_S(v)||^2 = (1/2) sum (l(l+1) - 2) |omega_lm|^2 / (l(l+1)) for solenoidal v."""
    L = omega.shape[-2] - 1
    return float(0.5 * np.sum((_lam(L) - 2.0) * _inv_lam(L) * np.abs(omega) ** 2))


def spectral_h1_norm2(omega: np.ndarray) -> float:
    """||v||^2 + ||grad_S v||^2 = sum (1 + l(l+1)) |omega_lm|^2 / (l(l+1))."""
    L = omega.shape[-2] - 1
    return float(np.sum((1.0 + _lam(L)) * _inv_lam(L) * np.abs(omega) ** 2))


@dataclass
class EnergyLedger2D:
    """Running record of the energy balance and angular momenta.

    Time integrals use the trapezoid rule on the step samples.
    """

    times: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)  # ||v||^2
    dissipation: list[float] = field(default_factory=list)  # int_0^t ||D_S v||^2
    work: list[float] = field(default_factory=list)  # int_0^t <f, v>
    h1_integral: list[float] = field(default_factory=list)  # int_0^t ||v||_{H1}^2
    momenta: list[np.ndarray] = field(default_factory=list)  # (v, r_{e_i})
    _last: tuple | None = None

    def record(self, t: float, energy: float, strain2: float, power: float, h1: float, momentum: np.ndarray) -> None:
        if not self.times:
            self.times.append(t)
            self.energy.append(energy)
            self.dissipation.append(0.0)
            self.work.append(0.0)
            self.h1_integral.append(0.0)
        else:
            dt = t - self.times[-1]
            s0, p0, h0 = self._last
            self.times.append(t)
            self.energy.append(energy)
            self.dissipation.append(self.dissipation[-1] + 0.5 * dt * (s0 + strain2))
            self.work.append(self.work[-1] + 0.5 * dt * (p0 + power))
            self.h1_integral.append(self.h1_integral[-1] + 0.5 * dt * (h0 + h1))
        self.momenta.append(np.asarray(momentum, dtype=float))
        self._last = (strain2, power, h1)

    def residual(self, nu: float) -> np.ndarray:
        """LHS - RHS of the energy equality at every recorded time."""
        e = np.asarray(self.energy)
        return 0.5 * e + 2.0 * nu * np.asarray(self.dissipation) - 0.5 * e[0] - np.asarray(self.work)


@dataclass
class SolverState2D:
    grid: SphereGrid
    lmax: int
    nu: float
    dt: float
    omega: np.ndarray
    forcing: DualForcing | None = None
    t: float = 0.0
    steps: int = 0
    prev_advection: np.ndarray | None = None
    prev_dt: float | None = None
    ledger: EnergyLedger2D = field(default_factory=EnergyLedger2D)
    scheme: str = "CN/AB2 (first step CN/forward Euler)"
    courant_limit: float = 1.0
    _forcing_curl: np.ndarray | None = None

    @property
    def psi(self) -> np.ndarray:
        return streamfunction_coeffs(self.omega)

    def velocity(self) -> np.ndarray:
        return velocity(self.grid, self.omega)


def _forcing_curl(state: SolverState2D) -> np.ndarray | None:
    if state.forcing is None:
        return None
    if state._forcing_curl is None:
        c = analysis(state.grid, surface_curl(state.grid, state.forcing.riesz), state.lmax)
        c = enforce_real(c)
        c[0] = 0.0
        state._forcing_curl = c
    return state._forcing_curl


def _record(state: SolverState2D) -> None:
    g = state.grid
    v = state.velocity()
    power = 0.0
    if state.forcing is not None:
        power = state.forcing.scale(state.t) * inner_sphere(g, state.forcing.riesz, v)
    mom = np.array([inner_sphere(g, v, r) for r in rotation_basis(g.xyz)])
    state.ledger.record(
        state.t,
        spectral_energy(state.omega),
        spectral_strain_norm2(state.omega),
        power,
        spectral_h1_norm2(state.omega),
        mom,
    )


def init_from_vorticity(
    grid: SphereGrid,
    omega: np.ndarray,
    nu: float,
    dt: float,
    forcing: DualForcing | None = None,
    lmax: int | None = None,
) -> SolverState2D:
    if not nu > 0:
        raise InvalidParameter("viscosity must be positive")
    if not dt > 0:
        raise InvalidParameter("time step must be positive")
    L = grid.lmax if lmax is None else int(lmax)
    om = enforce_real(resize_coeffs(np.asarray(omega, dtype=complex), L))
    om[0] = 0.0
    state = SolverState2D(grid, L, float(nu), float(dt), om, forcing)
    _record(state)
    return state


def init_sphere_solver(
    v0: np.ndarray,
    nu: float,
    f: DualForcing | None,
    dt: float,
    lmax: int | None = None,
    grid: SphereGrid | None = None,
    div_tol: float = 1e-9,
) -> SolverState2D:
    """Set up the solver from a nodal tangent field; a non-solenoidal field is projected."""
    if grid is None:
        if lmax is None:
            raise InvalidParameter("need a grid or lmax")
        grid = make_sphere_grid(lmax)
    if not nu > 0:
        raise InvalidParameter("viscosity must be positive")
    if not dt > 0:
        raise InvalidParameter("time step must be positive")
    v0 = np.asarray(v0, dtype=float)
    div = l2_sphere(grid, surface_divergence(grid, v0))
    if div > div_tol * max(l2_sphere(grid, v0), 1.0):
        warnings.warn("initial field is not divergence free; projecting", RuntimeWarning, stacklevel=2)
        v0 = leray_project_sphere(grid, v0)
    L = grid.lmax if lmax is None else int(lmax)
    omega = analysis(grid, surface_curl(grid, v0), L)
    return init_from_vorticity(grid, omega, nu, dt, f, L)


def _advection(state: SolverState2D) -> tuple[np.ndarray, float]:
    g = state.grid
    v = np.cross(g.xyz, gradient_from_coeffs(g, state.psi), axis=0)
    grad_w = gradient_from_coeffs(g, state.omega)
    adv = np.einsum("i...,i...->...", v, grad_w)
    c = enforce_real(analysis(g, adv, state.lmax))
    c[0] = 0.0
    speed = float(np.max(np.sqrt(np.sum(v**2, axis=0))))
    return c, speed


def courant_number(state: SolverState2D, speed: float | None = None) -> float:
    if speed is None:
        v = state.velocity()
        speed = float(np.max(np.sqrt(np.sum(v**2, axis=0))))
    return state.dt * speed * state.lmax


def step(state: SolverState2D) -> SolverState2D:
    """Advance one step in place and return the state."""
    adv, speed = _advection(state)
    cfl = state.dt * speed * state.lmax
    if cfl > state.courant_limit:
        raise StepRejected(f"Courant number {cfl:.3g} exceeds {state.courant_limit} at t={state.t:.6g}")
    dt, nu = state.dt, state.nu
    rate = nu * (2.0 - _lam(state.lmax))
    if state.prev_advection is None:
        explicit = -adv
    else:
        # variable-step Adams-Bashforth extrapolation to the midpoint
        ratio = dt / state.prev_dt
        explicit = -((1.0 + 0.5 * ratio) * adv - 0.5 * ratio * state.prev_advection)
    fc = _forcing_curl(state)
    if fc is not None:
        explicit = explicit + state.forcing.scale(state.t + 0.5 * dt) * fc
    new = ((1.0 + 0.5 * dt * rate) * state.omega + dt * explicit) / (1.0 - 0.5 * dt * rate)
    new = enforce_real(new)
    new[0] = 0.0
    state.prev_advection = adv
    state.prev_dt = dt
    state.omega = new
    state.t = state.t + dt
    state.steps += 1
    _record(state)
    return state


@dataclass
class Trajectory2D:
    grid: SphereGrid
    times: np.ndarray
    omega: np.ndarray  # (ntimes, L+1, 2L+1)
    nu: float
    forcing: DualForcing | None = None

    def velocity(self, i: int) -> np.ndarray:
        return velocity(self.grid, self.omega[i])


def run(state: SolverState2D, t_final: float, sample_every: int = 1) -> Trajectory2D:
    """Step until ``t_final`` (the last step is shortened to land on it)."""
    times = [state.t]
    omegas = [state.omega.copy()]
    nominal = state.dt
    while state.t < t_final - 1e-12 * max(1.0, t_final):
        remaining = t_final - state.t
        if remaining < nominal * (1 - 1e-9):
            state.dt = remaining
        step(state)
        if state.steps % sample_every == 0 or state.t >= t_final - 1e-12 * max(1.0, t_final):
            times.append(state.t)
            omegas.append(state.omega.copy())
    state.dt = nominal
    return Trajectory2D(state.grid, np.array(times), np.array(omegas), state.nu, state.forcing)


def run_to_times(state: SolverState2D, times) -> Trajectory2D:
    """Step through the given increasing sample times, using each gap as one step."""
    times = np.asarray(times, dtype=float)
    if times.size == 0 or abs(times[0] - state.t) > 1e-12 * max(1.0, abs(times[0])):
        raise InvalidParameter("sample times must start at the current state time")
    nominal = state.dt
    omegas = [state.omega.copy()]
    for t_next in times[1:]:
        state.dt = float(t_next - state.t)
        if not state.dt > 0:
            raise InvalidParameter("sample times must be strictly increasing")
        step(state)
        omegas.append(state.omega.copy())
    state.dt = nominal
    return Trajectory2D(state.grid, times.copy(), np.array(omegas), state.nu, state.forcing)


def energy_report(state: SolverState2D, f_dual_norm2_integral: float = 0.0) -> dict:
    """Energy-equality residual, momenta drift and the global bound quantity E0."""
    if len(state.ledger.times) < 2:
        raise InvalidParameter("take at least one step before asking for a report")
    led = state.ledger
    res = led.residual(state.nu)
    mom = np.asarray(led.momenta)
    e0 = led.energy[0] + f_dual_norm2_integral / state.nu
    return {
        "t": state.t,
        "energy": led.energy[-1],
        "energy_initial": led.energy[0],
        "residual": float(res[-1]),
        "max_abs_residual": float(np.max(np.abs(res))),
        "momenta": mom[-1].tolist(),
        "momentum_drift": float(np.max(np.abs(mom - mom[0]))),
        "E0": e0,
        "global_quantity": float(led.energy[-1] + state.nu * led.h1_integral[-1]),
        "max_global_quantity": float(np.max(np.asarray(led.energy) + state.nu * np.asarray(led.h1_integral))),
    }
