"""Navier-Stokes in the thin shell 1 < |x| < 1 + eps with perfect-slip walls.

Velocity is written with two scalar potentials per harmonic (l, m):

    u = (L P / r) Y n + (1/r) d_r(r P) grad_S Y - T n x grad_S Y,   L = l(l+1),

which is divergence free for any radial profiles P, T. The walls require
u . n = 0 and a stress-free tangential traction; for these profiles that is

    toroidal:  r T' - T = 0,         poloidal:  P = 0 and P'' = 0

at r = 1 and r = 1 + eps. Each profile is expanded in Chebyshev polynomials
of the mapped coordinate x in [-1, 1]; the wall rows are imposed exactly by
working in the null space of the constraint matrix. The Galerkin form uses
the mass matrix of (u, phi) and the stiffness 2 nu (D u, D phi), both reduced
to one-dimensional radial integrals per degree l.

Time stepping is a variable-step second-order backward difference scheme
with explicit second-order extrapolation of the advection and forcing
loads. Stiff radial modes are damped without ringing because the implicit
part is L-stable. An optional geometric ramp of the step size resolves the
fast initial adjustment of data that do not satisfy the wall conditions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy.linalg import eigh, null_space

from .avgext import DualForcing
from .errors import ConfigurationError, DataError, InvalidParameter, StepRejected
from .grid import ShellGrid, SphereGrid, analysis, barycentric_interp_matrix, degree_array, make_shell_grid, synthesis
from .surfcalc import (
    full_gradient_shell,
    gradient_from_coeffs,
    inner_shell,
    projector,
    rotation_basis,
    sym,
    weak_gradient_coeffs,
)

__all__ = [
    "RadialBasis",
    "ShellModel",
    "SolverState3D",
    "EnergyLedger3D",
    "ShellTrajectory",
    "ManufacturedField",
    "build_model",
    "init_shell_solver",
    "init_from_coeffs",
    "step3d",
    "run3d",
    "diagnostics",
    "energy_report3d",
    "manufacture",
    "extension_coeffs",
    "stokes_rates",
    "DualSpace",
    "build_dual_space",
    "manufactured_dual_loads",
    "MIN_NRAD",
]

MIN_NRAD = 8


# ----------------------------------------------------------------------------
# radial bases


def _cheb_table(x: np.ndarray, n: int, deriv: int = 0) -> np.ndarray:
    """Matrix of d^k/dx^k T_j(x) for j < n, shape (len(x), n)."""
    eye = np.eye(n)
    if deriv:
        eye = npcheb.chebder(eye, m=deriv, axis=0)
    return npcheb.chebval(np.atleast_1d(x), eye).T


@dataclass(frozen=True, eq=False)
class RadialBasis:
    """Profiles on [1, 1 + eps] given by Chebyshev coefficients ``coef[:, j]``."""

    kind: str
    eps: float
    nrad: int
    coef: np.ndarray

    @property
    def size(self) -> int:
        return self.coef.shape[1]

    def x_of_r(self, r: np.ndarray) -> np.ndarray:
        return 2.0 * (np.asarray(r, dtype=float) - 1.0) / self.eps - 1.0

    def evaluate(self, r: np.ndarray, deriv: int = 0) -> np.ndarray:
        """Values (or r-derivatives) at radii ``r``; shape (len(r), size)."""
        return _cheb_table(self.x_of_r(r), self.nrad, deriv) @ self.coef * (2.0 / self.eps) ** deriv

    @classmethod
    def build(cls, kind: str, eps: float, nrad: int, walls: str = "slip") -> "RadialBasis":
        """``walls='slip'`` imposes the full perfect-slip rows; ``walls='normal'``
        imposes only the impermeability row (none for toroidal profiles)."""
        ends = np.array([-1.0, 1.0])
        r_ends = 1.0 + 0.5 * eps * (ends + 1.0)
        v0 = _cheb_table(ends, nrad, 0)
        v1 = _cheb_table(ends, nrad, 1) * (2.0 / eps)
        v2 = _cheb_table(ends, nrad, 2) * (2.0 / eps) ** 2
        if kind == "toroidal":
            rows = r_ends[:, None] * v1 - v0 if walls == "slip" else np.zeros((0, nrad))
        elif kind == "poloidal":
            rows = np.vstack([v0, v2]) if walls == "slip" else v0
        else:
            raise InvalidParameter(f"unknown profile kind {kind!r}")
        coef = null_space(rows) if rows.size else np.eye(nrad)
        if coef.shape[1] == 0:
            raise ConfigurationError("radial resolution too small for the wall conditions")
        return cls(kind, float(eps), int(nrad), coef)


def _toroidal_forms(a0, a1, b0, b1, w, r, ends_a, ends_b, r_ends, lam):
    """Mass and 2(D u, D phi) blocks for toroidal profile sets a (rows) and b (columns).

    Tables hold values and first derivatives at Gauss radii; ``ends_*`` hold
    values at the two walls.
    """
    mass = lam * (a0.T * (w * r**2)) @ b0
    grad = lam * ((a1.T * (w * r**2)) @ b1 + lam * (a0.T * w) @ b0)
    wall = lam * (r_ends[1] * np.outer(ends_a[1], ends_b[1]) - r_ends[0] * np.outer(ends_a[0], ends_b[0]))
    return mass, grad - wall, grad


def _poloidal_forms(a0, a1, a2, b0, b1, b2, w, r, d_ends_a, d_ends_b, r_ends, lam):
    """Same for poloidal profiles, which vanish at both walls."""
    sa = a0 / r[:, None] + a1
    sb = b0 / r[:, None] + b1
    mass = lam * ((sa.T * (w * r**2)) @ sb + lam * (a0.T * w) @ b0)
    la = a2 + 2.0 * a1 / r[:, None] - lam * a0 / r[:, None] ** 2
    lb = b2 + 2.0 * b1 / r[:, None] - lam * b0 / r[:, None] ** 2
    curl2 = lam * (la.T * (w * r**2)) @ lb
    wall = lam * (r_ends[1] * np.outer(d_ends_a[1], d_ends_b[1]) - r_ends[0] * np.outer(d_ends_a[0], d_ends_b[0]))
    # |grad u|^2 = |curl u|^2 - wall term; 2|D u|^2 = |grad u|^2 - wall term
    return mass, curl2 - 2.0 * wall, curl2 - wall


@dataclass(eq=False)
class ShellModel:
    """Discretisation of one shell: bases, per-degree matrices and quadrature tables."""

    grid: SphereGrid
    lmax: int
    eps: float
    nrad: int
    nu: float
    tor: RadialBasis
    pol: RadialBasis
    qshell: ShellGrid
    mass_t: np.ndarray
    stiff_t: np.ndarray
    mass_p: np.ndarray
    stiff_p: np.ndarray
    eig_t: tuple
    eig_p: tuple
    tables: dict

    @property
    def nbt(self) -> int:
        return self.tor.size

    @property
    def nbp(self) -> int:
        return self.pol.size

    @cached_property
    def lam(self) -> np.ndarray:
        l = degree_array(self.lmax).astype(float)
        return l * (l + 1.0)  # (L+1, 1)

    @cached_property
    def mode_mask(self) -> np.ndarray:
        l = degree_array(self.lmax)
        m = np.arange(-self.lmax, self.lmax + 1)[None, :]
        return (np.abs(m) <= l) & (l >= 1)

    @cached_property
    def min_spacing(self) -> float:
        x = np.cos(np.pi * np.arange(self.nrad) / (self.nrad - 1))
        return float(0.5 * self.eps * np.min(np.abs(np.diff(x))))

    @cached_property
    def rigid_profile(self) -> np.ndarray:
        """Toroidal basis coefficients of the profile T(r) = r."""
        t = self.tables["t0"]
        b, *_ = np.linalg.lstsq(t, self.qshell.rnodes, rcond=None)
        return b

    def zeros(self) -> tuple[np.ndarray, np.ndarray]:
        L = self.lmax
        return (
            np.zeros((L + 1, 2 * L + 1, self.nbt), complex),
            np.zeros((L + 1, 2 * L + 1, self.nbp), complex),
        )


def _quad_radii(eps: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 1.0 + 0.5 * eps * (x + 1.0), 0.5 * eps * w


def build_model(
    grid: SphereGrid,
    eps: float,
    nrad: int,
    nu: float,
    lmax: int | None = None,
    nquad: int | None = None,
) -> ShellModel:
    """Assemble the shell discretisation.

    ``grid`` is the angular grid for nonlinear products; ``lmax`` (default
    ``grid.lmax - 1``) is the highest degree kept in the solution, leaving
    room for exact quadrature of the triple products.
    """
    if not nu > 0:
        raise InvalidParameter("viscosity must be positive")
    if not 0.0 < eps < 1.0:
        raise InvalidParameter("eps must lie in (0, 1)")
    if nrad < MIN_NRAD:
        raise ConfigurationError(f"nrad must be at least {MIN_NRAD} for the slip-wall rows to stay well posed")
    L = grid.lmax - 1 if lmax is None else int(lmax)
    if L < 1 or L > grid.lspec - 1:
        raise InvalidParameter(f"solution degree {L} does not fit the angular grid")
    tor = RadialBasis.build("toroidal", eps, nrad)
    pol = RadialBasis.build("poloidal", eps, nrad)
    rm, wm = _quad_radii(eps, nrad + 8)
    r_ends = np.array([1.0, 1.0 + eps])
    t0, t1 = tor.evaluate(rm), tor.evaluate(rm, 1)
    p0, p1, p2 = pol.evaluate(rm), pol.evaluate(rm, 1), pol.evaluate(rm, 2)
    te, pe1 = tor.evaluate(r_ends), pol.evaluate(r_ends, 1)
    nt, npl = tor.size, pol.size
    mass_t = np.zeros((L + 1, nt, nt))
    stiff_t = np.zeros((L + 1, nt, nt))
    mass_p = np.zeros((L + 1, npl, npl))
    stiff_p = np.zeros((L + 1, npl, npl))
    vals_t = np.zeros((L + 1, nt))
    vecs_t = np.zeros((L + 1, nt, nt))
    vals_p = np.zeros((L + 1, npl))
    vecs_p = np.zeros((L + 1, npl, npl))
    for l in range(1, L + 1):
        lam = l * (l + 1.0)
        mt, kt, _ = _toroidal_forms(t0, t1, t0, t1, wm, rm, te, te, r_ends, lam)
        mp, kp, _ = _poloidal_forms(p0, p1, p2, p0, p1, p2, wm, rm, pe1, pe1, r_ends, lam)
        mass_t[l], stiff_t[l] = mt, nu * 0.5 * (kt + kt.T)
        mass_p[l], stiff_p[l] = mp, nu * 0.5 * (kp + kp.T)
        vals_t[l], vecs_t[l] = eigh(stiff_t[l], mass_t[l])
        vals_p[l], vecs_p[l] = eigh(stiff_p[l], mass_p[l])
    # the rigid rotation profile lies in the kernel; clear round-off there
    nq = nquad if nquad is not None else int(np.ceil(1.5 * nrad)) + 2
    qshell = make_shell_grid(grid, eps, nq, nodes="gauss")
    rq = qshell.rnodes
    tables = {
        "t0": tor.evaluate(rq),
        "t1": tor.evaluate(rq, 1),
        "p0": pol.evaluate(rq),
        "p1": pol.evaluate(rq, 1),
        "p2": pol.evaluate(rq, 2),
        "wall_t0": te,
        "wall_t1": tor.evaluate(r_ends, 1),
        "wall_p0": pol.evaluate(r_ends),
        "wall_p1": pe1,
        "wall_p2": pol.evaluate(r_ends, 2),
    }
    return ShellModel(
        grid, L, float(eps), int(nrad), float(nu), tor, pol, qshell,
        mass_t, stiff_t, mass_p, stiff_p, (vals_t, vecs_t), (vals_p, vecs_p), tables,
    )


# ----------------------------------------------------------------------------
# fields from coefficients and loads from fields


def _profiles(model: ShellModel, ct: np.ndarray, cp: np.ndarray, t_tabs, p_tabs):
    """Radial profile values per harmonic: T, T', P, P', P'' at the tabulated radii."""
    T = np.einsum("rk,lmk->rlm", t_tabs[0], ct)
    dT = np.einsum("rk,lmk->rlm", t_tabs[1], ct)
    P = np.einsum("rk,lmk->rlm", p_tabs[0], cp)
    dP = np.einsum("rk,lmk->rlm", p_tabs[1], cp)
    d2P = np.einsum("rk,lmk->rlm", p_tabs[2], cp)
    return T, dT, P, dP, d2P


def _assemble(grid: SphereGrid, r: np.ndarray, lam: np.ndarray, T, P, S):
    n = grid.xyz[:, None]
    ur = synthesis(grid, lam * P / r[:, None, None])
    gs = gradient_from_coeffs(grid, S)
    gt = gradient_from_coeffs(grid, T)
    return n * ur[None] + gs - np.cross(np.broadcast_to(n, gt.shape), gt, axis=0)


def evaluate_velocity(model: ShellModel, ct: np.ndarray, cp: np.ndarray, where: str = "quad", with_derivative: bool = True):
    """Nodal velocity (3, nr, nlat, nlon) and its radial derivative.

    ``where='quad'`` uses the Gauss radii of ``model.qshell``; ``'walls'``
    evaluates at r = 1 and r = 1 + eps.
    """
    tb = model.tables
    if where == "quad":
        r = model.qshell.rnodes
        t_tabs = (tb["t0"], tb["t1"])
        p_tabs = (tb["p0"], tb["p1"], tb["p2"])
    elif where == "walls":
        r = np.array([1.0, 1.0 + model.eps])
        t_tabs = (tb["wall_t0"], tb["wall_t1"])
        p_tabs = (tb["wall_p0"], tb["wall_p1"], tb["wall_p2"])
    else:
        raise InvalidParameter(where)
    T, dT, P, dP, d2P = _profiles(model, ct, cp, t_tabs, p_tabs)
    rr = r[:, None, None]
    lam = model.lam
    u = _assemble(model.grid, r, lam, T, P, P / rr + dP)
    if not with_derivative:
        return u, None
    dPr = dP / rr - P / rr**2  # d/dr (P / r)
    n = model.grid.xyz[:, None]
    dur = synthesis(model.grid, lam * dPr)
    gs = gradient_from_coeffs(model.grid, dPr + d2P)
    gt = gradient_from_coeffs(model.grid, dT)
    dudr = n * dur[None] + gs - np.cross(np.broadcast_to(n, gt.shape), gt, axis=0)
    return u, dudr


def project_loads(model: ShellModel, F: np.ndarray, t_tabs=None, p_tabs=None) -> tuple[np.ndarray, np.ndarray]:
    """Galerkin loads (F, phi) of a nodal volume field on ``model.qshell``.

    Optional tables let the same projection run against other radial bases.
    """
    g = model.grid
    L = model.lmax
    tb = model.tables
    t0 = tb["t0"] if t_tabs is None else t_tabs[0]
    p0, p1 = (tb["p0"], tb["p1"]) if p_tabs is None else (p_tabs[0], p_tabs[1])
    r = model.qshell.rnodes
    w = model.qshell.rweights * r**2
    n = g.xyz[:, None]
    Fr = np.einsum("i...,i...->...", n, F)
    a_r = analysis(g, Fr, L)  # (nr, L+1, 2L+1)
    a_h = weak_gradient_coeffs(g, F, L)
    a_t = weak_gradient_coeffs(g, np.cross(np.broadcast_to(n, F.shape), F, axis=0), L)
    lam = model.lam
    gt = np.einsum("r,rk,rlm->lmk", w, t0, a_t)
    gp = np.einsum("r,rk,rlm->lmk", w / r, p0, lam * a_r) + np.einsum("r,rk,rlm->lmk", w, p0 / r[:, None] + p1, a_h)
    mask = model.mode_mask[..., None]
    return np.where(mask, gt, 0.0), np.where(mask, gp, 0.0)


def advection(u: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """(u . grad) u from the gradient layout G[i, j] = d_i u_j."""
    return np.einsum("i...,ij...->j...", u, grad)


# ----------------------------------------------------------------------------
# state and ledger


@dataclass
class EnergyLedger3D:
    """Energy inequality bookkeeping.

    Dissipation uses the right-endpoint rule (one-sided, so the discrete
    ledger cannot manufacture a violation from quadrature alone); forcing
    work uses the trapezoid rule.
    """

    times: list[float] = field(default_factory=list)
    energy: list[float] = field(default_factory=list)  # ||u||^2
    dissipation: list[float] = field(default_factory=list)  # int 2 nu ||D u||^2
    work: list[float] = field(default_factory=list)  # int <f, u>
    momenta: list[np.ndarray] = field(default_factory=list)
    max_divergence: float = 0.0
    max_normal_trace: float = 0.0
    max_tangential_stress: float = 0.0
    _power: float = 0.0

    def slack(self) -> np.ndarray:
        """RHS minus LHS of the energy inequality at each recorded time."""
        e = np.asarray(self.energy)
        return 0.5 * e[0] + np.asarray(self.work) - 0.5 * e - np.asarray(self.dissipation)


@dataclass
class SolverState3D:
    model: ShellModel
    dt: float
    at: np.ndarray  # toroidal coefficients in the eigenbasis of each degree
    ap: np.ndarray
    forcing: DualForcing | None = None
    t: float = 0.0
    steps: int = 0
    next_dt: float | None = None
    ramp_factor: float = 1.15
    prev: tuple | None = None  # (at, ap, gt, gp, h) from the previous step
    ledger: EnergyLedger3D = field(default_factory=EnergyLedger3D)
    advect: bool = True
    courant_limit: float = 1.0
    check_walls: bool = True
    bc_tags: tuple = ("perfect_slip", "perfect_slip")
    scheme: str = "variable-step BDF2 implicit viscous / extrapolated explicit advection"
    meta: dict = field(default_factory=dict)

    @property
    def eps(self) -> float:
        return self.model.eps

    @property
    def nu(self) -> float:
        return self.model.nu

    @property
    def ct(self) -> np.ndarray:
        return np.einsum("lij,lmj->lmi", self.model.eig_t[1], self.at)

    @property
    def cp(self) -> np.ndarray:
        return np.einsum("lij,lmj->lmi", self.model.eig_p[1], self.ap)

    def velocity(self, where: str = "quad", with_derivative: bool = True):
        return evaluate_velocity(self.model, self.ct, self.cp, where, with_derivative)


def _to_eigen(model: ShellModel, ct: np.ndarray, cp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Coordinates a = V^T M c in which mass is the identity and stiffness is diagonal."""
    at = np.einsum("lji,ljk,lmk->lmi", model.eig_t[1], model.mass_t, ct)
    ap = np.einsum("lji,ljk,lmk->lmi", model.eig_p[1], model.mass_p, cp)
    return at, ap


def _loads_eigen(model: ShellModel, gt: np.ndarray, gp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (
        np.einsum("lji,lmj->lmi", model.eig_t[1], gt),
        np.einsum("lji,lmj->lmi", model.eig_p[1], gp),
    )


def _solve_mass(model: ShellModel, gt: np.ndarray, gp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """c = M^{-1} g degree by degree."""
    ct, cp = model.zeros()
    for l in range(1, model.lmax + 1):
        ct[l] = np.linalg.solve(model.mass_t[l], gt[l].T).T
        cp[l] = np.linalg.solve(model.mass_p[l], gp[l].T).T
    return np.where(model.mode_mask[..., None], ct, 0), np.where(model.mode_mask[..., None], cp, 0)


def _energy(state: SolverState3D) -> tuple[float, float]:
    m = state.model
    e = float(np.sum(np.abs(state.at) ** 2) + np.sum(np.abs(state.ap) ** 2))
    d = float(
        np.sum(m.eig_t[0][:, None, :] * np.abs(state.at) ** 2) + np.sum(m.eig_p[0][:, None, :] * np.abs(state.ap) ** 2)
    )
    return e, d


def _forcing_field(state: SolverState3D, t: float) -> np.ndarray | None:
    f = state.forcing
    if f is None:
        return None
    if f.mode == "sphere":
        raise InvalidParameter("the shell solver needs an extended (constant or weighted) forcing")
    return f.volume_riesz(state.model.qshell, t)


def _explicit(state: SolverState3D):
    """Explicit loads at the current time, the nodal velocity and the Courant number."""
    m = state.model
    u, dudr = state.velocity()
    F = np.zeros_like(u)
    if state.advect:
        G = full_gradient_shell(m.qshell, u, dudr)
        F -= advection(u, G)
    force = _forcing_field(state, state.t)
    power = 0.0
    if force is not None:
        F += force
        power = inner_shell(m.qshell, force, u)
    gt, gp = project_loads(m, F)
    gt, gp = _loads_eigen(m, gt, gp)
    ur = np.einsum("i...,i...->...", m.grid.xyz[:, None], u)
    uh = np.sqrt(np.maximum(np.sum(u * u, axis=0) - ur**2, 0.0))
    speed = np.max(uh / m.qshell.rnodes[:, None, None]) * m.lmax + np.max(np.abs(ur)) / m.min_spacing
    return gt, gp, u, float(speed), power


def _wall_defects(state: SolverState3D) -> tuple[float, float]:
    """Largest |u . n| and |P D(u) n| over both wall spheres."""
    m = state.model
    u, dudr = state.velocity("walls")
    grid = m.grid
    n = grid.xyz[:, None]
    normal = float(np.max(np.abs(np.einsum("i...,i...->...", n, u))))
    walls = make_shell_grid(grid, m.eps, 2, nodes="lobatto")
    D = sym(full_gradient_shell(walls, u, dudr))
    Dn = np.einsum("ij...,j...->i...", D, np.broadcast_to(n, u.shape))
    P = projector(grid)[:, :, None]
    tang = np.einsum("ij...,j...->i...", P, Dn)
    stress = float(np.max(np.sqrt(np.sum(tang**2, axis=0))))
    return normal, stress


def _record(state: SolverState3D, u: np.ndarray | None = None, power: float | None = None) -> None:
    m = state.model
    led = state.ledger
    if u is None:
        u, _ = state.velocity(with_derivative=False)
    if power is None:
        force = _forcing_field(state, state.t)
        power = 0.0 if force is None else inner_shell(m.qshell, force, u)
    e, d = _energy(state)
    mom = np.array([inner_shell(m.qshell, u, r) for r in rotation_basis(m.qshell.xyz)])
    if not led.times:
        led.times.append(state.t)
        led.energy.append(e)
        led.dissipation.append(0.0)
        led.work.append(0.0)
    else:
        h = state.t - led.times[-1]
        led.times.append(state.t)
        led.energy.append(e)
        led.dissipation.append(led.dissipation[-1] + h * d)
        led.work.append(led.work[-1] + 0.5 * h * (led._power + power))
    led._power = power
    led.momenta.append(mom)
    if state.check_walls:
        uu, dudr = state.velocity()
        div = np.einsum("ii...->...", full_gradient_shell(m.qshell, uu, dudr))
        led.max_divergence = max(led.max_divergence, float(np.max(np.abs(div))))
        normal, stress = _wall_defects(state)
        led.max_normal_trace = max(led.max_normal_trace, normal)
        led.max_tangential_stress = max(led.max_tangential_stress, stress)


def init_from_coeffs(
    model: ShellModel,
    ct: np.ndarray,
    cp: np.ndarray,
    dt: float,
    forcing: DualForcing | None = None,
    ramp: bool = False,
    advect: bool = True,
    check_walls: bool = True,
) -> SolverState3D:
    if not dt > 0:
        raise InvalidParameter("time step must be positive")
    at, ap = _to_eigen(model, ct, cp)
    state = SolverState3D(model, float(dt), at, ap, forcing, advect=advect, check_walls=check_walls)
    if ramp:
        state.next_dt = min(dt, 1e-3 * model.eps**2 / model.nu)
    _record(state)
    return state


def _radial_resample(src: ShellGrid, dst_r: np.ndarray, u: np.ndarray) -> np.ndarray:
    x_new = 2.0 * (dst_r - 1.0) / src.eps - 1.0
    A = barycentric_interp_matrix(src.xref, x_new)
    return np.moveaxis(np.tensordot(A, u, axes=([1], [u.ndim - 3])), 0, -3)


def init_shell_solver(
    u0: np.ndarray,
    nu: float,
    forcing: DualForcing | None,
    dt: float,
    shell: ShellGrid,
    lmax: int | None = None,
    model: ShellModel | None = None,
    ramp: bool = False,
    advect: bool = True,
    normal_tol: float = 1e-8,
) -> SolverState3D:
    """Project nodal data on ``shell`` onto the discrete solenoidal slip space.

    The radial polynomial through the nodal values is sampled at the
    solver's quadrature radii; a normal trace at the walls that does not
    vanish means the data cannot belong to the slip space.
    """
    if not nu > 0:
        raise InvalidParameter("viscosity must be positive")
    if not dt > 0:
        raise InvalidParameter("time step must be positive")
    if model is None:
        model = build_model(shell.base, shell.eps, max(shell.nrad, MIN_NRAD), nu, lmax)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (3,) + shell.shape:
        raise DataError(f"initial field has shape {u0.shape}, expected {(3,) + shell.shape}")
    if not np.all(np.isfinite(u0)):
        raise DataError("initial field has non-finite values")
    walls = _radial_resample(shell, np.array([1.0, 1.0 + shell.eps]), u0)
    trace = np.einsum("i...,i...->...", shell.base.xyz[:, None], walls)
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    if np.max(np.abs(trace)) > normal_tol * scale:
        raise DataError(f"normal trace {np.max(np.abs(trace)):.3g} at the walls; data cannot be made slip compatible")
    uq = _radial_resample(shell, model.qshell.rnodes, u0)
    gt, gp = project_loads(model, uq)
    ct, cp = _solve_mass(model, gt, gp)
    state = init_from_coeffs(model, ct, cp, dt, forcing, ramp, advect)
    uh, _ = state.velocity(with_derivative=False)
    state.meta["projection_defect"] = float(np.sqrt(inner_shell(model.qshell, uq - uh, uq - uh)))
    return state


def step3d(state: SolverState3D) -> SolverState3D:
    """One step of the IMEX scheme; the first step is IMEX Euler."""
    m = state.model
    h = state.dt if state.next_dt is None else min(state.next_dt, state.dt)
    gt, gp, u, speed, power = _explicit(state)
    if state.advect and h * speed > state.courant_limit:
        raise StepRejected(f"Courant number {h * speed:.3g} exceeds {state.courant_limit} at t={state.t:.6g}")
    mu_t = m.eig_t[0][:, None, :]
    mu_p = m.eig_p[0][:, None, :]
    if state.prev is None:
        new_t = (state.at + h * gt) / (1.0 + h * mu_t)
        new_p = (state.ap + h * gp) / (1.0 + h * mu_p)
    else:
        at0, ap0, gt0, gp0, h0 = state.prev
        w = h / h0
        a0 = (1.0 + 2.0 * w) / (1.0 + w)
        a1 = 1.0 + w
        a2 = w * w / (1.0 + w)
        new_t = (a1 * state.at - a2 * at0 + h * ((1.0 + w) * gt - w * gt0)) / (a0 + h * mu_t)
        new_p = (a1 * state.ap - a2 * ap0 + h * ((1.0 + w) * gp - w * gp0)) / (a0 + h * mu_p)
    state.prev = (state.at, state.ap, gt, gp, h)
    mask = m.mode_mask[..., None]
    state.at = np.where(mask, new_t, 0.0)
    state.ap = np.where(mask, new_p, 0.0)
    state.t += h
    state.steps += 1
    if state.next_dt is not None:
        state.next_dt = h * state.ramp_factor
        if state.next_dt >= state.dt:
            state.next_dt = None
    _record(state)
    return state


@dataclass
class ShellTrajectory:
    model: ShellModel
    times: np.ndarray
    ct: np.ndarray  # (nt, L+1, 2L+1, nbt)
    cp: np.ndarray
    forcing: DualForcing | None = None

    @property
    def qshell(self) -> ShellGrid:
        return self.model.qshell

    def velocity(self, i: int, with_derivative: bool = True):
        return evaluate_velocity(self.model, self.ct[i], self.cp[i], "quad", with_derivative)


def run3d(state: SolverState3D, t_final: float) -> ShellTrajectory:
    """Advance to ``t_final`` keeping every step."""
    times = [state.t]
    cts = [state.ct]
    cps = [state.cp]
    tol = 1e-12 * max(1.0, t_final)
    nominal = state.dt
    while state.t < t_final - tol:
        h = state.dt if state.next_dt is None else min(state.next_dt, state.dt)
        if state.t + h > t_final - tol:
            state.dt = t_final - state.t
            if state.next_dt is not None:
                state.next_dt = min(state.next_dt, state.dt)
        step3d(state)
        times.append(state.t)
        cts.append(state.ct)
        cps.append(state.cp)
    state.dt = nominal
    return ShellTrajectory(state.model, np.array(times), np.array(cts), np.array(cps), state.forcing)


def diagnostics(state: SolverState3D) -> dict:
    """Divergence, wall conditions and nonlinear energy transfer at the current state."""
    m = state.model
    u, dudr = state.velocity()
    G = full_gradient_shell(m.qshell, u, dudr)
    div = np.einsum("ii...->...", G)
    norm = np.sqrt(inner_shell(m.qshell, u, u))
    normal, stress = _wall_defects(state)
    transfer = inner_shell(m.qshell, advection(u, G), u)
    return {
        "t": state.t,
        "l2": float(norm),
        "divergence_l2": float(np.sqrt(inner_shell(m.qshell, div, div))),
        "normal_trace_max": normal,
        "tangential_stress_max": stress,
        "advection_energy": float(transfer),
    }


def energy_report3d(state: SolverState3D) -> dict:
    led = state.ledger
    if len(led.times) < 2:
        raise InvalidParameter("take at least one step before asking for a report")
    slack = led.slack()
    mom = np.asarray(led.momenta)
    e0 = led.energy[0]
    return {
        "t": state.t,
        "energy": led.energy[-1],
        "energy_initial": e0,
        "min_slack": float(np.min(slack)),
        "min_relative_slack": float(np.min(slack) / e0) if e0 > 0 else float(np.min(slack)),
        "momentum_drift": float(np.max(np.abs(mom - mom[0]))),
        "momenta": mom[-1].tolist(),
        "max_divergence": led.max_divergence,
        "max_normal_trace": led.max_normal_trace,
        "max_tangential_stress": led.max_tangential_stress,
        "steps": state.steps,
    }


def stokes_rates(model: ShellModel, l: int, kind: str = "toroidal") -> np.ndarray:
    """Decay rates of the linear viscous problem for degree l, ascending."""
    vals = model.eig_t[0] if kind == "toroidal" else model.eig_p[0]
    return np.sort(vals[l])


# ----------------------------------------------------------------------------
# weighted extension as a shell field


def extension_coeffs(model: ShellModel, omega: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Toroidal/poloidal coefficients of v_E for the sphere field with vorticity ``omega``.

    v = n x grad_S psi extends to r v(y), the toroidal field with profile
    T(r) = -r psi_lm; no poloidal part appears.
    """
    L = model.lmax
    lin = omega.shape[-2] - 1
    if lin > L:
        raise InvalidParameter(f"sphere field degree {lin} exceeds shell model degree {L}")
    l = degree_array(lin).astype(float)
    lam = l * (l + 1.0)
    psi = np.zeros_like(omega)
    psi[1:] = -omega[1:] / lam[1:]
    ct, cp = model.zeros()
    ct[: lin + 1, L - lin : L + lin + 1] = -psi[..., None] * model.rigid_profile
    return ct, cp


@dataclass
class ManufacturedField:
    """v_E together with the forcing functional that makes it an exact discrete solution.

    ``load_t``/``load_p`` hold the Galerkin forcing (f, phi) per sample time
    against the solver basis. ``bc_defect`` is the largest tangential wall
    stress of v_E over the samples.
    """

    model: ShellModel
    times: np.ndarray
    ct: np.ndarray
    cp: np.ndarray
    load_t: np.ndarray
    load_p: np.ndarray
    dct: np.ndarray
    bc_defect: float
    normal_defect: float
    meta: dict = field(default_factory=dict)

    def trajectory(self) -> ShellTrajectory:
        return ShellTrajectory(self.model, self.times, self.ct, self.cp)


def manufacture(v_traj, model: ShellModel, min_samples: int = 3) -> ManufacturedField:
    """Extend a sphere trajectory and compute the residual forcing.

    The time derivative of the coefficients uses second-order differences
    on the trajectory samples (one-sided at the ends).
    """
    times = np.asarray(v_traj.times, dtype=float)
    if times.size < min_samples:
        raise DataError(f"need at least {min_samples} time samples, got {times.size}")
    if np.any(np.diff(times) <= 0):
        raise DataError("trajectory times must increase")
    cts, cps = [], []
    for om in v_traj.omega:
        ct, cp = extension_coeffs(model, om)
        cts.append(ct)
        cps.append(cp)
    ct = np.array(cts)
    cp = np.array(cps)
    dct = np.gradient(ct, times, axis=0, edge_order=2)
    load_t = np.empty_like(ct)
    load_p = np.empty_like(cp)
    bc, nt = 0.0, 0.0
    for i in range(times.size):
        u, dudr = evaluate_velocity(model, ct[i], cp[i])
        G = full_gradient_shell(model.qshell, u, dudr)
        nl_t, nl_p = project_loads(model, advection(u, G))
        load_t[i] = np.einsum("lij,lmj->lmi", model.mass_t, dct[i]) + np.einsum("lij,lmj->lmi", model.stiff_t, ct[i]) + nl_t
        load_p[i] = nl_p  # poloidal part of v_E is zero at all times
        probe = SolverState3D(model, 1.0, *_to_eigen(model, ct[i], cp[i]))
        normal, stress = _wall_defects(probe)
        bc, nt = max(bc, stress), max(nt, normal)
    return ManufacturedField(model, times, ct, cp, load_t, load_p, dct, bc, nt)


# ----------------------------------------------------------------------------
# discrete dual norm on the shell


@dataclass(eq=False)
class DualSpace:
    """Solenoidal fields with u . n = 0 on the walls and nothing else imposed.

    Functionals are represented by their loads against this basis; the dual
    norm is sqrt(b^H G^{-1} b) with G the H1 Gram matrix, which is the exact
    dual norm over the span of the basis.
    """

    model: ShellModel
    tor: RadialBasis
    pol: RadialBasis
    t_tabs: tuple
    p_tabs: tuple
    gram_t: np.ndarray
    gram_p: np.ndarray
    cross_mass_t: np.ndarray
    cross_stiff_t: np.ndarray

    def loads(self, F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Loads of a nodal volume field given on ``model.qshell``."""
        return project_loads(self.model, F, self.t_tabs, self.p_tabs)

    def norm(self, bt: np.ndarray, bp: np.ndarray) -> float:
        total = 0.0
        for l in range(1, self.model.lmax + 1):
            if np.any(bt[l]):
                total += float(np.real(np.sum(np.conj(bt[l]) * np.linalg.solve(self.gram_t[l], bt[l].T).T)))
            if np.any(bp[l]):
                total += float(np.real(np.sum(np.conj(bp[l]) * np.linalg.solve(self.gram_p[l], bp[l].T).T)))
        return float(np.sqrt(max(total, 0.0)))

    def field_norm(self, F: np.ndarray) -> float:
        return self.norm(*self.loads(F))


def build_dual_space(model: ShellModel, extra: int = 4) -> DualSpace:
    n = model.nrad + extra
    eps = model.eps
    tor = RadialBasis.build("toroidal", eps, n, walls="normal")
    pol = RadialBasis.build("poloidal", eps, n, walls="normal")
    rm, wm = _quad_radii(eps, n + 8)
    r_ends = np.array([1.0, 1.0 + eps])
    d0, d1 = tor.evaluate(rm), tor.evaluate(rm, 1)
    q0, q1, q2 = pol.evaluate(rm), pol.evaluate(rm, 1), pol.evaluate(rm, 2)
    de, qe1 = tor.evaluate(r_ends), pol.evaluate(r_ends, 1)
    s0, s1 = model.tor.evaluate(rm), model.tor.evaluate(rm, 1)
    se = model.tor.evaluate(r_ends)
    L = model.lmax
    gram_t = np.zeros((L + 1, tor.size, tor.size))
    gram_p = np.zeros((L + 1, pol.size, pol.size))
    cm = np.zeros((L + 1, tor.size, model.nbt))
    ck = np.zeros((L + 1, tor.size, model.nbt))
    for l in range(1, L + 1):
        lam = l * (l + 1.0)
        mt, _, gt = _toroidal_forms(d0, d1, d0, d1, wm, rm, de, de, r_ends, lam)
        mp, _, gp = _poloidal_forms(q0, q1, q2, q0, q1, q2, wm, rm, qe1, qe1, r_ends, lam)
        gram_t[l] = mt + gt
        gram_p[l] = mp + gp
        xm, xk, _ = _toroidal_forms(d0, d1, s0, s1, wm, rm, de, se, r_ends, lam)
        cm[l], ck[l] = xm, model.nu * xk
    rq = model.qshell.rnodes
    return DualSpace(
        model, tor, pol,
        (tor.evaluate(rq), tor.evaluate(rq, 1)),
        (pol.evaluate(rq), pol.evaluate(rq, 1), pol.evaluate(rq, 2)),
        gram_t, gram_p, cm, ck,
    )


def manufactured_dual_loads(mf: ManufacturedField, dual: DualSpace, i: int) -> tuple[np.ndarray, np.ndarray]:
    """Loads of the manufactured forcing at sample ``i`` against the dual basis."""
    model = mf.model
    u, dudr = evaluate_velocity(model, mf.ct[i], mf.cp[i])
    G = full_gradient_shell(model.qshell, u, dudr)
    bt, bp = dual.loads(advection(u, G))
    bt = bt + np.einsum("lij,lmj->lmi", dual.cross_mass_t, mf.dct[i]) + np.einsum("lij,lmj->lmi", dual.cross_stiff_t, mf.ct[i])
    return bt, bp
