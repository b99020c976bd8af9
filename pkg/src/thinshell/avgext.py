"""Radial averages of shell fields and extensions of sphere fields into the shell.

Notation used in names: ``M^k`` is the weighted radial average
``(1/eps) int_1^{1+eps} phi(r y) r^k dr``; ``M_tau^k`` is its tangential part;
``L0`` is the Leray projection on the sphere. The constant extension is
``bar(v)(x) = v(x/|x|)`` and the weighted extension is ``v_E(x) = |x| v(x/|x|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidParameter, InvariantViolation, ShapeError
from .grid import ShellGrid, SphereGrid, make_shell_grid, make_sphere_grid
from .surfcalc import (
    covariant_derivative,
    directional_derivative,
    frob,
    full_gradient_shell,
    inner_shell,
    inner_sphere,
    l2_shell,
    l2_sphere,
    leray_project_sphere,
    projector,
    surface_divergence,
    surface_strain,
    sym,
    tangential_gradient,
    divergence_shell,
)

__all__ = [
    "AverageOp",
    "ExtensionOp",
    "DualForcing",
    "average",
    "average_tangential",
    "leray_average",
    "extend",
    "constant_extension",
    "weighted_extension",
    "extend_forcing",
    "avg_gradient_identity_check",
    "unfold_pairing_check",
    "IdentityResult",
    "identity_suite",
]


@dataclass(frozen=True)
class AverageOp:
    k: int
    shell: ShellGrid

    def __post_init__(self):
        if self.k < 0 or int(self.k) != self.k:
            raise InvalidParameter("average weight exponent must be a nonnegative integer")

    @property
    def eps(self) -> float:
        return self.shell.eps

    @property
    def sphere(self) -> SphereGrid:
        return self.shell.base


@dataclass(frozen=True)
class ExtensionOp:
    mode: str
    shell: ShellGrid

    def __post_init__(self):
        if self.mode not in ("constant", "weighted"):
            raise InvalidParameter(f"unknown extension mode {self.mode!r}")


def _radial_weights(shell: ShellGrid, k: int) -> np.ndarray:
    return shell.rweights * shell.rnodes**k / shell.eps


def average(op: AverageOp, phi: np.ndarray) -> np.ndarray:
    """M^k phi on the sphere nodes; ``phi`` has shape (..., nrad, nlat, nlon)."""
    phi = np.asarray(phi)
    if phi.shape[-3:] != op.shell.shape:
        raise ShapeError(f"field shape {phi.shape} does not match shell grid {op.shell.shape}")
    return np.einsum("...kij,k->...ij", phi, _radial_weights(op.shell, op.k))


def average_tangential(op: AverageOp, u: np.ndarray) -> np.ndarray:
    """P M^k u for a vector field u of shape (3, nrad, nlat, nlon)."""
    return np.einsum("ij...,j...->i...", projector(op.sphere), average(op, u))


def leray_average(shell: ShellGrid, psi: np.ndarray, k: int = 3) -> np.ndarray:
    """L0 M_tau^k psi; with k = 3 this is the composite operator paired against v_E."""
    return leray_project_sphere(shell.base, average_tangential(AverageOp(k, shell), psi))


def extend(op: ExtensionOp, v: np.ndarray) -> np.ndarray:
    """Constant or weighted radial extension of a sphere field into the shell."""
    v = np.asarray(v)
    if v.shape[-2:] != op.shell.base.shape:
        raise ShapeError("field does not live on the shell's sphere grid")
    ext = np.broadcast_to(v[..., None, :, :], v.shape[:-2] + op.shell.shape)
    if op.mode == "weighted":
        return ext * op.shell.rnodes[:, None, None]
    return np.array(ext)


def constant_extension(shell: ShellGrid, v: np.ndarray) -> np.ndarray:
    return extend(ExtensionOp("constant", shell), v)


def weighted_extension(shell: ShellGrid, v: np.ndarray) -> np.ndarray:
    return extend(ExtensionOp("weighted", shell), v)


# ----------------------------------------------------------------------------
# forcing functionals


@dataclass
class DualForcing:
    """A forcing functional represented by an L2 Riesz vector.

    On the sphere ``riesz`` is a tangent field, stored after Leray projection
    since only its solenoidal part acts on divergence-free test fields.
    Extensions into the shell keep the sphere vector and act through
    ``eps (f, L0 M_tau^j psi)`` with j = 2 (constant) or j = 3 (weighted).
    ``profile`` scales the vector in time.
    """

    riesz: np.ndarray
    grid: SphereGrid
    mode: str = "sphere"
    shell: ShellGrid | None = None
    profile: Callable[[float], float] | None = None
    meta: dict = field(default_factory=dict)

    @classmethod
    def on_sphere(cls, grid: SphereGrid, vector: np.ndarray, profile=None, project: bool = True) -> "DualForcing":
        vec = leray_project_sphere(grid, vector) if project else np.asarray(vector, dtype=float)
        return cls(vec, grid, "sphere", None, profile)

    @classmethod
    def zero(cls, grid: SphereGrid) -> "DualForcing":
        return cls(np.zeros((3,) + grid.shape), grid)

    @property
    def weight_power(self) -> int:
        return {"constant": 2, "weighted": 3}.get(self.mode, 0)

    def scale(self, t: float) -> float:
        return 1.0 if self.profile is None else float(self.profile(t))

    def at(self, t: float) -> np.ndarray:
        """Sphere Riesz vector at time t."""
        return self.scale(t) * self.riesz

    def pairing(self, psi: np.ndarray, t: float = 0.0) -> float:
        """<f, psi> through the defining formula."""
        if self.mode == "sphere":
            return self.scale(t) * inner_sphere(self.grid, self.riesz, psi)
        shell = self.shell
        test = leray_average(shell, psi, self.weight_power)
        return self.scale(t) * shell.eps * inner_sphere(self.grid, self.riesz, test)

    def volume_riesz(self, shell: ShellGrid | None = None, t: float = 0.0) -> np.ndarray:
        """Volume L2 representative: r^(j-2) times the constant extension of the sphere vector.

        Pairing it in L2 over the shell against fields of V_eps reproduces
        :meth:`pairing`.
        """
        shell = shell or self.shell
        if self.mode == "sphere":
            raise InvalidParameter("a sphere functional has no volume representative")
        ext = constant_extension(shell, self.at(t))
        return ext * shell.rnodes[:, None, None] ** (self.weight_power - 2)


def extend_forcing(f: DualForcing, mode: str, shell: ShellGrid) -> DualForcing:
    if f.mode != "sphere":
        raise InvalidParameter("only sphere functionals can be extended")
    if mode not in ("constant", "weighted"):
        raise InvalidParameter(f"unknown extension mode {mode!r}")
    return DualForcing(f.riesz, f.grid, mode, shell, f.profile, dict(f.meta))


# ----------------------------------------------------------------------------
# identity checks


def _rel(diff: np.ndarray, a: np.ndarray, b: np.ndarray, integrate) -> float:
    num = np.sqrt(abs(integrate(np.sum(np.abs(diff) ** 2, axis=tuple(range(diff.ndim - integrate.nd))))))
    den = max(
        np.sqrt(abs(integrate(np.sum(np.abs(a) ** 2, axis=tuple(range(a.ndim - integrate.nd)))))),
        np.sqrt(abs(integrate(np.sum(np.abs(b) ** 2, axis=tuple(range(b.ndim - integrate.nd)))))),
        1e-300,
    )
    return float(num / den)


class _Integrator:
    def __init__(self, grid, nd):
        self.grid = grid
        self.nd = nd

    def __call__(self, f):
        return self.grid.integrate(f)


def avg_gradient_identity_check(op: AverageOp, phi: np.ndarray | None = None, u: np.ndarray | None = None) -> dict:
    """Relative L2 residuals of the average/gradient/divergence commutation identities.

    ``phi`` (scalar shell field): grad_S M^k phi = P M^{k+1} grad phi.
    ``u`` (vector field with u . n = 0 on both boundaries):
    div_S M^k u = M^{k+1} div u + (k+1) M^k (u . n) and
    div_S M_tau^k u = M^{k+1} div u + (k-1) M^k (u . n).
    """
    sph = op.sphere
    S = _Integrator(sph, 2)
    out = {}
    k = op.k
    up = AverageOp(k + 1, op.shell)
    if phi is not None:
        lhs = tangential_gradient(sph, average(op, phi))
        rhs = np.einsum("ij...,j...->i...", projector(sph), average(up, full_gradient_shell(op.shell, phi)))
        out["average_gradient"] = _rel(lhs - rhs, lhs, rhs, S)
    if u is not None:
        n_bar = sph.xyz[:, None]
        un = np.einsum("i...,i...->...", u, np.broadcast_to(n_bar, u.shape))
        div_u = divergence_shell(op.shell, u)
        lhs = surface_divergence(sph, average(op, u))
        rhs = average(up, div_u) + (k + 1) * average(op, un)
        out["average_divergence"] = _rel(lhs - rhs, lhs, rhs, S)
        lhs = surface_divergence(sph, average_tangential(op, u))
        rhs = average(up, div_u) + (k - 1) * average(op, un)
        out["tangential_average_divergence"] = _rel(lhs - rhs, lhs, rhs, S)
    return out


def unfold_pairing_check(shell: ShellGrid, v: np.ndarray, psi: np.ndarray, tol: float = 1e-9) -> float:
    """|(v_E, psi)_shell - eps (v, L0 M_tau^3 psi)_sphere| relative to ||v|| ||psi||.

    ``v`` must be solenoidal; the identity uses L0 v = v.
    """
    sph = shell.base
    if l2_sphere(sph, v - leray_project_sphere(sph, v)) > tol * max(l2_sphere(sph, v), 1.0):
        raise InvariantViolation("unfolding identity needs a divergence-free tangent field")
    lhs = inner_shell(shell, weighted_extension(shell, v), psi)
    rhs = shell.eps * inner_sphere(sph, v, leray_average(shell, psi, 3))
    scale = l2_sphere(sph, v) * l2_shell(shell, psi)
    return float(abs(lhs - rhs) / scale) if scale > 0 else float(abs(lhs - rhs))


@dataclass
class IdentityResult:
    name: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.residual) and self.residual <= self.tol)

    def as_dict(self) -> dict:
        return {"name": self.name, "residual": self.residual, "tol": self.tol, "passed": self.passed}


def identity_suite(lmax: int = 12, nrad: int = 10, eps: float = 0.1, seed: int = 0, tol: float = 1e-8) -> list[IdentityResult]:
    """Evaluate the pointwise and integral operator identities on random band-limited data.

    Sphere fields have degree <= lmax - 2 so that products with the normal
    and projector stay resolved; shell fields are cubic in the radius.
    """
    from .fields import random_scalar, random_slip_field, random_solenoidal, random_tangent

    rng = np.random.default_rng(seed)
    sph = make_sphere_grid(lmax)
    shell = make_shell_grid(sph, eps, nrad)
    S = _Integrator(sph, 2)
    V = _Integrator(shell, 3)
    n = sph.xyz
    P = projector(sph)
    Lf = max(lmax - 2, 2)
    results: list[IdentityResult] = []

    def add(name, value):
        results.append(IdentityResult(name, float(value), tol))

    def mv(A, x):
        return np.einsum("ij...,j...->i...", A, x)

    def mm(A, B):
        return np.einsum("ik...,kj...->ij...", A, B)

    # normal field: grad_S n = P, div_S n = 2
    Gn = tangential_gradient(sph, n)
    add("TGr_Nor", max(_rel(Gn - P, Gn, P, S), _rel(surface_divergence(sph, n) - 2.0, np.full(sph.shape, 2.0), 2.0 * np.ones(sph.shape), S)))

    # general (non-tangential) v and its tangential part
    v = random_tangent(sph, rng, Lf) + random_scalar(sph, rng, Lf - 1) * n
    vn = np.einsum("i...,i...->...", v, n)
    vt = mv(P, v)
    lhs = tangential_gradient(sph, vt)
    rhs = mm(tangential_gradient(sph, v), P) - vt[:, None] * n[None, :] - vn * P
    add("Vec_Tan", _rel(lhs - rhs, lhs, rhs, S))
    lhs = surface_strain(sph, vt)
    rhs = surface_strain(sph, v) - vn * P
    add("VT_str", _rel(lhs - rhs, lhs, rhs, S))

    # tangential pairs
    w = random_tangent(sph, rng, Lf)
    z = random_tangent(sph, rng, Lf)
    lhs = directional_derivative(sph, w, z)
    rhs = covariant_derivative(sph, w, z) - np.einsum("i...,i...->...", z, w) * n
    add("Gauss", _rel(lhs - rhs, lhs, rhs, S))
    Gz = tangential_gradient(sph, z)
    rhs = mm(mm(P, Gz), P) - z[:, None] * n[None, :]
    add("TGr_Dec", _rel(Gz - rhs, Gz, rhs, S))

    # constant extension gradient
    eta = random_scalar(sph, rng, Lf)
    eta_bar = constant_extension(shell, eta)
    lhs = full_gradient_shell(shell, eta_bar)
    rhs = constant_extension(shell, tangential_gradient(sph, eta)) / shell.r
    add("Const", _rel(lhs - rhs, lhs, rhs, V))

    # matrix inner products
    A, B, C = (rng.standard_normal((3, 3, 64)) for _ in range(3))
    scale = np.sqrt(np.sum(A**2) * np.sum(B**2)) * np.sqrt(np.sum(C**2) + 1.0)
    e1 = np.max(np.abs(frob(A, B) - frob(np.swapaxes(A, 0, 1), np.swapaxes(B, 0, 1))))
    AB = mm(A, B)
    e2 = np.max(np.abs(frob(AB, C) - frob(B, mm(np.swapaxes(A, 0, 1), C))))
    e3 = np.max(np.abs(frob(AB, C) - frob(A, mm(C, np.swapaxes(B, 0, 1)))))
    add("Mat_Inn", max(e1, e2, e3) / scale)

    # averages
    s = (shell.rnodes - 1.0) / eps
    prof = (1.0 + s - 0.5 * s**2 + 0.25 * s**3)[:, None, None]
    phi = prof * constant_extension(shell, random_scalar(sph, rng, Lf)) + (s**2)[:, None, None] * constant_extension(shell, eta)
    u = random_slip_field(shell, rng, Lf, radial_degree=3)
    worst = {"average_gradient": 0.0, "average_divergence": 0.0, "tangential_average_divergence": 0.0}
    for k in range(0, 4):
        res = avg_gradient_identity_check(AverageOp(k, shell), phi=phi, u=u)
        for key in worst:
            worst[key] = max(worst[key], res[key])
    add("Ave_TGr", worst["average_gradient"])
    add("Ave_div", worst["average_divergence"])
    add("Atan_div", worst["tangential_average_divergence"])

    # weighted extension of a tangential field
    vE = weighted_extension(shell, z)
    GE = full_gradient_shell(shell, vE)
    zbar = constant_extension(shell, z)
    nbar = np.broadcast_to(n[:, None], zbar.shape)
    rhs = constant_extension(shell, Gz) + nbar[:, None] * zbar[None, :]
    add("Ext_Grad", _rel(GE - rhs, GE, rhs, V))
    lhs = np.einsum("ii...->...", GE)
    rhs = constant_extension(shell, surface_divergence(sph, z)) + np.einsum("i...,i...->...", nbar, zbar)
    add("Ext_div", _rel(lhs - rhs, lhs, rhs, V))
    lhs = sym(GE)
    rhs = constant_extension(shell, surface_strain(sph, z))
    add("Ext_str", _rel(lhs - rhs, lhs, rhs, V))
    lhs = np.einsum("i...,ij...->j...", vE, GE)
    cov = covariant_derivative(sph, z, z)
    rhs = shell.r * (constant_extension(shell, cov) - constant_extension(shell, np.sum(z * z, axis=0)) * nbar)
    add("Ext_CoDe", _rel(lhs - rhs, lhs, rhs, V))

    # unfolding of the L2 pairing with a solenoidal field
    vs = random_solenoidal(sph, rng, Lf)
    add("ExAv_L2", unfold_pairing_check(shell, vs, u))

    # extra consistency checks beyond the headline list
    zeta = random_scalar(sph, rng, Lf)
    ge = tangential_gradient(sph, eta)
    gz = tangential_gradient(sph, zeta)
    ibp = max(
        abs(sph.integrate(ge[i] * zeta) + sph.integrate(eta * (gz[i] - 2.0 * zeta * n[i])))
        for i in range(3)
    ) / (l2_sphere(sph, eta) * l2_sphere(sph, zeta))
    add("IbP_S2", ibp)
    tri = abs(inner_sphere(sph, covariant_derivative(sph, vs, z), z)) / (l2_sphere(sph, vs) * l2_sphere(sph, z) ** 2)
    add("TrS2_AnS", tri)
    return results
