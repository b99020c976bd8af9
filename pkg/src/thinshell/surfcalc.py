"""Tangential calculus on the unit sphere and Cartesian calculus on the shell.

Vector fields are stored as Cartesian components with the component axis
first: a tangent field on the sphere has shape ``(3, nlat, nlon)``; a volume
field has shape ``(3, nrad, nlat, nlon)``. Gradients of a field with shape
``(*c, ...)`` come back with a new leading axis, ``G[i, *c] = D_i f[*c]``,
so that for a vector field ``G[i, j] = D_i v_j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InvariantViolation
from .grid import ShellGrid, SphereGrid, analysis, synthesis, degree_array

__all__ = [
    "normal",
    "projector",
    "tangential_gradient",
    "gradient_from_coeffs",
    "weak_gradient_coeffs",
    "surface_divergence",
    "surface_strain",
    "surface_curl",
    "surface_laplacian",
    "directional_derivative",
    "covariant_derivative",
    "velocity_from_streamfunction",
    "leray_project_sphere",
    "poisson_sphere",
    "full_gradient_shell",
    "strain_shell",
    "divergence_shell",
    "rotation_field",
    "rotation_basis",
    "remove_rotations",
    "trilinear_sphere",
    "trilinear_shell",
    "sym",
    "frob",
    "l2_sphere",
    "h1_sphere",
    "l2_shell",
    "h1_shell",
    "inner_sphere",
    "inner_shell",
    "ProbeReport",
    "probe_inequality",
]


# ----------------------------------------------------------------------------
# pointwise algebra


def normal(grid: SphereGrid) -> np.ndarray:
    return grid.xyz


def projector(grid: SphereGrid) -> np.ndarray:
    """P = I - n n^T at every node, shape (3, 3, nlat, nlon)."""
    n = grid.xyz
    eye = np.eye(3)[:, :, None, None]
    return eye - n[:, None] * n[None, :]


def sym(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.swapaxes(A, 0, 1))


def frob(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Pointwise Frobenius product A:B of matrix fields."""
    return np.einsum("ij...,ij...->...", A, B)


def _matmul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return np.einsum("ik...,kj...->ij...", A, B)


def _matvec(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("ij...,j...->i...", A, v)


def _dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("i...,i...->...", u, v)


def _check_finite(f: np.ndarray) -> None:
    if not np.all(np.isfinite(f)):
        raise DataError("field contains non-finite values")


# ----------------------------------------------------------------------------
# sphere operators


def tangential_gradient(grid: SphereGrid, f: np.ndarray) -> np.ndarray:
    """Surface gradient of each component of ``f`` (shape (..., nlat, nlon)).

    Angular derivatives are taken in spectral space at the grid's full
    resolution and assembled into Cartesian components with the exact
    Jacobian of the spherical coordinates.
    """
    f = np.asarray(f)
    _check_finite(f)
    return gradient_from_coeffs(grid, analysis(grid, f), real=np.isrealobj(f))


def gradient_from_coeffs(grid: SphereGrid, c: np.ndarray, real: bool = True) -> np.ndarray:
    """Surface gradient of the field with harmonic coefficients ``c`` (..., L+1, 2L+1)."""
    L = c.shape[-2] - 1
    m = np.arange(-L, L + 1)
    dth = synthesis(grid, c, real=real, dtheta=True)
    dph = synthesis(grid, 1j * m * c, real=real) / np.sin(grid.theta)[:, None]
    lead = dth.ndim - 2
    et = grid.e_theta.reshape((3,) + (1,) * lead + grid.shape)
    ep = grid.e_phi.reshape((3,) + (1,) * lead + grid.shape)
    return et * dth[None] + ep * dph[None]


def weak_gradient_coeffs(grid: SphereGrid, w: np.ndarray, lmax: int) -> np.ndarray:
    """Coefficients of int w . grad_S conj(Y_lm), i.e. minus the harmonic coefficients of div_S w.

    Only the tangential part of ``w`` (leading axis 3) contributes. The
    projection uses quadrature directly, so no intermediate transform
    truncates the field.
    """
    wt = np.einsum("i...,i...->...", grid.e_theta.reshape((3,) + (1,) * (w.ndim - 3) + grid.shape), w)
    wp = np.einsum("i...,i...->...", grid.e_phi.reshape((3,) + (1,) * (w.ndim - 3) + grid.shape), w)
    m = np.arange(-lmax, lmax + 1)
    return analysis(grid, wt, lmax, dtheta=True) - 1j * m * analysis(grid, wp / np.sin(grid.theta)[:, None], lmax)


def surface_divergence(grid: SphereGrid, v: np.ndarray) -> np.ndarray:
    """div_S v = tr(grad_S v) for any 3-vector field (leading axis 3)."""
    G = tangential_gradient(grid, v)
    return np.einsum("ii...->...", G)


def surface_strain(grid: SphereGrid, v: np.ndarray) -> np.ndarray:
    """D_S(v) = P sym(grad_S v) P."""
    P = projector(grid)
    S = sym(tangential_gradient(grid, v))
    return _matmul(_matmul(P, S), P)


def surface_curl(grid: SphereGrid, v: np.ndarray) -> np.ndarray:
    """Scalar surface curl div_S(v x n); for v = n x grad_S psi it equals Laplace psi."""
    n = grid.xyz
    return surface_divergence(grid, np.cross(v, n, axis=0))


def surface_laplacian(grid: SphereGrid, f: np.ndarray) -> np.ndarray:
    c = analysis(grid, f)
    lam = degree_array(c.shape[-2] - 1)
    return synthesis(grid, -lam * (lam + 1) * c, real=np.isrealobj(f))


def velocity_from_streamfunction(grid: SphereGrid, psi: np.ndarray) -> np.ndarray:
    """v = n x grad_S psi."""
    return np.cross(grid.xyz, tangential_gradient(grid, psi), axis=0)


def directional_derivative(grid: SphereGrid, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    """(w . grad_S) v without projection."""
    G = tangential_gradient(grid, v)
    return np.einsum("i...,ij...->j...", w, G)


def _assert_tangential(grid: SphereGrid, v: np.ndarray, name: str, tol: float = 1e-10) -> None:
    scale = max(float(np.max(np.abs(v), initial=0.0)), 1.0)
    if np.max(np.abs(_dot(v, grid.xyz)), initial=0.0) > tol * scale:
        raise InvariantViolation(f"{name} is not tangential to the sphere")


def covariant_derivative(grid: SphereGrid, w: np.ndarray, v: np.ndarray, check: bool = True) -> np.ndarray:
    """Covariant derivative of v along w: P[(w . grad_S) v]."""
    if check:
        _assert_tangential(grid, w, "w")
        _assert_tangential(grid, v, "v")
    return _matvec(projector(grid), directional_derivative(grid, w, v))


def poisson_sphere(grid: SphereGrid, rhs: np.ndarray) -> np.ndarray:
    """Mean-zero solution of Laplace eta = rhs (the l = 0 mode of rhs is ignored)."""
    c = analysis(grid, rhs)
    lam = degree_array(c.shape[-2] - 1)
    lam = lam * (lam + 1.0)
    lam[0] = np.inf
    return synthesis(grid, -c / lam, real=np.isrealobj(rhs))


def leray_project_sphere(grid: SphereGrid, v: np.ndarray, return_potential: bool = False):
    """Helmholtz-Leray projection of a tangent field: v - grad_S eta with Laplace eta = div_S v."""
    eta = poisson_sphere(grid, surface_divergence(grid, v))
    w = v - tangential_gradient(grid, eta)
    return (w, eta) if return_potential else w


def rotation_field(xyz: np.ndarray, a) -> np.ndarray:
    """r_a(x) = a x x evaluated on Cartesian node positions (leading axis 3)."""
    a = np.asarray(a, dtype=float).reshape((3,) + (1,) * (xyz.ndim - 1))
    return np.cross(np.broadcast_to(a, xyz.shape), xyz, axis=0)


def rotation_basis(xyz: np.ndarray) -> np.ndarray:
    """The three rotation fields about the coordinate axes, shape (3, 3, ...)."""
    return np.stack([rotation_field(xyz, e) for e in np.eye(3)])


def remove_rotations(v: np.ndarray, xyz: np.ndarray, integrate) -> np.ndarray:
    """L2-orthogonal projection of v onto the complement of span{r_a}.

    The three coordinate rotation fields are mutually orthogonal on spheres
    and on shells, so the projection is a sum of rank-one corrections.
    """
    out = np.array(v, dtype=float, copy=True)
    for r in rotation_basis(xyz):
        out = out - integrate(_dot(out, r)) / integrate(_dot(r, r)) * r
    return out


# ----------------------------------------------------------------------------
# shell operators


def full_gradient_shell(grid: ShellGrid, u: np.ndarray, dudr: np.ndarray | None = None) -> np.ndarray:
    """Cartesian gradient G[i, ...] = n_i d_r f + (1/r) D_i f on the shell grid.

    The radial derivative comes from polynomial differentiation along the
    radial nodes unless ``dudr`` is supplied.
    """
    u = np.asarray(u)
    _check_finite(u)
    if dudr is None:
        dudr = np.moveaxis(np.tensordot(grid.dr, u, axes=([1], [u.ndim - 3])), 0, -3)
    tang = tangential_gradient(grid.base, u)
    n = grid.base.xyz.reshape((3,) + (1,) * (u.ndim - 3) + (1,) + grid.base.shape)
    r = grid.rnodes.reshape((grid.nrad, 1, 1))
    return n * dudr[None] + tang / r


def strain_shell(grid: ShellGrid, u: np.ndarray, dudr: np.ndarray | None = None) -> np.ndarray:
    return sym(full_gradient_shell(grid, u, dudr))


def divergence_shell(grid: ShellGrid, u: np.ndarray, dudr: np.ndarray | None = None) -> np.ndarray:
    return np.einsum("ii...->...", full_gradient_shell(grid, u, dudr))


# ----------------------------------------------------------------------------
# integrals and norms


def inner_sphere(grid: SphereGrid, u: np.ndarray, v: np.ndarray) -> float:
    lead = tuple(range(u.ndim - 2))
    return float(grid.integrate(np.sum(u * v, axis=lead) if lead else u * v))


def inner_shell(grid: ShellGrid, u: np.ndarray, v: np.ndarray) -> float:
    lead = tuple(range(u.ndim - 3))
    return float(grid.integrate(np.sum(u * v, axis=lead) if lead else u * v))


def l2_sphere(grid: SphereGrid, f: np.ndarray) -> float:
    return float(np.sqrt(max(inner_sphere(grid, f, f), 0.0)))


def h1_sphere(grid: SphereGrid, f: np.ndarray) -> float:
    """H1 norm with |f|^2 + |grad_S f|^2 (all Cartesian components)."""
    return float(np.sqrt(l2_sphere(grid, f) ** 2 + l2_sphere(grid, tangential_gradient(grid, f)) ** 2))


def l2_shell(grid: ShellGrid, f: np.ndarray) -> float:
    return float(np.sqrt(max(inner_shell(grid, f, f), 0.0)))


def h1_shell(grid: ShellGrid, f: np.ndarray, grad: np.ndarray | None = None) -> float:
    if grad is None:
        grad = full_gradient_shell(grid, f)
    return float(np.sqrt(l2_shell(grid, f) ** 2 + l2_shell(grid, grad) ** 2))


def trilinear_sphere(grid: SphereGrid, v: np.ndarray, w: np.ndarray, z: np.ndarray) -> float:
    """(grad_v w, z) on the sphere."""
    return inner_sphere(grid, covariant_derivative(grid, v, w, check=False), z)


def trilinear_shell(grid: ShellGrid, u: np.ndarray, z: np.ndarray, y: np.ndarray) -> float:
    """((u . grad) z, y) over the shell."""
    G = full_gradient_shell(grid, z)
    return inner_shell(grid, np.einsum("i...,ij...->j...", u, G), y)


# ----------------------------------------------------------------------------
# inequality probes


@dataclass
class ProbeReport:
    kind: str
    max_ratio: float
    ratios: list[float] = field(default_factory=list)
    per_eps: dict[float, float] = field(default_factory=dict)
    skipped: int = 0
    flagged: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "max_ratio": self.max_ratio,
            "per_eps": {str(k): v for k, v in self.per_eps.items()},
            "n_samples": len(self.ratios),
            "skipped": self.skipped,
            "flagged": list(self.flagged),
        }


_DEGENERATE = 1e-12


def _ratio(lhs: float, rhs: float, scale: float) -> float:
    if rhs <= _DEGENERATE * max(scale, 1e-300):
        return np.inf if lhs > _DEGENERATE * max(scale, 1e-300) else np.nan
    return lhs / rhs


def probe_inequality(kind: str, samples, grid=None, shells=None, orthogonalize: bool = True) -> ProbeReport:
    """Empirical constants LHS / RHS over a list of sample fields.

    ``samples`` are nodal arrays on ``grid`` (sphere kinds) or callables
    ``sample(shell) -> field`` (shell kinds, evaluated on every shell of
    ``shells``). An infinite ratio with a nonzero left-hand side flags a
    kernel element of the right-hand side, such as a rotation field in the
    Korn inequalities.
    """
    report = ProbeReport(kind, 0.0)
    if kind in ("korn_sphere", "ladyzhenskaya"):
        for idx, v in enumerate(samples):
            if kind == "korn_sphere":
                if orthogonalize:
                    v = remove_rotations(v, grid.xyz, grid.integrate)
                lhs = h1_sphere(grid, v)
                rhs = l2_sphere(grid, surface_strain(grid, v))
                scale = lhs
            else:
                lhs = float(grid.integrate(v**4)) ** 0.25
                rhs = np.sqrt(l2_sphere(grid, v) * h1_sphere(grid, v))
                scale = lhs
            q = _ratio(lhs, rhs, scale)
            if np.isnan(q):
                report.skipped += 1
                continue
            if np.isinf(q):
                report.flagged.append(f"sample {idx}: right-hand side vanishes (Killing field)")
            report.ratios.append(q)
    elif kind in ("korn_shell_uniform", "product_thin", "normal_trace"):
        for shell in shells:
            best = 0.0
            for idx, make in enumerate(samples):
                out = make(shell)
                if kind == "korn_shell_uniform":
                    u = out
                    if orthogonalize:
                        u = remove_rotations(u, shell.xyz, shell.integrate)
                    G = full_gradient_shell(shell, u)
                    lhs = h1_shell(shell, u, G)
                    rhs = l2_shell(shell, sym(G))
                elif kind == "product_thin":
                    eta, phi = out
                    ext = np.broadcast_to(eta, shell.shape)
                    lhs = l2_shell(shell, ext * phi)
                    rhs = np.sqrt(
                        l2_sphere(shell.base, eta) * h1_sphere(shell.base, eta)
                        * l2_shell(shell, phi) * h1_shell(shell, phi)
                    )
                else:
                    u = out
                    un = np.einsum("i...,i...->...", u, np.broadcast_to(shell.base.xyz[:, None], u.shape))
                    lhs = l2_shell(shell, un)
                    rhs = shell.eps * h1_shell(shell, u)
                q = _ratio(lhs, rhs, lhs)
                if np.isnan(q):
                    report.skipped += 1
                    continue
                if np.isinf(q):
                    report.flagged.append(f"eps={shell.eps} sample {idx}: right-hand side vanishes")
                report.ratios.append(q)
                best = max(best, q)
            report.per_eps[shell.eps] = best
    else:
        raise ValueError(f"unknown probe kind {kind!r}")
    if report.skipped:
        warnings.warn(f"{kind}: skipped {report.skipped} degenerate samples", RuntimeWarning, stacklevel=2)
    report.max_ratio = float(max(report.ratios, default=0.0))
    return report
