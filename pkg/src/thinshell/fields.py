"""Band-limited sample fields for tests, probes and experiments."""

from __future__ import annotations

import numpy as np

from .grid import ShellGrid, SphereGrid, enforce_real, synthesis, degree_array
from .surfcalc import gradient_from_coeffs, tangential_gradient, velocity_from_streamfunction

__all__ = [
    "random_coeffs",
    "random_scalar",
    "random_tangent",
    "random_solenoidal",
    "random_radial_profile",
    "random_slip_field",
    "harmonic",
    "random_potential_field",
    "random_shell_scalar",
]


def random_coeffs(rng: np.random.Generator, lmax: int, lmin: int = 0, decay: float = 1.0) -> np.ndarray:
    """Real-symmetric coefficients with amplitude ~ (1 + l)^(-decay) for lmin <= l <= lmax."""
    shape = (lmax + 1, 2 * lmax + 1)
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    l = degree_array(lmax)
    m = np.arange(-lmax, lmax + 1)[None, :]
    keep = (np.abs(m) <= l) & (l >= lmin)
    c = np.where(keep, c / (1.0 + l) ** decay, 0.0)
    return enforce_real(c)


def harmonic(grid: SphereGrid, l: int, m: int, real: bool = True) -> np.ndarray:
    """Nodal values of a single harmonic; ``real=True`` returns the real combination
    sqrt(2) Re Y_l^m (m > 0), Y_l^0, or sqrt(2) Im Y_l^|m| (m < 0), each of unit L2 norm."""
    c = np.zeros((l + 1, 2 * l + 1), dtype=complex)
    if not real:
        c[l, m + l] = 1.0
        return synthesis(grid, c, real=False)
    if m == 0:
        c[l, l] = 1.0
    elif m > 0:
        c[l, m + l] = 1.0 / np.sqrt(2.0)
        c[l, -m + l] = (-1.0) ** m / np.sqrt(2.0)
    else:
        k = -m
        c[l, k + l] = -1j / np.sqrt(2.0)
        c[l, -k + l] = (-1.0) ** k * 1j / np.sqrt(2.0)
    return synthesis(grid, c)


def random_scalar(grid: SphereGrid, rng: np.random.Generator, lmax: int, lmin: int = 0, decay: float = 1.0) -> np.ndarray:
    return synthesis(grid, random_coeffs(rng, lmax, lmin, decay))


def random_tangent(
    grid: SphereGrid,
    rng: np.random.Generator,
    lmax: int,
    decay: float = 1.0,
    gradient: bool = True,
    rotational: bool = True,
    lmin_rot: int = 1,
) -> np.ndarray:
    """grad_S eta + n x grad_S chi with eta, chi of degree <= lmax - 1.

    Cartesian components then have degree <= lmax. ``lmin_rot = 2`` removes
    the rotation fields from the solenoidal part.
    """
    v = np.zeros((3,) + grid.shape)
    if gradient:
        v += tangential_gradient(grid, random_scalar(grid, rng, lmax - 1, 1, decay))
    if rotational:
        v += velocity_from_streamfunction(grid, random_scalar(grid, rng, lmax - 1, lmin_rot, decay))
    return v


def random_solenoidal(grid: SphereGrid, rng: np.random.Generator, lmax: int, decay: float = 1.0, lmin: int = 1) -> np.ndarray:
    return random_tangent(grid, rng, lmax, decay, gradient=False, rotational=True, lmin_rot=lmin)


def random_radial_profile(rng: np.random.Generator, degree: int) -> np.ndarray:
    """Coefficients of a polynomial in the normalised radius s in [0, 1]."""
    return rng.standard_normal(degree + 1) / (1.0 + np.arange(degree + 1))


def _poly_s(coef: np.ndarray, s: np.ndarray) -> np.ndarray:
    return np.polynomial.polynomial.polyval(s, coef)


def random_slip_field(
    shell: ShellGrid,
    rng: np.random.Generator,
    lmax: int,
    radial_degree: int = 3,
    nterms: int = 2,
    normal_part: bool = True,
    decay: float = 1.0,
) -> np.ndarray:
    """A volume field with u . n = 0 on both boundary spheres.

    Tangential part: sum of random tangent fields times random polynomials of
    the normalised radius s = (|x| - 1)/eps. Normal part: eps s (1 - s) g(y)
    times a random polynomial, which vanishes at both boundaries and keeps
    |d_r (u . n)| of order one.
    """
    base = shell.base
    s = (shell.rnodes - 1.0) / shell.eps
    u = np.zeros((3,) + shell.shape)
    for _ in range(nterms):
        v = random_tangent(base, rng, lmax, decay)
        prof = _poly_s(random_radial_profile(rng, radial_degree), s)
        u += prof[None, :, None, None] * v[:, None]
    if normal_part:
        g = random_scalar(base, rng, lmax - 1, 0, decay)
        prof = shell.eps * s * (1.0 - s) * _poly_s(random_radial_profile(rng, max(radial_degree - 2, 0)), s)
        u += prof[None, :, None, None] * (g * base.xyz)[:, None]
    return u


def _profile(rng: np.random.Generator, degree: int, scale: str, eps: float):
    """Random radial polynomial and its r-derivatives as callables of r.

    ``scale='thin'`` varies on the thickness (polynomial in s), ``'unit'``
    varies on an O(1) radial scale (polynomial in r - 1).
    """
    coef = random_radial_profile(rng, degree)
    if scale == "thin":
        stretch = 1.0 / eps
    elif scale == "unit":
        stretch = 1.0
    else:
        raise ValueError(f"unknown radial scale {scale!r}")
    P = np.polynomial.Polynomial(coef)
    return [lambda r, k=k: stretch**k * P.deriv(k)((r - 1.0) * stretch) if k else P((r - 1.0) * stretch) for k in range(3)]


def random_shell_scalar(
    shell: ShellGrid,
    rng: np.random.Generator,
    lmax: int,
    lmin: int = 0,
    radial_degree: int = 3,
    nterms: int = 2,
    scale: str = "thin",
    decay: float = 0.0,
) -> np.ndarray:
    """Sum of random radial polynomials times random band-limited sphere scalars."""
    r = shell.rnodes
    out = np.zeros(shell.shape)
    for _ in range(nterms):
        prof = _profile(rng, radial_degree, scale, shell.eps)[0](r)
        out += prof[:, None, None] * random_scalar(shell.base, rng, lmax, lmin, decay)[None]
    return out


def random_potential_field(
    shell: ShellGrid,
    rng: np.random.Generator,
    lmax: int,
    lmin: int = 1,
    radial_degree: int = 2,
    nterms: int = 2,
    scale: str = "thin",
    toroidal: bool = True,
    poloidal: bool = True,
    decay: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Divergence-free volume field with u . n = 0 on both walls, and its radial derivative.

    u = (Lam P / r) Y n + (P / r + P') grad_S Y - T n x grad_S Y, summed over
    random terms; P carries a factor vanishing at both walls. The radial
    derivative is exact.
    """
    base = shell.base
    r = shell.rnodes[:, None, None]
    n = base.xyz[:, None]
    u = np.zeros((3,) + shell.shape)
    du = np.zeros_like(u)
    eps = shell.eps
    for _ in range(nterms):
        if poloidal:
            c = random_coeffs(rng, lmax, max(lmin, 1), decay)
            lam = degree_array(lmax) * (degree_array(lmax) + 1.0)
            lchi = synthesis(base, lam * c)
            g = gradient_from_coeffs(base, c)
            q = [f(shell.rnodes) for f in _profile(rng, radial_degree, scale, eps)]
            # wall factor (r - 1)(1 + eps - r) keeps P = 0 on both walls
            rr = shell.rnodes
            w0, w1, w2 = (rr - 1.0) * (1.0 + eps - rr), 2.0 + eps - 2.0 * rr, -2.0
            P0 = w0 * q[0]
            P1 = w1 * q[0] + w0 * q[1]
            P2 = w2 * q[0] + 2.0 * w1 * q[1] + w0 * q[2]
            amp = 1.0 / max(float(np.max(np.abs(P1))), 1e-300)
            P0, P1, P2 = (amp * a[:, None, None] for a in (P0, P1, P2))
            u += n * (P0 / r * lchi[None]) + (P0 / r + P1) * g[:, None]
            du += n * ((P1 / r - P0 / r**2) * lchi[None]) + (P1 / r - P0 / r**2 + P2) * g[:, None]
        if toroidal:
            c = random_coeffs(rng, lmax, max(lmin, 1), decay)
            rot = velocity_from_streamfunction(base, synthesis(base, c))
            q = _profile(rng, radial_degree, scale, eps)
            T0 = q[0](shell.rnodes)[:, None, None]
            T1 = q[1](shell.rnodes)[:, None, None]
            amp = 1.0 / max(float(np.max(np.abs(T0))), 1e-300)
            u += amp * T0 * rot[:, None]
            du += amp * T1 * rot[:, None]
    return u, du
