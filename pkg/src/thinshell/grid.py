"""Quadrature grids and spectral transforms on the unit sphere and on the shell.

Spherical harmonics are orthonormal on the unit sphere (no 4*pi factor) and
include the Condon-Shortley phase, so that ``Y_l^{-m} = (-1)^m conj(Y_l^m)``.
Coefficient arrays have shape ``(..., L+1, 2L+1)`` with ``c[..., l, m + L]``;
entries with ``|m| > l`` are zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from scipy import special

from .errors import InvalidParameter, ShapeError

__all__ = [
    "SphereGrid",
    "ShellGrid",
    "SphCoeffs",
    "RadialSphCoeffs",
    "make_sphere_grid",
    "make_shell_grid",
    "sht_forward",
    "sht_inverse",
    "analysis",
    "synthesis",
    "shell_quadrature",
    "sphere_quadrature",
    "chebyshev_diff",
    "radial_forward",
    "radial_inverse",
    "clenshaw_curtis",
    "barycentric_diff_matrix",
    "barycentric_interp_matrix",
    "degree_array",
    "enforce_real",
]


def degree_array(lmax: int) -> np.ndarray:
    """Array of shape (L+1, 2L+1) holding l at every (l, m) slot."""
    return np.broadcast_to(np.arange(lmax + 1)[:, None], (lmax + 1, 2 * lmax + 1)).copy()


def _order_array(lmax: int) -> np.ndarray:
    return np.broadcast_to(np.arange(-lmax, lmax + 1)[None, :], (lmax + 1, 2 * lmax + 1)).copy()


def _valid_mask(lmax: int) -> np.ndarray:
    return np.abs(_order_array(lmax)) <= degree_array(lmax)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre in colatitude times equispaced longitude.

    ``lmax`` is the nominal model truncation. ``lspec = nlat - 1`` is the
    largest degree that the grid transforms exactly; differential operators
    work at that truncation so that products of degree-``lmax`` fields with
    the normal or the projector are still resolved.
    """

    lmax: int
    nlat: int
    nlon: int
    theta: np.ndarray
    phi: np.ndarray
    wlat: np.ndarray
    # Normalised associated Legendre values for every order -L..L, shape (2L+1, L+1, nlat)
    plm: np.ndarray
    dplm: np.ndarray

    @property
    def lspec(self) -> int:
        return self.nlat - 1

    @cached_property
    def weights(self) -> np.ndarray:
        """Quadrature weights of shape (nlat, nlon); they sum to 4*pi."""
        return np.outer(self.wlat, np.full(self.nlon, 2.0 * np.pi / self.nlon))

    @property
    def nodes(self) -> np.ndarray:
        """(theta, phi) pairs, shape (nlat*nlon, 2)."""
        th, ph = np.meshgrid(self.theta, self.phi, indexing="ij")
        return np.stack([th.ravel(), ph.ravel()], axis=1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nlat, self.nlon)

    @cached_property
    def xyz(self) -> np.ndarray:
        """Cartesian node positions, shape (3, nlat, nlon). Equal to the unit normal."""
        th = self.theta[:, None]
        ph = self.phi[None, :]
        return np.stack(
            [np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th) * np.ones_like(ph)]
        )

    @cached_property
    def e_theta(self) -> np.ndarray:
        th = self.theta[:, None]
        ph = self.phi[None, :]
        return np.stack(
            [np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th) * np.ones_like(ph)]
        )

    @cached_property
    def e_phi(self) -> np.ndarray:
        ph = self.phi[None, :] * np.ones((self.nlat, 1))
        return np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)])

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return sphere_quadrature(self, f)


def _legendre_tables(lmax: int, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ls = np.arange(lmax + 1)
    ms = np.arange(lmax + 2)
    L, M = np.meshgrid(ls, ms, indexing="ij")  # (L+1, L+2)
    valid = M <= L
    vals = special.sph_harm_y(
        np.where(valid, L, 0)[..., None], np.where(valid, M, 0)[..., None], theta[None, None, :], 0.0
    ).real
    pos = np.where(valid[..., None], vals, 0.0)  # (l, m>=0 up to L+1, nlat)
    pos = np.transpose(pos, (1, 0, 2))  # (m, l, nlat)
    cot = np.cos(theta) / np.sin(theta)
    dpos = np.zeros((lmax + 1, lmax + 1, theta.size))
    for m in range(lmax + 1):
        lm = ls[:, None]
        coef = np.sqrt(np.clip((lm - m) * (lm + m + 1), 0, None))
        dpos[m] = m * cot[None, :] * pos[m] + coef * pos[m + 1]
    dpos[~(_valid_mask(lmax)[:, lmax:].T)] = 0.0
    plm = np.zeros((2 * lmax + 1, lmax + 1, theta.size))
    dplm = np.zeros_like(plm)
    for m in range(-lmax, lmax + 1):
        sign = (-1.0) ** m if m < 0 else 1.0
        plm[m + lmax] = sign * pos[abs(m)]
        dplm[m + lmax] = sign * dpos[abs(m)]
    return plm, dplm


def make_sphere_grid(lmax: int, nlat: int | None = None, nlon: int | None = None) -> SphereGrid:
    """Build a grid resolving degree ``lmax`` with 3/2-rule dealiasing."""
    if int(lmax) != lmax or lmax < 2:
        raise InvalidParameter(f"lmax must be an integer >= 2, got {lmax}")
    lmax = int(lmax)
    if nlat is None:
        nlat = (3 * lmax) // 2 + 2
    if nlon is None:
        nlon = 2 * nlat
    if nlat < lmax + 1 or nlon < 2 * lmax + 1:
        raise InvalidParameter("grid too coarse for requested lmax")
    x, w = np.polynomial.legendre.leggauss(nlat)
    theta = np.arccos(x)[::-1]  # increasing colatitude
    wlat = w[::-1].copy()
    phi = 2.0 * np.pi * np.arange(nlon) / nlon
    lspec = nlat - 1
    if nlon < 2 * lspec + 1:
        raise InvalidParameter("nlon must be at least 2*(nlat-1)+1")
    plm, dplm = _legendre_tables(lspec, theta)
    return SphereGrid(lmax, nlat, nlon, theta, phi, wlat, plm, dplm)


def sphere_quadrature(grid: SphereGrid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-2:] != grid.shape:
        raise ShapeError(f"field shape {f.shape} does not end with {grid.shape}")
    return np.einsum("...ij,ij->...", f, grid.weights)


@dataclass
class SphCoeffs:
    """Spherical-harmonic coefficients, ``data[..., l, m + lmax]``."""

    lmax: int
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape[-2:] != (self.lmax + 1, 2 * self.lmax + 1):
            raise ShapeError("coefficient array has wrong trailing shape")

    def __getitem__(self, lm: tuple[int, int]) -> complex:
        l, m = lm
        return self.data[..., l, m + self.lmax]

    def norm2(self) -> np.ndarray:
        return np.sum(np.abs(self.data) ** 2, axis=(-2, -1))

    def is_real_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.data - enforce_real(self.data)), initial=0.0) <= tol)

    def truncate(self, lmax: int) -> "SphCoeffs":
        return SphCoeffs(lmax, resize_coeffs(self.data, lmax))


def resize_coeffs(c: np.ndarray, lmax: int) -> np.ndarray:
    """Truncate or zero-pad a coefficient array to degree ``lmax``."""
    lin = c.shape[-2] - 1
    out = np.zeros(c.shape[:-2] + (lmax + 1, 2 * lmax + 1), dtype=complex)
    lk = min(lin, lmax)
    out[..., : lk + 1, lmax - lk : lmax + lk + 1] = c[..., : lk + 1, lin - lk : lin + lk + 1]
    return out


def enforce_real(c: np.ndarray) -> np.ndarray:
    """Average a coefficient array with its conjugate-symmetric image."""
    lmax = c.shape[-2] - 1
    m = np.arange(-lmax, lmax + 1)
    flipped = np.conj(c[..., ::-1]) * ((-1.0) ** np.abs(m))
    return 0.5 * (c + flipped)


def analysis(grid: SphereGrid, f: np.ndarray, lmax: int | None = None, dtheta: bool = False) -> np.ndarray:
    """Nodal values (..., nlat, nlon) to raw coefficients (..., L+1, 2L+1).

    With ``dtheta`` the projection is against the colatitude derivative of
    each harmonic instead of the harmonic itself.
    """
    f = np.asarray(f)
    if f.shape[-2:] != grid.shape:
        raise ShapeError(f"nodal shape {f.shape} does not end with {grid.shape}")
    L = grid.lspec if lmax is None else int(lmax)
    if L > grid.lspec:
        raise InvalidParameter(f"lmax {L} exceeds grid resolution {grid.lspec}")
    F = np.fft.fft(f, axis=-1) * (2.0 * np.pi / grid.nlon)
    midx = np.arange(-L, L + 1) % grid.nlon
    F = F[..., midx]  # (..., nlat, 2L+1)
    table = grid.dplm if dtheta else grid.plm
    P = table[grid.lspec - L : grid.lspec + L + 1, : L + 1, :]  # (2L+1, L+1, nlat)
    return np.einsum("mlj,j,...jm->...lm", P, grid.wlat, F, optimize=True)


def synthesis(
    grid: SphereGrid, c: np.ndarray, real: bool = True, dtheta: bool = False
) -> np.ndarray:
    """Raw coefficients to nodal values; ``dtheta`` gives the colatitude derivative."""
    c = np.asarray(c)
    L = c.shape[-2] - 1
    if L > grid.lspec:
        raise InvalidParameter(f"coefficient degree {L} exceeds grid resolution {grid.lspec}")
    table = grid.dplm if dtheta else grid.plm
    P = table[grid.lspec - L : grid.lspec + L + 1, : L + 1, :]
    G = np.einsum("mlj,...lm->...jm", P, c, optimize=True)
    full = np.zeros(c.shape[:-2] + (grid.nlat, grid.nlon), dtype=complex)
    full[..., np.arange(-L, L + 1) % grid.nlon] = G
    out = np.fft.ifft(full, axis=-1) * grid.nlon
    return out.real if real else out


def sht_forward(grid: SphereGrid, nodal: np.ndarray, lmax: int | None = None) -> SphCoeffs:
    """Forward transform; for real input the output is conjugate symmetric."""
    L = grid.lmax if lmax is None else int(lmax)
    nodal = np.asarray(nodal)
    if not np.all(np.isfinite(nodal)):
        raise ShapeError("non-finite nodal values")
    c = analysis(grid, nodal, L)
    if np.isrealobj(nodal):
        c = enforce_real(c)
    return SphCoeffs(L, c)


def sht_inverse(grid: SphereGrid, coeffs: SphCoeffs | np.ndarray, real: bool = True) -> np.ndarray:
    data = coeffs.data if isinstance(coeffs, SphCoeffs) else coeffs
    return synthesis(grid, data, real=real)


# ----------------------------------------------------------------------------
# radial direction


def clenshaw_curtis(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto nodes (ascending, on [-1, 1]) and Clenshaw-Curtis weights."""
    if n < 2:
        raise InvalidParameter("need at least two Lobatto nodes")
    N = n - 1
    theta = np.pi * np.arange(N + 1) / N
    x = np.cos(theta)
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k * k - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k * k - 1)
    w[ii] = 2.0 * v / N
    return x[::-1].copy(), w[::-1].copy()


def _bary_weights(x: np.ndarray) -> np.ndarray:
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def barycentric_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the polynomial interpolant through nodes ``x``."""
    x = np.asarray(x, dtype=float)
    w = _bary_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def barycentric_interp_matrix(x: np.ndarray, xnew: np.ndarray) -> np.ndarray:
    """Matrix taking values at nodes ``x`` to interpolant values at ``xnew``."""
    x = np.asarray(x, dtype=float)
    xnew = np.atleast_1d(np.asarray(xnew, dtype=float))
    w = _bary_weights(x)
    diff = xnew[:, None] - x[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15, rtol=0.0)
    diff[exact] = 1.0
    terms = w[None, :] / diff
    A = terms / terms.sum(axis=1, keepdims=True)
    rows = np.any(exact, axis=1)
    A[rows] = exact[rows].astype(float)
    return A


@dataclass(frozen=True, eq=False)
class ShellGrid:
    """Tensor grid on 1 < |x| < 1 + eps.

    ``nodes='lobatto'`` gives Chebyshev-Gauss-Lobatto radii with
    Clenshaw-Curtis weights (boundary radii included); ``nodes='gauss'``
    gives Gauss-Legendre radii, exact for polynomial integrands of degree
    up to ``2*nrad - 1``.
    """

    base: SphereGrid
    eps: float
    nrad: int
    rnodes: np.ndarray
    rweights: np.ndarray
    xref: np.ndarray
    kind: str = "lobatto"

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nrad, self.base.nlat, self.base.nlon)

    @cached_property
    def weights(self) -> np.ndarray:
        """Volume weights w_i r_j^2 dr_j with shape (nrad, nlat, nlon)."""
        return (self.rweights * self.rnodes**2)[:, None, None] * self.base.weights[None]

    @cached_property
    def dr(self) -> np.ndarray:
        """Radial differentiation matrix acting on the radial axis."""
        return barycentric_diff_matrix(self.xref) * (2.0 / self.eps)

    @cached_property
    def xyz(self) -> np.ndarray:
        return self.rnodes[None, :, None, None] * self.base.xyz[:, None]

    @property
    def r(self) -> np.ndarray:
        """Radii broadcastable against (..., nrad, nlat, nlon)."""
        return self.rnodes[:, None, None]

    def integrate(self, f: np.ndarray) -> np.ndarray:
        return shell_quadrature(self, f)


def make_shell_grid(base: SphereGrid, eps: float, nrad: int, nodes: str = "lobatto") -> ShellGrid:
    if not (0.0 < eps < 1.0):
        raise InvalidParameter(f"eps must lie in (0, 1), got {eps}")
    if nrad < 2:
        raise InvalidParameter("nrad must be at least 2")
    if nodes == "lobatto":
        x, w = clenshaw_curtis(nrad)
    elif nodes == "gauss":
        x, w = np.polynomial.legendre.leggauss(nrad)
    else:
        raise InvalidParameter(f"unknown radial node family {nodes!r}")
    r = 1.0 + 0.5 * eps * (x + 1.0)
    return ShellGrid(base, float(eps), int(nrad), r, 0.5 * eps * w, x, nodes)


def shell_quadrature(grid: ShellGrid, nodal: np.ndarray) -> np.ndarray:
    """Integral over the shell of a nodal field (..., nrad, nlat, nlon)."""
    nodal = np.asarray(nodal)
    if nodal.shape[-3:] != grid.shape:
        raise ShapeError(f"nodal shape {nodal.shape} does not end with {grid.shape}")
    return np.einsum("...kij,kij->...", nodal, grid.weights)


@dataclass
class RadialSphCoeffs:
    """Coefficients ``data[..., k, l, m + lmax]`` in Chebyshev index k on [1, 1+eps]."""

    lmax: int
    nrad: int
    eps: float
    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        if self.data.shape[-3:] != (self.nrad, self.lmax + 1, 2 * self.lmax + 1):
            raise ShapeError("radial coefficient array has wrong trailing shape")


def radial_forward(grid: ShellGrid, nodal: np.ndarray, lmax: int | None = None) -> RadialSphCoeffs:
    L = grid.base.lmax if lmax is None else int(lmax)
    nodal = np.asarray(nodal)
    if nodal.shape[-3:] != grid.shape:
        raise ShapeError("nodal shape does not match shell grid")
    c = analysis(grid.base, nodal, L)  # (..., nrad, L+1, 2L+1)
    if np.isrealobj(nodal):
        c = enforce_real(c)
    V = npcheb.chebvander(grid.xref, grid.nrad - 1)
    a = np.linalg.solve(V, np.moveaxis(c, -3, 0).reshape(grid.nrad, -1))
    a = np.moveaxis(a.reshape((grid.nrad,) + c.shape[:-3] + c.shape[-2:]), 0, -3)
    return RadialSphCoeffs(L, grid.nrad, grid.eps, a)


def radial_inverse(grid: ShellGrid, coeffs: RadialSphCoeffs, real: bool = True) -> np.ndarray:
    V = npcheb.chebvander(grid.xref, coeffs.nrad - 1)
    vals = np.einsum("jk,...klm->...jlm", V, coeffs.data)
    return synthesis(grid.base, vals, real=real)


def chebyshev_diff(coeffs: RadialSphCoeffs) -> RadialSphCoeffs:
    """Radial derivative d/dr in Chebyshev coefficient space."""
    if coeffs.nrad < 4:
        raise InvalidParameter("chebyshev_diff needs nrad >= 4")
    d = npcheb.chebder(np.moveaxis(coeffs.data, -3, 0), axis=0) * (2.0 / coeffs.eps)
    d = np.concatenate([d, np.zeros((1,) + d.shape[1:], dtype=complex)], axis=0)
    return RadialSphCoeffs(coeffs.lmax, coeffs.nrad, coeffs.eps, np.moveaxis(d, 0, -3))
