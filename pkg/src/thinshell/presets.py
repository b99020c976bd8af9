"""Initial data and forcing families shared by the solvers, the harness and the CLI."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .avgext import DualForcing
from .errors import InvalidParameter
from .fields import harmonic, random_solenoidal
from .grid import SphereGrid, analysis, enforce_real
from .surfcalc import covariant_derivative, rotation_field, velocity_from_streamfunction

__all__ = ["SphereData", "two_mode", "single_mode", "rotation", "random_decaying", "zero", "make_preset", "PRESETS"]


@dataclass
class SphereData:
    """Initial field, forcing and (when known) the exact vorticity history."""

    name: str
    v0: np.ndarray
    forcing: DualForcing | None
    exact_omega: object = None  # callable t -> coefficients, or None
    orthogonal_to_rotations: bool = False


def _mode_velocity(grid: SphereGrid, l: int, m: int) -> np.ndarray:
    """n x grad_S Y for the unit real harmonic Y of degree l."""
    return velocity_from_streamfunction(grid, harmonic(grid, l, m))


def _decay(nu: float, l: int) -> float:
    return nu * (l * (l + 1) - 2.0)


def single_mode(grid: SphereGrid, nu: float, l: int = 2, m: int = 1, amplitude: float = 1.0, lmax: int | None = None) -> SphereData:
    """One vorticity mode; unforced it decays like exp(-nu (l(l+1) - 2) t)."""
    if l < 1:
        raise InvalidParameter("mode degree must be at least 1")
    L = grid.lmax if lmax is None else lmax
    v0 = amplitude * _mode_velocity(grid, l, m)
    w0 = enforce_real(analysis(grid, -l * (l + 1) * amplitude * harmonic(grid, l, m), L))
    rate = _decay(nu, l)
    return SphereData(f"single_mode_l{l}", v0, None, lambda t: np.exp(-rate * t) * w0, l >= 2)


def two_mode(
    grid: SphereGrid,
    nu: float,
    modes=((2, 1), (3, 2)),
    amplitudes=(1.0, 0.5),
    lmax: int | None = None,
) -> SphereData:
    """Exact decaying solution a(t) v_A + b(t) v_B with each amplitude decaying at its viscous rate.

    A single degree is an exact unforced solution because its self-advection
    is a surface gradient. The cross interaction is not, so the forcing is
    the Leray projection of ``grad_{v_A} v_B + grad_{v_B} v_A`` scaled by
    the product of the two decay factors.
    """
    (la, ma), (lb, mb) = modes
    if min(la, lb) < 2:
        raise InvalidParameter("two_mode needs degrees >= 2 to stay orthogonal to rotations")
    L = grid.lmax if lmax is None else lmax
    A, B = amplitudes
    va = A * _mode_velocity(grid, la, ma)
    vb = B * _mode_velocity(grid, lb, mb)
    cross = covariant_derivative(grid, va, vb, check=False) + covariant_derivative(grid, vb, va, check=False)
    ra, rb = _decay(nu, la), _decay(nu, lb)
    forcing = DualForcing.on_sphere(grid, cross, profile=lambda t: float(np.exp(-(ra + rb) * t)))
    forcing.meta.update(preset="two_mode", rate=ra + rb)
    wa = enforce_real(analysis(grid, -la * (la + 1) * A * harmonic(grid, la, ma), L))
    wb = enforce_real(analysis(grid, -lb * (lb + 1) * B * harmonic(grid, lb, mb), L))
    return SphereData(
        "two_mode",
        va + vb,
        forcing,
        lambda t: np.exp(-ra * t) * wa + np.exp(-rb * t) * wb,
        True,
    )


def rotation(grid: SphereGrid, axis=(0.0, 0.0, 1.0)) -> SphereData:
    """Rigid rotation r_a; a steady unforced solution."""
    v0 = rotation_field(grid.xyz, axis)
    w0 = enforce_real(analysis(grid, 2.0 * np.einsum("i,i...->...", np.asarray(axis, float), grid.xyz), grid.lmax))
    return SphereData("rotation", v0, None, lambda t: w0, False)


def random_decaying(grid: SphereGrid, rng: np.random.Generator, lmax: int = 6, amplitude: float = 1.0, with_rotation: bool = False) -> SphereData:
    """Random solenoidal data without forcing; rotations excluded unless requested."""
    v0 = amplitude * random_solenoidal(grid, rng, lmax, decay=1.5, lmin=1 if with_rotation else 2)
    return SphereData("random", v0, None, None, not with_rotation)


def zero(grid: SphereGrid) -> SphereData:
    return SphereData("zero", np.zeros((3,) + grid.shape), None, lambda t: np.zeros((grid.lmax + 1, 2 * grid.lmax + 1), complex), True)


PRESETS = ("two_mode", "single_mode", "rotation", "random", "zero")


def make_preset(name: str, grid: SphereGrid, nu: float, rng: np.random.Generator | None = None, lmax: int | None = None) -> SphereData:
    if name == "two_mode":
        return two_mode(grid, nu, lmax=lmax)
    if name == "single_mode":
        return single_mode(grid, nu, lmax=lmax)
    if name == "rotation":
        return rotation(grid)
    if name == "random":
        return random_decaying(grid, rng if rng is not None else np.random.default_rng(0), min(6, grid.lmax))
    if name == "zero":
        return zero(grid)
    raise InvalidParameter(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
