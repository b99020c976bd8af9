"""Spectral laboratory for Navier-Stokes flow in thin spherical shells and on the unit sphere.

Submodules:

- ``grid``: sphere and shell quadrature grids, spherical harmonic transforms.
- ``surfcalc``: surface calculus, shell gradients, norms and inequality probes.
- ``avgext``: radial averages, extensions and forcing functionals.
- ``sphere_ns`` / ``shell_ns``: the 2D and 3D solvers.
- ``harness``: difference functionals, eps-sweeps and empirical constants.
- ``cli``: the ``thinshell`` command.
"""

from .errors import (
    ConfigurationError,
    DataError,
    InvalidParameter,
    InvariantViolation,
    PreconditionError,
    ShapeError,
    StepRejected,
    ThinShellError,
)
from .grid import SphereGrid, ShellGrid, make_shell_grid, make_sphere_grid

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "SphereGrid",
    "ShellGrid",
    "make_sphere_grid",
    "make_shell_grid",
    "ThinShellError",
    "InvalidParameter",
    "ShapeError",
    "DataError",
    "InvariantViolation",
    "StepRejected",
    "ConfigurationError",
    "PreconditionError",
]
