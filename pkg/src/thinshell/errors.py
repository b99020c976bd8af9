"""Exception types shared by the package."""


class ThinShellError(Exception):
    """Base class for all package errors."""


class InvalidParameter(ThinShellError, ValueError):
    pass


class ShapeError(ThinShellError, ValueError):
    pass


class DataError(ThinShellError, ValueError):
    pass


class InvariantViolation(ThinShellError):
    pass


class StepRejected(ThinShellError):
    """Raised when a time step fails its stability (CFL) check."""


class ConfigurationError(ThinShellError, ValueError):
    pass


class PreconditionError(ThinShellError, ValueError):
    pass
