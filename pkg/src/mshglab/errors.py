"""Exception hierarchy shared by all modules."""


class MshgLabError(Exception):
    """Base class for every error raised by the package."""


class DomainError(MshgLabError, ValueError):
    """Evaluation requested at an inadmissible point or with out-of-domain parameters."""


class BranchError(MshgLabError):
    """A branch state does not match the point at which it is used."""


class ChartError(MshgLabError):
    """A Möbius map or mesh query left the coordinate chart."""


class ConfigurationError(MshgLabError, ValueError):
    """Invalid geometric configuration (paths, loops, disks, meshes)."""


class IntegrationError(MshgLabError, RuntimeError):
    """Adaptive integration failed (step underflow, step budget exhausted)."""

    def __init__(self, message: str, location: complex | None = None):
        super().__init__(message)
        self.location = location


class ConvergenceError(MshgLabError, RuntimeError):
    """A nonlinear solve did not converge."""


class SingularJacobianError(ConvergenceError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


class FitError(MshgLabError, RuntimeError):
    """Asymptotic fit could not be carried out on the supplied window."""


class TruncationError(MshgLabError, RuntimeError):
    """A spectral scan had to stop before the end of its grid."""

    def __init__(self, message: str, largest_theta: float | None):
        super().__init__(message)
        self.largest_theta = largest_theta


class FormatError(ConfigurationError):
    """A report format that the task does not produce."""
