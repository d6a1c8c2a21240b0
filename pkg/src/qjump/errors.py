"""Exception types shared across the package."""


class QJumpError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteInput(QJumpError):
    """A physical parameter is NaN or infinite."""


class AdiabaticityViolation(QJumpError):
    """Intermediate-level detuning too small for adiabatic elimination."""


class IntegrationDivergence(QJumpError):
    """Density-matrix integration lost trace or hermiticity."""


class DegenerateGenerator(QJumpError):
    """Liouvillian null space is not one-dimensional."""


class EmptyHistogram(QJumpError):
    """Histogram has no counts left to normalize."""


class GridMismatch(QJumpError):
    """Bin widths or grid extents are incompatible."""


class WindowOverflow(QJumpError):
    """Too many synthetic events fall outside the histogram window."""


class NoConvergence(QJumpError):
    """Optimizer hit its iteration cap before converging."""


class SingularNormalMatrix(QJumpError):
    """Gauss-Newton normal matrix is numerically singular."""


class ConfigError(QJumpError):
    """Run configuration file is missing, malformed, or inconsistent."""
