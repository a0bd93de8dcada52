"""Exception hierarchy shared by all solver modules.

Two roots: ConfigError for malformed run configurations (CLI exit code 2)
and SolverError for numerical failures (exit code 3). Everything else is
an ordinary bug and raises builtins.
"""


class ConfigError(Exception):
    """Invalid run configuration."""


class ConfigInvalid(ConfigError):
    pass


class SolverError(Exception):
    """Base class for numerical failures."""


class NonStarShaped(SolverError):
    """Polar radius R(theta) <= 0 somewhere on the probe grid."""


class ResolutionTooLow(SolverError):
    """Node count too small for the curve's Fourier degree, or the
    trailing Fourier mode violates the decay guard."""


class GridMismatch(SolverError):
    """Boundary field sampled on a different node set than the curve."""


class BoundaryTooClose(SolverError):
    """Inner and outer curves closer than the grid-resolution guard."""


class SingularSystem(SolverError):
    """Discrete boundary-integral matrix is numerically rank-deficient."""


class DegenerateOperator(SolverError):
    """Linearized Robin system has a numerically vanishing singular value."""


class TooCloseToBoundary(SolverError):
    """Evaluation point inside the near-boundary quadrature-accuracy zone."""


class OuterNotDisk(SolverError):
    """Operation requires the container to be the unit disk."""


class NoConvergence(SolverError):
    """Newton correction failed to reach tolerance."""


class OriginNotEnclosed(SolverError):
    """Moment computation requires the free boundary to enclose the origin."""


class SignMismatch(SolverError):
    """Robin response sign inconsistent with the declared flow case."""


class StepSizeUnderflow(SolverError):
    """Adaptive time step fell below the configured minimum."""


class MuTooSmall(SolverError):
    """Robin shift leaves H + dQ/dnu / Q + mu non-positive somewhere."""


class MissingArtifacts(SolverError):
    """Run directory lacks the files needed for report generation."""


class OutOfRange(SolverError):
    """Radial-oracle argument outside (0, 1) or unsupported dimension."""


class DegenerateRadius(SolverError):
    """Radial linearization requested at the critical (parabolic) radius."""


class QNotPositive(SolverError):
    """Boundary data Q must stay strictly positive."""
