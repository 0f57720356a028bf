"""Exception types shared across the package."""


class BosonspecError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(BosonspecError):
    """Invalid or inconsistent run configuration."""


class DimensionLimitError(BosonspecError):
    """Requested basis exceeds the configured state-count limit."""


class EigenComputationError(BosonspecError):
    """Eigensolver failed to converge."""


class DegenerateSteadyStateError(BosonspecError):
    """Null space of the evolution operator is not one-dimensional."""


class NonConvergenceError(BosonspecError):
    """Time evolution did not reach the requested tolerance in t_max."""


class NonUniformRegimeError(BosonspecError):
    """Uniform steady state is unstable; translation symmetry would break."""


class TruncationError(BosonspecError):
    """Local cutoff or step size too small for the requested evolution."""


class AbsentGapError(BosonspecError):
    """Requested gap does not exist in the computed spectrum."""
