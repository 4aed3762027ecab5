"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: configuration / parameter
errors exit 2, I/O errors exit 3, numerical failures exit 4.
"""


class ParameterError(ValueError):
    """Invalid parameter combination; message names the violated constraint."""


class DomainError(ParameterError):
    """Evaluation point outside the admissible domain."""


class TopologyError(ValueError):
    """Patch layout violates the multi-patch assumptions (T-junction, hanging
    corner, non-regular patch, pinched vertex, ...)."""


class RegularityError(ValueError):
    """Degenerate geometry Jacobian where regularity is required."""


class ConstructionError(RuntimeError):
    """A smooth-basis construction failed (singular local system or a
    smoothness residual above the construction gate)."""


class SolverError(RuntimeError):
    """Collocation solve failed (rank deficiency, refinement divergence)."""


class DomainFileError(OSError):
    """Domain description file missing or malformed."""
