"""Exception types shared across the laboratory."""


class ParameterError(ValueError):
    """An argument is outside its documented range."""


class MeshMismatchError(ParameterError):
    """Two fields that must share a mesh do not."""


class ConeViolationError(ValueError):
    """An eigenvalue tuple lies outside the operator's admissible cone.

    The message names the first violated defining inequality.
    """


class ConeBoundaryError(ConeViolationError):
    """An eigenvalue tuple is too close to the cone boundary for a safe
    gradient evaluation."""


class SamplingError(RuntimeError):
    """Rejection sampling failed to find cone-interior points."""


class GeometryError(ValueError):
    """A metric field is degenerate (e.g. not positive definite) at a node."""


class PreconditionError(ValueError):
    """A documented operation precondition does not hold for the inputs."""


class NonConvergenceError(RuntimeError):
    """An iterative solve stopped without reaching its tolerance."""

    def __init__(self, message, last_residual=None):
        super().__init__(message)
        self.last_residual = last_residual


class ConvexityError(NonConvergenceError):
    """A solve could not keep the iterate convex / plurisubharmonic."""


class NumericError(RuntimeError):
    """A linear algebra kernel broke down."""
