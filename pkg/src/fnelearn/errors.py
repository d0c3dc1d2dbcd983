"""Exception types shared across the library."""


class FneLearnError(Exception):
    """Base class for all library errors."""


class DegenerateInput(FneLearnError):
    """Input point set is degenerate (e.g. all points collinear)."""


class UnsupportedDimension(FneLearnError):
    """Requested algorithm is only implemented for d = 2."""


class OutsideHull(FneLearnError):
    """Query point lies outside the convex hull of the node set."""


class NodeMismatch(FneLearnError):
    """Partition nodes do not match the training inputs."""


class NotNonexpansive(FneLearnError):
    """Operator fails the per-simplex Lipschitz audit beyond tolerance."""


class SingularSystem(FneLearnError):
    """Normal matrix is numerically singular (degenerate simplex)."""


class ScaleExceeded(FneLearnError):
    """Problem size exceeds the supported oracle scale."""


class StepSizeViolation(FneLearnError):
    """Step sizes violate the algorithm's admissibility condition."""


class ShapeMismatch(FneLearnError):
    """Array arguments have incompatible shapes."""


class EmptyInput(FneLearnError):
    """A non-empty collection was required."""
