"""Exception types shared across the package."""


class SparrowError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(SparrowError, ValueError):
    """Invalid argument or configuration."""


class DefinitenessError(SparrowError):
    """A matrix required to be positive definite is not."""


class NumericalError(SparrowError):
    """An iterative routine failed to reach its accuracy contract."""


class ConicError(NumericalError):
    """The conic solver did not return an optimal certificate."""


class UnsupportedGeometryError(SparrowError):
    """Operation requires a uniform linear array."""


class DecompositionError(NumericalError):
    """Toeplitz decomposition into atoms failed its residual contract."""


class NonUniqueDecompositionError(DecompositionError):
    """Requested decomposition order leaves the atom set non-unique."""
