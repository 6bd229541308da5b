"""Exception hierarchy shared by the despeckling library and the CLI."""


class DespeckleError(Exception):
    """Base class for every error raised by sar_despeckler."""


class ImageFormatError(DespeckleError):
    """Missing file, malformed header, size mismatch or non-finite raw data."""


class DimensionMismatchError(DespeckleError, ValueError):
    """Arrays, images or matrices whose shapes do not agree."""


class InvalidParameterError(DespeckleError, ValueError):
    """A numeric argument outside its domain (e.g. epsilon <= 0)."""


class NotSymmetricError(DespeckleError, ValueError):
    """A matrix expected to be symmetric is not."""


class FactorizationError(DespeckleError):
    """Cholesky-type factorization failed (non-positive pivot)."""


class SolverBreakdownError(DespeckleError):
    """NaN or loss of positive definiteness detected during a solve."""


class DenseSolveCapError(DespeckleError):
    """System too large for the dense oracle."""
