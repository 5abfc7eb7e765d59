"""Exception types shared across the package."""


class KLSaliencyError(Exception):
    """Base class for every error this package raises deliberately."""


class MalformedContainer(KLSaliencyError):
    """Byte stream violates the NPY v1.0 container layout."""


class UnsupportedDType(KLSaliencyError):
    """Container payload is not little-endian IEEE float in C order."""


class ShapeMismatch(KLSaliencyError):
    """Operands disagree on a required dimension."""


class TargetOutOfRange(KLSaliencyError):
    """Perplexity target falls outside the feasible [1, K-1] interval."""


class DegenerateGradient(KLSaliencyError):
    """Gradient has (near-)zero variance and carries no usable signal."""


class ValueOutOfRange(KLSaliencyError):
    """Numeric input violates a documented range contract."""
