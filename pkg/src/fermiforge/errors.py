"""Exception hierarchy shared by all fermiforge modules."""


class FermiForgeError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FermiForgeError, ValueError):
    """Malformed coefficients, parameters or matrices."""


class DomainError(ValidationError):
    """Input outside the mathematical domain of a function."""


class DegenerateCoefficientsError(FermiForgeError):
    """An embedding needs to divide by a coefficient that is zero."""


class DivergedEvaluationError(FermiForgeError, FloatingPointError):
    """A recursion produced non-finite values.

    Attributes
    ----------
    layer : int
        Index of the first layer whose output was not finite.
    """

    def __init__(self, layer, message=None):
        self.layer = layer
        super().__init__(message or f"non-finite value produced at layer {layer}")


class SingularSystemError(FermiForgeError, ArithmeticError):
    """The damped normal equations could not be factorized at any damping."""


class NonConvergenceError(FermiForgeError):
    """An iterative matrix procedure did not converge within its budget."""


class OutOfRegionError(FermiForgeError):
    """Normalized parameters fall outside a model's region of validity."""

    def __init__(self, message, violated=()):
        self.violated = tuple(violated)
        super().__init__(message)


class NoValidModelError(FermiForgeError):
    """No model in a library covers the requested normalized parameters."""

    def __init__(self, message, beta0_needed=None, layers_needed=None):
        self.beta0_needed = beta0_needed
        self.layers_needed = layers_needed
        super().__init__(message)


class MissingEntropyModelError(FermiForgeError):
    """No entropy model is paired with the selected Fermi model."""


class FlatDerivativeError(FermiForgeError):
    """Newton step impossible: d Tr(D) / d mu vanishes (idempotent density)."""


class HalfPrecisionOverflowError(FermiForgeError, OverflowError):
    """A value does not fit in IEEE binary16 after splitting."""


class ModelFileError(FermiForgeError):
    """A model file is unreadable or has an unsupported schema."""
