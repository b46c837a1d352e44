"""Exception types shared across the package."""


class NvCoopError(Exception):
    """Base class for every error raised by nvcoop."""


class DimensionError(NvCoopError, ValueError):
    pass


class NumericRangeError(NvCoopError, ArithmeticError):
    pass


class DecompositionError(NvCoopError, ArithmeticError):
    def __init__(self, message, iterations=None):
        super().__init__(message)
        self.iterations = iterations


class NoSteadyStateError(NvCoopError, ArithmeticError):
    pass


class DegenerateSteadyStateError(NoSteadyStateError):
    """Kernel of the generator has dimension > 1 and no initial state was given."""

    def __init__(self, message, kernel_dim):
        super().__init__(message)
        self.kernel_dim = kernel_dim


class DomainError(NvCoopError, ValueError):
    pass


class ValidationError(NvCoopError, ValueError):
    pass


class ConfigurationError(NvCoopError, ValueError):
    pass


class PropagationError(NvCoopError, ArithmeticError):
    def __init__(self, message, invariant):
        super().__init__(message)
        self.invariant = invariant


class DegenerateSourceError(NvCoopError, ArithmeticError):
    pass


class StructureError(NvCoopError, ValueError):
    pass


class WrongModelError(NvCoopError, ValueError):
    pass


class SingularParameterError(NvCoopError, ValueError):
    pass


class RankError(NvCoopError, ArithmeticError):
    pass


class InsufficientDataError(NvCoopError, ValueError):
    pass
