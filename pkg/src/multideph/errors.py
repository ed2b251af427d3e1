"""Exception hierarchy shared by all modules."""


class DephasingError(Exception):
    """Base class for every error raised by the package."""


class ModelError(DephasingError, ValueError):
    """Invalid model parameters.

    ``index`` holds the offending (row, column) or position when known, so
    callers (e.g. the JSON loader) can translate it into a document path.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DimensionMismatch(ModelError):
    pass


class NonHermitianGamma(ModelError):
    pass


class NotPositiveSemidefinite(ModelError):
    pass


class InvalidSize(ModelError):
    pass


class UnknownMultiIndex(ModelError):
    pass


class NegativeTime(DephasingError, ValueError):
    pass


class NumericalFailure(DephasingError, ArithmeticError):
    """Base for failures that are properties of the numbers, not the inputs."""


class CoherenceZero(NumericalFailure):
    pass


class RateDivergence(NumericalFailure):
    """A canonical rate diverges; ``location`` is the pole time."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class DenominatorVanishes(RateDivergence):
    pass


class ConditionalUndefined(NumericalFailure):
    pass


class ZeroProbabilityBranch(NumericalFailure):
    pass


class IdentificationFailure(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    pass


class DimensionCap(DephasingError, ValueError):
    pass


class ConfigError(DephasingError, ValueError):
    pass


class VerificationFailure(DephasingError):
    pass
