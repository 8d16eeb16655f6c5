"""Exception and warning types raised by the solvers and maps."""


class QdualError(Exception):
    """Base class for all numerical and configuration failures."""


class NonFinite(QdualError):
    pass


class PhaseUndefined(QdualError):
    """Density vanishes on an interior block, so the phase cannot be unwrapped."""


class NegativeDensity(QdualError):
    pass


class NormDrift(QdualError):
    pass


class UnresolvedField(QdualError):
    pass


class CausticDetected(QdualError):
    """Characteristics of the Hamilton-Jacobi flow are about to cross."""

    def __init__(self, message, t=None, partial=None):
        super().__init__(message)
        self.t = t
        self.partial = partial


class BlowUp(QdualError):
    pass


class HorizonExceeded(QdualError):
    pass


class CFLViolation(QdualError):
    pass


class BorderlineKappa(QdualError):
    pass


class FormulaMismatch(QdualError):
    pass


class SupportMismatch(QdualError):
    pass


class NonNormalizable(QdualError):
    pass


class ConfigInvalid(QdualError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class RangeWarning(UserWarning):
    """Exponentials of the action or hyperbolic functions approach overflow."""
