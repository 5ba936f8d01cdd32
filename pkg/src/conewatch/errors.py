"""Exception hierarchy."""


class ConewatchError(Exception):
    """Base class for all conewatch errors."""


class ValidationError(ConewatchError, ValueError):
    pass


class SignatureError(ValidationError):
    """Quadratic form is definite, so the cone is {0} or the whole space."""


class DimensionMismatch(ValidationError):
    pass


class NumericalFailure(ConewatchError):
    """Integration could not reach the requested time."""

    def __init__(self, message, t_reached=None):
        super().__init__(message)
        self.t_reached = t_reached


class StepFailure(NumericalFailure):
    pass


class BlowUp(NumericalFailure):
    pass


class JacobianUnavailable(ConewatchError):
    pass


class HorizonTooShort(ConewatchError):
    pass


class GapTooSmall(ConewatchError):
    pass


class DegenerateFrame(NumericalFailure):
    pass


class UnknownModel(ConewatchError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "unknown model"


class EmptySweep(ConewatchError):
    pass
