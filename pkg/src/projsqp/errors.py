"""Exception types shared across the library."""


class ProjSqpError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(ProjSqpError):
    """Operands have incompatible shapes."""


class NotPositiveDefinite(ProjSqpError):
    """A matrix required to be positive definite is not.

    For the constrained steppers this signals a rank-deficient constraint
    Jacobian: the normal-equations matrix J @ J.T lost positive definiteness.
    """


class DivisionByZero(ProjSqpError):
    """Division by a zero-valued tape node."""


class Overdamped(ProjSqpError):
    """Spring parameters do not describe an under-damped oscillator."""


class ConfigInvalid(ProjSqpError):
    """An experiment configuration failed validation.

    Carries the offending field name so CLI errors can point at it.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class EmptyTrajectory(ProjSqpError):
    """An aggregation was asked to summarize zero records."""
