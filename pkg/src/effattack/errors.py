"""Exception hierarchy shared across the package."""


class EffAttackError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(EffAttackError, ValueError):
    """Operand shapes do not line up."""

    def __init__(self, message, layer=None):
        if layer is not None:
            message = f"{layer}: {message}"
        super().__init__(message)
        self.layer = layer


class DomainError(EffAttackError, ValueError):
    """An argument lies outside the domain of the operation."""


class UsageError(EffAttackError, ValueError):
    """The operation was called in a way it does not support."""


class ValidationError(EffAttackError, ValueError):
    """A spec or config failed validation; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class TrainingError(EffAttackError, RuntimeError):
    def __init__(self, epoch, message="non-finite loss"):
        super().__init__(f"training diverged at epoch {epoch}: {message}")
        self.epoch = epoch


class UndefinedBaselineError(DomainError):
    """Percent change against a zero baseline."""
