"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


class ConfigError(ValueError):
    """A configuration value is invalid or inconsistent."""


class CapabilityError(RuntimeError):
    """The requested operation is not supported for this input (e.g. enumeration cap)."""


class PreconditionError(ValueError):
    """A numeric precondition failed; carries the offending threshold when useful."""

    def __init__(self, message, threshold=None):
        super().__init__(message)
        self.threshold = threshold


class StepRejected(RuntimeError):
    """An optimizer step was refused because the gradient was not finite."""


class TrainingAborted(RuntimeError):
    """Training stopped after repeated non-finite losses; carries the checkpoint path."""

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint
