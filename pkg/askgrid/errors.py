"""Exception hierarchy shared by all askgrid modules."""


class AskgridError(Exception):
    """Base class for every error raised by askgrid."""


class ConfigurationError(AskgridError, ValueError):
    """A configuration value, template or environment kind is invalid."""


class UsageError(AskgridError, RuntimeError):
    """An API was called in a state that does not allow it."""


class PlanParseError(AskgridError, ValueError):
    """A planner completion contained no canonical option phrase."""

    def __init__(self, message, raw_text=""):
        super().__init__(message)
        self.raw_text = raw_text


class TransportError(AskgridError, ConnectionError):
    """The remote planner could not be reached after all retries."""


class PlanningError(AskgridError):
    """No option can be initiated from the current observation."""


class TrainingError(AskgridError, RuntimeError):
    """PPO training could not continue."""


class CheckpointError(AskgridError, ValueError):
    """A checkpoint file is malformed or does not match the expected network."""


class ComparisonError(AskgridError, ValueError):
    """Evaluation reports cannot be compared side by side."""


class ServerError(AskgridError, OSError):
    """The mock planner server could not start."""
