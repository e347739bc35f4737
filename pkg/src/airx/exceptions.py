"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An array argument has the wrong length, shape or dtype."""


class ConfigurationError(ValueError):
    """A configuration value violates a model or receiver constraint."""


class FormatError(ValueError):
    """A binary parameter or dataset file could not be decoded.

    Parameters
    ----------
    message : str
        Human readable description.
    offset : int
        Byte offset in the file where decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class TrainingDivergedError(RuntimeError):
    """The training loss became non-finite."""


class StaleCacheError(RuntimeError):
    """A forward cache was used after the parameters it saw were replaced."""


class EvaluationError(RuntimeError):
    """A BER sweep produced non-finite receiver outputs."""
