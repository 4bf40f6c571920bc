"""Exception types shared across the package."""


class BanditLabError(Exception):
    """Base class for all package errors."""


class InvalidConfigError(BanditLabError, ValueError):
    pass


class RejectedInputError(BanditLabError, ValueError):
    pass


class IngestionError(BanditLabError, ValueError):
    """A dataset file could not be parsed; message names the offending row."""


class CorruptedDatasetError(BanditLabError, ValueError):
    pass


class InsufficientSupportError(BanditLabError, ValueError):
    """An action has too few logged contexts to solve for its parameter."""

    def __init__(self, action, message):
        super().__init__(message)
        self.action = action


class MissingContextError(BanditLabError, KeyError):
    pass


class InternalConsistencyError(BanditLabError, RuntimeError):
    pass


class AlignmentError(BanditLabError, ValueError):
    pass
