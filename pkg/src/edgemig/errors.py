"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    pass


class EmptyInputError(ValueError):
    pass


class EpisodeFinished(RuntimeError):
    pass


class ContractViolation(RuntimeError):
    """An operation was invoked outside the schedule it is defined for."""


class ConfigValidationError(ValueError):
    """Raised for bad experiment configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
