"""Exception types shared across the toolkit."""


class IcecavError(Exception):
    pass


class FlowDomainError(IcecavError, ValueError):
    """A query fell outside the valid domain of a grid or envelope.

    `axis` names the violated axis ("x", "y", "z" or "t").
    """

    def __init__(self, axis, message):
        super().__init__(message)
        self.axis = axis


class ConfigurationError(IcecavError, ValueError):
    """Inconsistent or geometrically impossible configuration."""


class ActionError(IcecavError, ValueError):
    """An action outside the admissible set was supplied."""


class NumericalError(IcecavError, RuntimeError):
    """A non-finite value appeared where one must not."""
