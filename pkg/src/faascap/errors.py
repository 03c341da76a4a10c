"""Exception hierarchy shared by all faascap modules."""


class FaascapError(Exception):
    """Base class for all faascap-specific errors."""


class InvalidArgumentError(FaascapError, ValueError):
    """An argument violates a documented precondition."""


class InfeasibleError(FaascapError):
    """The requested quantity has no solution (e.g. no finite idle time)."""


class ModelError(FaascapError):
    """A model cannot be built or solved as specified (e.g. unstable queue)."""


class NumericalError(FaascapError):
    """An iterative numerical procedure failed to converge."""


class ConfigError(FaascapError):
    """A configuration document is malformed or violates an invariant."""
