"""Exception types raised across the package.

Every error derives from :class:`MirrordynError`. The CLI maps
:class:`ConfigError` to exit code 2 and every other subclass to exit code 3.
"""


class MirrordynError(Exception):
    """Base class for all package errors."""


class ConfigError(MirrordynError):
    """Malformed or incomplete run configuration."""


class DomainError(MirrordynError, ValueError):
    """A point lies outside the domain where an operation is defined."""


class DimensionMismatch(MirrordynError, ValueError):
    pass


class NonFiniteInput(MirrordynError, ValueError):
    pass


class NonStochasticRow(MirrordynError, ValueError):
    """A transition matrix row is negative somewhere or does not sum to one."""


class NonErgodic(MirrordynError, ValueError):
    pass


class SingularFundamentalMatrix(MirrordynError, ValueError):
    pass


class SingularKKT(MirrordynError, ValueError):
    pass


class ScheduleExhausted(MirrordynError, IndexError):
    pass


class IndexOutOfRange(MirrordynError, IndexError):
    pass


class MissingOptimum(MirrordynError, ValueError):
    pass


class NoFiniteN(MirrordynError, ValueError):
    pass


class StepBoundViolation(MirrordynError, AssertionError):
    """An iterate moved farther than the step-length bound allows."""
