"""Exception types shared across the package.

Plain ``ValueError`` is used for argument-domain violations; the classes
here separate failure modes the CLI maps to distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class DataError(ValueError):
    """Malformed input data (CLI exit code 3)."""


class NumericError(ArithmeticError):
    """A numerical routine failed to reach its tolerance (CLI exit code 4)."""


class ElicitationError(NumericError):
    """The elicitation pipeline could not satisfy its target conditions."""


class SimulationError(RuntimeError):
    """A generative simulation produced an unusable draw (e.g. every
    truncated mass vanished)."""
