"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration and input problems
exit 1, numerical failures exit 2, integrity (fingerprint) failures
exit 3.
"""


class HemalearnError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(HemalearnError, ValueError):
    """Shapes of two operands are incompatible; message names both."""


class ConfigError(HemalearnError, ValueError):
    """A configuration value is out of range or malformed."""


class InputError(HemalearnError, ValueError):
    """Runtime data violates a precondition (bad labels, empty input, ...)."""


class NumericalError(HemalearnError, RuntimeError):
    """A computation produced non-finite values; message says where."""


class IntegrityError(HemalearnError, RuntimeError):
    """Fingerprint chain broken: an artifact does not match its producer."""


class TapeError(HemalearnError, RuntimeError):
    """Gradient tape misuse, e.g. backward without a recorded forward."""
