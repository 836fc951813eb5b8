"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: input and parameter problems exit
with 2, numerical failures with 3.
"""


class MultivarianceError(Exception):
    """Base class for all errors raised by this package."""

    code = "error"


class InputError(MultivarianceError, ValueError):
    """Malformed data: wrong shapes, non-finite entries, bad files."""

    code = "input_error"


class ParameterError(MultivarianceError, ValueError):
    """A parameter lies outside its admissible range."""

    code = "parameter_error"


class ConfigError(ParameterError):
    """An inconsistent combination of options."""

    code = "config_error"


class EnumerationLimitError(ParameterError):
    """Subset enumeration was requested for too many blocks."""

    code = "guard_error"


class NumericalError(MultivarianceError, ArithmeticError):
    """A numerical routine failed (e.g. a covariance factorization)."""

    code = "numerical_error"
