"""Exception hierarchy.

``InputError`` subclasses describe bad or unsupported input data and map to
exit code 2 on the command line; ``NonFiniteStateError`` is a numerical
failure of the solver and maps to exit code 3.
"""


class ChsegError(Exception):
    """Base class for all package errors."""


class InputError(ChsegError, ValueError):
    """Invalid input data or configuration."""


class BadMagicError(InputError):
    pass


class UnsupportedDatatypeError(InputError):
    pass


class TruncatedDataError(InputError):
    pass


class NonPositivePixdimError(InputError):
    pass


class MissingFieldError(InputError):
    pass


class DimsMismatchError(InputError):
    pass


class IndexOutOfRangeError(InputError, IndexError):
    pass


class EmptyMaskError(InputError):
    pass


class DegenerateIntensityError(InputError):
    pass


class SpecInvalidError(InputError):
    pass


class NonFiniteStateError(ChsegError, ArithmeticError):
    """The solver state contains NaN or infinite values after a step.

    Usually means the time step is too large for the chosen interface width.
    """

    def __init__(self, step_index, message=None):
        self.step_index = step_index
        super().__init__(message or f"non-finite solver state after step {step_index}")
