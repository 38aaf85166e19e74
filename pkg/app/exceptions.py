"""
Error hierarchy. Every error carries the exit code the command line reports for it.
"""


class AluthgeError(Exception):
    exit_code: int = 3

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


# Usage / parse errors (exit 2)
class InputError(AluthgeError):
    exit_code = 2


class MatrixFormatError(InputError):
    pass


class ConfigError(InputError):
    pass


class UsageError(InputError):
    pass


# Numerical kernel failures (exit 3)
class NumericalError(AluthgeError):
    exit_code = 3


class DimensionError(NumericalError):
    pass


class NotHermitianError(NumericalError):
    pass


class NotPositiveSemidefiniteError(NumericalError):
    pass


class SingularEquationError(NumericalError):
    pass


class NearSingularError(NumericalError):
    pass


class NotUnitaryError(NumericalError):
    pass


class TangentSpaceError(NumericalError):
    pass


class OrthogonalityError(NumericalError):
    pass


class EigensolverError(NumericalError):
    pass


class SamplingError(NumericalError):
    pass


class InsufficientDataError(NumericalError):
    pass


# Non-convergence (exit 4)
class ConvergenceError(AluthgeError):
    exit_code = 4
