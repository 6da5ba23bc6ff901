"""Exception hierarchy.

Errors fall into three families that map onto CLI exit codes: configuration
and usage problems (1), problems with the data itself (2), and numerical
failures of an estimator (3).
"""

from __future__ import annotations


class SelsieveError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class ConfigError(SelsieveError, ValueError):
    exit_code = 1


class UnknownTerm(ConfigError):
    pass


class DataError(SelsieveError, ValueError):
    exit_code = 2


class MissingColumn(DataError):
    pass


class MissingCovariate(DataError):
    pass


class OutcomeMissingWhileSelected(DataError):
    pass


class ParseError(DataError):
    pass


class DegenerateSupport(DataError):
    pass


class OneClassOnly(DataError):
    pass


class TooFewSelected(DataError):
    pass


class EmptyArm(DataError):
    pass


class DegenerateSelection(DataError):
    pass


class EmptyProblem(DataError):
    pass


class NumericalError(SelsieveError, ArithmeticError):
    exit_code = 3


class NotPositiveDefinite(NumericalError):
    pass


class NotNested(NumericalError):
    pass


class CollinearWithLambda(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class AllRepsFailed(NumericalError):
    pass
