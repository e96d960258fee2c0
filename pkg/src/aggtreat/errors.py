"""Exception hierarchy shared by every module.

Validation-type errors (bad input files, bad arguments) map to CLI exit
code 1; computation errors (degenerate designs, empty levels) map to 2.
"""


class AggTreatError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ValidationError(AggTreatError, ValueError):
    exit_code = 1


class SchemaError(ValidationError):
    """A declared column is missing from the input."""


class ParseError(ValidationError):
    """A value could not be parsed (e.g. non-numeric outcome)."""


class ContractError(AggTreatError, ValueError):
    """Arguments violate an operation's precondition (e.g. level mismatch)."""

    exit_code = 1


class LevelError(AggTreatError):
    """A required aggregate level is absent or empty."""


class DegenerateError(AggTreatError):
    """The design does not identify the requested quantity (e.g. Var(D) = 0)."""


class SpecError(ValidationError):
    """A simulation scenario is internally inconsistent."""
