"""
Errors
Exception hierarchy for the translator package.
Every error carries a short upper-case code so the command line can report
failures as one machine-parseable line.
"""


class TranslatorError(Exception):
    """Base class for all translator errors."""

    code = "ERROR"


class ShapeError(TranslatorError, ValueError):
    """Tensor dimensions do not line up."""

    code = "SHAPE"


class ContractError(TranslatorError, ValueError):
    """A precondition of an operation was violated."""

    code = "CONTRACT"


class VocabIndexError(TranslatorError, IndexError):
    """A token id falls outside the embedding table."""

    code = "INDEX"


class NumericalError(TranslatorError, ArithmeticError):
    """NaN or Inf appeared where finite values are required."""

    code = "NUMERIC"


class ParseError(TranslatorError, ValueError):
    """A dataset or configuration line could not be parsed."""

    code = "PARSE"


class SchemaError(TranslatorError, ValueError):
    """Data parsed but does not match the expected schema."""

    code = "SCHEMA"


class TruncationError(TranslatorError, ValueError):
    """A sentence is longer than the configured maximum."""

    code = "TRUNCATION"


class FormatError(TranslatorError, ValueError):
    """A checkpoint file is corrupt, truncated or of another version."""

    code = "FORMAT"


class ConfigError(TranslatorError, ValueError):
    """A configuration value is out of range."""

    code = "CONFIG"


class UsageError(TranslatorError, ValueError):
    """Invalid combination of command-line options."""

    code = "USAGE"


def error_code(exc: BaseException) -> str:
    """Return the machine-parseable code for any exception."""
    if isinstance(exc, TranslatorError):
        return exc.code
    if isinstance(exc, FileNotFoundError):
        return "FILE"
    return "INTERNAL"
