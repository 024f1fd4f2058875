"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2,
MissingArtifactError -> 3, NumericalError -> 4.
"""


class AdvrepError(Exception):
    """Base class for all package errors."""


class ConfigError(AdvrepError, ValueError):
    """Invalid or incomplete run configuration."""


class MissingArtifactError(AdvrepError, FileNotFoundError):
    """A pipeline stage was invoked before its upstream artifact exists."""


class NumericalError(AdvrepError, ArithmeticError):
    """A non-finite value appeared where the contract forbids it."""


class DimensionError(AdvrepError, ValueError):
    """Tensor shapes do not line up for the requested operation."""


class ContractError(AdvrepError, ValueError):
    """A documented precondition was violated by the caller."""


class LabelError(AdvrepError, ValueError):
    """A label or class index is outside its allowed range."""


class BatchSizeError(AdvrepError, ValueError):
    """Batch too small for the requested mode (batchnorm needs n >= 2)."""


class ParseError(AdvrepError, ValueError):
    """Malformed input file; message names the offending row/column."""


class StratificationError(AdvrepError, ValueError):
    """A class is too small to be split across the requested folds."""
