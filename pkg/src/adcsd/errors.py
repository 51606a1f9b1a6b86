"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: ConfigError -> 1, DataFormatError and
ShapeError -> 2, ContractError and DegenerateInputError -> 3.
"""


class AdcsdError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AdcsdError):
    """Invalid configuration value or unusable combination of options."""


class ShapeError(AdcsdError):
    """Dimension mismatch between tensors, vectors or parameter blocks."""


class DataFormatError(AdcsdError):
    """Malformed dataset, predictions or checkpoint file.

    Carries the 1-based line number of the offending line when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ContractError(AdcsdError):
    """Numerical contract violation: non-finite loss or gradient, stale tape."""


class DegenerateInputError(AdcsdError):
    """Input outside an operation's hypotheses (e.g. zero observed cells)."""
