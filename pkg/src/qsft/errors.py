class QSFTError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(QSFTError, ValueError):
    """Bad arguments, mismatched dimensions or an invalid configuration."""


class DomainError(QSFTError, ValueError):
    """Input outside the mathematical domain of an operation."""


class ConstructionError(QSFTError):
    """A generated object failed its own validation."""


class BudgetError(QSFTError):
    """A requested computation exceeds the configured enumeration budget."""


class OracleError(QSFTError):
    """A function oracle could not produce a value.

    ``index`` holds the digit string of the offending query when known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
