"""Exception and warning types shared across the package."""


class HdpaError(Exception):
    """Base class for errors raised by this package."""


class DomainError(HdpaError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(DomainError):
    """Too few observations for the requested computation."""


class ContractViolation(HdpaError, ValueError):
    """An input breaks a structural contract (e.g. a non-symmetric matrix)."""


class AssumptionViolation(DomainError):
    """The spike strength does not exceed the identifiability threshold."""


class DataParseError(HdpaError, ValueError):
    """A data file could not be parsed as a numeric matrix."""


class IdentifiabilityWarning(UserWarning):
    """Emitted when a spike sits at or below the BBP threshold."""


class DegenerateIndexWarning(UserWarning):
    """Emitted when a requested eigenvalue index had to be replaced."""
