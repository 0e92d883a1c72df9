"""Exception types shared across the package."""


class DegenerateInputError(ValueError):
    """Raised when an operation receives too little data to be meaningful."""


class InvalidThresholdError(ValueError):
    """Raised when a threshold interval is empty or inverted."""


class StalePoseError(LookupError):
    """Raised when no logged pose exists close enough to a requested time."""


class EmptyMapError(ValueError):
    """Raised when a field map with no records is queried."""


class InfeasibleSpecError(ValueError):
    """Raised when a survey specification cannot be physically executed."""


class InputDataError(Exception):
    """Raised for missing or malformed input logs (CLI exit code 1)."""


class InvariantViolationError(Exception):
    """Raised when a runtime invariant breaks, e.g. a covariance loses
    positive semi-definiteness (CLI exit code 2)."""
