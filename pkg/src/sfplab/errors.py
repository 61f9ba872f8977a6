"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: validation-type errors exit 2,
resource errors exit 3, numeric errors exit 4.
"""


class SFPError(Exception):
    exit_code = 1
    kind = "error"


class DomainError(SFPError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""

    exit_code = 2
    kind = "domain"


class PreconditionError(SFPError, ValueError):
    """Parameters fall outside the regime an operation is defined for."""

    exit_code = 2
    kind = "precondition"


class SizeError(SFPError, ValueError):
    exit_code = 2
    kind = "size"


class SpecError(SFPError, ValueError):
    exit_code = 2
    kind = "validation"


class ResourceError(SFPError, RuntimeError):
    """A configured budget (pair count, exhaustive-search cap) was exceeded."""

    exit_code = 3
    kind = "resource"


class NumericError(SFPError, ArithmeticError):
    exit_code = 4
    kind = "numeric"

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate
