"""Exception hierarchy for gw_border.

Every error carries the exit code the CLI reports for it.
"""


class GWBorderError(Exception):
    """Base class for all gw_border failures."""

    exit_code: int = 1


class InvalidInputError(GWBorderError):
    """A parameter or input file fails validation."""

    exit_code = 2


class ModeMismatchError(InvalidInputError):
    """Exact and floating-point series were combined."""


class TruncationError(InvalidInputError):
    """A truncation order is negative or too small for the request."""


class DomainError(InvalidInputError):
    """An argument lies outside the domain of the function."""


class NotInKStarError(InvalidInputError):
    """The family has no finite apex (degree 1 or mean never reaches 1)."""


class ResidueClassError(InvalidInputError):
    """The requested size n is not congruent to 1 modulo Q."""

    def __init__(self, n: int, q: int):
        self.n = n
        self.q = q
        super().__init__(
            f"n={n} is outside the valid class n ≡ 1 (mod Q={q}); no trees of this size exist"
        )


class UnsupportedError(InvalidInputError):
    """The operation is not available for this family."""


class CrossCheckMismatchError(GWBorderError):
    """The enumeration oracle disagrees with the exact series."""

    exit_code = 3


class InsufficientAcceptanceError(GWBorderError):
    """The Monte Carlo attempt budget ran out before enough trees were accepted."""

    exit_code = 4


class InternalError(GWBorderError):
    """An internal consistency check failed."""

    exit_code = 1
