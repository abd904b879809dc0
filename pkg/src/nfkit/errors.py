"""Exception types raised across the library.

Everything derives from :class:`NfkitError` so callers (and the CLI exit-code
mapping) can distinguish library failures from programming errors.
"""


class NfkitError(Exception):
    """Base class for all library-specific failures."""


class NonPositiveSemidefinite(NfkitError):
    """A covariance matrix is not positive semidefinite within tolerance."""


class OutOfDomain(NfkitError):
    """A tabulated kernel was queried off its grid."""


class DimensionMismatch(NfkitError):
    """Operands declare incompatible variable counts or grid sizes."""


class DegreeCapExceeded(NfkitError):
    """A Gaussian moment of higher total degree than the configured cap was requested."""


class HistoryTooShort(NfkitError):
    """A response-moment history does not cover the requested time."""


class DegenerateVariance(NfkitError):
    """A Gaussian density was requested with non-positive variance."""


class Instability(NfkitError):
    """The pdf march lost more mass in one step than the stability monitor allows."""


class GridMismatch(NfkitError):
    """Two discretized densities live on different grids."""


class Blowup(NfkitError):
    """A simulated path left the configured magnitude guard."""


class ParseError(NfkitError):
    """A scenario file is structurally unreadable (syntax, missing sections)."""


class ValidationError(NfkitError):
    """A scenario parsed but violates value constraints.

    Carries every violation found, not just the first.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
