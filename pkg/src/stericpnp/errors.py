"""Exception taxonomy shared across the package.

Three failure families matter to callers (and map onto CLI exit codes):
configuration problems (bad parameters, malformed config files), numerical
failures (a solver that did not converge, a blown-up integration), and
model-regime errors (asking for an onset that does not exist, or a
construction outside its validity window).
"""


class StericPnpError(Exception):
    """Base class for all package errors."""


class ParameterError(StericPnpError):
    """Invalid model parameters, domain, grid, or config input."""


class NumericsError(StericPnpError):
    """A numerical procedure failed: no convergence, blow-up, stalled step."""


class RegimeError(StericPnpError):
    """The request is outside the model regime where the object exists."""


class NoOnsetError(RegimeError):
    """No finite-wavenumber instability onset exists for these parameters."""
