"""Exception types shared across the toolkit."""


class ActukitError(Exception):
    """Base class for every error raised by this package."""


class DomainError(ActukitError, ValueError):
    """A numeric argument is outside its physically meaningful domain."""


class ConfigError(ActukitError, ValueError):
    """Invalid configuration, signal specification, or command options."""


class FormatError(ActukitError, ValueError):
    """Malformed data file (CSV timebase, header, or value errors)."""


class AlignmentError(ActukitError, ValueError):
    """Series or frequency grids that must match do not."""


class EstimationError(ActukitError, RuntimeError):
    """An estimate cannot be formed from the supplied data."""


class FitError(EstimationError):
    """A parametric fit had no usable data or failed to converge."""
