"""Exception hierarchy shared across the package."""


class VwkdeError(Exception):
    """Base class for all errors raised by this package."""


class InvalidDataError(VwkdeError):
    """Input samples are malformed (non-finite values, bad shapes)."""


class InvalidConfigError(VwkdeError):
    """A parameter or configuration value is outside its valid range."""


class InsufficientDataError(VwkdeError):
    """Too few samples for the requested operation."""


class DegenerateModelError(VwkdeError):
    """A fitted covariance is not positive definite, even after shrinkage."""


class DegenerateDirectionError(VwkdeError):
    """The two class means coincide, so the mean-difference direction is undefined."""


class NumericFailureError(VwkdeError):
    """A linear solve or other numeric routine failed; message carries diagnostics."""


class UndefinedPosteriorError(VwkdeError):
    """Both class densities underflowed to zero at the query point."""


class PgmParseError(VwkdeError):
    """A PGM file is malformed; message reports the offending byte offset."""


class DegenerateFeaturesError(VwkdeError):
    """Patch feature covariance is rank deficient; whitening is undefined."""
