"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A configuration file or constructor argument is invalid."""


class PreconditionError(ValueError):
    """An operation was called with data violating its contract."""


class SolveError(RuntimeError):
    """A linear solve or eigenvalue extraction failed or did not converge."""


class RefusalError(RuntimeError):
    """The requested computation falls outside the regime the method supports."""
