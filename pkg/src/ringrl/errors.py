"""Exception types shared across the package."""


class NoWinnerError(RuntimeError):
    """Raised when a settled ring carries no activity to decode."""


class EpisodeFinishedError(RuntimeError):
    """Raised when stepping an environment whose episode already ended."""
