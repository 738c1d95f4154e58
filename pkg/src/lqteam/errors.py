"""Exception hierarchy shared by every module."""


class LqTeamError(Exception):
    """Base class for package errors."""


class DimensionError(LqTeamError, ValueError):
    """Array shapes or sizes do not agree."""


class SpecError(LqTeamError, ValueError):
    """A team specification violates one of its invariants.

    ``field`` names the offending entry (``"Q"``, ``"W"``, ``"obs_dims"``...).
    """

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class SingularSystemError(LqTeamError, ArithmeticError):
    """The linear-policy normal equations are numerically singular."""


class ConvergenceError(LqTeamError, ArithmeticError):
    """Person-by-person iteration hit ``max_iters`` without settling."""

    def __init__(self, message, last_change, policy=None):
        self.last_change = last_change
        self.policy = policy
        super().__init__(message)


class InstanceFormatError(LqTeamError, ValueError):
    """Malformed instance or policy text file."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class ConfigError(LqTeamError, ValueError):
    """Invalid experiment configuration."""
