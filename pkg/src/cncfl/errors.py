"""Exception hierarchy shared by every module."""

from __future__ import annotations


class InvalidInputError(ValueError):
    """An argument violates an operation's contract."""


class IdxParseError(InvalidInputError):
    """An IDX file is malformed. ``field`` names the offending header field."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class SampleRedrawError(InvalidInputError):
    """The drawn tier is too small for the requested sample; retry with a fresh substream."""


class NoFeasiblePathError(InvalidInputError):
    """No Hamiltonian path exists over the reachable edges."""


class InvalidPathError(InvalidInputError):
    """A path uses an unreachable hop or is not a permutation."""


class ConfigError(ValueError):
    """Experiment configuration is contradictory, incomplete or unknown."""
