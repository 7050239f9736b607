"""Exception types raised across the package."""


class LDPQuantError(Exception):
    """Base class for all package errors."""


class DomainError(LDPQuantError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(LDPQuantError, ValueError):
    """An estimator, pivot or experiment configuration is invalid."""


class NoDataError(LDPQuantError, RuntimeError):
    """A statistic was requested before any observation was processed."""


class InfiniteVarianceError(LDPQuantError, ValueError):
    """Raised when r = 0: pure-noise responses carry no signal."""


class DecodeError(LDPQuantError, ValueError):
    """A wire frame could not be decoded.

    ``offset`` is the byte position at which decoding failed.
    """

    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class TruncatedSessionError(LDPQuantError, RuntimeError):
    """The data stream ran out before the requested number of rounds.

    The state reached so far is kept on ``partial``.
    """

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


class RoundAbortedError(LDPQuantError, ConnectionError):
    """A protocol round failed after the user's datum was consumed."""


class MissingPivotError(ConfigError):
    """No pivot table holds the requested critical value."""
