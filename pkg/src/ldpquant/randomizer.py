"""One-bit locally randomized comparison and the r <-> epsilon conversion.

A user holding a private value ``x`` is asked whether ``x > q``. With
probability ``r`` the honest answer is returned, otherwise a fair coin.
The mechanism is ``epsilon``-LDP with ``epsilon = log((1 + r) / (1 - r))``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "PrivacyLevel",
    "epsilon_from_rate",
    "rate_from_epsilon",
    "response_probability",
    "lrc_respond",
    "lrc_respond_batch",
]


def epsilon_from_rate(r):
    """Privacy budget of the randomizer with truthful response rate ``r``."""
    r = float(r)
    if not 0.0 <= r < 1.0:
        raise DomainError(f"truthful response rate must lie in [0, 1), got {r}")
    return math.log((1.0 + r) / (1.0 - r))


def rate_from_epsilon(eps):
    """Inverse of :func:`epsilon_from_rate`, i.e. ``tanh(eps / 2)``."""
    eps = float(eps)
    if not eps >= 0.0:
        raise DomainError(f"epsilon must be non-negative, got {eps}")
    return math.tanh(eps / 2.0)


@dataclass(frozen=True)
class PrivacyLevel:
    """Truthful response rate ``r`` of the randomizer.

    ``r = 1`` (no privacy at all) is refused unless ``no_privacy=True`` is
    passed explicitly; it exists only for sanity runs in tests.
    """

    r: float
    no_privacy: bool = False

    def __post_init__(self):
        r = float(self.r)
        if not math.isfinite(r):
            raise DomainError(f"truthful response rate must be finite, got {r}")
        if self.no_privacy:
            if r != 1.0:
                raise DomainError("no_privacy requires r = 1")
        elif not 0.0 <= r < 1.0:
            raise DomainError(
                f"truthful response rate must lie in [0, 1), got {r}; "
                "pass no_privacy=True for the non-private r = 1 path"
            )
        object.__setattr__(self, "r", r)

    @classmethod
    def from_epsilon(cls, eps):
        return cls(rate_from_epsilon(eps))

    @classmethod
    def non_private(cls):
        return cls(1.0, no_privacy=True)

    @property
    def epsilon(self):
        if self.no_privacy:
            return math.inf
        return epsilon_from_rate(self.r)


def _rate(level):
    return level.r if isinstance(level, PrivacyLevel) else PrivacyLevel(level).r


def response_probability(level, truth_bit):
    """Probability that the randomizer outputs 1 given the honest bit."""
    r = _rate(level)
    return (1.0 + r) / 2.0 if truth_bit else (1.0 - r) / 2.0


def lrc_respond(threshold, level, x, rng):
    """Answer the inquiry "is x > threshold?" through the randomizer.

    Exactly two uniforms are drawn from ``rng`` on every call, before any
    branching on the private value, so neither timing nor stream position
    depends on ``x``. Ties ``x == threshold`` count as "not greater".

    Parameters
    ----------
    threshold : float
        Inquiry point chosen by the curator.
    level : PrivacyLevel or float
        Truthful response rate.
    x : float
        The user's private value. Never leaves this function.
    rng : numpy.random.Generator
        Injected random stream.

    Returns
    -------
    int
        The released bit, 0 or 1.
    """
    threshold = float(threshold)
    x = float(x)
    if not (math.isfinite(threshold) and math.isfinite(x)):
        raise DomainError("inquiry threshold and private value must be finite")
    r = _rate(level)
    u = rng.random() < r
    v = rng.random() < 0.5
    if u:
        return int(x > threshold)
    return int(v)


def lrc_respond_batch(threshold, level, x, rng):
    """Vectorised :func:`lrc_respond` for many users at fixed or per-user
    thresholds.

    Consumes the stream exactly as ``len(x)`` successive scalar calls would,
    so the outputs are identical.
    """
    x = np.asarray(x, dtype=np.float64)
    threshold = np.broadcast_to(np.asarray(threshold, dtype=np.float64), x.shape)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(threshold))):
        raise DomainError("inquiry thresholds and private values must be finite")
    r = _rate(level)
    uv = rng.random(2 * x.size).reshape(x.shape + (2,))
    return np.where(uv[..., 0] < r, x > threshold, uv[..., 1] < 0.5).astype(np.int8)
