"""Data sources with exact quantile and density oracles.

Four families: Normal, Uniform, Cauchy and PERT on (-1, 1) with density
``0.625 (1 - x)(1 + x)^3``, which is ``2 B - 1`` for ``B ~ Beta(4, 2)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr, ndtri

from .errors import ConfigError, DomainError

__all__ = ["Distribution", "normal", "uniform", "cauchy", "pert", "from_name"]

_KINDS = ("normal", "uniform", "cauchy", "pert")


@dataclass(frozen=True)
class Distribution:
    """A named family with its parameters.

    ``jitter`` adds independent Uniform(-jitter, jitter) noise to samples,
    which breaks ties for data with atoms. It is off by default and does not
    enter the quantile/density oracles.
    """

    kind: str
    params: tuple = ()
    jitter: float = 0.0
    _p: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise ConfigError(f"unknown distribution {self.kind!r}; choose from {_KINDS}")
        object.__setattr__(self, "kind", kind)
        p = tuple(float(v) for v in self.params)
        if kind == "normal":
            p = p or (0.0, 1.0)
            if len(p) != 2 or not p[1] > 0:
                raise ConfigError("normal needs (mean, sd) with sd > 0")
        elif kind == "uniform":
            p = p or (-1.0, 1.0)
            if len(p) != 2 or not p[0] < p[1]:
                raise ConfigError("uniform needs (lo, hi) with lo < hi")
        elif kind == "cauchy":
            p = p or (0.0, 1.0)
            if len(p) != 2 or not p[1] > 0:
                raise ConfigError("cauchy needs (loc, scale) with scale > 0")
        elif p:
            raise ConfigError("pert takes no parameters")
        if not self.jitter >= 0:
            raise ConfigError("jitter must be non-negative")
        object.__setattr__(self, "params", p)

    @property
    def name(self):
        return self.kind

    def sample(self, rng, size=None):
        k, p = self.kind, self.params
        if k == "normal":
            x = rng.normal(p[0], p[1], size)
        elif k == "uniform":
            x = rng.uniform(p[0], p[1], size)
        elif k == "cauchy":
            x = p[0] + p[1] * rng.standard_cauchy(size)
        else:
            x = 2.0 * rng.beta(4.0, 2.0, size) - 1.0
        if self.jitter:
            x = x + rng.uniform(-self.jitter, self.jitter, size)
        return x

    def cdf(self, x):
        k, p = self.kind, self.params
        x = np.asarray(x, dtype=np.float64)
        if k == "normal":
            out = ndtr((x - p[0]) / p[1])
        elif k == "uniform":
            out = np.clip((x - p[0]) / (p[1] - p[0]), 0.0, 1.0)
        elif k == "cauchy":
            out = 0.5 + np.arctan((x - p[0]) / p[1]) / math.pi
        else:
            u = np.clip((1.0 + x) / 2.0, 0.0, 1.0)
            out = u**4 * (5.0 - 4.0 * u)
        return out[()] if out.ndim == 0 else out

    def density(self, x):
        k, p = self.kind, self.params
        x = np.asarray(x, dtype=np.float64)
        if k == "normal":
            z = (x - p[0]) / p[1]
            out = np.exp(-0.5 * z * z) / (p[1] * math.sqrt(2.0 * math.pi))
        elif k == "uniform":
            out = np.where((x >= p[0]) & (x <= p[1]), 1.0 / (p[1] - p[0]), 0.0)
        elif k == "cauchy":
            z = (x - p[0]) / p[1]
            out = 1.0 / (math.pi * p[1] * (1.0 + z * z))
        else:
            inside = (x > -1.0) & (x < 1.0)
            out = np.where(inside, 0.625 * (1.0 - x) * (1.0 + x) ** 3, 0.0)
        out = np.asarray(out, dtype=np.float64)
        return out[()] if out.ndim == 0 else out

    def quantile(self, tau):
        tau = float(tau)
        if not 0.0 < tau < 1.0:
            raise DomainError(f"quantile level must lie in (0, 1), got {tau}")
        k, p = self.kind, self.params
        if k == "normal":
            return p[0] + p[1] * float(ndtri(tau))
        if k == "uniform":
            return p[0] + tau * (p[1] - p[0])
        if k == "cauchy":
            return p[0] + p[1] * math.tan(math.pi * (tau - 0.5))
        u = brentq(lambda s: s**4 * (5.0 - 4.0 * s) - tau, 0.0, 1.0, xtol=1e-12 / 2)
        return 2.0 * u - 1.0

    def shifted(self, c):
        """Location-shifted copy (PERT excluded: its support is fixed)."""
        if self.kind == "pert":
            raise ConfigError("pert has a fixed support and cannot be shifted")
        if self.kind == "uniform":
            return Distribution("uniform", (self.params[0] + c, self.params[1] + c), self.jitter)
        return Distribution(self.kind, (self.params[0] + c, self.params[1]), self.jitter)

    def to_dict(self):
        return {"name": self.kind, "params": list(self.params), "jitter": self.jitter}


def normal(mean=0.0, sd=1.0):
    return Distribution("normal", (mean, sd))


def uniform(lo=-1.0, hi=1.0):
    return Distribution("uniform", (lo, hi))


def cauchy(loc=0.0, scale=1.0):
    return Distribution("cauchy", (loc, scale))


def pert():
    return Distribution("pert")


def from_name(name, params=(), jitter=0.0):
    return Distribution(name, tuple(params or ()), jitter)
