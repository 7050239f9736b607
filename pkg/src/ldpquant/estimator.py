"""Online private quantile estimation by stochastic approximation.

Each round the curator asks one fresh user whether their value exceeds the
current iterate ``q`` and moves ``q`` up or down by a step proportional to
``d_n``. The reported estimate is the running mean of the iterates. Two
extra running sums, ``va`` and ``vb``, make the self-normalizer for
confidence intervals available in constant space.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, DomainError, NoDataError
from .randomizer import PrivacyLevel

__all__ = [
    "StepSchedule",
    "EstimatorConfig",
    "EstimatorState",
    "QuantileEstimator",
    "step_size",
    "init",
    "update",
    "estimate",
    "draw_randomizer_uniforms",
    "iterate_path",
]


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes ``d_n = a / (n**beta + c)``.

    ``beta`` must lie in (1/2, 1) so that the steps sum to infinity while
    their squares do not.
    """

    a: float = 2.0
    beta: float = 0.51
    c: float = 100.0

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError(f"step scale a must be positive, got {self.a}")
        if not 0.5 < self.beta < 1.0:
            raise ConfigError(f"step exponent beta must lie in (1/2, 1), got {self.beta}")
        if not (math.isfinite(self.c) and self.c >= 0):
            raise ConfigError(f"step offset c must be non-negative, got {self.c}")

    def __call__(self, n):
        return step_size(self, n)


def step_size(schedule, n):
    if n < 1:
        raise DomainError(f"step index starts at 1, got {n}")
    return schedule.a / (float(n) ** schedule.beta + schedule.c)


@dataclass(frozen=True)
class EstimatorConfig:
    tau: float = 0.5
    level: PrivacyLevel = field(default_factory=lambda: PrivacyLevel(0.5))
    schedule: StepSchedule = field(default_factory=StepSchedule)
    q0: float = 0.0
    compensated: bool = False

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"target quantile tau must lie in (0, 1), got {self.tau}")
        if not math.isfinite(self.q0):
            raise ConfigError(f"initial iterate must be finite, got {self.q0}")
        if not isinstance(self.level, PrivacyLevel):
            object.__setattr__(self, "level", PrivacyLevel(self.level))

    @property
    def up(self):
        r, tau = self.level.r, self.tau
        return (1.0 - r + 2.0 * tau * r) / 2.0

    @property
    def down(self):
        r, tau = self.level.r, self.tau
        return (1.0 + r - 2.0 * tau * r) / 2.0


@dataclass(frozen=True)
class EstimatorState:
    """Snapshot of the five running scalars.

    ``va_comp``/``vb_comp`` carry the compensation terms when compensated
    summation is on and are zero otherwise.
    """

    n: int = 0
    q: float = 0.0
    qbar: float = 0.0
    va: float = 0.0
    vb: float = 0.0
    va_comp: float = 0.0
    vb_comp: float = 0.0

    def to_json(self):
        record = {"n": self.n, "q": self.q, "Qbar": self.qbar, "va": self.va, "vb": self.vb}
        if self.va_comp or self.vb_comp:
            record["va_comp"] = self.va_comp
            record["vb_comp"] = self.vb_comp
        return json.dumps(record)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(
            n=int(d["n"]),
            q=float(d["q"]),
            qbar=float(d["Qbar"]),
            va=float(d["va"]),
            vb=float(d["vb"]),
            va_comp=float(d.get("va_comp", 0.0)),
            vb_comp=float(d.get("vb_comp", 0.0)),
        )

    # Inference reads the compensated totals through these.
    @property
    def va_total(self):
        return self.va + self.va_comp

    @property
    def vb_total(self):
        return self.vb + self.vb_comp

    def estimate(self):
        if self.n < 1:
            raise NoDataError("no observations processed yet")
        return self.qbar


def _neumaier(total, comp, term):
    s = total + term
    if abs(total) >= abs(term):
        comp += (total - s) + term
    else:
        comp += (term - s) + total
    return s, comp


class QuantileEstimator:
    """Mutable online estimator; ``q`` is always the next inquiry threshold."""

    def __init__(self, config=None, state=None):
        self.config = config if config is not None else EstimatorConfig()
        if state is None:
            state = EstimatorState(q=self.config.q0)
        self.n = state.n
        self.q = state.q
        self.qbar = state.qbar
        self.va = state.va
        self.vb = state.vb
        self._va_c = state.va_comp
        self._vb_c = state.vb_comp

    @property
    def state(self):
        return EstimatorState(self.n, self.q, self.qbar, self.va, self.vb, self._va_c, self._vb_c)

    @property
    def va_total(self):
        return self.va + self._va_c

    @property
    def vb_total(self):
        return self.vb + self._vb_c

    def update(self, bit):
        """Fold in one randomized response about the current threshold."""
        cfg = self.config
        sched = cfg.schedule
        n = self.n + 1
        d = sched.a / (float(n) ** sched.beta + sched.c)
        if bit:
            q = self.q + cfg.up * d
        else:
            q = self.q - cfg.down * d
        qbar = self.qbar + (q - self.qbar) / n
        nn = float(n * n)
        ta = nn * qbar * qbar
        tb = nn * qbar
        if cfg.compensated:
            self.va, self._va_c = _neumaier(self.va, self._va_c, ta)
            self.vb, self._vb_c = _neumaier(self.vb, self._vb_c, tb)
        else:
            self.va = self.va + ta
            self.vb = self.vb + tb
        self.n, self.q, self.qbar = n, q, qbar
        return q

    def estimate(self):
        if self.n < 1:
            raise NoDataError("no observations processed yet")
        return self.qbar

    def run(self, x, u, v):
        """Process many rounds at once from pre-drawn randomness.

        ``x`` are the private values in arrival order; ``u`` and ``v`` are
        the two uniforms each user's randomizer draws. Bit-identical to
        calling :func:`~ldpquant.randomizer.lrc_respond` and
        :meth:`update` round by round with the same draws.
        """
        x = np.ascontiguousarray(x, dtype=np.float64)
        u = np.ascontiguousarray(u, dtype=np.float64)
        v = np.ascontiguousarray(v, dtype=np.float64)
        if not (x.shape == u.shape == v.shape) or x.ndim != 1:
            raise ValueError("x, u and v must be 1-d arrays of equal length")
        cfg = self.config
        s = cfg.schedule
        out = _kernels.run_rounds(
            x, u, v, cfg.level.r, cfg.tau, s.a, s.beta, s.c,
            self.n, self.q, self.qbar, self.va, self.vb, self._va_c, self._vb_c,
            cfg.compensated,
        )
        self.n, self.q, self.qbar, self.va, self.vb, self._va_c, self._vb_c = out
        self.n = int(self.n)
        return self

    def to_json(self):
        return self.state.to_json()

    def __repr__(self):
        return f"QuantileEstimator(n={self.n}, q={self.q:.6g}, qbar={self.qbar:.6g})"


def init(config=None):
    return QuantileEstimator(config)


def update(estimator, bit):
    """Functional-style wrapper returning an updated copy."""
    new = QuantileEstimator(estimator.config, estimator.state)
    new.update(bit)
    return new


def estimate(state):
    return state.estimate()


def draw_randomizer_uniforms(rng, n):
    """The ``(u, v)`` uniforms that ``n`` successive randomizer calls on
    ``rng`` would consume."""
    uv = rng.random(2 * n)
    return uv[0::2], uv[1::2]


def iterate_path(config, x, u, v):
    """All iterates ``q_1..q_n`` of a fresh run (for offline normalizers)."""
    s = config.schedule
    return _kernels.run_rounds_traced(
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(u, dtype=np.float64),
        np.ascontiguousarray(v, dtype=np.float64),
        config.level.r, config.tau, s.a, s.beta, s.c, config.q0,
    )
