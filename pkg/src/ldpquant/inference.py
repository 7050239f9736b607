"""Confidence intervals for the averaged quantile estimate.

The self-normalized interval needs only the estimator's running sums:

    N_n = (va - 2 Q_n vb + Q_n^2 n(n+1)(2n+1)/6) / n
        = n^{-1} sum_k (S_k - k Q_n)^2,           S_k = q_1 + ... + q_k

and half-width ``U * sqrt(N_n) / n`` for a tabulated critical value ``U``.
The Wald ("infeasible") interval needs the density at the quantile and is
kept as a baseline.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigError, InfiniteVarianceError, NoDataError
from .pivot import PivotKind, PivotTable
from .randomizer import PrivacyLevel

__all__ = [
    "Interval",
    "self_normalizer",
    "sn_halfwidth",
    "sn_interval",
    "offline_normalizer",
    "sn_interval_offline",
    "asymptotic_sd",
    "infeasible_interval",
]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    level: float = None
    degenerate: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"interval bounds out of order: ({self.lo}, {self.hi})")

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, value):
        return self.lo <= value <= self.hi


def _totals(state):
    va = getattr(state, "va_total", state.va)
    vb = getattr(state, "vb_total", state.vb)
    return va, vb


def sn_normalizer_from_sums(n, qbar, va, vb):
    """Vectorised closed form; accepts arrays of final states."""
    n = np.asarray(n, dtype=np.float64)
    sum_k2 = n * (n + 1.0) * (2.0 * n + 1.0) / 6.0
    val = (va - 2.0 * qbar * vb + qbar * qbar * sum_k2) / n
    # Cancellation can leave a tiny negative residue.
    return np.maximum(val, 0.0)


def self_normalizer(state):
    """``N_n`` from an estimator (or snapshot) in O(1) work."""
    if state.n < 1:
        raise NoDataError("self-normalizer needs at least one observation")
    va, vb = _totals(state)
    return float(sn_normalizer_from_sums(state.n, state.qbar, va, vb))


def sn_halfwidth(n, qbar, va, vb, U):
    return U * np.sqrt(sn_normalizer_from_sums(n, qbar, va, vb)) / np.asarray(n, dtype=np.float64)


def _critical(U, alpha, kind):
    """Resolve ``U`` given either as a number or as a pivot table."""
    if isinstance(U, PivotTable):
        if alpha is None:
            raise ConfigError("alpha is required when a pivot table is supplied")
        return U.critical_value(alpha, kind=kind), 1.0 - alpha
    U = float(U)
    if not U >= 0.0:
        raise ConfigError(f"critical value must be non-negative, got {U}")
    return U, (None if alpha is None else 1.0 - alpha)


def _centered(center, half, level):
    degenerate = half == 0.0
    if degenerate:
        warnings.warn("self-normalizer is zero; returning a zero-width interval", RuntimeWarning,
                      stacklevel=3)
    return Interval(center - half, center + half, level, degenerate)


def sn_interval(state, U, alpha=None):
    """Self-normalized interval ``Q_n -/+ U sqrt(N_n) / n``.

    ``U`` is the two-sided critical value ``U_{1-alpha/2}`` or a
    squared-integral :class:`~ldpquant.pivot.PivotTable` (then ``alpha``
    picks the entry).
    """
    U, level = _critical(U, alpha, PivotKind.SQUARED_INTEGRAL)
    nn = self_normalizer(state)
    half = U * math.sqrt(nn) / state.n
    return _centered(state.qbar, half, level)


def _deviations(qs):
    qs = np.asarray(qs, dtype=np.float64)
    if qs.ndim != 1 or qs.size < 1:
        raise NoDataError("trajectory must hold at least one iterate")
    n = qs.size
    s = np.cumsum(qs)
    qn = s[-1] / n
    return s - np.arange(1, n + 1) * qn, qn


def offline_normalizer(qs, kind=PivotKind.SQUARED_INTEGRAL):
    """Normalizers that need the stored iterate path ``q_1..q_n``.

    squared_integral  n^{-1} sum_k (S_k - k Q_n)^2
    sup_abs           max_k |S_k - k Q_n|
    abs_integral      n^{-1} sum_k |S_k - k Q_n|
    """
    kind = PivotKind(kind)
    dev, _ = _deviations(qs)
    if kind is PivotKind.SQUARED_INTEGRAL:
        return float(np.mean(dev * dev))
    if kind is PivotKind.SUP_ABS:
        return float(np.max(np.abs(dev)))
    return float(np.mean(np.abs(dev)))


def sn_interval_offline(qs, kind, U, alpha=None):
    """Self-normalized interval from a stored path, for any pivot kind.

    The squared-integral case reproduces :func:`sn_interval`; the other two
    use half-width ``U * N / n``.
    """
    kind = PivotKind(kind)
    U, level = _critical(U, alpha, kind)
    dev, qn = _deviations(qs)
    n = dev.size
    if kind is PivotKind.SQUARED_INTEGRAL:
        half = U * math.sqrt(float(np.mean(dev * dev))) / n
    elif kind is PivotKind.SUP_ABS:
        half = U * float(np.max(np.abs(dev))) / n
    else:
        half = U * float(np.mean(np.abs(dev))) / n
    return _centered(float(qn), half, level)


def asymptotic_sd(tau, level, density_at_q, n=1):
    """Standard deviation of ``Q_n`` implied by its normal limit."""
    r = level.r if isinstance(level, PrivacyLevel) else float(level)
    if r == 0.0:
        raise InfiniteVarianceError("r = 0 releases pure noise; the variance is infinite")
    if not density_at_q > 0.0:
        raise ConfigError(f"density at the quantile must be positive, got {density_at_q}")
    if n < 1:
        raise NoDataError("n must be at least 1")
    return math.sqrt(1.0 - r * r * (2.0 * tau - 1.0) ** 2) / (2.0 * r * density_at_q * math.sqrt(n))


def infeasible_interval(state, tau, level, density_estimate, alpha=0.05):
    """Wald interval using a supplied density value at the quantile."""
    if state.n < 1:
        raise NoDataError("no observations processed yet")
    z = float(ndtri(1.0 - alpha / 2.0))
    half = z * asymptotic_sd(tau, level, density_estimate, state.n)
    return Interval(state.qbar - half, state.qbar + half, 1.0 - alpha)
