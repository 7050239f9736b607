"""Online quantile estimation under local differential privacy with
self-normalized confidence intervals."""

from .distributions import Distribution, cauchy, normal, pert, uniform
from .errors import (
    ConfigError,
    DecodeError,
    DomainError,
    InfiniteVarianceError,
    LDPQuantError,
    MissingPivotError,
    NoDataError,
    RoundAbortedError,
    TruncatedSessionError,
)
from .estimator import EstimatorConfig, EstimatorState, QuantileEstimator, StepSchedule, step_size
from .inference import (
    Interval,
    asymptotic_sd,
    infeasible_interval,
    offline_normalizer,
    self_normalizer,
    sn_interval,
    sn_interval_offline,
)
from .pivot import PivotKind, PivotTable, build_pivot_table, pivot_quantile
from .protocol import run_session, serve, user_client
from .randomizer import PrivacyLevel, epsilon_from_rate, lrc_respond, lrc_respond_batch, \
    rate_from_epsilon, response_probability

__version__ = "0.1.0"
