"""Monte Carlo experiments: coverage tables, coverage curves, box
summaries, sample trajectories and the median variance check.

Every replication draws from its own stream, derived from
``(seed, cell, replication)`` through :class:`numpy.random.SeedSequence`
spawn keys, so results do not depend on the number of worker threads or on
which other cells are run. A "cell" is one (distribution, tau, r, n)
combination; different ``n`` are simulated from scratch on disjoint
streams.
"""

import csv
import hashlib
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtri

from .distributions import Distribution, from_name, normal
from .errors import ConfigError
from .estimator import EstimatorConfig, QuantileEstimator, StepSchedule, iterate_path
from .inference import asymptotic_sd, offline_normalizer, sn_halfwidth
from .pivot import PivotKind, PivotTable
from .randomizer import PrivacyLevel

__all__ = [
    "ExperimentConfig",
    "CoverageReport",
    "simulate_cell",
    "coverage_experiment",
    "coverage_curve",
    "trajectory_run",
    "box_summary",
    "variance_optimality_check",
    "write_csv",
]

SCHEMA = {
    "coverage": "ldpquant/coverage/1",
    "curve": "ldpquant/curve/1",
    "trajectory": "ldpquant/trajectory/1",
    "boxes": "ldpquant/boxes/1",
    "optimality": "ldpquant/optimality/1",
}


@dataclass
class ExperimentConfig:
    distribution: Distribution = field(default_factory=normal)
    taus: tuple = (0.5,)
    rs: tuple = (0.5,)
    ns: tuple = (10_000,)
    reps: int = 1000
    alpha: float = 0.05
    seed: int = 20230613
    schedule: StepSchedule = field(default_factory=StepSchedule)
    q0: float = 0.0
    record_trajectories: bool = False
    pivot_table: str = None
    workers: int = 1
    levels: tuple = tuple(round(0.05 * k, 2) for k in range(0, 21))
    checkpoints: tuple = ()

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be at least 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        self.taus = tuple(float(t) for t in _as_tuple(self.taus))
        self.rs = tuple(float(r) for r in _as_tuple(self.rs))
        self.ns = tuple(int(n) for n in _as_tuple(self.ns))
        self.levels = tuple(float(v) for v in _as_tuple(self.levels))
        self.checkpoints = tuple(int(c) for c in _as_tuple(self.checkpoints))
        if any(n < 1 for n in self.ns):
            raise ConfigError("every sample size must be at least 1")

    def estimator_config(self, tau, r):
        return EstimatorConfig(tau=tau, level=PrivacyLevel(r), schedule=self.schedule, q0=self.q0)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        dist = d.pop("distribution", None)
        if isinstance(dist, str):
            dist = from_name(dist)
        elif isinstance(dist, dict):
            dist = from_name(dist["name"], dist.get("params", ()), dist.get("jitter", 0.0))
        if dist is not None:
            d["distribution"] = dist
        sched = d.pop("schedule", None)
        if sched is not None:
            d["schedule"] = StepSchedule(**sched)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _as_tuple(v):
    if isinstance(v, (list, tuple)):
        return tuple(v)
    return (v,)


@dataclass(frozen=True)
class CoverageReport:
    dist: str
    tau: float
    r: float
    n: int
    alpha: float
    coverage: float
    mae: float
    reps: int
    mean_width: float


def _cell_key(dist, tau, r, n):
    # Location/scale parameters are left out on purpose so that shifted
    # data sources reuse the same streams.
    text = f"{dist.kind}|{tau!r}|{r!r}|{n}"
    digest = hashlib.sha256(text.encode()).digest()
    return tuple(int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4))


def _streams(seed, key, rep):
    ss = np.random.SeedSequence(seed, spawn_key=key + (rep,))
    data_ss, mech_ss = ss.spawn(2)
    return np.random.default_rng(data_ss), np.random.default_rng(mech_ss)


def _one_replication(dist, est_cfg, n, seed, key, rep, offline_kinds):
    data_rng, mech_rng = _streams(seed, key, rep)
    x = dist.sample(data_rng, n)
    uv = mech_rng.random(2 * n)
    u, v = uv[0::2], uv[1::2]
    if offline_kinds:
        qs = iterate_path(est_cfg, x, u, v)
        k = np.arange(1, n + 1, dtype=np.float64)
        qbar_k = np.cumsum(qs) / k
        sums = (n, qs[-1], qbar_k[-1], float(np.sum(k * k * qbar_k * qbar_k)),
                float(np.sum(k * k * qbar_k)))
        return sums + tuple(offline_normalizer(qs, kind) for kind in offline_kinds)
    est = QuantileEstimator(est_cfg).run(x, u, v)
    return est.n, est.q, est.qbar, est.va, est.vb


@dataclass
class CellResult:
    """Final states of all replications of one cell, in replication order.

    ``normalizers`` maps each requested path-based pivot kind to its
    per-replication normalizer.
    """

    n: int
    q: np.ndarray
    qbar: np.ndarray
    va: np.ndarray
    vb: np.ndarray
    normalizers: dict = field(default_factory=dict)


def simulate_cell(dist, est_cfg, n, reps, seed, workers=1, offline_kinds=()):
    """Run ``reps`` independent sessions of ``n`` rounds.

    Path-based normalizers for ``offline_kinds`` need every iterate; the
    path is reduced inside each replication and then dropped.
    """
    key = _cell_key(dist, est_cfg.tau, est_cfg.level.r, n)
    offline_kinds = tuple(PivotKind(k) for k in offline_kinds)

    def job(rep):
        return _one_replication(dist, est_cfg, n, seed, key, rep, offline_kinds)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            out = list(pool.map(job, range(reps)))
    else:
        out = [job(rep) for rep in range(reps)]
    arr = np.array(out, dtype=np.float64)
    norms = {kind: arr[:, 5 + i] for i, kind in enumerate(offline_kinds)}
    return CellResult(n, arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4], norms)


def _load_pivot(config, pivot):
    if pivot is None:
        if config.pivot_table is None:
            raise ConfigError(
                "this experiment needs a pivot table of critical values; "
                "build one with the `pivot` subcommand and pass it with --pivot"
            )
        pivot = PivotTable.load(config.pivot_table)
    return pivot


def _cells(config):
    for n in config.ns:
        for tau in config.taus:
            for r in config.rs:
                yield tau, r, n


def coverage_experiment(config, pivot=None, kind=PivotKind.SQUARED_INTEGRAL):
    """Coverage, mean absolute error and mean width for every cell.

    ``kind`` other than squared_integral uses the path-based normalizers,
    so every replication's trajectory is recorded (one at a time).
    """
    pivot = _load_pivot(config, pivot)
    kind = PivotKind(kind)
    U = pivot.critical_value(config.alpha, kind=kind)
    dist = config.distribution
    reports = []
    for tau, r, n in _cells(config):
        truth = dist.quantile(tau)
        offline = () if kind is PivotKind.SQUARED_INTEGRAL else (kind,)
        cell = simulate_cell(dist, config.estimator_config(tau, r), n, config.reps, config.seed,
                             config.workers, offline_kinds=offline)
        if kind is PivotKind.SQUARED_INTEGRAL:
            half = sn_halfwidth(n, cell.qbar, cell.va, cell.vb, U)
        else:
            half = U * cell.normalizers[kind] / n
        covered = np.abs(cell.qbar - truth) <= half
        reports.append(CoverageReport(
            dist=dist.kind, tau=tau, r=r, n=n, alpha=config.alpha,
            coverage=float(np.mean(covered)),
            mae=float(np.mean(np.abs(cell.qbar - truth))),
            reps=config.reps,
            mean_width=float(np.mean(2.0 * half)),
        ))
    return reports


def _level_critical(pivot, level):
    if not 0.0 <= level <= 1.0:
        raise ConfigError(f"nominal levels must lie in [0, 1], got {level}")
    if level == 0.0:
        return 0.0
    if level == 1.0:
        return math.inf
    return pivot.critical_value(round(1.0 - level, 12))


def coverage_curve(config, pivot=None):
    """Empirical against nominal coverage over ``config.levels``.

    The same replications are scored at every level, so the empirical
    curve is non-decreasing in the nominal level.
    """
    pivot = _load_pivot(config, pivot)
    dist = config.distribution
    crit = [_level_critical(pivot, lvl) for lvl in config.levels]
    rows = []
    for tau, r, n in _cells(config):
        truth = dist.quantile(tau)
        cell = simulate_cell(dist, config.estimator_config(tau, r), n, config.reps, config.seed,
                             config.workers)
        scale = sn_halfwidth(n, cell.qbar, cell.va, cell.vb, 1.0)
        err = np.abs(cell.qbar - truth)
        for lvl, U in zip(config.levels, crit):
            if U == 0.0 or U == math.inf:
                empirical = float(U == math.inf)
            else:
                empirical = float(np.mean(err <= U * scale))
            rows.append({"dist": dist.kind, "tau": tau, "r": r, "n": n, "nominal": lvl,
                         "empirical": empirical, "reps": config.reps})
    return rows


def trajectory_run(config, checkpoints=None, pivot=None, rep=0):
    """One session per (tau, r) with both intervals at each checkpoint.

    Uses the largest entry of ``config.ns`` as the session length.
    """
    pivot = _load_pivot(config, pivot)
    U = pivot.critical_value(config.alpha)
    z = float(ndtri(1.0 - config.alpha / 2.0))
    dist = config.distribution
    n_max = max(config.ns)
    checkpoints = sorted(set(checkpoints or config.checkpoints or _default_checkpoints(n_max)))
    if checkpoints[0] < 1 or checkpoints[-1] > n_max:
        raise ConfigError(f"checkpoints must lie in [1, {n_max}]")
    rows = []
    for tau in config.taus:
        for r in config.rs:
            est_cfg = config.estimator_config(tau, r)
            truth = dist.quantile(tau)
            f_q = float(dist.density(truth))
            key = _cell_key(dist, tau, r, n_max)
            data_rng, mech_rng = _streams(config.seed, key, rep)
            x = dist.sample(data_rng, n_max)
            uv = mech_rng.random(2 * n_max)
            u, v = uv[0::2], uv[1::2]
            est = QuantileEstimator(est_cfg)
            done = 0
            for cp in checkpoints:
                est.run(x[done:cp], u[done:cp], v[done:cp])
                done = cp
                half = float(sn_halfwidth(cp, est.qbar, est.va, est.vb, U))
                oh = z * asymptotic_sd(tau, r, f_q, cp)
                rows.append({"dist": dist.kind, "tau": tau, "r": r, "truth": truth, "n": cp,
                             "q_n": est.q, "Q_n": est.qbar,
                             "sn_lo": est.qbar - half, "sn_hi": est.qbar + half,
                             "oracle_lo": est.qbar - oh, "oracle_hi": est.qbar + oh})
    return rows


def _default_checkpoints(n_max):
    pts = np.unique(np.geomspace(10, n_max, 60).astype(int))
    return [int(p) for p in pts]


def box_summary(config):
    """Five-number summaries of ``Q_n`` across replications for each cell.

    Whiskers follow the 1.5 IQR rule: the most extreme estimates within
    1.5 IQR of the quartiles.
    """
    if config.reps < 20:
        raise ConfigError("box summaries need at least 20 replications")
    dist = config.distribution
    rows = []
    for tau, r, n in _cells(config):
        cell = simulate_cell(dist, config.estimator_config(tau, r), n, config.reps, config.seed,
                             config.workers)
        est = np.sort(cell.qbar)
        q1, med, q3 = np.quantile(est, [0.25, 0.5, 0.75])
        iqr = q3 - q1
        lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
        rows.append({"dist": dist.kind, "tau": tau, "r": r, "n": n, "reps": config.reps,
                     "truth": dist.quantile(tau),
                     "min": est[0], "q1": q1, "median": med, "q3": q3, "max": est[-1],
                     "whisker_lo": est[est >= lo_fence][0], "whisker_hi": est[est <= hi_fence][-1],
                     "iqr": iqr})
    return rows


def variance_optimality_check(r, n, reps, dist=None, tau=0.5, seed=20230613, shift=0.0,
                              schedule=None, workers=1):
    """Ratio of the empirical variance of the median estimate to the lower
    bound ``1 / (4 r^2 n f(Q)^2)`` for binary randomized-response
    estimators. A ratio near 1 means the bound is attained.

    ``shift`` moves both the data and the starting point by the same
    amount; the ratio should not change.
    """
    if tau != 0.5:
        raise ConfigError("the variance lower bound is only established for the median (tau = 0.5)")
    if reps < 2:
        raise ConfigError("need at least two replications for a variance")
    dist = dist if dist is not None else normal()
    if shift:
        dist = dist.shifted(shift)
    cfg = EstimatorConfig(tau=0.5, level=PrivacyLevel(r), schedule=schedule or StepSchedule(),
                          q0=float(shift))
    cell = simulate_cell(dist, cfg, n, reps, seed, workers)
    f_q = float(dist.density(dist.quantile(0.5)))
    bound = 1.0 / (4.0 * r * r * n * f_q * f_q)
    return float(np.var(cell.qbar, ddof=1) / bound)


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    if isinstance(v, np.floating):
        return repr(float(v))
    return str(v)


def write_csv(rows, schema, path=None):
    """Write dict rows (or dataclass reports) as CSV behind a schema line.

    Returns the CSV text. Floats are written with ``repr`` so output is
    byte-for-byte reproducible.
    """
    rows = [r.__dict__ if hasattr(r, "__dataclass_fields__") else r for r in rows]
    buf = io.StringIO()
    buf.write(f"# schema: {SCHEMA.get(schema, schema)}\n")
    if rows:
        writer = csv.writer(buf, lineterminator="\n")
        header = list(rows[0])
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(row[h]) for h in header])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def with_overrides(config, **overrides):
    """Copy of ``config`` with the non-None overrides applied."""
    kept = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **kept)
