"""Monte Carlo critical values for self-normalized pivots.

Brownian paths are simulated as random-walk partial sums on a uniform grid
of ``m`` steps. With ``B(t) = W(t) - t W(1)`` the three supported pivots are

    squared_integral   |W(1)| / sqrt(mean_k B(k/m)^2)
    sup_abs            |W(1)| / max_k |B(k/m)|
    abs_integral       |W(1)| / mean_k |B(k/m)|

The grid maximum in sup_abs gets the usual continuity correction (0.5826
step standard deviations) so that coarse grids are not biased upward.

Taking the absolute value in the numerator makes the ``1 - alpha``
quantile of the statistic the two-sided critical value ``U_{1 - alpha/2}``
of the signed pivot.

Paths are generated in a fixed number of batches, each seeded from
``SeedSequence(seed).spawn``; batch quantiles give the Monte Carlo standard
error and the result does not depend on how many workers run the batches.
"""

import enum
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, MissingPivotError

__all__ = [
    "PivotKind",
    "PivotTable",
    "pivot_statistics",
    "pivot_quantile",
    "build_pivot_table",
    "DEFAULT_ALPHAS",
]

MIN_PATHS = 10_000
MIN_GRID = 1_000
MIN_BATCHES = 20
DEFAULT_PATHS = 200_000
DEFAULT_GRID = 4096
DEFAULT_SEED = 20230613

# Two-sided significance levels tabulated by default: 0.01..0.99 plus the
# usual 0.005 and 0.025.
DEFAULT_ALPHAS = tuple(sorted({0.005, 0.025} | {round(k / 100, 2) for k in range(1, 100)}))

_CHUNK_ELEMENTS = 1 << 21
_SUP_SHIFT = 0.5825971579390106


class PivotKind(str, enum.Enum):
    SQUARED_INTEGRAL = "squared_integral"
    SUP_ABS = "sup_abs"
    ABS_INTEGRAL = "abs_integral"


def _chunk_statistics(kind, gauss):
    w = np.cumsum(gauss, axis=1)
    m = w.shape[1]
    w1 = w[:, -1].copy()
    t = np.arange(1, m + 1) / m
    # Path scale 1/sqrt(m) cancels in every ratio, so it is never applied.
    w -= t * w1[:, None]
    if kind is PivotKind.SQUARED_INTEGRAL:
        denom = np.sqrt(np.einsum("ij,ij->i", w, w) / m)
    elif kind is PivotKind.SUP_ABS:
        # A grid maximum falls short of the continuous one by about
        # zeta(1/2)/sqrt(2 pi) = 0.5826 step standard deviations.
        denom = np.abs(w).max(axis=1) + _SUP_SHIFT
    else:
        denom = np.abs(w).mean(axis=1)
    return np.abs(w1) / denom


def _batch_statistics(kind, n_paths, grid_steps, seed_seq):
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    rows = max(1, _CHUNK_ELEMENTS // grid_steps)
    out = np.empty(n_paths)
    for start in range(0, n_paths, rows):
        k = min(rows, n_paths - start)
        out[start:start + k] = _chunk_statistics(kind, rng.standard_normal((k, grid_steps)))
    return out


def _validate(kind, paths, grid_steps, batches):
    kind = PivotKind(kind)
    if paths < MIN_PATHS:
        raise ConfigError(f"pivot Monte Carlo needs at least {MIN_PATHS} paths, got {paths}")
    if grid_steps < MIN_GRID:
        raise ConfigError(f"pivot Monte Carlo needs at least {MIN_GRID} grid steps, got {grid_steps}")
    if batches < MIN_BATCHES:
        raise ConfigError(f"standard errors need at least {MIN_BATCHES} batches, got {batches}")
    return kind


def pivot_statistics(kind, paths=DEFAULT_PATHS, grid_steps=DEFAULT_GRID, seed=DEFAULT_SEED,
                     batches=MIN_BATCHES, workers=1):
    """Simulated pivot values, one row per batch (``batches x paths/batches``)."""
    kind = _validate(kind, paths, grid_steps, batches)
    sizes = [len(a) for a in np.array_split(np.empty(paths), batches)]
    seqs = np.random.SeedSequence(seed).spawn(batches)
    jobs = [(kind, s, grid_steps, q) for s, q in zip(sizes, seqs)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda j: _batch_statistics(*j), jobs))
    else:
        parts = [_batch_statistics(*j) for j in jobs]
    return parts


def _quantiles(parts, alphas):
    probs = 1.0 - np.asarray(alphas, dtype=float)
    allstats = np.sort(np.concatenate(parts))
    u = np.quantile(allstats, probs)
    per_batch = np.array([np.quantile(p, probs) for p in parts])
    se = per_batch.std(axis=0, ddof=1) / np.sqrt(len(parts))
    return u, se


def pivot_quantile(kind, alpha, paths=DEFAULT_PATHS, grid_steps=DEFAULT_GRID, seed=DEFAULT_SEED,
                   batches=MIN_BATCHES, workers=1):
    """Two-sided critical value ``U_{1-alpha/2}`` and its batch standard error.

    ``alpha = 0.05`` gives the value used for 95% intervals.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    parts = pivot_statistics(kind, paths, grid_steps, seed, batches, workers)
    u, se = _quantiles(parts, [alpha])
    return float(u[0]), float(se[0])


@dataclass
class PivotTable:
    kind: PivotKind
    alphas: list
    U: list
    std_err: list
    paths: int
    grid_steps: int
    seed: int
    batches: int = MIN_BATCHES
    _index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.kind = PivotKind(self.kind)
        if not (len(self.alphas) == len(self.U) == len(self.std_err)):
            raise ConfigError("pivot table columns have different lengths")
        self._index = {round(float(a), 12): i for i, a in enumerate(self.alphas)}

    def critical_value(self, alpha, kind=None):
        if kind is not None and PivotKind(kind) is not self.kind:
            raise ConfigError(
                f"pivot table holds {self.kind.value} critical values, not {PivotKind(kind).value}"
            )
        if alpha == 1.0:
            return 0.0
        i = self._index.get(round(float(alpha), 12))
        if i is None:
            raise MissingPivotError(
                f"no critical value for alpha={alpha} in this {self.kind.value} table; "
                "build one with the `pivot` subcommand"
            )
        return self.U[i]

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "alpha": [float(a) for a in self.alphas],
            "U": [float(u) for u in self.U],
            "std_err": [float(s) for s in self.std_err],
            "paths": self.paths,
            "grid_steps": self.grid_steps,
            "seed": self.seed,
            "batches": self.batches,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=d["kind"],
            alphas=list(d["alpha"]),
            U=list(d["U"]),
            std_err=list(d["std_err"]),
            paths=int(d["paths"]),
            grid_steps=int(d["grid_steps"]),
            seed=int(d["seed"]),
            batches=int(d.get("batches", MIN_BATCHES)),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.exists():
            raise MissingPivotError(
                f"pivot table {path} not found; build one with the `pivot` subcommand"
            )
        return cls.from_dict(json.loads(path.read_text()))


def default_cache_dir():
    root = os.environ.get("LDPQUANT_CACHE") or os.path.join(
        os.environ.get("XDG_CACHE_HOME", os.path.expanduser("~/.cache")), "ldpquant"
    )
    return Path(root)


def _cache_file(cache_dir, kind, paths, grid_steps, seed, batches):
    key = f"{kind.value}-{paths}-{grid_steps}-{seed}-{batches}"
    digest = hashlib.sha1(key.encode()).hexdigest()[:10]
    return Path(cache_dir) / f"pivot-{key}-{digest}.npz"


def build_pivot_table(kind=PivotKind.SQUARED_INTEGRAL, alphas=DEFAULT_ALPHAS, paths=DEFAULT_PATHS,
                      grid_steps=DEFAULT_GRID, seed=DEFAULT_SEED, batches=MIN_BATCHES, workers=1,
                      cache_dir=None):
    """Tabulate critical values for many alphas from one simulation.

    With ``cache_dir`` set, the raw simulated statistics are stored there
    keyed by (kind, paths, grid_steps, seed, batches) and reused.
    """
    kind = _validate(kind, paths, grid_steps, batches)
    alphas = sorted(float(a) for a in alphas)
    if any(not 0.0 < a < 1.0 for a in alphas):
        raise ConfigError("every alpha must lie in (0, 1)")
    cached = None
    if cache_dir is not None:
        cached = _cache_file(cache_dir, kind, paths, grid_steps, seed, batches)
    if cached is not None and cached.exists():
        with np.load(cached) as z:
            parts = [z[f"arr_{i}"] for i in range(len(z.files))]
    else:
        parts = pivot_statistics(kind, paths, grid_steps, seed, batches, workers)
        if cached is not None:
            cached.parent.mkdir(parents=True, exist_ok=True)
            tmp = cached.with_name(cached.stem + ".tmp.npz")
            np.savez(tmp, *parts)
            os.replace(tmp, cached)
    u, se = _quantiles(parts, alphas)
    return PivotTable(kind, alphas, u.tolist(), se.tolist(), paths, grid_steps, seed, batches)
