"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line
in the terminal summary. Tolerances are the stated ones and are not tuned.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""

import math
import struct
import time

import numpy as np
import pytest

from ldpquant import PrivacyLevel, lrc_respond_batch, response_probability
from ldpquant.cli import main as cli_main
from ldpquant.distributions import cauchy, normal
from ldpquant.estimator import EstimatorConfig, QuantileEstimator, draw_randomizer_uniforms, \
    iterate_path
from ldpquant.experiments import ExperimentConfig, coverage_experiment, simulate_cell, \
    variance_optimality_check
from ldpquant.inference import self_normalizer
from ldpquant.pivot import DEFAULT_GRID, DEFAULT_PATHS, PivotKind, build_pivot_table
from ldpquant.protocol import run_session, serve, user_client

from oracles import longdouble_squared_normalizer

R_GRID = [round(0.05 * k, 2) for k in range(1, 20)]

# U_{0.975} of the squared-integral pivot from the independent series
# oracle (tests/oracles.py), 2e6 paths, standard error 0.0065.
ORACLE_U975 = 6.748

# Normal density at the 0.3-quantile, from an independent extended-precision
# evaluation.
F_NORMAL_Q03 = 0.3477

pytestmark = pytest.mark.acceptance


def _coverage_cell(pivot, dist, tau, r, n):
    cfg = ExperimentConfig(distribution=dist, taus=(tau,), rs=(r,), ns=(n,), reps=1000)
    t0 = time.perf_counter()
    (rep,) = coverage_experiment(cfg, pivot)
    elapsed = time.perf_counter() - t0
    return rep, elapsed, 1000 * n / elapsed


def test_c1_privacy_ratio(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    draws = 10**6
    ok, worst = True, 0.0
    for r in R_GRID:
        lvl = PrivacyLevel(r)
        bound = math.exp(lvl.epsilon)
        # Analytic: every ratio within the bound, and the bound attained.
        ratios = [response_probability(lvl, b) / response_probability(lvl, 1 - b) for b in (0, 1)]
        ratios += [(1 - response_probability(lvl, b)) / (1 - response_probability(lvl, 1 - b))
                   for b in (0, 1)]
        ok &= max(ratios) <= bound * (1 + 1e-12)
        ok &= math.isclose(max(ratios), bound, rel_tol=1e-12)
        # Empirical: 1e6 draws per truth bit.
        p1 = {b: lrc_respond_batch(0.0, lvl, np.full(draws, 1.0 if b else -1.0), rng).mean()
              for b in (0, 1)}
        for b in (0, 1):
            se = math.sqrt(response_probability(lvl, b) * (1 - response_probability(lvl, b)) / draws)
            dev = abs(p1[b] - response_probability(lvl, b)) / se
            worst = max(worst, dev)
            ok &= dev <= 3
        # Largest empirical ratio, P(1 | b=1) / P(1 | b=0), against e^eps
        # with a delta-method standard error.
        emp = p1[1] / p1[0]
        se_ratio = emp * math.sqrt((1 - p1[1]) / (p1[1] * draws) + (1 - p1[0]) / (p1[0] * draws))
        ok &= abs(emp - bound) <= 3 * se_ratio
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 10
    acceptance("C1 privacy ratio", ok,
               f"19 rates, worst |p_hat - p| = {worst:.2f} SE, bound attained, {elapsed:.1f}s (< 10s)")
    assert ok


def test_c2_normalizer_identity(acceptance):
    t0 = time.perf_counter()
    lengths = np.unique(np.geomspace(10, 100_000, 100).astype(int))
    lengths = np.concatenate([lengths, 100_000 - np.arange(100 - lengths.size)])
    assert lengths.size == 100
    rng = np.random.default_rng(202)
    worst = 0.0
    dists = [normal(), cauchy()]
    for i, n in enumerate(lengths):
        cfg = EstimatorConfig(tau=float(rng.choice([0.3, 0.5, 0.8])),
                              level=PrivacyLevel(float(rng.choice([0.25, 0.5, 0.9]))),
                              q0=float(rng.normal()))
        x = dists[i % 2].sample(rng, int(n))
        u, v = draw_randomizer_uniforms(rng, int(n))
        qs = iterate_path(cfg, x, u, v)
        est = QuantileEstimator(cfg).run(x, u, v)
        ref = longdouble_squared_normalizer(qs)
        worst = max(worst, abs(self_normalizer(est) - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 30
    acceptance("C2 normalizer identity", ok,
               f"100 traces n<=1e5, worst rel err {worst:.1e} (<= 1e-9), {elapsed:.1f}s (< 30s)")
    assert ok


def test_c3_pivot_critical_value(acceptance, pivot_cache):
    t0 = time.perf_counter()
    cached = any(pivot_cache.glob("pivot-squared_integral-*.npz"))
    values = {}
    for seed in (20230613, 777):
        for grid in (DEFAULT_GRID, 2048):
            table = build_pivot_table(PivotKind.SQUARED_INTEGRAL, alphas=[0.05], paths=DEFAULT_PATHS,
                                      grid_steps=grid, seed=seed, cache_dir=pivot_cache)
            values[(seed, grid)] = table.critical_value(0.05)
    elapsed = time.perf_counter() - t0
    ok = all(abs(u - ORACLE_U975) <= 0.1 and u > 1.96 for u in values.values()) and elapsed < 300
    shown = ", ".join(f"seed {s}/grid {g}: {u:.3f}" for (s, g), u in values.items())
    acceptance("C3 pivot U_0.975", ok,
               f"{shown}; oracle {ORACLE_U975} +/- 0.1, all > 1.96, {elapsed:.0f}s (< 300s)"
               + (", some draws reused from cache" if cached else ""))
    assert ok


@pytest.mark.parametrize("tau, r, n, target", [
    (0.5, 0.5, 100_000, 0.944),
    (0.3, 0.25, 10_000, 0.926),
    (0.5, 0.25, 10_000, 0.834),
], ids=["a", "b", "c"])
def test_c4_normal_coverage(acceptance, full_pivot, tau, r, n, target):
    rep, elapsed, rate = _coverage_cell(full_pivot, normal(), tau, r, n)
    tol = 0.02 if n == 100_000 else 0.03
    ok = abs(rep.coverage - target) <= tol and elapsed < 300
    label = {0.944: "a", 0.926: "b", 0.834: "c"}[target]
    acceptance(f"C4{label} coverage Normal tau={tau} r={r} n={n}", ok,
               f"{rep.coverage:.3f} (MAE {rep.mae:.4f}) vs {target} +/- {tol}, "
               f"{elapsed:.0f}s at {rate:.2g} updates/s")
    assert ok


def test_c5_cauchy_coverage(acceptance, full_pivot):
    rep, elapsed, rate = _coverage_cell(full_pivot, cauchy(), 0.8, 0.5, 100_000)
    cov_ok = abs(rep.coverage - 0.970) <= 0.03
    mae_ok = abs(rep.mae - 0.026) <= 0.3 * 0.026
    acceptance("C5 coverage Cauchy tau=0.8 r=0.5 n=1e5", cov_ok and mae_ok,
               f"{rep.coverage:.3f} vs 0.970 +/- 0.03 ({'ok' if cov_ok else 'out'}), "
               f"MAE {rep.mae:.4f} vs 0.026 +/- 30% ({'ok' if mae_ok else 'out'}), {elapsed:.0f}s")
    assert cov_ok and mae_ok


def test_c6_clt_variance(acceptance):
    n, reps, tau, r = 100_000, 2000, 0.3, 0.5
    dist = normal()
    cell = simulate_cell(dist, EstimatorConfig(tau=tau, level=PrivacyLevel(r)), n, reps, seed=606)
    emp = np.var(math.sqrt(n) * (cell.qbar - dist.quantile(tau)), ddof=1)
    theory = (1 - 0.25 * 0.16) / (4 * 0.25 * F_NORMAL_Q03**2)
    rel = emp / theory - 1
    ok = abs(rel) <= 0.10
    acceptance("C6 CLT variance", ok,
               f"empirical {emp:.3f} vs {theory:.3f} ({rel:+.1%}, within 10%)")
    assert ok


def test_c7_median_optimality(acceptance):
    ratios = {r: variance_optimality_check(r, 100_000, 2000, seed=707) for r in (0.25, 0.9)}
    ok = all(0.9 <= v <= 1.1 for v in ratios.values())
    acceptance("C7 median optimality", ok,
               ", ".join(f"r={r}: ratio {v:.3f}" for r, v in ratios.items()) + " (in [0.9, 1.1])")
    assert ok


def test_c8_transport_equivalence(acceptance):
    n = 10_000
    cfg = EstimatorConfig(tau=0.5, level=PrivacyLevel(0.5))
    x = np.random.default_rng(808).standard_normal(n)
    wire = bytearray()
    t0 = time.perf_counter()
    with serve(("127.0.0.1", 0), cfg) as curator:
        rng = np.random.default_rng(809)
        for xi in x:
            user_client(curator.address, float(xi), rng, wire_log=wire)
        net = curator.state
    elapsed = time.perf_counter() - t0
    local = run_session(cfg, x, n, np.random.default_rng(809)).state
    same = net == local
    leaked = sum(struct.pack("<d", float(xi)) in wire for xi in x)
    ok = same and leaked == 0 and len(wire) == 11 * n and elapsed < 60
    acceptance("C8 transport equivalence", ok,
               f"1e4 rounds, state identical: {same}, private values found in "
               f"{len(wire)} client bytes: {leaked}, {elapsed:.1f}s (< 60s)")
    assert ok


def test_c9_cli_determinism(acceptance, tmp_path, capsys, pivot_cache):
    pivot = tmp_path / "pivot.json"
    build_pivot_table(paths=20_000, grid_steps=1000, seed=11, cache_dir=pivot_cache).save(pivot)
    common = ["--n", "2000,4000", "--tau", "0.3,0.5", "--r", "0.25,0.5", "--reps", "30",
              "--seed", "99", "--pivot", str(pivot)]
    runs = {"simulate": [], "coverage": [], "curve": [], "boxes": [], "optimality": []}
    for cmd in runs:
        argv = [cmd] + (common if cmd != "optimality" else
                        [a for a in common if a not in ("--tau", "0.3,0.5")])
        for workers in (1, 4, 16):
            out = tmp_path / f"{cmd}-{workers}.csv"
            assert cli_main(argv + ["--workers", str(workers), "--out", str(out)]) == 0
            runs[cmd].append(out.read_bytes())
    runs["pivot"] = []
    for workers in (1, 4, 16):
        out = tmp_path / f"pivot-{workers}.json"
        assert cli_main(["pivot", "--paths", "10000", "--grid-steps", "1000", "--seed", "5",
                         "--no-cache", "--workers", str(workers), "--out", str(out)]) == 0
        runs["pivot"].append(out.read_bytes())
    identical = {cmd: len(set(outs)) == 1 for cmd, outs in runs.items()}
    ok = all(identical.values())
    acceptance("C9 CLI determinism", ok,
               "byte-identical across 1/4/16 workers: "
               + ", ".join(f"{c} {'yes' if v else 'NO'}" for c, v in identical.items()))
    assert ok
