"""Estimate the median of a data stream one private bit at a time and watch
the self-normalized interval tighten next to the Wald interval."""
import math

import numpy as np

from ldpquant import EstimatorConfig, PrivacyLevel, QuantileEstimator, build_pivot_table
from ldpquant import infeasible_interval, sn_interval
from ldpquant.estimator import draw_randomizer_uniforms

pivot = build_pivot_table(alphas=[0.05], paths=20_000, grid_steps=1000)
U = pivot.critical_value(0.05)
print(f"critical value U = {U:.3f} (vs 1.96 for the normal)")

config = EstimatorConfig(tau=0.5, level=PrivacyLevel(0.5))
est = QuantileEstimator(config)

rng = np.random.default_rng(1)
n = 200_000
x = rng.standard_normal(n)
u, v = draw_randomizer_uniforms(rng, n)

done = 0
for stop in (100, 1_000, 10_000, 50_000, 200_000):
    est.run(x[done:stop], u[done:stop], v[done:stop])
    done = stop
    sn = sn_interval(est, U)
    wald = infeasible_interval(est, 0.5, config.level, 1 / math.sqrt(2 * math.pi))
    print(f"n={stop:>7}  Q_n={est.estimate():+.4f}  "
          f"SN=({sn.lo:+.4f}, {sn.hi:+.4f})  Wald=({wald.lo:+.4f}, {wald.hi:+.4f})")

# Only five numbers are stored, whatever n is.
print(est.to_json())
