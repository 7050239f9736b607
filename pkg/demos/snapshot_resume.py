"""Persist the estimator between batches and carry on later."""
import numpy as np

from ldpquant import EstimatorConfig, QuantileEstimator
from ldpquant.estimator import EstimatorState, draw_randomizer_uniforms

config = EstimatorConfig(tau=0.3)
rng = np.random.default_rng(8)
x = rng.uniform(-1, 1, 60_000)
u, v = draw_randomizer_uniforms(rng, 60_000)

first = QuantileEstimator(config).run(x[:30_000], u[:30_000], v[:30_000])
saved = first.to_json()
print("saved:", saved)

resumed = QuantileEstimator(config, EstimatorState.from_json(saved))
resumed.run(x[30_000:], u[30_000:], v[30_000:])

straight = QuantileEstimator(config).run(x, u, v)
print("resumed == uninterrupted:", resumed.state == straight.state)
print(f"estimate {resumed.estimate():.4f}, true 0.3-quantile -0.4")
