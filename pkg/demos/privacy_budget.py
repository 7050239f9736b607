"""Truthful response rate vs privacy budget, and what one user releases."""
import numpy as np

from ldpquant import PrivacyLevel, epsilon_from_rate, lrc_respond, lrc_respond_batch, \
    rate_from_epsilon, response_probability

for r in (0.25, 0.5, 0.9):
    print(f"r = {r:4}  ->  epsilon = {epsilon_from_rate(r):.2f}")
print(f"epsilon = 1.0  ->  r = {rate_from_epsilon(1.0):.4f}")

level = PrivacyLevel(0.5)
rng = np.random.default_rng(0)

# A single user with x = 1.3 is asked "x > 0.2?"
print("released bit:", lrc_respond(0.2, level, 1.3, rng))

# Over many users with x above the threshold, about (1 + r)/2 answer 1.
bits = lrc_respond_batch(0.2, level, np.full(100_000, 1.3), rng)
print(f"fraction of ones {bits.mean():.4f}, expected {response_probability(level, 1)}")

# Worst-case likelihood ratio equals e^epsilon.
print(response_probability(level, 1) / response_probability(level, 0), np.exp(level.epsilon))
