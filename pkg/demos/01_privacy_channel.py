"""Randomized response on preference labels, and what it costs a learner."""
import math

import numpy as np

from privrlhf.core import PrivacyParams, debiased_mean, make_rng, randomized_response, rr_alpha, sigmoid

rng = make_rng(0)

# Each label is kept with probability alpha = e^eps / (e^eps + 1)
for eps in (0.1, 0.5, 1.0, 2.0, math.inf):
    print(f"eps={eps:>4}: keep probability {rr_alpha(eps):.4f}")

# A true reward gap of 0.8 between two responses
gap = 0.8
n = 200_000
y = np.where(rng.random(n) < sigmoid(gap), 1, -1)
print(f"\nnon-private label mean: {y.mean():+.4f}  (2 sigma(gap) - 1 = {2 * sigmoid(gap) - 1:+.4f})")

# Privatization shrinks the signal by 2 alpha - 1; the noise stays the same size
print("\neps   mean(z)   predicted   signal kept")
for eps in (0.5, 1.0, 2.0):
    alpha = PrivacyParams(eps).alpha
    z = randomized_response(rng, y, alpha)
    print(f"{eps:<5} {z.mean():+.4f}   {debiased_mean(alpha, gap):+.4f}     {2 * alpha - 1:.3f}")

# Sample size needed to match the non-private estimate grows like 1 / (2 alpha - 1)^2
print("\nrelative sample cost at eps = 0.5, 1, 2:",
      [round(1 / (2 * rr_alpha(e) - 1) ** 2, 1) for e in (0.5, 1.0, 2.0)])
