"""Independent population-level oracles written with plain loops.

They share no code with the learners: every expectation is an explicit sum
over states, action pairs and privatized labels.
"""

import math


def _sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def _label_law(r, s, a1, a2, alpha):
    """P(z = +1) for the comparison (a1, a2) in state s."""
    p = _sig(r[s][a1] - r[s][a2])
    return alpha * p + (1.0 - alpha) * (1.0 - p)


def _pairs(d0, pi):
    for s, ws in enumerate(d0):
        for a1, p1 in enumerate(pi[s]):
            for a2, p2 in enumerate(pi[s]):
                yield s, a1, a2, ws * p1 * p2


def population_log_likelihood(member, r_star, d0, pi, alpha):
    """E log P_member(z) with z drawn from the private label law of r_star."""
    total = 0.0
    for s, a1, a2, w in _pairs(d0, pi):
        q = _label_law(r_star, s, a1, a2, alpha)
        m = _label_law(member, s, a1, a2, alpha)
        total += w * (q * math.log(m) + (1.0 - q) * math.log(1.0 - m))
    return total


def population_squared_loss(member, r_star, d0, pi, alpha):
    """E[((2 sigma(gap) - 1)(2 alpha - 1) - z)^2] with z from the private law of r_star."""
    total = 0.0
    for s, a1, a2, w in _pairs(d0, pi):
        q = _label_law(r_star, s, a1, a2, alpha)
        pred = (2.0 * _sig(member[s][a1] - member[s][a2]) - 1.0) * (2.0 * alpha - 1.0)
        total += w * (q * (pred - 1.0) ** 2 + (1.0 - q) * (pred + 1.0) ** 2)
    return total


def argbest(values, maximize=True):
    best = max(values) if maximize else min(values)
    return values.index(best)
