"""Instance generators, offline data simulation and coverage diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import (
    FunctionClass,
    Instance,
    PolicyTable,
    PrivacyParams,
    PrivateDataset,
    RewardTable,
    StateDistribution,
    _probs,
    make_rng,
    randomized_response,
    sigmoid,
)

# action -1 is index 0, action +1 is index 1
ACTION_MINUS, ACTION_PLUS = 0, 1


def theory_gap(S: int, C: float, epsilon: float, n: int) -> float:
    """Reward gap ``sqrt(S*C) / ((e^eps - 1) sqrt(n))`` used for theory-matched sweeps."""
    return math.sqrt(S * C) / (math.expm1(epsilon) * math.sqrt(n))


@dataclass(frozen=True)
class HardInstanceSpec:
    """Parameters of the two-action hypercube family.

    ``shift_to_range`` relaxes the requirement ``b < B/2``: when set, all
    rewards of a state are moved by a common constant so the table fits in
    [0, B]. Gibbs policies, preference probabilities and suboptimality are
    unchanged by such a per-state shift, so the resulting instance is
    equivalent; it only needs ``a + b <= B``.
    """

    S: int
    C: float
    a: float
    beta: float
    B: float
    v: tuple[int, ...] | None = None
    shift_to_range: bool = False
    extra_members: int = 14
    full_cube_max_S: int = 6
    seed: int = 0

    def __post_init__(self):
        if self.S < 1:
            raise ValueError("S must be >= 1")
        if not (self.beta > 0 and self.B > 0):
            raise ValueError("beta and B must be positive")
        v = tuple(int(x) for x in (self.v if self.v is not None else (1,) * self.S))
        if len(v) != self.S or any(x not in (-1, 1) for x in v):
            raise ValueError("v must be a sign vector of length S")
        object.__setattr__(self, "v", v)
        b = self.b
        if not (0 < self.a < self.B / 2):
            raise ValueError(f"gap a={self.a} must lie in (0, B/2)")
        if not b > 0:
            raise ValueError(f"b = log(C-1)/beta = {b} must be positive (needs C > 2)")
        if self.shift_to_range:
            if self.a + b > self.B:
                raise ValueError(f"a + b = {self.a + b} exceeds B; no shift fits [0, B]")
        elif not b < self.B / 2:
            raise ValueError(f"b = log(C-1)/beta = {b} must lie in (0, B/2)")

    @property
    def b(self) -> float:
        return math.log(self.C - 1) / self.beta if self.C > 1 else -math.inf

    @property
    def shift(self) -> float:
        return max(0.0, self.b - self.B / 2) if self.shift_to_range else 0.0


def hard_reward(spec: HardInstanceSpec, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    r = np.empty((spec.S, 2))
    r[:, ACTION_MINUS] = spec.B / 2 + v * spec.a + spec.shift
    r[:, ACTION_PLUS] = spec.B / 2 - spec.b + spec.shift
    return np.clip(r, 0.0, spec.B)  # guards round-off only; ranges are validated


def hard_instance(spec: HardInstanceSpec) -> Instance:
    S, C = spec.S, spec.C
    pi_ref = np.empty((S, 2))
    pi_ref[:, ACTION_MINUS] = 1.0 / C
    pi_ref[:, ACTION_PLUS] = 1.0 - 1.0 / C
    v = np.array(spec.v)
    if S <= spec.full_cube_max_S:
        cube = [np.array(w) for w in itertools.product((-1, 1), repeat=S)]
    else:
        rng = make_rng(spec.seed)
        cube, seen = [v, -v], {tuple(v), tuple(-v)}
        while len(cube) < 2 + spec.extra_members:
            w = rng.choice([-1, 1], size=S)
            if tuple(w) not in seen:
                seen.add(tuple(w))
                cube.append(w)
    tables = np.stack([hard_reward(spec, w) for w in cube])
    return Instance(
        d0=StateDistribution(np.full(S, 1.0 / S)),
        pi_ref=PolicyTable(pi_ref),
        r_star=RewardTable(hard_reward(spec, v), spec.B),
        fclass=FunctionClass(tables, spec.B),
        beta=spec.beta,
        B=spec.B,
    )


def hard_optimal_minus_prob(spec: HardInstanceSpec, v) -> np.ndarray:
    """Closed-form optimal probability of action -1 in every state."""
    e = np.exp(spec.beta * (spec.b + np.asarray(v, dtype=float) * spec.a))
    return e / (e + spec.C - 1)


def concentrability(pi, pi_ref) -> float:
    p, q = _probs(pi), _probs(pi_ref)
    if p.shape != q.shape:
        raise ValueError("policy shapes differ")
    if np.any((p > 0) & (q <= 0)):
        return math.inf
    mask = q > 0
    return float(np.max(p[mask] / q[mask]))


def single_policy_D(inst: Instance) -> float:
    """E_{s~d0, a~pi*} of the D^2 divergence under the reference policy."""
    from .offline import d_divergence_table

    table = d_divergence_table(inst.fclass, inst.pi_ref, inst.d0)
    weights = inst.d0.probs[:, None] * inst.optimal_policy().probs
    mask = weights > 0
    return float(np.sum(weights[mask] * table[mask]))


def sample_actions(rng: np.random.Generator, pi: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Draw one action per entry of ``s`` from the rows of ``pi``."""
    cdf = np.cumsum(pi[s], axis=1)
    u = rng.random(len(s))
    return np.minimum((u[:, None] >= cdf).sum(axis=1), pi.shape[1] - 1)


def offline_dataset_gen(
    inst: Instance, n: int, pp: PrivacyParams, rng: np.random.Generator
) -> PrivateDataset:
    """n privatized comparisons with both actions drawn from the reference policy."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    if n == 0:
        return PrivateDataset.empty()
    s = rng.choice(inst.S, size=n, p=inst.d0.probs)
    a1 = sample_actions(rng, inst.pi_ref.probs, s)
    a2 = sample_actions(rng, inst.pi_ref.probs, s)
    r = inst.r_star.values
    p_plus = sigmoid(r[s, a1] - r[s, a2])
    y = np.where(rng.random(n) < p_plus, 1, -1)
    z = randomized_response(rng, y, pp.alpha)
    return PrivateDataset(s, a1, a2, z)


def random_instance(
    S: int, A: int, class_size: int, B: float, beta: float, rng: np.random.Generator
) -> Instance:
    """Uniform d0, Dirichlet(1) reference rows, uniform rewards; class holds r* first."""
    if S < 1 or A < 2 or class_size < 1:
        raise ValueError("need S >= 1, A >= 2, class_size >= 1")
    pi_ref = rng.dirichlet(np.ones(A), size=S)
    # Dirichlet draws can underflow to 0 only with vanishing probability
    pi_ref = np.maximum(pi_ref, 1e-12)
    pi_ref /= pi_ref.sum(axis=1, keepdims=True)
    tables = rng.uniform(0.0, B, size=(class_size, S, A))
    return Instance(
        d0=StateDistribution(np.full(S, 1.0 / S)),
        pi_ref=PolicyTable(pi_ref),
        r_star=RewardTable(tables[0], B),
        fclass=FunctionClass(tables, B),
        beta=beta,
        B=B,
    )


__all__ = [
    "ACTION_MINUS",
    "ACTION_PLUS",
    "HardInstanceSpec",
    "concentrability",
    "hard_instance",
    "hard_optimal_minus_prob",
    "hard_reward",
    "offline_dataset_gen",
    "random_instance",
    "sample_actions",
    "single_policy_D",
    "theory_gap",
]
