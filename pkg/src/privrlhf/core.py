"""Domain types and exact primitives for KL-regularized preference learning
with randomized-response label privacy.

Tables are stored as read-only numpy arrays. Actions are integer indices,
labels live in {-1, +1}, and every stochastic routine takes an explicit
``numpy.random.Generator``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, Union

import numpy as np

ROW_TOL = 1e-12
SIGMOID_CLAMP = 700.0

ArrayLike = Union[np.ndarray, Sequence]


def _frozen(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) seeded from an int or SeedSequence."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def split_rng(seed, n: int) -> list[np.random.Generator]:
    """Independent child streams derived from one seed."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(ss)) for ss in seed.spawn(n)]


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RewardTable:
    values: np.ndarray
    B: float

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim != 2:
            raise ValueError("reward table must be a 2-d (state, action) array")
        if v.shape[0] < 1 or v.shape[1] < 2:
            raise ValueError(f"need S >= 1 and A >= 2, got shape {v.shape}")
        if not self.B > 0:
            raise ValueError("reward bound B must be positive")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > self.B:
            raise ValueError(f"reward entries must lie in [0, B={self.B}]")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "B", float(self.B))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def __eq__(self, other):
        if not isinstance(other, RewardTable):
            return NotImplemented
        return self.B == other.B and np.array_equal(self.values, other.values)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class PolicyTable:
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2 or p.shape[1] < 1:
            raise ValueError("policy must be a 2-d (state, action) array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("policy entries must be finite and nonnegative")
        if np.max(np.abs(p.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ValueError("policy rows must sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def shape(self) -> tuple[int, int]:
        return self.probs.shape

    def __eq__(self, other):
        if not isinstance(other, PolicyTable):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class StateDistribution:
    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("state distribution must be a nonempty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > ROW_TOL:
            raise ValueError("state distribution must be nonnegative and sum to 1")
        object.__setattr__(self, "probs", p)

    def __eq__(self, other):
        if not isinstance(other, StateDistribution):
            return NotImplemented
        return np.array_equal(self.probs, other.probs)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class FunctionClass:
    """Finite reward class stored as a stacked (N, S, A) array."""

    tables: np.ndarray
    B: float

    def __post_init__(self):
        t = _frozen(self.tables)
        if t.ndim != 3 or t.shape[0] < 1:
            raise ValueError("function class must be a nonempty (N, S, A) stack")
        if t.min() < 0 or t.max() > self.B:
            raise ValueError(f"class members must lie in [0, B={self.B}]")
        object.__setattr__(self, "tables", t)
        object.__setattr__(self, "B", float(self.B))

    @classmethod
    def from_members(cls, members: Sequence[RewardTable]) -> "FunctionClass":
        if not members:
            raise ValueError("function class must be nonempty")
        B = members[0].B
        shape = members[0].shape
        for m in members:
            if m.B != B or m.shape != shape:
                raise ValueError("class members must share S, A and B")
        return cls(np.stack([m.values for m in members]), B)

    def __len__(self) -> int:
        return self.tables.shape[0]

    def __getitem__(self, i: int) -> RewardTable:
        return RewardTable(self.tables[i], self.B)

    @property
    def members(self) -> list[RewardTable]:
        return [self[i] for i in range(len(self))]

    def index_of(self, r: RewardTable) -> int:
        """Index of the first member exactly equal to ``r``, or -1."""
        hits = np.flatnonzero(np.all(self.tables == r.values, axis=(1, 2)))
        return int(hits[0]) if hits.size else -1

    def __eq__(self, other):
        if not isinstance(other, FunctionClass):
            return NotImplemented
        return self.B == other.B and np.array_equal(self.tables, other.tables)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Instance:
    d0: StateDistribution
    pi_ref: PolicyTable
    r_star: RewardTable
    fclass: FunctionClass
    beta: float
    B: float

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be positive")
        S, A = self.r_star.shape
        if self.d0.probs.shape != (S,):
            raise ValueError("d0 length does not match the number of states")
        if self.pi_ref.shape != (S, A):
            raise ValueError("pi_ref shape does not match the reward table")
        if self.fclass.tables.shape[1:] != (S, A):
            raise ValueError("function class shape does not match the reward table")
        if np.any(self.pi_ref.probs <= 0):
            raise ValueError("pi_ref must be strictly positive")
        if not (self.r_star.B == self.fclass.B == float(self.B)):
            raise ValueError("reward bound B must agree across fields")
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "B", float(self.B))

    @property
    def S(self) -> int:
        return self.r_star.shape[0]

    @property
    def A(self) -> int:
        return self.r_star.shape[1]

    @property
    def realizable(self) -> bool:
        return self.fclass.index_of(self.r_star) >= 0

    def optimal_policy(self) -> PolicyTable:
        return gibbs_policy(self.r_star, self.pi_ref, self.beta)

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.beta == other.beta
            and self.B == other.B
            and self.d0 == other.d0
            and self.pi_ref == other.pi_ref
            and self.r_star == other.r_star
            and self.fclass == other.fclass
        )

    __hash__ = None


@dataclass(frozen=True)
class PrivacyParams:
    """Randomized-response budget. ``epsilon=math.inf`` means no privatization."""

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @property
    def infinite(self) -> bool:
        return math.isinf(self.epsilon)

    @property
    def alpha(self) -> float:
        return rr_alpha(self.epsilon)


class RawSample(NamedTuple):
    s: int
    a1: int
    a2: int
    y: int


class PrivateSample(NamedTuple):
    s: int
    a1: int
    a2: int
    z: int


@dataclass(frozen=True, eq=False)
class PrivateDataset:
    """Column store of privatized records ``(s, a1, a2, z)``."""

    s: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        cols = [_frozen(c, dtype=np.int64) for c in (self.s, self.a1, self.a2, self.z)]
        n = cols[0].shape
        if any(c.ndim != 1 or c.shape != n for c in cols):
            raise ValueError("dataset columns must be 1-d and of equal length")
        if not np.all(np.abs(cols[3]) == 1):
            raise ValueError("labels must be in {-1, +1}")
        for name, c in zip(("s", "a1", "a2", "z"), cols):
            object.__setattr__(self, name, c)

    @classmethod
    def from_records(cls, records) -> "PrivateDataset":
        records = list(records)
        if not records:
            return cls.empty()
        arr = np.array([tuple(r) for r in records], dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3])

    @classmethod
    def empty(cls) -> "PrivateDataset":
        e = np.zeros(0, dtype=np.int64)
        return cls(e, e, e, e)

    def __len__(self) -> int:
        return self.s.shape[0]

    def __iter__(self) -> Iterator[PrivateSample]:
        for row in zip(self.s.tolist(), self.a1.tolist(), self.a2.tolist(), self.z.tolist()):
            yield PrivateSample(*row)

    def __getitem__(self, idx) -> "PrivateDataset":
        if isinstance(idx, (int, np.integer)):
            raise TypeError("index with a slice or mask; iterate for single records")
        return PrivateDataset(self.s[idx], self.a1[idx], self.a2[idx], self.z[idx])

    def validate(self, S: int, A: int) -> None:
        if len(self) == 0:
            return
        if self.s.min() < 0 or self.s.max() >= S:
            raise IndexError("state index out of range")
        for col in (self.a1, self.a2):
            if col.min() < 0 or col.max() >= A:
                raise IndexError("action index out of range")

    def __eq__(self, other):
        if not isinstance(other, PrivateDataset):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in ("s", "a1", "a2", "z")
        )

    __hash__ = None


def as_dataset(data) -> PrivateDataset:
    if isinstance(data, PrivateDataset):
        return data
    return PrivateDataset.from_records(data)


def _values(r) -> np.ndarray:
    return r.values if isinstance(r, RewardTable) else np.asarray(r, dtype=float)


def _probs(p) -> np.ndarray:
    if isinstance(p, (PolicyTable, StateDistribution)):
        return p.probs
    return np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# Preference model and randomized response
# ---------------------------------------------------------------------------


def sigmoid(x):
    """Logistic function, clamped at |x| = 700 to stay finite."""
    x = np.clip(np.asarray(x, dtype=float), -SIGMOID_CLAMP, SIGMOID_CLAMP)
    out = 1.0 / (1.0 + np.exp(-x))
    return float(out) if out.ndim == 0 else out


def _check_index(r: np.ndarray, s, a1, a2) -> None:
    S, A = r.shape
    if not (0 <= s < S and 0 <= a1 < A and 0 <= a2 < A):
        raise IndexError(f"(s={s}, a1={a1}, a2={a2}) out of range for shape {r.shape}")


def reward_gap(r, s: int, a1: int, a2: int) -> float:
    v = _values(r)
    _check_index(v, s, a1, a2)
    return float(v[s, a1] - v[s, a2])


def bt_preference_prob(r, s: int, a1: int, a2: int) -> float:
    """P[y = +1 | s, a1, a2] under the Bradley-Terry model."""
    return sigmoid(reward_gap(r, s, a1, a2))


def sample_preference(rng: np.random.Generator, r, s: int, a1: int, a2: int) -> int:
    p = bt_preference_prob(r, s, a1, a2)
    return 1 if rng.random() < p else -1


def rr_alpha(epsilon: float) -> float:
    """Keep-probability of binary randomized response at budget ``epsilon``."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if math.isinf(epsilon):
        return 1.0
    # e^e/(e^e+1) written as a sigmoid stays finite for large budgets
    return 1.0 / (1.0 + math.exp(-epsilon))


def rr_channel(pp: PrivacyParams) -> np.ndarray:
    """2x2 matrix ``P[z | y]``; rows index y in (-1, +1), columns z in (-1, +1)."""
    a = pp.alpha
    return np.array([[a, 1.0 - a], [1.0 - a, a]])


def ldp_ratio(channel: np.ndarray) -> float:
    """Worst-case likelihood ratio max_{z,y,y'} P(z|y)/P(z|y')."""
    ch = np.asarray(channel, dtype=float)
    worst = 0.0
    for z in range(ch.shape[1]):
        col = ch[:, z]
        if col.min() == 0:
            return math.inf if col.max() > 0 else worst
        worst = max(worst, col.max() / col.min())
    return worst


def privatize_label(rng: np.random.Generator, y: int, pp: PrivacyParams) -> int:
    """Randomized response: keep ``y`` with probability alpha, flip otherwise."""
    if y not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {y!r}")
    if pp.infinite:
        return int(y)
    return int(y) if rng.random() < pp.alpha else -int(y)


def randomized_response(rng: np.random.Generator, y: np.ndarray, alpha: float) -> np.ndarray:
    """Vectorised randomized response over a label array."""
    y = np.asarray(y, dtype=np.int64)
    if alpha == 1.0:
        return y.copy()
    keep = rng.random(y.shape) < alpha
    return np.where(keep, y, -y)


def private_label_prob(r, z: int, s: int, a1: int, a2: int, alpha: float) -> float:
    """Probability of observing private label ``z`` when the reward is ``r``."""
    if z not in (-1, 1):
        raise ValueError(f"label must be -1 or +1, got {z!r}")
    d = reward_gap(r, s, a1, a2)
    return alpha * sigmoid(z * d) + (1.0 - alpha) * sigmoid(-z * d)


def debiased_mean(alpha: float, delta_r):
    """E[z | s, a1, a2] after BT sampling and randomized response."""
    return (2.0 * alpha - 1.0) * (2.0 * sigmoid(delta_r) - 1.0)


# ---------------------------------------------------------------------------
# Policies and the regularized objective
# ---------------------------------------------------------------------------


def gibbs_policy(r, pi_ref, beta: float) -> PolicyTable:
    """Policy proportional to ``pi_ref * exp(beta * r)`` row by row.

    ``r`` may be a RewardTable or any real (S, A) array, e.g. a pessimistic
    estimate that has left [0, B].
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    ref = _probs(pi_ref)
    if np.any(ref <= 0):
        raise ValueError("reference policy must be strictly positive")
    logits = np.log(ref) + beta * _values(r)
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return PolicyTable(w / w.sum(axis=1, keepdims=True))


def random_policy(rng: np.random.Generator, S: int, A: int, concentration: float = 1.0) -> PolicyTable:
    """Independent Dirichlet rows; small ``concentration`` gives near-deterministic rows."""
    p = rng.dirichlet(np.full(A, concentration), size=S)
    p = np.maximum(p, 1e-300)
    return PolicyTable(p / p.sum(axis=1, keepdims=True))


def _xlogy_ratio(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise p*log(p/q) with 0*log 0 = 0; inf where p>0 and q=0."""
    out = np.zeros_like(p)
    pos = p > 0
    if np.any(pos & (q <= 0)):
        raise ValueError("policy puts mass where the reference policy has none")
    out[pos] = p[pos] * np.log(p[pos] / q[pos])
    return out


def kl_rows(p, q) -> np.ndarray:
    """Per-state KL(p(.|s) || q(.|s))."""
    return _xlogy_ratio(_probs(p), _probs(q)).sum(axis=1)


def objective_J(pi, inst: Instance) -> float:
    """KL-regularized value of ``pi`` under the instance's true reward."""
    p = _probs(pi)
    ref = inst.pi_ref.probs
    per_state = (p * inst.r_star.values).sum(axis=1) - _xlogy_ratio(p, ref).sum(axis=1) / inst.beta
    return float(inst.d0.probs @ per_state)


def suboptimality(pi, inst: Instance, pi_star: PolicyTable | None = None) -> float:
    if pi_star is None:
        pi_star = inst.optimal_policy()
    return objective_J(pi_star, inst) - objective_J(pi, inst)


def expected_kl_to_optimal(pi, inst: Instance) -> float:
    """beta^{-1} * E_{s~d0} KL(pi(.|s) || pi*(.|s))."""
    return float(inst.d0.probs @ kl_rows(pi, inst.optimal_policy())) / inst.beta


# ---------------------------------------------------------------------------
# Instance serialization
# ---------------------------------------------------------------------------


def instance_to_dict(inst: Instance) -> dict:
    return {
        "s_count": inst.S,
        "a_count": inst.A,
        "B": inst.B,
        "beta": inst.beta,
        "d0": inst.d0.probs.tolist(),
        "pi_ref": inst.pi_ref.probs.ravel().tolist(),
        "r_star": inst.r_star.values.ravel().tolist(),
        "fclass": [t.ravel().tolist() for t in inst.fclass.tables],
    }


def instance_from_dict(doc: dict) -> Instance:
    S, A, B = int(doc["s_count"]), int(doc["a_count"]), float(doc["B"])
    shape = (S, A)
    return Instance(
        d0=StateDistribution(np.array(doc["d0"], dtype=float)),
        pi_ref=PolicyTable(np.array(doc["pi_ref"], dtype=float).reshape(shape)),
        r_star=RewardTable(np.array(doc["r_star"], dtype=float).reshape(shape), B),
        fclass=FunctionClass(
            np.array(doc["fclass"], dtype=float).reshape((-1, S, A)), B
        ),
        beta=float(doc["beta"]),
        B=B,
    )


def dumps_instance(inst: Instance) -> str:
    # json writes floats with repr(), the shortest string that round-trips exactly
    return json.dumps(instance_to_dict(inst), indent=1) + "\n"


def loads_instance(text: str) -> Instance:
    return instance_from_dict(json.loads(text))


def save_instance(inst: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps_instance(inst))


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as f:
        return loads_instance(f.read())
