"""Online learning with an exploitation policy and an optimistic exploration policy.

Each round draws a context, one action from each policy and a privatized
comparison label. The reward is re-fit by private least squares, the
exploitation policy is its Gibbs policy, and the exploration policy tilts
it further by an uncertainty bonus computed over the confidence set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import (
    FunctionClass,
    Instance,
    PolicyTable,
    PrivacyParams,
    RewardTable,
    _probs,
    as_dataset,
    gibbs_policy,
    make_rng,
    objective_J,
    privatize_label,
    sigmoid,
    split_rng,
)
from .offline import class_gaps


def sigmoid_curvature_constant(B: float) -> float:
    """4 (e^-B + 2 + e^B): the width factor that makes the in-sample bound half of Gamma_T^2."""
    return 4.0 * (math.exp(-B) + 2.0 + math.exp(B))


def gamma_T(B: float, T: int, N_F: int, delta: float, alpha: float, gamma_scale: float = 1.0) -> float:
    if T < 1 or N_F < 1:
        raise ValueError("T and N_F must be at least 1")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if not 0.5 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0.5, 1], got {alpha}")
    if not gamma_scale > 0:
        raise ValueError("gamma_scale must be positive")
    return gamma_scale * sigmoid_curvature_constant(B) * math.sqrt(math.log(T * N_F / delta)) / (
        2.0 * alpha - 1.0
    )


@dataclass(frozen=True)
class OnlineParams:
    """Horizon and confidence knobs. ``lam=None`` selects Gamma_T^2 / 4.

    ``Gamma_T`` depends on B, |F| and alpha, so the bound ``lam <= Gamma_T^2 / 2``
    is checked by :meth:`resolve` once those are known.
    """

    T: int
    delta: float = 0.1
    lam: float | None = None
    gamma_scale: float = 1.0
    use_confidence_set: bool = True

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be a positive integer")
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if not self.gamma_scale > 0:
            raise ValueError("gamma_scale must be positive")

    def resolve(self, B: float, N_F: int, alpha: float) -> tuple[float, float]:
        """Return ``(Gamma_T, lam)``; raises if lam exceeds Gamma_T^2 / 2."""
        g = gamma_T(B, self.T, N_F, self.delta, alpha, self.gamma_scale)
        lam = 0.25 * g * g if self.lam is None else self.lam
        if lam > 0.5 * g * g:
            raise ValueError(f"lambda={lam} exceeds Gamma_T^2/2={0.5 * g * g}")
        return g, lam


def _as_index_and_table(fclass: FunctionClass, r_bar) -> int:
    if isinstance(r_bar, (int, np.integer)):
        return int(r_bar)
    idx = fclass.index_of(r_bar)
    if idx < 0:
        raise ValueError("r_bar is not a member of the function class")
    return idx


def private_least_squares_losses(fclass: FunctionClass, data, alpha: float) -> np.ndarray:
    data = as_dataset(data)
    if len(data) == 0:
        return np.zeros(len(fclass))
    data.validate(*fclass.tables.shape[1:])
    pred = (2.0 * sigmoid(class_gaps(fclass, data)) - 1.0) * (2.0 * alpha - 1.0)
    return ((pred - data.z[None, :]) ** 2).sum(axis=1)


def private_least_squares(fclass: FunctionClass, data, alpha: float) -> tuple[int, RewardTable]:
    """Member minimizing squared error to the debiased label mean; lowest index wins ties."""
    if len(fclass) == 0:
        raise ValueError("empty function class")
    idx = int(np.argmin(private_least_squares_losses(fclass, data, alpha)))
    return idx, fclass[idx]


def pairwise_gap_distance(fclass: FunctionClass, data) -> np.ndarray:
    """G[i, j] = sum over data of (gap_i - gap_j)^2, shape (N, N)."""
    data = as_dataset(data)
    if len(data) == 0:
        N = len(fclass)
        return np.zeros((N, N))
    g = class_gaps(fclass, data)
    sq = (g**2).sum(axis=1)
    G = sq[:, None] + sq[None, :] - 2.0 * g @ g.T
    return np.maximum(G, 0.0)


def confidence_set(fclass: FunctionClass, r_bar, data, lam: float, Gamma_T: float) -> list[int]:
    idx = _as_index_and_table(fclass, r_bar)
    data = as_dataset(data)
    if len(data) == 0:
        dist = np.zeros(len(fclass))
    else:
        g = class_gaps(fclass, data)
        dist = ((g - g[idx]) ** 2).sum(axis=1)
    return np.flatnonzero(dist + lam <= Gamma_T**2).tolist()


def centered_differences(fclass: FunctionClass) -> np.ndarray:
    """All pairwise differences r_i - r_j, shape (N, N, S, A)."""
    t = fclass.tables
    return t[:, None] - t[None, :]


def uncertainty_table(diffs: np.ndarray, G: np.ndarray, members, lam: float, pi) -> np.ndarray:
    """Uncertainty for every (s, a), given pairwise differences and distances."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    members = np.asarray(members, dtype=np.intp)
    S, A = diffs.shape[2:]
    if members.size < 2:
        return np.zeros((S, A))
    d = diffs[np.ix_(members, members)]
    p = _probs(pi)
    d = d - np.einsum("ijsa,sa->ijs", d, p)[..., None]
    denom = np.sqrt(lam + G[np.ix_(members, members)])
    return np.max(np.abs(d) / denom[:, :, None, None], axis=(0, 1))


def uncertainty(members, fclass: FunctionClass, lam: float, s: int, a: int, data, pi) -> float:
    if len(members) == 0:
        raise ValueError("members must be nonempty")
    G = pairwise_gap_distance(fclass, data)
    return float(uncertainty_table(centered_differences(fclass), G, members, lam, pi)[s, a])


def exploration_bonus(Gamma_T: float, U):
    """min(1, Gamma_T * U)."""
    out = np.minimum(1.0, Gamma_T * np.asarray(U, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(eq=False)
class RunTrace:
    """Per-round record of one online run; arrays are indexed by round t-1."""

    params: dict
    s: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    z: np.ndarray
    rbar_index: np.ndarray
    fset_size: np.ndarray
    regret_pi2: np.ndarray
    regret_pi1: np.ndarray
    u_played: np.ndarray
    cum_min1_u2: np.ndarray
    bonus_max: np.ndarray
    bonus_mean: np.ndarray
    insample_error: np.ndarray
    optimism_held: np.ndarray
    optimism_uncapped: np.ndarray
    pi1: np.ndarray | None = None
    pi2: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.s)

    @property
    def cumulative_regret(self) -> np.ndarray:
        return np.cumsum(self.regret_pi2)

    COLUMNS = (
        "t", "s", "a1", "a2", "z", "rbar_index", "fset_size",
        "regret_pi2", "regret_pi1", "u_played", "cum_min1_u2",
    )

    def rows(self):
        for i in range(len(self)):
            yield (
                i + 1, int(self.s[i]), int(self.a1[i]), int(self.a2[i]), int(self.z[i]),
                int(self.rbar_index[i]), int(self.fset_size[i]),
                float(self.regret_pi2[i]), float(self.regret_pi1[i]),
                float(self.u_played[i]), float(self.cum_min1_u2[i]),
            )


def pokl_run(
    inst: Instance,
    pp: PrivacyParams,
    params: OnlineParams,
    rng,
    *,
    record_policies: bool = True,
    privatize: Callable | None = None,
) -> RunTrace:
    """Run the two-policy loop for ``params.T`` rounds and record exact regrets.

    ``rng`` is a seed or SeedSequence; it is split into independent streams
    for contexts, each policy's actions, preference draws and randomized
    response, so swapping the privatizer never shifts the other draws.
    ``privatize(rng, y, pp)`` replaces randomized response when given.
    """
    if isinstance(rng, np.random.Generator):
        rng = np.random.SeedSequence(int(rng.integers(2**63)))
    g_ctx, g_a1, g_a2, g_pref, g_rr = split_rng(rng, 5)
    T = params.T
    alpha = pp.alpha
    fclass = inst.fclass
    N = len(fclass)
    S, A = inst.S, inst.A
    beta = inst.beta
    Gam, lam = params.resolve(inst.B, N, alpha)
    if privatize is None:
        privatize = privatize_label

    tables = fclass.tables
    r_star = inst.r_star.values
    star_idx = fclass.index_of(inst.r_star)
    diffs = centered_differences(fclass)
    pi_ref = inst.pi_ref.probs
    pi_star = inst.optimal_policy()
    J_star = objective_J(pi_star, inst)

    ctx = g_ctx.choice(S, size=T, p=inst.d0.probs)
    u1 = g_a1.random(T)
    u2 = g_a2.random(T)
    upref = g_pref.random(T)

    out = {k: np.empty(T, dtype=np.int64) for k in ("s", "a1", "a2", "z", "rbar_index", "fset_size")}
    for k in ("regret_pi2", "regret_pi1", "u_played", "cum_min1_u2", "bonus_max",
              "bonus_mean", "insample_error"):
        out[k] = np.empty(T)
    optimism = np.empty(T, dtype=bool)
    optimism_uncapped = np.empty(T, dtype=bool)
    pis1 = np.empty((T, S, A)) if record_policies else None
    pis2 = np.empty((T, S, A)) if record_policies else None

    pi1 = pi_ref.copy()
    pi2 = pi_ref.copy()
    ls_loss = np.zeros(N)
    G = np.zeros((N, N))
    insample_star = np.zeros(N)  # sum of (gap_r* - gap_r)^2 per member
    scale = 2.0 * alpha - 1.0
    cum = 0.0
    all_members = np.arange(N)

    for t in range(T):
        if record_policies:
            pis1[t] = pi1
            pis2[t] = pi2
        out["regret_pi1"][t] = J_star - objective_J(pi1, inst)
        out["regret_pi2"][t] = J_star - objective_J(pi2, inst)

        s = int(ctx[t])
        a1 = int(min(np.searchsorted(np.cumsum(pi1[s]), u1[t], side="right"), A - 1))
        a2 = int(min(np.searchsorted(np.cumsum(pi2[s]), u2[t], side="right"), A - 1))
        y = 1 if upref[t] < sigmoid(r_star[s, a1] - r_star[s, a2]) else -1
        z = int(privatize(g_rr, y, pp))

        gaps = tables[:, s, a1] - tables[:, s, a2]
        ls_loss += ((2.0 * sigmoid(gaps) - 1.0) * scale - z) ** 2
        G += (gaps[:, None] - gaps[None, :]) ** 2
        if star_idx >= 0:
            insample_star += (gaps[star_idx] - gaps) ** 2
        else:
            insample_star += (r_star[s, a1] - r_star[s, a2] - gaps) ** 2
        idx = int(np.argmin(ls_loss))

        r_bar = tables[idx]
        pi1 = gibbs_policy(r_bar, pi_ref, beta).probs
        fset = np.flatnonzero(G[:, idx] + lam <= Gam * Gam)
        members = fset if params.use_confidence_set else all_members
        U = uncertainty_table(diffs, G, members, lam, pi1)
        bonus = exploration_bonus(Gam, U)
        pi2 = gibbs_policy(bonus, pi1, beta).probs

        c_t = ((r_star - r_bar) * pi1).sum(axis=1)
        slack = r_bar + c_t[:, None] - r_star
        optimism[t] = bool(np.all(slack + bonus >= -1e-12))
        # the event with Gamma_T * U in place of the bonus capped at 1
        optimism_uncapped[t] = bool(np.all(slack + Gam * U >= -1e-12))
        u = float(U[s, a2])
        cum += min(1.0, u * u)

        out["s"][t], out["a1"][t], out["a2"][t], out["z"][t] = s, a1, a2, z
        out["rbar_index"][t] = idx
        out["fset_size"][t] = len(fset)
        out["u_played"][t] = u
        out["cum_min1_u2"][t] = cum
        out["bonus_max"][t] = bonus.max()
        out["bonus_mean"][t] = bonus.mean()
        out["insample_error"][t] = insample_star[idx]

    meta = {
        "T": T, "delta": params.delta, "lambda": lam, "gamma_T": Gam,
        "gamma_scale": params.gamma_scale, "use_confidence_set": params.use_confidence_set,
        "epsilon": pp.epsilon, "alpha": alpha, "beta": beta, "B": inst.B,
        "S": S, "A": A, "N_F": N,
    }
    return RunTrace(params=meta, optimism_held=optimism, optimism_uncapped=optimism_uncapped, pi1=pis1, pi2=pis2, **out)


def write_trace(path, trace: RunTrace, seed) -> None:
    """CSV with ``# key=value`` header lines recording parameters and the seed."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for k, v in trace.params.items():
            f.write(f"# {k}={_fmt_any(v)}\n")
        f.write(f"# seed={seed}\n")
        f.write(",".join(RunTrace.COLUMNS) + "\n")
        for row in trace.rows():
            f.write(",".join(_fmt_any(x) for x in row) + "\n")


def read_trace(path) -> tuple[dict, np.ndarray]:
    meta, rows = {}, []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            elif line and not line.startswith("t,"):
                rows.append([float(x) for x in line.split(",")])
    return meta, np.array(rows).reshape(-1, len(RunTrace.COLUMNS))


def _fmt_any(x) -> str:
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)
