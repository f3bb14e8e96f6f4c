"""Offline learning from privatized comparisons with a pessimistic reward estimate.

The learner maximizes the randomized-response likelihood over a finite
reward class, subtracts a coverage-weighted confidence bonus, and returns
the Gibbs policy of the pessimistic reward.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FunctionClass,
    Instance,
    PolicyTable,
    PrivacyParams,
    PrivateDataset,
    RewardTable,
    _probs,
    as_dataset,
    gibbs_policy,
    make_rng,
    sigmoid,
)

VAR_FLOOR = 1e-12
DEFAULT_MULTIPLIER_GRID = tuple(2.0**k for k in range(-12, 5))


class BonusMode(str, enum.Enum):
    THEORY = "theory"
    CALIBRATED = "calibrated"


@dataclass(frozen=True)
class OfflineParams:
    """Knobs of the pessimistic learner.

    In calibrated mode the theory bonus is multiplied by the smallest grid
    value for which the pessimism event held in at least ``1 - delta`` of
    simulated replays. ``multiplier`` may be supplied to skip calibration.
    """

    delta: float = 0.1
    c_bonus: float = 16.0
    tau: float = 0.0
    bonus_mode: BonusMode = BonusMode.THEORY
    bonus_cap: float | None = None  # defaults to 2B
    multiplier: float | None = None
    calibration_replays: int = 200
    calibration_seed: int = 20_240_601
    multiplier_grid: tuple[float, ...] = DEFAULT_MULTIPLIER_GRID

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.c_bonus > 0:
            raise ValueError("c_bonus must be positive")
        if self.tau != 0:
            raise ValueError("only finite classes are supported, so tau must be 0")
        object.__setattr__(self, "bonus_mode", BonusMode(self.bonus_mode))


@dataclass(frozen=True, eq=False)
class OfflineResult:
    r_bar_index: int
    r_bar: RewardTable
    gamma: np.ndarray
    r_hat: np.ndarray
    pi_hat: PolicyTable
    log_likelihoods: np.ndarray
    d_sq: np.ndarray
    d_pi_star: float
    multiplier: float = 1.0
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Step 1: private maximum likelihood
# ---------------------------------------------------------------------------


def class_gaps(fclass: FunctionClass, data: PrivateDataset) -> np.ndarray:
    """Reward differences r(s_i, a1_i) - r(s_i, a2_i) for every member, shape (N, n)."""
    t = fclass.tables
    return t[:, data.s, data.a1] - t[:, data.s, data.a2]


def private_log_likelihoods(fclass: FunctionClass, data, alpha: float) -> np.ndarray:
    """Randomized-response log-likelihood of the data under each class member."""
    data = as_dataset(data)
    data.validate(*fclass.tables.shape[1:])
    if len(data) == 0:
        return np.zeros(len(fclass))
    zd = data.z[None, :] * class_gaps(fclass, data)
    p = alpha * sigmoid(zd) + (1.0 - alpha) * sigmoid(-zd)
    return np.log(p).sum(axis=1)


def private_mle(fclass: FunctionClass, data, alpha: float) -> tuple[int, RewardTable]:
    """Exhaustive argmax of the private likelihood; ties go to the lowest index."""
    if len(fclass) == 0:
        raise ValueError("empty function class")
    ll = private_log_likelihoods(fclass, data, alpha)
    idx = int(np.argmax(ll))
    return idx, fclass[idx]


# ---------------------------------------------------------------------------
# Coverage divergence and the pessimism bonus
# ---------------------------------------------------------------------------


def d_divergence_table(fclass: FunctionClass, pi, d0) -> np.ndarray:
    """D^2 divergence for every (s, a), shape (S, A).

    The per-state bias is the mean of g - h under ``pi(.|s)``. Pairs whose
    variance falls under the floor contribute 0 when their centered
    difference also vanishes and +inf otherwise.
    """
    t = fclass.tables
    N = t.shape[0]
    if N == 1:
        return np.zeros(t.shape[1:])
    p = _probs(pi)
    w = _probs(d0)
    iu, ju = np.nonzero(~np.eye(N, dtype=bool))
    diff = t[iu] - t[ju]  # (P, S, A)
    centered = diff - np.einsum("psa,sa->ps", diff, p)[:, :, None]
    var = np.einsum("psa,sa->ps", centered**2, p) @ w  # (P,)
    num = centered**2
    out = np.zeros(t.shape[1:])
    ok = var >= VAR_FLOOR
    if np.any(ok):
        out = np.max(num[ok] / var[ok, None, None], axis=0)
    degenerate = ~ok
    if np.any(degenerate):
        blowup = np.any(num[degenerate] >= VAR_FLOOR, axis=0)
        out = np.where(blowup, math.inf, out)
    return out


def d_divergence_sq(fclass: FunctionClass, s: int, a: int, pi, d0) -> float:
    if len(fclass) == 0:
        raise ValueError("empty function class")
    return float(d_divergence_table(fclass, pi, d0)[s, a])


def pessimism_bonus(d_sq, alpha, n, N_F, delta, c_bonus, tau=0.0, B=1.0, cap=None):
    """Confidence width ``sqrt(D^2 c e^B (log(N_F/delta)/n + tau) / (2 alpha - 1)^2)``.

    Infinite ``d_sq`` entries are mapped to ``cap`` (default ``2B``).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if cap is None:
        cap = 2.0 * B
    scale = c_bonus * math.exp(B) / (2.0 * alpha - 1.0) ** 2 * (math.log(N_F / delta) / n + tau)
    d_sq = np.asarray(d_sq, dtype=float)
    finite = np.isfinite(d_sq)
    out = np.where(finite, np.sqrt(np.where(finite, d_sq, 0.0) * scale), cap)
    return float(out) if out.ndim == 0 else out


def theory_bonus_table(inst: Instance, n: int, alpha: float, params: OfflineParams):
    d_sq = d_divergence_table(inst.fclass, inst.pi_ref, inst.d0)
    gamma = pessimism_bonus(
        d_sq, alpha, n, len(inst.fclass), params.delta, params.c_bonus, params.tau, inst.B,
        params.bonus_cap,
    )
    return d_sq, np.asarray(gamma)


# ---------------------------------------------------------------------------
# Pessimism event and calibration
# ---------------------------------------------------------------------------


def reference_bias(r_bar, r_star, pi) -> np.ndarray:
    """b(s) = E_{a~pi(.|s)}[r_bar(s,a) - r*(s,a)]."""
    diff = np.asarray(getattr(r_bar, "values", r_bar)) - np.asarray(getattr(r_star, "values", r_star))
    return (diff * _probs(pi)).sum(axis=1)


def required_multiplier(r_bar, r_star, pi_ref, gamma: np.ndarray) -> float:
    """Smallest m >= 0 with r_bar - b - r* <= m * gamma everywhere."""
    rb = np.asarray(getattr(r_bar, "values", r_bar))
    rs = np.asarray(getattr(r_star, "values", r_star))
    excess = rb - reference_bias(rb, rs, pi_ref)[:, None] - rs
    need = excess > 1e-12
    if not np.any(need):
        return 0.0
    if np.any(gamma[need] <= 0):
        return math.inf
    return float(np.max(excess[need] / gamma[need]))


def pessimism_event(r_bar, r_star, pi_ref, gamma: np.ndarray, tol: float = 1e-12) -> bool:
    """Whether the reference-centered estimate minus the bonus stays below r*."""
    rb = np.asarray(getattr(r_bar, "values", r_bar))
    rs = np.asarray(getattr(r_star, "values", r_star))
    excess = rb - reference_bias(rb, rs, pi_ref)[:, None] - rs
    return bool(np.all(excess <= gamma + tol))


def calibrate_multiplier(
    inst: Instance,
    n: int,
    pp: PrivacyParams,
    params: OfflineParams,
    rng: np.random.Generator | None = None,
) -> float:
    """Pick the bonus multiplier from replays simulated on ``inst``.

    Uses the true reward of the simulator to evaluate the pessimism event,
    so it tunes the unnamed bonus constant rather than the estimator.
    """
    from .instances import offline_dataset_gen

    if rng is None:
        rng = make_rng(params.calibration_seed)
    _, gamma = theory_bonus_table(inst, n, pp.alpha, params)
    needed = np.empty(params.calibration_replays)
    for k in range(params.calibration_replays):
        data = offline_dataset_gen(inst, n, pp, rng)
        _, r_bar = private_mle(inst.fclass, data, pp.alpha)
        needed[k] = required_multiplier(r_bar, inst.r_star, inst.pi_ref, gamma)
    target = 1.0 - params.delta
    for m in sorted(params.multiplier_grid):
        if np.mean(needed <= m) >= target:
            return float(m)
    return float(max(params.multiplier_grid))


# ---------------------------------------------------------------------------
# Full learner
# ---------------------------------------------------------------------------


def ppkl_run(inst: Instance, data, pp: PrivacyParams, params: OfflineParams) -> OfflineResult:
    """Private MLE, pessimistic correction, Gibbs policy of the corrected reward."""
    data = as_dataset(data)
    alpha = pp.alpha
    ll = private_log_likelihoods(inst.fclass, data, alpha)
    idx = int(np.argmax(ll))
    r_bar = inst.fclass[idx]
    n = max(len(data), 1)
    d_sq, gamma = theory_bonus_table(inst, n, alpha, params)
    multiplier = 1.0
    if params.bonus_mode is BonusMode.CALIBRATED:
        multiplier = params.multiplier
        if multiplier is None:
            multiplier = calibrate_multiplier(inst, len(data), pp, params)
        gamma = gamma * multiplier
    r_hat = r_bar.values - gamma
    pi_hat = gibbs_policy(r_hat, inst.pi_ref, inst.beta)
    weights = inst.d0.probs[:, None] * inst.optimal_policy().probs
    pos = weights > 0
    d_pi_star = float(np.sum(weights[pos] * d_sq[pos]))
    gamma.flags.writeable = False
    r_hat.flags.writeable = False
    return OfflineResult(
        r_bar_index=idx,
        r_bar=r_bar,
        gamma=gamma,
        r_hat=r_hat,
        pi_hat=pi_hat,
        log_likelihoods=ll,
        d_sq=d_sq,
        d_pi_star=d_pi_star,
        multiplier=float(multiplier),
    )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_dataset(path, data, epsilon: float, seed) -> None:
    """One record per line after a ``# n=..., epsilon=..., seed=...`` header."""
    data = as_dataset(data)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(f"# n={len(data)}, epsilon={_fmt(epsilon)}, seed={seed}\n")
        f.write("s,a1,a2,z\n")
        for rec in data:
            f.write(f"{rec.s},{rec.a1},{rec.a2},{rec.z}\n")


def read_dataset(path) -> tuple[PrivateDataset, dict]:
    with open(path, encoding="utf-8") as f:
        header = f.readline()
        if not header.startswith("#"):
            raise ValueError("dataset file must start with a '# n=..., epsilon=..., seed=...' line")
        meta = {}
        for item in header[1:].split(","):
            key, _, value = item.strip().partition("=")
            meta[key] = value
        meta = {"n": int(meta["n"]), "epsilon": float(meta["epsilon"]), "seed": meta["seed"]}
        if f.readline().strip() != "s,a1,a2,z":
            raise ValueError("missing column line 's,a1,a2,z'")
        body = f.read()
    if not body.strip():
        data = PrivateDataset.empty()
    else:
        rows = np.loadtxt(io.StringIO(body), delimiter=",", dtype=np.int64, ndmin=2)
        data = PrivateDataset(rows[:, 0], rows[:, 1], rows[:, 2], rows[:, 3])
    if len(data) != meta["n"]:
        raise ValueError(f"header says n={meta['n']} but file holds {len(data)} records")
    return data, meta


def _matrix_lines(name: str, m: np.ndarray) -> list[str]:
    lines = [f"[{name}]"]
    for row in np.atleast_2d(m):
        lines.append(",".join(_fmt(x) for x in row))
    return lines


def export_result(result: OfflineResult) -> str:
    """Plain-text dump: one bracketed section per matrix, then diagnostics."""
    lines = []
    lines += _matrix_lines("r_bar", result.r_bar.values)
    lines += _matrix_lines("gamma", result.gamma)
    lines += _matrix_lines("r_hat", result.r_hat)
    lines += _matrix_lines("pi_hat", result.pi_hat.probs)
    lines += _matrix_lines("d_sq", result.d_sq)
    lines += _matrix_lines("log_likelihoods", result.log_likelihoods[None, :])
    lines.append("[diagnostics]")
    lines.append(f"r_bar_index={result.r_bar_index}")
    lines.append(f"d_pi_star={_fmt(result.d_pi_star)}")
    lines.append(f"multiplier={_fmt(result.multiplier)}")
    return "\n".join(lines) + "\n"


def parse_result_export(text: str) -> dict:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is not None and line:
            sections[current].append(line)
    out = {}
    for name, rows in sections.items():
        if name == "diagnostics":
            for row in rows:
                k, _, v = row.partition("=")
                out[k] = int(v) if k == "r_bar_index" else float(v)
        else:
            out[name] = np.array([[float(x) for x in r.split(",")] for r in rows])
    return out
