"""Machine-checkable properties of every module, run as one report.

Each check records what it measured and the tolerance it was held to.
``quick`` shrinks replay counts for smoke runs; the default sizes are the
ones the properties are stated at.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import core
from .core import (
    PrivacyParams,
    debiased_mean,
    expected_kl_to_optimal,
    gibbs_policy,
    make_rng,
    objective_J,
    private_label_prob,
    random_policy,
    rr_channel,
    suboptimality,
)
from .harness import ConfigError, InstanceConfig, SweepConfig, config_from_text, emit_outputs, fit_loglog_slope, run_offline_sweep
from .instances import (
    HardInstanceSpec,
    concentrability,
    hard_instance,
    hard_optimal_minus_prob,
    offline_dataset_gen,
    random_instance,
    theory_gap,
)
from .offline import OfflineParams, pessimism_event, ppkl_run, private_log_likelihoods, reference_bias
from .online import OnlineParams, pokl_run

# online properties are exercised on this strictly admissible hard instance
ONLINE_SPEC = HardInstanceSpec(S=4, C=3.0, a=0.9, beta=1.0, B=2.0, v=(1, -1, 1, -1))
# B <= 1 keeps every centered reward error below the bonus cap of 1
CAPPED_SPEC = HardInstanceSpec(S=4, C=2.5, a=0.4, beta=1.0, B=1.0, v=(1, -1, 1, -1))
# exploration-scale regime in which the uncertainty sum saturates within T=2000
SMALL_GAMMA_SCALE = 0.03


@dataclass(frozen=True)
class CheckResult:
    name: str
    module: str
    passed: bool
    measured: str
    tolerance: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.module}/{self.name}: measured {self.measured}; tolerance {self.tolerance}"


@dataclass(frozen=True)
class InvariantReport:
    checks: tuple[CheckResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def _hard_offline(n: int, epsilon_ref: float = 1.0):
    spec = HardInstanceSpec(
        S=4, C=4.0, a=theory_gap(4, 4.0, epsilon_ref, n), beta=1.0, B=2.0,
        v=(1, -1, 1, -1), shift_to_range=True,
    )
    return hard_instance(spec)


# ---------------------------------------------------------------------------
# core
# ---------------------------------------------------------------------------


def check_ldp_ratio(channel: Callable = rr_channel) -> CheckResult:
    worst = 0.0
    measured = []
    for eps in (0.1, 0.5, 1.0, 2.0):
        ratio = core.ldp_ratio(channel(PrivacyParams(eps)))
        err = abs(ratio - math.exp(eps))
        worst = max(worst, err)
        measured.append(f"eps={eps}: ratio={ratio:.15g}")
    return CheckResult("ldp_ratio", "core", worst <= 1e-12, "; ".join(measured), "|ratio - e^eps| <= 1e-12")


def check_channel_mean(draws: int, seed: int = 1) -> CheckResult:
    rng = make_rng(seed)
    worst = 0.0
    for delta, eps in ((0.3, 1.0), (-1.2, 0.5), (2.0, 2.0)):
        pp = PrivacyParams(eps)
        y = np.where(rng.random(draws) < core.sigmoid(delta), 1, -1)
        z = core.randomized_response(rng, y, pp.alpha)
        se = z.std(ddof=1) / math.sqrt(draws)
        worst = max(worst, abs(z.mean() - debiased_mean(pp.alpha, delta)) / se)
    return CheckResult("channel_mean", "core", worst <= 3.0, f"max |z-score|={worst:.3f}", "<= 3 standard errors")


def check_gibbs_optimality(policies: int, seed: int = 2) -> CheckResult:
    rng = make_rng(seed)
    inst = random_instance(3, 4, 2, 1.0, 2.0, rng)
    best = objective_J(inst.optimal_policy(), inst)
    worst_gap = math.inf
    for _ in range(policies):
        gap = best - objective_J(random_policy(rng, inst.S, inst.A), inst)
        worst_gap = min(worst_gap, gap)
    return CheckResult("gibbs_optimality", "core", worst_gap >= -1e-12,
                       f"min J(pi*) - J(pi)={worst_gap:.3e} over {policies} policies", ">= -1e-12")


def check_subopt_kl(instances: int = 5, policies: int = 100, seed: int = 3) -> CheckResult:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(instances):
        inst = random_instance(int(rng.integers(1, 5)), int(rng.integers(2, 5)), 1, 2.0,
                               float(rng.uniform(0.2, 5.0)), rng)
        for _ in range(policies):
            pi = random_policy(rng, inst.S, inst.A)
            worst = max(worst, abs(suboptimality(pi, inst) - expected_kl_to_optimal(pi, inst)))
    return CheckResult("subopt_kl_identity", "core", worst < 1e-9, f"max abs diff={worst:.3e}", "< 1e-9")


def check_bias_invariance(pairs: int = 100, seed: int = 4) -> CheckResult:
    rng = make_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        S, A, B = int(rng.integers(1, 6)), int(rng.integers(2, 6)), float(rng.uniform(0.5, 3))
        r = rng.uniform(0, B, size=(S, A))
        b = rng.uniform(-B, B, size=S)
        ref = rng.dirichlet(np.ones(A), size=S) + 1e-3
        ref /= ref.sum(axis=1, keepdims=True)
        beta = float(rng.uniform(0.1, 5.0))
        p1 = gibbs_policy(r, ref, beta).probs
        p2 = gibbs_policy(r - b[:, None], ref, beta).probs
        worst = max(worst, float(np.max(np.abs(p1 - p2))))
    return CheckResult("bias_invariance", "core", worst <= 1e-12, f"max entry diff={worst:.3e}", "<= 1e-12")


def check_private_prob_consistency() -> CheckResult:
    worst = 0.0
    r = np.array([[0.0, 0.7, 1.9], [1.2, 0.4, 2.0]])
    for eps in (0.1, 1.0, 3.0, math.inf):
        a = core.rr_alpha(eps)
        for s in range(2):
            for a1 in range(3):
                for a2 in range(3):
                    p_plus = core.bt_preference_prob(r, s, a1, a2)
                    for z in (-1, 1):
                        keep = p_plus if z == 1 else 1.0 - p_plus
                        direct = a * keep + (1 - a) * (1.0 - keep)
                        worst = max(worst, abs(private_label_prob(r, z, s, a1, a2, a) - direct))
    return CheckResult("private_prob_consistency", "core", worst <= 1e-15, f"max diff={worst:.3e}", "<= 1e-15")


# ---------------------------------------------------------------------------
# offline
# ---------------------------------------------------------------------------


def check_likelihood_dominance(seed: int = 5) -> CheckResult:
    rng = make_rng(seed)
    inst = random_instance(3, 3, 8, 2.0, 1.0, rng)
    pp = PrivacyParams(1.0)
    data = offline_dataset_gen(inst, 2000, pp, rng)
    res = ppkl_run(inst, data, pp, OfflineParams())
    ll = private_log_likelihoods(inst.fclass, data, pp.alpha)
    margin = float(ll[res.r_bar_index] - ll.max())
    return CheckResult("likelihood_dominance", "offline", margin >= 0,
                       f"selected minus best re-evaluated log-lik={margin:.3e}", ">= 0")


def check_pessimism_coverage(replays: int, seed: int = 6) -> CheckResult:
    n, pp, params = 4096, PrivacyParams(1.0), OfflineParams(delta=0.1)
    inst = _hard_offline(n)
    rng = make_rng(seed)
    fails = 0
    for _ in range(replays):
        res = ppkl_run(inst, offline_dataset_gen(inst, n, pp, rng), pp, params)
        fails += not pessimism_event(res.r_bar, inst.r_star, inst.pi_ref, res.gamma)
    frac = fails / replays
    return CheckResult("pessimism_coverage", "offline", frac <= 0.15,
                       f"failure fraction={frac:.3f} over {replays} replays", "<= delta + 0.05 = 0.15")


def check_onpolicy_error_scaling(replays: int, seed: int = 7) -> CheckResult:
    ns = [2**k for k in range(8, 15)]
    pp = PrivacyParams(1.0)
    errs = []
    for n in ns:
        inst = _hard_offline(n)
        rng = make_rng([seed, n])
        acc = 0.0
        for _ in range(replays):
            res = ppkl_run(inst, offline_dataset_gen(inst, n, pp, rng), pp, OfflineParams())
            diff = res.r_bar.values - inst.r_star.values
            centered = diff - reference_bias(res.r_bar, inst.r_star, inst.pi_ref)[:, None]
            acc += float(inst.d0.probs @ (inst.pi_ref.probs * centered**2).sum(axis=1))
        errs.append(acc / replays)
    slope, se = fit_loglog_slope(ns, errs)
    return CheckResult("onpolicy_error_scaling", "offline", abs(slope + 1) <= 0.3,
                       f"slope={slope:.3f} (se {se:.3f})", "-1 +/- 0.3")


def check_subopt_monotone_in_eps(seeds: int, seed: int = 8) -> CheckResult:
    n = 4096
    inst = _hard_offline(n)
    means = {}
    for eps in (0.5, 2.0):
        pp = PrivacyParams(eps)
        vals = []
        for k in range(seeds):
            data = offline_dataset_gen(inst, n, pp, make_rng([seed, k, int(eps * 10)]))
            vals.append(suboptimality(ppkl_run(inst, data, pp, OfflineParams()).pi_hat, inst))
        means[eps] = float(np.mean(vals))
    return CheckResult("subopt_monotone_in_eps", "offline", means[2.0] <= means[0.5],
                       f"mean SubOpt eps=2: {means[2.0]:.4g}, eps=0.5: {means[0.5]:.4g}", "eps=2 <= eps=0.5")


# ---------------------------------------------------------------------------
# online
# ---------------------------------------------------------------------------


def online_checks(replays: int, T: int, regret_seeds: int, T_long: int = 2000) -> list[CheckResult]:
    inst = hard_instance(ONLINE_SPEC)
    pp = PrivacyParams(1.0)
    delta = 0.1
    capped_inst = hard_instance(CAPPED_SPEC)
    insample_fail = uncapped_fail = capped_fail = 0
    bonus_ok = True
    for k in range(replays):
        tr = pokl_run(inst, pp, OnlineParams(T=T, delta=delta), [9, k], record_policies=False)
        half_gamma_sq = 0.5 * tr.params["gamma_T"] ** 2
        insample_fail += bool(np.any(tr.insample_error > half_gamma_sq))
        uncapped_fail += not bool(np.all(tr.optimism_uncapped))
        bonus_ok &= bool(tr.bonus_max.max() <= 1.0 and tr.bonus_max.min() >= 0.0)
        tr = pokl_run(capped_inst, pp, OnlineParams(T=T, delta=delta), [13, k], record_policies=False)
        capped_fail += not bool(np.all(tr.optimism_held))
    out = [
        CheckResult("insample_error_bound", "online", insample_fail / replays <= delta + 0.05,
                    f"failure fraction={insample_fail / replays:.3f} over {replays} replays (T={T})", "<= 0.15"),
        CheckResult("optimism_coverage", "online", 1 - capped_fail / replays >= 1 - delta - 0.05,
                    f"coverage={1 - capped_fail / replays:.3f} with the capped bonus (B={CAPPED_SPEC.B})", ">= 0.85"),
        CheckResult("optimism_coverage_uncapped", "online", 1 - uncapped_fail / replays >= 1 - delta - 0.05,
                    f"coverage={1 - uncapped_fail / replays:.3f} with Gamma_T*U (B={ONLINE_SPEC.B})", ">= 0.85"),
    ]

    small = OnlineParams(T=T_long, gamma_scale=SMALL_GAMMA_SCALE)
    regrets, cums, shrink_ok = [], [], True
    for k in range(regret_seeds):
        theory = pokl_run(inst, pp, OnlineParams(T=T_long), [10, k], record_policies=False)
        regrets.append(theory.regret_pi2)
        bonus_ok &= bool(theory.bonus_max.max() <= 1.0)
        tr = pokl_run(inst, pp, small, [11, k], record_policies=False)
        cums.append(tr.cum_min1_u2)
        bonus_ok &= bool(tr.bonus_max.max() <= 1.0 and tr.bonus_max.min() >= 0.0)
        shrink_ok &= bool(np.all(np.diff(theory.fset_size) <= 0) and np.all(np.diff(tr.fset_size) <= 0))
    R = np.mean(regrets, axis=0)
    d = T_long // 10
    first, last = R[:d].mean(), R[-d:].mean()
    cu = np.mean(cums, axis=0)
    out += [
        CheckResult("confidence_set_shrinkage", "online", shrink_ok, f"nonincreasing={shrink_ok}", "|F_t| nonincreasing"),
        CheckResult("bonus_range", "online", bonus_ok, f"all bonuses in [0,1]={bonus_ok}", "b_t in [0, 1]"),
        CheckResult("regret_sublinearity", "online", last <= first / 5,
                    f"last-decile {last:.4g} vs first-decile {first:.4g}", "last <= first / 5"),
        CheckResult("cumulative_uncertainty", "online", cu[T_long - 1] <= 0.75 * 2 * cu[T_long // 2 - 1],
                    f"sum at T={T_long}: {cu[-1]:.4g}, at T/2: {cu[T_long // 2 - 1]:.4g} (gamma_scale={SMALL_GAMMA_SCALE})",
                    "value(T) <= 1.5 * value(T/2)"),
    ]
    return out


# ---------------------------------------------------------------------------
# instances
# ---------------------------------------------------------------------------


def check_hard_closed_form() -> CheckResult:
    worst = 0.0
    for C, a, beta, B in ((4.0, 0.3, 1.0, 3.0), (3.0, 0.9, 1.0, 2.0), (2.5, 0.1, 2.0, 1.0)):
        spec = HardInstanceSpec(S=3, C=C, a=a, beta=beta, B=B, v=(1, -1, 1))
        inst = hard_instance(spec)
        closed = hard_optimal_minus_prob(spec, spec.v)
        worst = max(worst, float(np.max(np.abs(inst.optimal_policy().probs[:, 0] - closed))))
    return CheckResult("hard_optimal_closed_form", "instances", worst <= 1e-12, f"max diff={worst:.3e}", "<= 1e-12")


def check_hard_concentrability() -> CheckResult:
    worst = -math.inf
    for C, a in ((3.0, 0.5), (4.0, 0.9), (2.2, 0.05)):
        base = HardInstanceSpec(S=4, C=C, a=a, beta=1.0, B=3.0)
        inst = hard_instance(base)
        for member in inst.fclass.tables:
            pi = gibbs_policy(member, inst.pi_ref, inst.beta)
            worst = max(worst, concentrability(pi, inst.pi_ref) - C)
    return CheckResult("hard_concentrability", "instances", worst <= 1e-12,
                       f"max C^pi* - C={worst:.3e} over the full cube", "<= 0")


def check_flip_symmetry() -> CheckResult:
    ok = True
    for v in ((1, 1, -1), (-1, 1, 1)):
        favored = []
        for w in (v, tuple(-x for x in v)):
            spec = HardInstanceSpec(S=3, C=3.0, a=0.4, beta=1.5, B=2.0, v=w)
            favored.append(np.argmax(hard_instance(spec).optimal_policy().probs, axis=1))
        ok &= bool(np.all(favored[0] != favored[1]))
    return CheckResult("flip_symmetry", "instances", ok, f"favored action inverts={ok}", "every state")


def check_dataset_marginals(n: int, seed: int = 12) -> CheckResult:
    spec = HardInstanceSpec(S=4, C=3.0, a=0.5, beta=1.0, B=2.0, v=(1, -1, 1, -1))
    inst = hard_instance(spec)
    pp = PrivacyParams(1.0)
    data = offline_dataset_gen(inst, n, pp, make_rng(seed))
    worst = 0.0
    for s in range(spec.S):
        mask = (data.s == s) & (data.a1 == 0) & (data.a2 == 1)
        m = int(mask.sum())
        p = core.sigmoid(spec.b + spec.v[s] * spec.a)
        expect = pp.alpha * p + (1 - pp.alpha) * (1 - p)
        freq = float(np.mean(data.z[mask] == 1))
        se = math.sqrt(expect * (1 - expect) / m)
        worst = max(worst, abs(freq - expect) / se)
    return CheckResult("dataset_marginals", "instances", worst <= 3.0, f"max |z-score|={worst:.3f}", "<= 3 standard errors")


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------


def check_determinism() -> CheckResult:
    cfg = SweepConfig(mode="offline", n_values=(256, 1024), epsilons=(1.0,), seeds=(0, 1, 2),
                      offline=OfflineParams(c_bonus=1.0))
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / "a", Path(tmp) / "b"]
        for d in dirs:
            emit_outputs(run_offline_sweep(cfg), [], d, cfg)
        names = sorted(p.name for p in dirs[0].iterdir())
        _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], names, shallow=False)
    ok = not mismatch and not errors
    return CheckResult("determinism", "harness", ok, f"{len(names)} files, mismatched={mismatch + errors}", "byte-identical")


def check_slope_fitter() -> CheckResult:
    n = np.array([10.0, 100.0, 1000.0, 1e4])
    worst = 0.0
    for c, p in ((7.0, -1.0), (0.3, -0.5), (2.0, 1.7)):
        slope, _ = fit_loglog_slope(n, c * n**p)
        worst = max(worst, abs(slope - p))
    return CheckResult("slope_fitter", "harness", worst <= 1e-9, f"max slope error={worst:.3e}", "<= 1e-9")


def check_config_validation() -> CheckResult:
    bad = {
        "lambda": "[instance]\nkind=hard\na=0.5\nc=3\n[online]\nlambda=1e12\n[sweep]\nmode=online\nT=100\n",
        "delta": "[offline]\ndelta=1.5\n[sweep]\nn=100\n",
        "epsilon": "[privacy]\nepsilon=-1\n[sweep]\nn=100\n",
    }
    messages = {}
    for key, text in bad.items():
        try:
            config_from_text(text)
            messages[key] = None
        except ConfigError as exc:
            messages[key] = str(exc)
    ok = all(messages.values()) and len(set(messages.values())) == 3
    ok &= all(k in (messages[k] or "") for k in messages)
    return CheckResult("config_validation", "harness", ok, f"rejected={sorted(k for k, v in messages.items() if v)}",
                       "three distinct rejections")


# ---------------------------------------------------------------------------


def run_invariant_suite(cfg: SweepConfig | None = None, *, channel: Callable | None = None) -> InvariantReport:
    """Run every property check; ``channel`` lets callers inject a faulty mechanism."""
    quick = bool(cfg.quick) if cfg is not None else False
    draws = 200_000 if quick else 1_000_000
    checks = [
        check_ldp_ratio(channel or rr_channel),
        check_channel_mean(draws),
        check_gibbs_optimality(1000),
        check_subopt_kl(),
        check_bias_invariance(),
        check_private_prob_consistency(),
        check_likelihood_dominance(),
        check_pessimism_coverage(50 if quick else 200),
        check_onpolicy_error_scaling(30 if quick else 100),
        check_subopt_monotone_in_eps(20 if quick else 50),
        *online_checks(replays=20 if quick else 200, T=200 if quick else 500,
                       regret_seeds=6 if quick else 20),
        check_hard_closed_form(),
        check_hard_concentrability(),
        check_flip_symmetry(),
        check_dataset_marginals(draws),
        check_determinism(),
        check_slope_fitter(),
        check_config_validation(),
    ]
    return InvariantReport(tuple(checks))
