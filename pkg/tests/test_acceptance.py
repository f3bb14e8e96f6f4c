"""End-to-end acceptance checks, one test per criterion.

Each test records a one-line PASS/FAIL verdict with the measured value; the
lines are printed in the terminal summary (see conftest.py).
"""

import math

import numpy as np

from oracles import argbest, population_log_likelihood, population_squared_loss
from privrlhf import cli
from privrlhf.core import (
    PrivacyParams,
    debiased_mean,
    expected_kl_to_optimal,
    gibbs_policy,
    ldp_ratio,
    make_rng,
    random_policy,
    randomized_response,
    rr_alpha,
    rr_channel,
    sigmoid,
    suboptimality,
)
from privrlhf.harness import InstanceConfig, SweepConfig, run_offline_sweep, run_online_sweep
from privrlhf.instances import HardInstanceSpec, hard_instance, offline_dataset_gen, random_instance
from privrlhf.offline import OfflineParams, calibrate_multiplier, pessimism_event, ppkl_run, private_mle
from privrlhf.online import OnlineParams, pokl_run, private_least_squares

VERDICTS: list[str] = []

# offline: S=4, |F|=16, C=4, beta=1, B=2, gap matched to n at a reference epsilon of 1
OFFLINE_INSTANCE = InstanceConfig(kind="hard", S=4, C=4.0, a=None, a_epsilon=1.0, beta=1.0, B=2.0,
                                  v=(1, -1, 1, -1), shift_to_range=True)
# online: S=4, |F|=16 with b = log 2 < B/2 so no shift is needed
ONLINE_SPEC = HardInstanceSpec(S=4, C=3.0, a=0.9, beta=1.0, B=2.0, v=(1, -1, 1, -1))


def verdict(number: int, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}"
    VERDICTS.append(line)
    print(line)
    assert passed, line


def test_c01_ldp_exactness():
    errs = {eps: abs(ldp_ratio(rr_channel(PrivacyParams(eps))) - math.exp(eps)) for eps in (0.1, 0.5, 1.0, 2.0)}
    worst = max(errs.values())
    verdict(1, worst <= 1e-12, f"max |ratio - e^eps| = {worst:.2e} (tol 1e-12)")


def test_c02_subopt_kl_identity():
    rng = make_rng(202)
    worst = 0.0
    for _ in range(5):
        inst = random_instance(int(rng.integers(2, 5)), int(rng.integers(2, 5)), 1, 2.0,
                               float(rng.uniform(0.3, 3.0)), rng)
        for _ in range(100):
            pi = random_policy(rng, inst.S, inst.A, concentration=float(rng.uniform(0.2, 3.0)))
            worst = max(worst, abs(suboptimality(pi, inst) - expected_kl_to_optimal(pi, inst)))
    verdict(2, worst < 1e-9, f"max |SubOpt - KL/beta| = {worst:.2e} over 500 policies (tol 1e-9)")


def test_c03_bias_invariance():
    rng = make_rng(303)
    worst = 0.0
    for _ in range(100):
        S, A = int(rng.integers(1, 6)), int(rng.integers(2, 6))
        r = rng.uniform(0.0, 2.0, size=(S, A))
        bias = rng.uniform(-3.0, 3.0, size=S)
        ref = rng.dirichlet(np.ones(A), size=S)
        beta = float(rng.uniform(0.1, 5.0))
        diff = gibbs_policy(r, ref, beta).probs - gibbs_policy(r - bias[:, None], ref, beta).probs
        worst = max(worst, float(np.abs(diff).max()))
    verdict(3, worst <= 1e-12, f"max entrywise difference = {worst:.2e} over 100 pairs (tol 1e-12)")


def test_c04_debiasing_identity():
    rng = make_rng(404)
    n = 1_000_000
    pairs = [(d, e) for d in (-2.0, -0.5, 0.0, 0.7, 1.5) for e in (0.5, 2.0)]
    worst = 0.0
    for delta, eps in pairs:
        alpha = rr_alpha(eps)
        y = np.where(rng.random(n) < sigmoid(delta), 1, -1)
        z = randomized_response(rng, y, alpha)
        se = z.std(ddof=1) / math.sqrt(n)
        worst = max(worst, abs(z.mean() - debiased_mean(alpha, delta)) / se)
    verdict(4, worst <= 3.0, f"max |mean(z) - (2a-1)(2s-1)| = {worst:.2f} SE over 10 pairs (tol 3 SE)")


def test_c05_offline_scaling_law():
    # bonus constant 1: the default of 16 saturates at the cap on this grid (see README)
    base = SweepConfig(mode="offline", instance=OFFLINE_INSTANCE, seeds=tuple(range(20)),
                       n_values=(256, 1024, 4096, 16384), epsilons=(1.0,), offline=OfflineParams(c_bonus=1.0))
    slope_run = run_offline_sweep(base)
    slope = slope_run.slopes[0]["slope"]
    eps_run = run_offline_sweep(base.replace(n_values=(4096,), epsilons=(0.5, 2.0)))
    means = {c["epsilon"]: c["mean"] for c in eps_run.cells}
    ok = -1.3 <= slope <= -0.7 and means[2.0] <= means[0.5]
    verdict(5, ok, f"slope = {slope:.3f} (want [-1.3, -0.7]); SubOpt eps=2 {means[2.0]:.4g} <= eps=0.5 {means[0.5]:.4g}")


def test_c06_pessimism_coverage():
    n, pp = 4096, PrivacyParams(1.0)
    inst = OFFLINE_INSTANCE.build(n=n)
    params = OfflineParams(delta=0.1, bonus_mode="calibrated")
    m = calibrate_multiplier(inst, n, pp, params)
    params = OfflineParams(delta=0.1, bonus_mode="calibrated", multiplier=m)
    rng = make_rng(606)  # replays independent of the calibration stream
    fails = 0
    for _ in range(200):
        res = ppkl_run(inst, offline_dataset_gen(inst, n, pp, rng), pp, params)
        fails += not pessimism_event(res.r_bar, inst.r_star, inst.pi_ref, res.gamma)
    frac = fails / 200
    verdict(6, frac <= 0.15, f"coverage failure fraction = {frac:.3f} with multiplier {m:g} (tol 0.15)")


def test_c07_online_insample_bound():
    inst = hard_instance(ONLINE_SPEC)
    pp = PrivacyParams(1.0)
    held = 0
    for k in range(200):
        tr = pokl_run(inst, pp, OnlineParams(T=500, delta=0.1), [707, k], record_policies=False)
        held += bool(np.all(tr.insample_error <= 0.5 * tr.params["gamma_T"] ** 2))
    frac = held / 200
    verdict(7, frac >= 0.85, f"event held in {frac:.3f} of 200 replays (want >= 0.85)")


def test_c08_logarithmic_regret():
    cfg = SweepConfig(mode="online", instance=InstanceConfig(kind="hard", S=4, C=3.0, a=0.9, beta=1.0, B=2.0,
                                                             v=(1, -1, 1, -1), shift_to_range=False),
                      T_values=(2000,), epsilons=(1.0,), seeds=tuple(range(20)), checkpoints=(500, 2000))
    summary, traces = run_online_sweep(cfg)
    R = np.mean([tr.regret_pi2 for *_, tr in traces], axis=0)
    first, last = R[:200].mean(), R[-200:].mean()
    ratio = {row["t"]: row["regret_over_log_t"] for row in summary.checkpoints}
    ok_a = last <= first / 5
    ok_b = ratio[2000] <= 1.5 * ratio[500]
    verdict(8, ok_a and ok_b,
            f"(a) last/first decile = {last / first:.3f} (want <= 0.2); "
            f"(b) Reg/log t at 2000 = {ratio[2000]:.3f} vs 1.5 x {ratio[500]:.3f} = {1.5 * ratio[500]:.3f}")


def test_c09_oracle_equivalence():
    pp = PrivacyParams(2.0)
    mle_hits = ls_hits = 0
    for k in range(20):
        rng = make_rng([909, k])
        inst = random_instance(3, 3, 8, 2.0, 1.0, rng)
        rs, d0, pi = inst.r_star.values.tolist(), inst.d0.probs.tolist(), inst.pi_ref.probs.tolist()
        members = [t.tolist() for t in inst.fclass.tables]
        best_ll = argbest([population_log_likelihood(m, rs, d0, pi, pp.alpha) for m in members])
        best_ls = argbest([population_squared_loss(m, rs, d0, pi, pp.alpha) for m in members], maximize=False)
        data = offline_dataset_gen(inst, 50_000, pp, rng)
        mle_hits += private_mle(inst.fclass, data, pp.alpha)[0] == best_ll
        ls_hits += private_least_squares(inst.fclass, data, pp.alpha)[0] == best_ls
    verdict(9, mle_hits >= 18 and ls_hits >= 18, f"MLE {mle_hits}/20, least squares {ls_hits}/20 (want >= 18 each)")


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_determinism(tmp_path):
    offline_ini = tmp_path / "offline.ini"
    offline_ini.write_text("[instance]\nkind=hard\nc=4\n[privacy]\nepsilon=0.5, 1\n"
                           "[offline]\nc_bonus=1\n[sweep]\nn=256, 1024\nseeds=0..4\n")
    online_ini = tmp_path / "online.ini"
    online_ini.write_text("[instance]\nkind=hard\nc=3\na=0.9\nshift_to_range=false\n[privacy]\nepsilon=1\n"
                          "[sweep]\nT=200\nseeds=0..2\ncheckpoints=50\n")
    same = []
    for cmd, ini in (("offline-sweep", offline_ini), ("online-sweep", online_ini)):
        outs = []
        for run in ("a", "b"):
            out = tmp_path / f"{cmd}-{run}"
            assert cli.main([cmd, "--config", str(ini), "--out", str(out)]) == 0
            outs.append(_tree_bytes(out))
        same.append(outs[0] == outs[1] and len(outs[0]) > 0)
    verdict(10, all(same), f"byte-identical reruns: offline={same[0]}, online={same[1]}")
