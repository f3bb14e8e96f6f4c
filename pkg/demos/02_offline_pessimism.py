"""Offline learning on the two-action hard instance: error versus sample size."""
import numpy as np

from privrlhf.core import PrivacyParams, make_rng, suboptimality
from privrlhf.harness import fit_loglog_slope
from privrlhf.instances import HardInstanceSpec, hard_instance, offline_dataset_gen, single_policy_D, theory_gap
from privrlhf.offline import OfflineParams, ppkl_run

pp = PrivacyParams(1.0)
params = OfflineParams(c_bonus=1.0)
ns = [256, 1024, 4096, 16384]

# The gap between class members shrinks with n, keeping the problem equally hard per sample
means = []
for n in ns:
    spec = HardInstanceSpec(S=4, C=4.0, a=theory_gap(4, 4.0, 1.0, n), beta=1.0, B=2.0,
                            v=(1, -1, 1, -1), shift_to_range=True)
    inst = hard_instance(spec)
    subs = []
    for seed in range(10):
        data = offline_dataset_gen(inst, n, pp, make_rng([n, seed]))
        res = ppkl_run(inst, data, pp, params)
        subs.append(suboptimality(res.pi_hat, inst))
    means.append(np.mean(subs))
    print(f"n={n:>6}  gap={spec.a:.4f}  coverage D^2={single_policy_D(inst):.3f}  mean SubOpt={means[-1]:.3e}")

slope, se = fit_loglog_slope(ns, means)
print(f"\nlog-log slope {slope:.3f} +/- {se:.3f}; a 1/n rate gives -1")

# One run in detail: the pessimistic estimate sits below the MLE where coverage is thin
res = ppkl_run(inst, offline_dataset_gen(inst, 4096, pp, make_rng(1)), pp, params)
print("\nMLE member:", res.r_bar_index)
print("bonus table:\n", np.round(res.gamma, 4))
print("learned policy P(action -1):", np.round(res.pi_hat.probs[:, 0], 4))
print("optimal policy P(action -1):", np.round(inst.optimal_policy().probs[:, 0], 4))
