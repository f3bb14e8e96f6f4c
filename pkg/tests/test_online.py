import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import argbest, population_squared_loss
from privrlhf.core import FunctionClass, PrivacyParams, PrivateDataset, make_rng, objective_J
from privrlhf.instances import HardInstanceSpec, hard_instance, offline_dataset_gen, random_instance
from privrlhf.online import (
    OnlineParams,
    RunTrace,
    confidence_set,
    exploration_bonus,
    gamma_T,
    pairwise_gap_distance,
    pokl_run,
    private_least_squares,
    read_trace,
    uncertainty,
    write_trace,
)

SPEC = HardInstanceSpec(S=4, C=3.0, a=0.9, beta=1.0, B=2.0, v=(1, -1, 1, -1))


def opposite_pair():
    return FunctionClass(np.array([[[0.0, 1.0]], [[1.0, 0.0]]]), 1.0)


class TestGammaT:
    def test_frozen_value(self):
        # 4 (e^-1 + 2 + e) sqrt(log 16000) / 0.5
        assert gamma_T(1.0, 100, 16, 0.1, 0.75) == pytest.approx(126.59761057324869, rel=1e-15)

    def test_doubling_privacy_factor_halves(self):
        # 2 alpha - 1 goes from 0.25 to 0.5
        assert gamma_T(2.0, 50, 8, 0.1, 0.75) == pytest.approx(gamma_T(2.0, 50, 8, 0.1, 0.625) / 2, rel=1e-15)

    def test_monotone_in_T_and_class_size(self):
        grid = [gamma_T(1.5, T, N, 0.05, 0.8) for T in (1, 10, 100, 1000) for N in (1, 4, 16)]
        for T_idx in range(4):
            row = grid[3 * T_idx:3 * T_idx + 3]
            assert row == sorted(row)
        cols = [grid[k::3] for k in range(3)]
        assert all(c == sorted(c) for c in cols)

    def test_scale_and_validation(self):
        assert gamma_T(1.0, 10, 2, 0.1, 0.9, 0.5) == pytest.approx(0.5 * gamma_T(1.0, 10, 2, 0.1, 0.9))
        with pytest.raises(ValueError):
            gamma_T(1.0, 10, 2, 0.1, 0.5)

    def test_lambda_bound_enforced(self):
        g = gamma_T(1.0, 10, 2, 0.1, 0.9)
        assert OnlineParams(T=10).resolve(1.0, 2, 0.9) == (g, g * g / 4)
        with pytest.raises(ValueError, match="lambda"):
            OnlineParams(T=10, lam=0.6 * g * g).resolve(1.0, 2, 0.9)


class TestLeastSquares:
    def test_singleton(self):
        fc = FunctionClass(np.array([[[0.2, 0.9]]]), 1.0)
        assert private_least_squares(fc, [(0, 0, 1, -1)], 0.7)[0] == 0

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_population_oracle(self, seed):
        rng = make_rng([50, seed])
        inst = random_instance(3, 3, 8, 2.0, 1.0, rng)
        pp = PrivacyParams(2.0)
        d0, pi, rs = inst.d0.probs.tolist(), inst.pi_ref.probs.tolist(), inst.r_star.values.tolist()
        losses = [population_squared_loss(t.tolist(), rs, d0, pi, pp.alpha) for t in inst.fclass.tables]
        data = offline_dataset_gen(inst, 50_000, pp, rng)
        assert private_least_squares(inst.fclass, data, pp.alpha)[0] == argbest(losses, maximize=False)

    def test_state_bias_leaves_choice_unchanged(self):
        rng = make_rng(21)
        inst = random_instance(3, 3, 6, 1.0, 1.0, rng)
        data = offline_dataset_gen(inst, 400, PrivacyParams(1.0), rng)
        shifted = FunctionClass(inst.fclass.tables + np.array([0.3, 0.0, 0.7])[None, :, None], 2.0)
        assert private_least_squares(inst.fclass, data, 0.8)[0] == private_least_squares(shifted, data, 0.8)[0]


class TestConfidenceSet:
    data = [(0, 0, 1, 1)] * 3  # gap difference 2 per record, so the quadratic sum is 12

    def test_empty_data_keeps_everything(self):
        fc = random_instance(2, 2, 5, 1.0, 1.0, make_rng(22)).fclass
        assert confidence_set(fc, 2, PrivateDataset.empty(), 1.0, 1.0) == list(range(5))

    def test_r_bar_always_included(self):
        fc = random_instance(2, 2, 5, 1.0, 1.0, make_rng(23)).fclass
        data = offline_dataset_gen(random_instance(2, 2, 1, 1.0, 1.0, make_rng(24)), 30, PrivacyParams(1.0), make_rng(25))
        for k in range(5):
            assert k in confidence_set(fc, fc[k], data, 0.5, 0.8)

    def test_hand_computed_exclusion(self):
        fc = opposite_pair()
        assert pairwise_gap_distance(fc, self.data)[0, 1] == 12.0
        assert confidence_set(fc, 0, self.data, 1.0, 3.0) == [0]
        assert confidence_set(fc, 1, self.data, 1.0, 4.0) == [0, 1]


class TestUncertainty:
    pi = np.array([[0.25, 0.75]])
    data = [(0, 0, 1, 1), (0, 1, 0, -1), (0, 0, 1, 1)]

    def test_single_member(self):
        assert uncertainty([1], opposite_pair(), 1.0, 0, 0, self.data, self.pi) == 0.0

    def test_empty_data(self):
        # centered difference is (-1.5, 0.5); ratio at lambda = 2
        assert uncertainty([0, 1], opposite_pair(), 2.0, 0, 0, [], self.pi) == pytest.approx(1.0606601717798212, rel=1e-15)

    def test_hand_pair_ratio(self):
        fc = opposite_pair()
        assert uncertainty([0, 1], fc, 2.0, 0, 0, self.data, self.pi) == pytest.approx(0.4008918628686366, rel=1e-15)
        assert uncertainty([1, 0], fc, 2.0, 0, 1, self.data, self.pi) == pytest.approx(0.1336306209562122, rel=1e-15)


class TestExplorationBonus:
    def test_values(self):
        assert exploration_bonus(1.0, 0.0) == 0.0
        assert exploration_bonus(73.0, 0.1) == 1.0
        assert exploration_bonus(4.0, 0.1) == pytest.approx(0.4)

    @given(st.floats(0, 1e6), st.floats(0, 1e3))
    def test_range(self, g, u):
        assert 0.0 <= exploration_bonus(g, u) <= 1.0


@pytest.fixture(scope="module")
def trace():
    return pokl_run(hard_instance(SPEC), PrivacyParams(1.0), OnlineParams(T=120), 7)


class TestRun:
    def test_lengths_and_policies(self, trace):
        assert len(trace) == 120 and trace.pi1.shape == (120, 4, 2)
        for pis in (trace.pi1, trace.pi2):
            assert np.max(np.abs(pis.sum(axis=2) - 1)) <= 1e-12

    def test_regret_nonnegative(self, trace):
        assert trace.regret_pi2.min() >= -1e-10 and trace.regret_pi1.min() >= -1e-10

    def test_cumulative_sums_nondecreasing(self, trace):
        assert np.all(np.diff(trace.cum_min1_u2) >= 0)
        assert np.all(np.diff(trace.cumulative_regret) >= -1e-10)

    def test_first_round_uses_reference(self):
        inst = hard_instance(SPEC)
        tr = pokl_run(inst, PrivacyParams(1.0), OnlineParams(T=1), 3)
        expect = objective_J(inst.optimal_policy(), inst) - objective_J(inst.pi_ref, inst)
        assert tr.regret_pi2[0] == expect and tr.regret_pi1[0] == expect

    def test_alpha_one_matches_identity_channel(self):
        inst = hard_instance(SPEC)
        pp = PrivacyParams(math.inf)
        a = pokl_run(inst, pp, OnlineParams(T=60), 11)
        b = pokl_run(inst, pp, OnlineParams(T=60), 11, privatize=lambda rng, y, pp: y)
        assert list(a.rows()) == list(b.rows())
        assert np.array_equal(a.pi2, b.pi2)

    def test_seed_reproducible(self):
        inst = hard_instance(SPEC)
        runs = [pokl_run(inst, PrivacyParams(0.5), OnlineParams(T=40), np.random.SeedSequence(9)) for _ in range(2)]
        assert list(runs[0].rows()) == list(runs[1].rows())

    def test_bonus_range_and_shrinkage(self, trace):
        assert trace.bonus_max.max() <= 1.0 and trace.bonus_mean.min() >= 0.0
        assert np.all(np.diff(trace.fset_size) <= 0)

    def test_without_confidence_set(self):
        inst = hard_instance(SPEC)
        tr = pokl_run(inst, PrivacyParams(1.0), OnlineParams(T=30, use_confidence_set=False), 4)
        assert np.all(tr.regret_pi2 >= -1e-10)

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_instances_run(self, seed):
        inst = random_instance(2, 3, 4, 1.0, 1.0, make_rng(seed))
        tr = pokl_run(inst, PrivacyParams(1.0), OnlineParams(T=15, gamma_scale=0.1), seed, record_policies=False)
        assert tr.regret_pi2.min() >= -1e-10 and tr.pi1 is None

    def test_trace_file_round_trip(self, trace, tmp_path):
        write_trace(tmp_path / "t.csv", trace, 7)
        meta, rows = read_trace(tmp_path / "t.csv")
        assert meta["seed"] == "7" and float(meta["gamma_T"]) == trace.params["gamma_T"]
        assert rows.shape == (120, len(RunTrace.COLUMNS))
        np.testing.assert_array_equal(rows[:, RunTrace.COLUMNS.index("regret_pi2")], trace.regret_pi2)
