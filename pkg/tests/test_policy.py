import numpy as np
import pytest

from gearsim.chain import materialize
from gearsim.policy import (
    CemConfig,
    PolicyParams,
    RewardDistribution,
    evaluate_policy,
    normalized_obs,
    policy_act,
    train_policy,
    transfer_success,
    zero_policy,
)
from gearsim.system import SimSystem
from gearsim.task import TaskConfig
from gearsim.testbed import NEUTRAL_POSTURE, default_actuator, default_chain, nominal_body_height


def small_system(**act_kw):
    chain = default_chain(default_actuator(**act_kw))
    return SimSystem(chain, task=TaskConfig(episode_duration=2.048))


def make_policy():
    chain = default_chain()
    return zero_policy(NEUTRAL_POSTURE, nominal_body_height(chain))


class TestPolicyAct:
    def test_zero_policy_emits_neutral_and_mid_gain(self):
        pol = make_policy()
        phys = materialize(default_chain())
        o = normalized_obs(pol, 0.0, 0.0, NEUTRAL_POSTURE, np.zeros(2),
                           np.array([*NEUTRAL_POSTURE, pol.kp_mid, pol.kp_mid]))
        targets, kps = policy_act(pol, [o, o], phys.limit_lo, phys.limit_hi)
        assert np.allclose(targets, NEUTRAL_POSTURE)
        assert np.allclose(kps, pol.kp_mid)

    def test_gain_clamped_to_admissible_range(self):
        pol = make_policy()
        pol.bias[2] = -100.0
        pol.bias[3] = +100.0
        phys = materialize(default_chain())
        o = np.zeros(10)
        _, kps = policy_act(pol, [o, o], phys.limit_lo, phys.limit_hi)
        assert kps[0] == 0.1
        assert kps[1] == 6.0

    def test_targets_clamped_to_joint_limits(self):
        pol = make_policy()
        pol.bias[0] = 100.0
        phys = materialize(default_chain())
        o = np.zeros(10)
        targets, _ = policy_act(pol, [o, o], phys.limit_lo, phys.limit_hi)
        assert targets[0] == phys.limit_hi[0]

    def test_deterministic(self):
        pol = make_policy()
        rng = np.random.default_rng(0)
        pol.weights[:] = rng.normal(size=pol.weights.shape)
        phys = materialize(default_chain())
        o1, o2 = rng.normal(size=10), rng.normal(size=10)
        a = policy_act(pol, [o1, o2], phys.limit_lo, phys.limit_hi)
        b = policy_act(pol, [o1, o2], phys.limit_lo, phys.limit_hi)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_gain_clamp_over_random_inputs(self):
        rng = np.random.default_rng(1)
        pol = make_policy()
        phys = materialize(default_chain())
        for _ in range(200):
            pol.weights[:] = rng.normal(scale=3.0, size=pol.weights.shape)
            pol.bias[:] = rng.normal(scale=3.0, size=4)
            for _ in range(50):
                o1, o2 = rng.normal(size=10), rng.normal(size=10)
                _, kps = policy_act(pol, [o1, o2], phys.limit_lo, phys.limit_hi)
                assert np.all(kps >= 0.1) and np.all(kps <= 6.0)

    def test_requires_two_deep_stack(self):
        pol = make_policy()
        phys = materialize(default_chain())
        with pytest.raises(ValueError):
            policy_act(pol, [np.zeros(10)], phys.limit_lo, phys.limit_hi)

    def test_json_round_trip(self):
        pol = make_policy()
        pol.weights[:] = np.random.default_rng(2).normal(size=pol.weights.shape)
        again = PolicyParams.from_json(pol.to_json())
        assert np.array_equal(again.weights, pol.weights)
        assert again.nominal_height == pol.nominal_height


class TestEvaluatePolicy:
    def test_returns_k_episodes(self):
        sys_ = small_system()
        dist = evaluate_policy(sys_, make_policy(), 10, list(range(10)))
        assert len(dist.returns) == 10
        assert np.array_equal(dist.seeds, np.arange(10))

    def test_deterministic_with_seeds(self):
        sys_ = small_system()
        a = evaluate_policy(sys_, make_policy(), 5, [3, 1, 4, 1, 5])
        b = evaluate_policy(sys_, make_policy(), 5, [3, 1, 4, 1, 5])
        assert np.array_equal(a.returns, b.returns)

    def test_identical_params_identical_distribution(self):
        a = evaluate_policy(small_system(), make_policy(), 4, [1, 2, 3, 4])
        b = evaluate_policy(small_system(), make_policy(), 4, [1, 2, 3, 4])
        assert np.array_equal(a.returns, b.returns)

    def test_jobs_match_serial(self):
        sys_ = small_system()
        a = evaluate_policy(sys_, make_policy(), 6, list(range(6)), jobs=1)
        b = evaluate_policy(sys_, make_policy(), 6, list(range(6)), jobs=4)
        assert np.array_equal(a.returns, b.returns)

    def test_immediate_faller_keeps_truncated_sum(self):
        pol = make_policy()
        pol.bias[0] = 50.0  # slam the knee target into the limit
        sys_ = small_system()
        dist = evaluate_policy(sys_, pol, 3, [0, 1, 2])
        full = sys_.task.episode_duration * 31.25
        assert np.all(dist.returns < 0.5 * full)

    def test_k_validation(self):
        with pytest.raises(ValueError):
            evaluate_policy(small_system(), make_policy(), 0, [])

    def test_csv_round_trip(self):
        dist = RewardDistribution(np.array([1.5, 2.5]), np.array([7, 8]), 2.0)
        again = RewardDistribution.from_csv(dist.to_csv("x=1"), 2.0)
        assert np.array_equal(again.returns, dist.returns)
        assert np.array_equal(again.seeds, dist.seeds)


class TestTransferSuccess:
    def d(self, vals):
        return RewardDistribution(np.array(vals, float), np.arange(len(vals)), 1.0)

    def test_above_threshold(self):
        assert transfer_success(self.d([100.0]), self.d([85.0]))

    def test_below_threshold(self):
        assert not transfer_success(self.d([100.0]), self.d([79.0]))

    def test_equal_distributions(self):
        assert transfer_success(self.d([50.0, 60.0]), self.d([50.0, 60.0]))

    def test_exactly_eighty_percent(self):
        assert transfer_success(self.d([100.0]), self.d([80.0]))


class TestTrainPolicy:
    def test_zero_budget_returns_initial(self):
        sys_ = small_system()
        pol, hist = train_policy(sys_, 0, seed=0)
        assert np.all(pol.weights == 0.0) and np.all(pol.bias == 0.0)
        assert hist["iteration"] == []

    def test_training_improves_over_zero_policy(self):
        sys_ = small_system(eta_bw=0.8, f_s=0.12, f_c=0.06)
        base_ret = np.mean([sys_.run_episode(make_policy(), s)[0] for s in (11, 12)])
        pol, hist = train_policy(sys_, 640, seed=1, cem=CemConfig())
        trained_ret = np.mean([sys_.run_episode(pol, s)[0] for s in (11, 12)])
        assert trained_ret > base_ret

    def test_deterministic(self):
        sys_ = small_system()
        p1, h1 = train_policy(sys_, 128, seed=5)
        p2, h2 = train_policy(sys_, 128, seed=5)
        assert np.array_equal(p1.flat(), p2.flat())
        assert h1["mean_return"] == h2["mean_return"]

    def test_jobs_match_serial(self):
        sys_ = small_system()
        p1, _ = train_policy(sys_, 96, seed=5, jobs=1)
        p2, _ = train_policy(sys_, 96, seed=5, jobs=3)
        assert np.array_equal(p1.flat(), p2.flat())

    def test_mostly_nondecreasing_training_curve(self):
        sys_ = small_system(eta_bw=0.85, f_s=0.1, f_c=0.05)
        _, hist = train_policy(sys_, 1280, seed=2)
        curve = np.array(hist["mean_return"])
        tol = 0.01 * (curve.max() - curve.min() + 1e-9)
        ok = np.sum(np.diff(curve) >= -tol)
        assert ok >= 0.9 * (len(curve) - 1)
