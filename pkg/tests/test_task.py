import math

import numpy as np
import pytest

from gearsim.task import (
    RewardCoeffs,
    StepObservation,
    TaskConfig,
    bipedal_penalty,
    board_wave,
    board_wave_arrays,
    reward_step,
)


def obs(r=0.0, rdot=0.0, xdot=0.0, acc=0.0, currents=(0.0, 0.0), a_prev=None, a=None):
    a_prev = np.zeros(4) if a_prev is None else np.asarray(a_prev, float)
    a = a_prev.copy() if a is None else np.asarray(a, float)
    return StepObservation(
        r_actual=r, rdot=rdot, xdot_actual=xdot, ydot_actual=0.0,
        acc_pelvis=acc, currents=np.asarray(currents, float),
        action_prev=a_prev, action=a,
    )


class TestRewardStep:
    def test_perfect_step_scores_one(self):
        r = reward_step(obs(), RewardCoeffs.balancing(), TaskConfig())
        assert r == pytest.approx(1.0, abs=1e-12)

    def test_velocity_error_value(self):
        r = reward_step(obs(xdot=0.3), RewardCoeffs.balancing(), TaskConfig())
        want = 1.0 + 0.6 * (-(1.0 - math.exp(-2.0 * 0.3)))
        assert r == pytest.approx(want, abs=1e-9)
        assert r == pytest.approx(0.7293, abs=2e-5)

    def test_eval_coeffs_match_balancing(self):
        rng = np.random.default_rng(0)
        for _ in range(300):
            o = obs(
                r=rng.normal(), rdot=rng.normal(), xdot=rng.normal(),
                acc=abs(rng.normal()), currents=rng.normal(size=2),
                a_prev=rng.normal(size=4), a=rng.normal(size=4),
            )
            assert reward_step(o, RewardCoeffs.evaluation(), TaskConfig()) == reward_step(
                o, RewardCoeffs.balancing(), TaskConfig()
            )

    def test_bounds(self):
        rng = np.random.default_rng(1)
        coeffs = RewardCoeffs.balancing()
        lo = 1.0 - 3.0 * coeffs.k_cmd - 3.0 * coeffs.k_smooth
        assert lo == pytest.approx(-1.1)
        for _ in range(3000):
            o = obs(
                r=rng.normal(scale=3), rdot=rng.normal(scale=10), xdot=rng.normal(scale=5),
                acc=abs(rng.normal(scale=20)), currents=rng.normal(scale=3, size=2),
                a_prev=rng.normal(scale=4, size=4), a=rng.normal(scale=4, size=4),
            )
            v = reward_step(o, coeffs, TaskConfig())
            assert lo < v <= 1.0 + 1e-12

    def test_velocity_error_strictly_decreases_reward(self):
        coeffs = RewardCoeffs.balancing()
        vals = [reward_step(obs(xdot=x), coeffs, TaskConfig()) for x in (0.0, 0.1, 0.2, 0.5, 1.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_gait_term_is_stubbed_to_zero(self):
        assert bipedal_penalty(0.37) == 0.0
        # walking weights differ only through the (zero) gait term here
        o = obs(xdot=0.0)
        walking = reward_step(o, RewardCoeffs.walking(), TaskConfig())
        assert walking == pytest.approx(1.0)

    def test_negative_coeffs_rejected(self):
        with pytest.raises(ValueError):
            RewardCoeffs(-0.1, 0.6, 0.1, 2.0, 2.0)


class TestBoardWave:
    def test_amplitude_bound_over_minute(self):
        cfg = TaskConfig()
        t = np.linspace(0.0, 60.0, 60 * 1000 + 1)
        for seed in range(20):
            w = board_wave(seed, t, cfg)
            assert np.abs(w).max() <= math.radians(10.0) + 1e-12

    def test_deterministic_in_seed(self):
        cfg = TaskConfig()
        t = np.linspace(0.0, 5.0, 500)
        assert np.array_equal(board_wave(7, t, cfg), board_wave(7, t, cfg))
        assert not np.array_equal(board_wave(7, t, cfg), board_wave(8, t, cfg))

    def test_zero_amplitude_is_flat(self):
        cfg = TaskConfig(wave_amplitude=0.0)
        t = np.linspace(0.0, 5.0, 100)
        assert np.all(board_wave(3, t, cfg) == 0.0)

    def test_arrays_consistent_with_scalar(self):
        cfg = TaskConfig()
        psi, dpsi, ddpsi = board_wave_arrays(5, 1000, 0.001, cfg)
        t = np.arange(1001) * 0.001
        assert np.allclose(psi, board_wave(5, t, cfg), atol=1e-12)
        # finite differences agree with the analytic rates
        fd = np.gradient(psi, 0.001)
        assert np.allclose(fd[10:-10], dpsi[10:-10], atol=2e-3)
        fd2 = np.gradient(dpsi, 0.001)
        assert np.allclose(fd2[10:-10], ddpsi[10:-10], atol=2e-2)

    def test_smoothness(self):
        cfg = TaskConfig()
        t = np.linspace(0.0, 10.0, 10_000)
        w = board_wave(11, t, cfg)
        assert np.abs(np.diff(w)).max() < 5e-3

    def test_amplitude_over_ten_degrees_rejected(self):
        with pytest.raises(ValueError):
            TaskConfig(wave_amplitude=math.radians(11.0))
