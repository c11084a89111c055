import numpy as np
import pytest

from gearsim.chain import materialize
from gearsim.excitation import ExcitationConfig, ExcitationMotion, excitation_motion
from gearsim.policy import zero_policy
from gearsim.rollout import (
    ExcitationController,
    PolicyController,
    SchedulerConfig,
    Trajectory,
    run_rollout,
)
from gearsim.task import RewardCoeffs, TaskConfig
from gearsim.testbed import NEUTRAL_POSTURE, default_actuator, default_chain, nominal_body_height


@pytest.fixture(scope="module")
def phys():
    return materialize(default_chain(default_actuator(eta_bw=0.85, f_s=0.12, f_c=0.06, k_v=0.02)))


@pytest.fixture(scope="module")
def motion():
    return excitation_motion(ExcitationConfig(duration=5.0))


class TestSchedulerConfig:
    def test_defaults_divide_evenly(self):
        s = SchedulerConfig()
        assert s.steps_per_pd == 8
        assert s.steps_per_policy == 32
        assert s.latency_steps == 8

    def test_rejects_non_divisible_rates(self):
        with pytest.raises(ValueError):
            SchedulerConfig(pd_hz=130.0)

    def test_rejects_bad_latency(self):
        with pytest.raises(ValueError):
            SchedulerConfig(latency=-0.001)
        with pytest.raises(ValueError):
            SchedulerConfig(latency=0.0005)


class TestExcitationMotion:
    def test_endpoints(self, motion):
        assert motion.targets[0, 0] == pytest.approx(1.47)
        # half period of the 0.5 Hz sweep lands at the extended endpoint
        assert motion.targets[125, 0] == pytest.approx(0.6, abs=1e-6)
        assert motion.targets[250, 0] == pytest.approx(1.47, abs=1e-6)

    def test_hip_constant(self, motion):
        assert np.all(motion.targets[:, 1] == motion.targets[0, 1])

    def test_continuity(self, motion):
        assert np.abs(np.diff(motion.targets[:, 0])).max() < 0.02


class TestExcitationRollout:
    def test_record_count(self, phys, motion):
        res = run_rollout(phys, ExcitationController(motion))
        assert res.trajectory.n_ticks == 625
        assert res.trajectory.t[0] == 0.0
        assert res.trajectory.t[-1] == pytest.approx((625 - 1) / 125.0)

    def test_bit_identical_repeat(self, phys, motion):
        a = run_rollout(phys, ExcitationController(motion), seed=4)
        b = run_rollout(phys, ExcitationController(motion), seed=4)
        for name in ("t", "r", "rdot", "theta", "thetadot", "current"):
            assert np.array_equal(getattr(a.trajectory, name), getattr(b.trajectory, name))

    def test_latency_changes_trajectory_after_first_command(self, phys, motion):
        a = run_rollout(phys, ExcitationController(motion), scheduler=SchedulerConfig(latency=0.0))
        b = run_rollout(phys, ExcitationController(motion), scheduler=SchedulerConfig(latency=0.008))
        assert np.array_equal(a.trajectory.theta[:1], b.trajectory.theta[:1])
        assert not np.array_equal(a.trajectory.theta, b.trajectory.theta)

    def test_voltage_within_battery(self, phys, motion):
        res = run_rollout(phys, ExcitationController(motion))
        assert res.v_pwm_max <= 12.0 + 1e-9

    def test_engines_agree(self, phys, motion):
        short = ExcitationMotion(targets=motion.targets[:125], duration=1.0, kp=motion.kp)
        a = run_rollout(phys, ExcitationController(short), engine="numba")
        b = run_rollout(phys, ExcitationController(short), engine="python")
        for name in ("r", "rdot", "theta", "thetadot", "current"):
            assert np.allclose(
                getattr(a.trajectory, name), getattr(b.trajectory, name), atol=1e-9
            ), name

    def test_tracks_commanded_sweep(self, phys, motion):
        res = run_rollout(phys, ExcitationController(motion))
        knee = res.trajectory.theta[:, 0]
        # follows the squat sweep: close to both endpoints during the cycle
        assert knee.max() > 1.2
        assert knee.min() < 0.8


class TestPolicyRollout:
    def controller(self):
        chain = default_chain()
        pol = zero_policy(NEUTRAL_POSTURE, nominal_body_height(chain))
        task = TaskConfig(episode_duration=2.048)
        return PolicyController(pol, task, RewardCoeffs.evaluation())

    def test_reward_per_policy_tick(self, phys):
        res = run_rollout(phys, self.controller(), seed=0)
        assert res.rewards is not None
        assert len(res.rewards) <= 2.048 * 31.25
        assert np.all(res.rewards <= 1.0 + 1e-12)

    def test_deterministic_in_seed(self, phys):
        a = run_rollout(phys, self.controller(), seed=5)
        b = run_rollout(phys, self.controller(), seed=5)
        assert np.array_equal(a.rewards, b.rewards)
        c = run_rollout(phys, self.controller(), seed=6)
        assert not np.array_equal(a.rewards[:len(c.rewards)], c.rewards[:len(a.rewards)])

    def test_engines_agree(self, phys):
        ctrl = self.controller()
        a = run_rollout(phys, ctrl, seed=3, engine="numba")
        b = run_rollout(phys, ctrl, seed=3, engine="python")
        assert a.terminated == b.terminated
        assert a.steps_done == b.steps_done
        assert np.allclose(a.rewards, b.rewards, atol=1e-9)
        assert np.allclose(a.trajectory.r, b.trajectory.r, atol=1e-9)

    def test_scheduler_cadence(self, phys):
        # command updates land exactly on control ticks: target currents are
        # piecewise constant over 8-step blocks, policy commands over 32
        from gearsim.chain import SimState, step
        from gearsim.excitation import ExcitationMotion

        motion = ExcitationMotion(
            targets=np.tile(NEUTRAL_POSTURE, (125, 1)), duration=1.0, kp=3.0
        )
        res = run_rollout(phys, ExcitationController(motion))
        assert res.trajectory.n_ticks == 125


class TestTrajectoryCsv:
    def test_round_trip(self, phys, motion):
        traj = run_rollout(phys, ExcitationController(motion)).trajectory
        text = traj.to_csv("stamp=abc")
        again = Trajectory.from_csv(text)
        for name in ("t", "r", "rdot", "theta", "thetadot", "current"):
            assert np.array_equal(getattr(traj, name), getattr(again, name)), name

    def test_header_layout(self, phys, motion):
        traj = run_rollout(phys, ExcitationController(motion)).trajectory
        header = [ln for ln in traj.to_csv().splitlines() if not ln.startswith("#")][0]
        assert header == "t,r,rdot,theta_0,thetadot_0,current_0,theta_1,thetadot_1,current_1"

    def test_uniform_time_base_enforced(self):
        with pytest.raises(ValueError):
            Trajectory(
                t=np.array([0.0, 0.1, 0.3]),
                r=np.zeros(3), rdot=np.zeros(3),
                theta=np.zeros((3, 1)), thetadot=np.zeros((3, 1)), current=np.zeros((3, 1)),
            )
