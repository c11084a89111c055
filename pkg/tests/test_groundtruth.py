import numpy as np
import pytest

from gearsim.excitation import ExcitationConfig, excitation_motion
from gearsim.groundtruth import HiddenGroundTruth
from gearsim.policy import zero_policy
from gearsim.task import TaskConfig
from gearsim.testbed import NEUTRAL_POSTURE, default_chain, nominal_body_height


class TestHiddenGroundTruth:
    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            HiddenGroundTruth(mode="familiar", hidden_seed=0)

    def test_deterministic_in_hidden_seed(self):
        motion = excitation_motion(ExcitationConfig(duration=1.0))
        a = HiddenGroundTruth(mode="in-family", hidden_seed=5).excitation_trajectory(motion)
        b = HiddenGroundTruth(mode="in-family", hidden_seed=5).excitation_trajectory(motion)
        c = HiddenGroundTruth(mode="in-family", hidden_seed=6).excitation_trajectory(motion)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)

    def test_sealed_until_audit(self):
        truth = HiddenGroundTruth(mode="in-family", hidden_seed=1)
        with pytest.raises(PermissionError):
            truth.reveal()
        with pytest.raises(AttributeError):
            truth.__phi  # noqa: B018

    def test_in_family_stays_inside_search_ranges(self):
        from gearsim.space import default_space

        space = default_space()
        lo = dict(zip(space.names, space.lower))
        hi = dict(zip(space.names, space.upper))
        for seed in range(30):
            d = HiddenGroundTruth(mode="in-family", hidden_seed=seed).reveal(audit=True)
            for name in space.names:
                if name == "f_s_offset":
                    continue
                assert lo[name] - 1e-12 <= d[name] <= hi[name] + 1e-12, (seed, name)

    def test_out_of_family_has_strong_direction_dependence(self):
        for seed in range(10):
            d = HiddenGroundTruth(mode="out-of-family-dte", hidden_seed=seed).reveal(audit=True)
            assert d["eta_bw"] <= 0.70 + 1e-12

    def test_runs_episodes(self):
        task = TaskConfig(episode_duration=1.024)
        truth = HiddenGroundTruth(mode="in-family", hidden_seed=2, task=task)
        pol = zero_policy(NEUTRAL_POSTURE, nominal_body_height(default_chain()))
        ret1, _ = truth.run_episode(pol, 7)
        ret2, _ = truth.run_episode(pol, 7)
        assert ret1 == ret2
