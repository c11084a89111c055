"""Runnable system: a parameterized chain plus task and schedule settings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel, PhysicalChain, materialize
from .excitation import ExcitationMotion
from .policy import PolicyParams
from .rollout import (
    ExcitationController,
    PolicyController,
    RolloutResult,
    SchedulerConfig,
    Trajectory,
    run_rollout,
)
from .task import RewardCoeffs, TaskConfig
from .testbed import NEUTRAL_POSTURE, nominal_body_height

__all__ = ["SimSystem"]


@dataclass
class SimSystem:
    """Everything needed to run excitation rollouts and task episodes."""

    chain: ChainModel
    task: TaskConfig = field(default_factory=TaskConfig)
    coeffs: RewardCoeffs = field(default_factory=RewardCoeffs.evaluation)
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    engine: str = "numba"

    def __post_init__(self):
        self.phys: PhysicalChain = materialize(self.chain)
        self.neutral = NEUTRAL_POSTURE[: self.phys.n].copy()
        self.nominal_height = nominal_body_height(self.chain)

    def run_excitation(self, motion: ExcitationMotion) -> RolloutResult:
        return run_rollout(self.phys, ExcitationController(motion), engine=self.engine)

    def run_episode(self, policy: PolicyParams, seed: int) -> tuple[float, bool]:
        res = run_rollout(
            self.phys,
            PolicyController(policy, self.task, self.coeffs),
            seed=seed,
            engine=self.engine,
        )
        return res.episode_return, res.terminated

    def episode_rollout(self, policy: PolicyParams, seed: int) -> RolloutResult:
        return run_rollout(
            self.phys,
            PolicyController(policy, self.task, self.coeffs),
            seed=seed,
            engine=self.engine,
        )

    def excitation_trajectory(self, motion: ExcitationMotion) -> Trajectory:
        return self.run_excitation(motion).trajectory
