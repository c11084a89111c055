"""Balancing task: board wave, reward function, termination settings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "RewardCoeffs",
    "StepObservation",
    "TaskConfig",
    "reward_step",
    "bipedal_penalty",
    "board_wave",
    "board_wave_arrays",
    "action_delta_norm",
]

MAX_WAVE_AMPLITUDE = math.radians(10.0)


@dataclass(frozen=True)
class RewardCoeffs:
    """Weights of the reward terms. All presets share the same term structure."""

    k_bipedal: float
    k_cmd: float
    k_smooth: float
    k_xd: float
    k_yd: float

    def __post_init__(self):
        for name in ("k_bipedal", "k_cmd", "k_smooth", "k_xd", "k_yd"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")

    @staticmethod
    def balancing() -> "RewardCoeffs":
        return RewardCoeffs(0.0, 0.6, 0.1, 2.0, 2.0)

    @staticmethod
    def walking() -> "RewardCoeffs":
        return RewardCoeffs(0.4, 0.3, 0.1, 15.0, 1.0)

    @staticmethod
    def evaluation() -> "RewardCoeffs":
        return RewardCoeffs(0.0, 0.6, 0.1, 2.0, 2.0)

    @staticmethod
    def from_dict(d: dict) -> "RewardCoeffs":
        return RewardCoeffs(d["k_bipedal"], d["k_cmd"], d["k_smooth"], d["k_xd"], d["k_yd"])


@dataclass(frozen=True)
class StepObservation:
    """Quantities the reward looks at for one policy step."""

    r_actual: float          # body pitch from vertical, board included [rad]
    rdot: float              # body pitch rate [rad/s]
    xdot_actual: float       # horizontal body COM velocity [m/s]
    ydot_actual: float       # identically 0 in the planar testbed
    acc_pelvis: float        # body COM linear acceleration magnitude [m/s^2]
    currents: np.ndarray     # per-joint realized currents [A]
    action_prev: np.ndarray  # previous commanded (targets, gains)
    action: np.ndarray       # current commanded (targets, gains)
    phase: float = 0.0       # periodic gait phase, unused while k_bipedal = 0


@dataclass(frozen=True)
class TaskConfig:
    wave_amplitude: float = MAX_WAVE_AMPLITUDE  # [rad], <= 10 degrees
    episode_duration: float = 6.4               # [s]
    tilt_limit: float = math.radians(30.0)      # terminate beyond this body pitch
    height_fraction: float = 0.6                # terminate below this * nominal height
    xdot_desired: float = 0.0
    ydot_desired: float = 0.0
    r_desired: float = 0.0                      # vertical
    n_wave_components: int = 3
    wave_freq_range: tuple[float, float] = (0.2, 1.0)

    def __post_init__(self):
        if self.wave_amplitude > MAX_WAVE_AMPLITUDE + 1e-12:
            raise ValueError(f"wave amplitude above 10 degrees: {self.wave_amplitude}")
        if self.episode_duration <= 0.0:
            raise ValueError("episode duration must be positive")


def bipedal_penalty(phase: float) -> float:
    """Periodic stepping penalty used by the walking task. Not modeled here."""
    return 0.0


def action_delta_norm(action: np.ndarray, action_prev: np.ndarray) -> float:
    """L1 change of the commanded action, gains rescaled to unit span."""
    a = np.asarray(action, float)
    b = np.asarray(action_prev, float)
    n = a.size // 2
    d_t = np.abs(a[:n] - b[:n]).sum()
    d_g = np.abs(a[n:] - b[n:]).sum() / 5.9
    return float(d_t + d_g)


def reward_step(obs: StepObservation, coeffs: RewardCoeffs, task: TaskConfig) -> float:
    """Per-step reward: saturating-exponential penalties plus the alive bonus.

    Each penalty term lies in (-1, 0]; the command and smoothness groups each
    collect three terms, so the total lies in
    (1 - 3*k_cmd - 3*k_smooth, 1] when the gait term is off.
    """
    r_cmd = (
        -(1.0 - math.exp(-coeffs.k_xd * abs(task.xdot_desired - obs.xdot_actual)))
        - (1.0 - math.exp(-coeffs.k_yd * abs(task.ydot_desired - obs.ydot_actual)))
        - (1.0 - math.exp(-4.0 * abs(task.r_desired - obs.r_actual)))
    )
    cur_l1 = float(np.abs(obs.currents).sum())
    da = action_delta_norm(obs.action, obs.action_prev)
    r_smt = (
        -(1.0 - math.exp(-0.1 * da))
        - (1.0 - math.exp(-0.05 * (cur_l1 * 10.0)))
        - (1.0 - math.exp(-0.1 * (abs(obs.rdot) + abs(obs.acc_pelvis))))
    )
    return (
        coeffs.k_bipedal * bipedal_penalty(obs.phase)
        + coeffs.k_cmd * r_cmd
        + coeffs.k_smooth * r_smt
        + 1.0
    )


def _wave_components(seed: int, cfg: TaskConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    k = cfg.n_wave_components
    freqs = rng.uniform(cfg.wave_freq_range[0], cfg.wave_freq_range[1], k)
    phases = rng.uniform(0.0, 2.0 * math.pi, k)
    amps = rng.uniform(0.5, 1.0, k)
    total = amps.sum()
    if total > 0.0 and cfg.wave_amplitude > 0.0:
        amps = amps * (cfg.wave_amplitude / total)
    else:
        amps = np.zeros(k)
    return amps, freqs, phases


def board_wave(seed: int, t: float | np.ndarray, cfg: TaskConfig) -> float | np.ndarray:
    """Smooth pseudo-random board tilt, |angle| <= wave_amplitude for all t."""
    amps, freqs, phases = _wave_components(seed, cfg)
    tt = np.asarray(t, float)
    w = 2.0 * math.pi * freqs
    out = np.zeros_like(tt, dtype=float)
    for a, wi, p in zip(amps, w, phases):
        out = out + a * np.sin(wi * tt + p)
    return float(out) if np.isscalar(t) else out


def board_wave_arrays(
    seed: int, n_steps: int, dt: float, cfg: TaskConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Tilt, rate and acceleration sampled at every simulation step (plus the endpoint)."""
    amps, freqs, phases = _wave_components(seed, cfg)
    t = np.arange(n_steps + 1) * dt
    w = 2.0 * math.pi * freqs
    psi = np.zeros_like(t)
    dpsi = np.zeros_like(t)
    ddpsi = np.zeros_like(t)
    for a, wi, p in zip(amps, w, phases):
        psi += a * np.sin(wi * t + p)
        dpsi += a * wi * np.cos(wi * t + p)
        ddpsi += -a * wi * wi * np.sin(wi * t + p)
    return psi, dpsi, ddpsi
