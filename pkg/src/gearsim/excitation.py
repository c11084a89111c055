"""Scripted squat-like excitation motion for identification data collection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ExcitationConfig", "ExcitationMotion", "excitation_motion"]

PD_RATE_HZ = 125.0


@dataclass(frozen=True)
class ExcitationConfig:
    duration: float = 5.0      # [s]
    knee_high: float = 1.47    # [rad] flexed endpoint, held at t = 0
    knee_low: float = 0.6      # [rad] extended endpoint
    frequency: float = 0.5     # [Hz]
    hip_lean: float = -0.8     # [rad] constant forward-lean target
    kp: float = 5.0            # tracking gain used while collecting data


@dataclass
class ExcitationMotion:
    """Per-joint target-angle series at the control-tick rate."""

    targets: np.ndarray  # (ticks, n_joints)
    duration: float
    kp: float

    @property
    def n_ticks(self) -> int:
        return self.targets.shape[0]

    @property
    def n_joints(self) -> int:
        return self.targets.shape[1]


def excitation_motion(cfg: ExcitationConfig = ExcitationConfig()) -> ExcitationMotion:
    """Knee sweeps a cosine between its endpoints; the hip holds a constant lean.

    The knee starts at the flexed endpoint and completes one cycle per
    1/frequency seconds. Per-tick target increments stay bounded by the cosine
    slope, so the commanded motion is continuous.
    """
    n_ticks = int(round(cfg.duration * PD_RATE_HZ))
    t = np.arange(n_ticks) / PD_RATE_HZ
    mid = 0.5 * (cfg.knee_high + cfg.knee_low)
    amp = 0.5 * (cfg.knee_high - cfg.knee_low)
    knee = mid + amp * np.cos(2.0 * np.pi * cfg.frequency * t)
    hip = np.full(n_ticks, cfg.hip_lean)
    return ExcitationMotion(
        targets=np.column_stack([knee, hip]),
        duration=cfg.duration,
        kp=cfg.kp,
    )
