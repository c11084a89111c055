"""Default two-link leg testbed: geometry, neutral posture, builders."""

from __future__ import annotations

import math

import numpy as np

from .actuator import FrictionParams, GearParams, JointActuator, MotorParams
from .chain import BaseOffsets, ChainModel, JointSpec, LinkSpec, SimState, body_pose, materialize

__all__ = [
    "GEAR_RATIO",
    "V_BATTERY",
    "QDOT_STATIC",
    "NEUTRAL_POSTURE",
    "default_actuator",
    "default_chain",
    "neutral_state",
    "nominal_body_height",
]

GEAR_RATIO = 353.5
V_BATTERY = 12.0
QDOT_STATIC = 0.1  # [rad/s]; fixed, not part of the identified set

# Knee slightly bent, hip folded back so the body stands near vertical.
NEUTRAL_POSTURE = np.array([0.4, -0.3])

_LEG = LinkSpec(mass=0.30, length=0.30, com=0.15, inertia=0.0023)
_BODY = LinkSpec(mass=0.60, length=0.30, com=0.15, inertia=0.0045)
_JOINT_LIMIT = 2.4


def default_actuator(
    kt: float = 0.0051,
    r_ter: float = 5.2,
    armature: float = 0.005,
    eta_fw: float = 1.0,
    eta_bw: float = 1.0,
    f_s: float = 0.1,
    f_c: float = 0.05,
    k_v: float = 0.01,
) -> JointActuator:
    return JointActuator(
        motor=MotorParams(kt=kt, r_ter=r_ter, armature=armature, v_battery=V_BATTERY),
        gear=GearParams(ratio=GEAR_RATIO, eta_fw=eta_fw, eta_bw=eta_bw),
        friction=FrictionParams(f_s=f_s, f_c=f_c, k_v=k_v, qdot_static=QDOT_STATIC),
    )


def default_chain(
    actuator: JointActuator | None = None,
    base: BaseOffsets | None = None,
) -> ChainModel:
    """Two-link leg (knee joint 0, hip joint 1) on the board pivot."""
    act = actuator if actuator is not None else default_actuator()
    return ChainModel(
        links=[_LEG, _BODY],
        joints=[
            JointSpec(actuator=act, limit_lo=-_JOINT_LIMIT, limit_hi=_JOINT_LIMIT),
            JointSpec(actuator=act, limit_lo=-_JOINT_LIMIT, limit_hi=_JOINT_LIMIT),
        ],
        base=base if base is not None else BaseOffsets(),
        gravity=9.81,
    )


def neutral_state(base_tilt: float = 0.0) -> SimState:
    return SimState(q=NEUTRAL_POSTURE.copy(), qdot=np.zeros(2), base_tilt=base_tilt, t=0.0)


def nominal_body_height(model: ChainModel) -> float:
    """Body COM height at the neutral posture on a flat board."""
    phys = materialize(model)
    _, _, pos, _ = body_pose(phys, NEUTRAL_POSTURE, np.zeros(2), 0.0, 0.0)
    return float(pos[1])
