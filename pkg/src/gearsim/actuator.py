"""Per-joint actuator physics.

A joint is driven by a current-controlled DC motor through a high reduction
ratio gear. The gear introduces two losses: a force-dependent loss modeled as
an extra brake torque that depends on the drive direction (forward: motor
drives load, backward: load drives motor), and a load-independent friction
loss applied by the integrator as a torque clamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "MotorParams",
    "GearParams",
    "FrictionParams",
    "ActuatorCommand",
    "MotorStepResult",
    "JointActuator",
    "ActuatorStepResult",
    "motor_step",
    "brake_torque",
    "friction_bound",
    "pd_target_current",
    "actuator_step",
]

KD_FIXED = 0.1
KP_MIN = 0.1
KP_MAX = 6.0


def _sign(x: float) -> float:
    """Sign with sign(0) = 0, so an exactly zero torque matches no drive direction."""
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@dataclass(frozen=True)
class MotorParams:
    """DC motor electrical constants (motor side).

    kt: torque constant [N*m/A]
    r_ter: terminal resistance [ohm]
    armature: rotor inertia reflected at the joint [kg*m^2]
    v_battery: supply voltage [V]
    """

    kt: float
    r_ter: float
    armature: float
    v_battery: float

    def __post_init__(self):
        if not (
            self.kt > 0.0
            and self.r_ter > 0.0
            and self.armature >= 0.0
            and self.v_battery > 0.0
        ):
            raise ValueError(f"invalid motor parameters: {self}")


@dataclass(frozen=True)
class GearParams:
    """Reduction gear with direction-dependent transmission efficiency."""

    ratio: float
    eta_fw: float = 1.0
    eta_bw: float = 1.0

    def __post_init__(self):
        if self.ratio < 1.0:
            raise ValueError(f"gear ratio must be >= 1, got {self.ratio}")
        for name in ("eta_fw", "eta_bw"):
            eta = getattr(self, name)
            if not (0.0 < eta <= 1.0):
                raise ValueError(f"{name} must be in (0, 1], got {eta}")


@dataclass(frozen=True)
class FrictionParams:
    """Load-independent joint friction (static peak decaying to Coulomb + viscous).

    f_s: static friction torque [N*m]
    f_c: Coulomb friction torque [N*m]
    k_v: viscous coefficient [N*m*s/rad]
    qdot_static: velocity scale regarded as non-static [rad/s]
    """

    f_s: float
    f_c: float
    k_v: float
    qdot_static: float

    def __post_init__(self):
        if not (self.f_s >= self.f_c >= 0.0):
            raise ValueError(f"need f_s >= f_c >= 0, got f_s={self.f_s}, f_c={self.f_c}")
        if self.k_v < 0.0 or self.qdot_static <= 0.0:
            raise ValueError(f"invalid friction parameters: {self}")


@dataclass(frozen=True)
class ActuatorCommand:
    """Position command with a commanded proportional gain; derivative gain is fixed."""

    q_target: float
    kp: float
    kd: float = KD_FIXED

    def __post_init__(self):
        if not (KP_MIN <= self.kp <= KP_MAX):
            raise ValueError(f"kp must be in [{KP_MIN}, {KP_MAX}], got {self.kp}")
        if self.kd != KD_FIXED:
            raise ValueError(f"kd is fixed at {KD_FIXED}, got {self.kd}")


@dataclass(frozen=True)
class MotorStepResult:
    tau_motor: float        # motor-shaft torque [N*m]
    tau_joint_drive: float  # ratio * tau_motor, gear-output drive torque [N*m]
    i_actual: float         # realized current [A]
    v_pwm: float            # applied voltage after the battery clamp [V]


@dataclass(frozen=True)
class JointActuator:
    """Everything between the target current and the joint: motor, gear, friction."""

    motor: MotorParams
    gear: GearParams
    friction: FrictionParams


@dataclass(frozen=True)
class ActuatorStepResult:
    tau_applied: float   # gear-output drive torque plus brake torque [N*m]
    friction_cap: float  # torque clamp bound handed to the integrator [N*m]
    i_actual: float
    v_pwm: float


def motor_step(
    motor: MotorParams, qdot_joint: float, r_gear: float, i_target: float
) -> MotorStepResult:
    """Run the current controller and motor electrics for one simulation step.

    The back-EMF is computed from the motor-shaft velocity, i.e. the joint
    velocity multiplied by the reduction ratio. The controller applies the
    voltage that would realize ``i_target`` and clamps it to the battery rails;
    the realized current and torque follow from the clamped voltage.
    """
    if not (math.isfinite(qdot_joint) and math.isfinite(i_target) and math.isfinite(r_gear)):
        raise ValueError(
            f"non-finite motor inputs: qdot={qdot_joint}, r_gear={r_gear}, i_target={i_target}"
        )
    v_emf = motor.kt * (r_gear * qdot_joint)
    v_targ = motor.r_ter * i_target + v_emf
    v_pwm = min(max(v_targ, -motor.v_battery), motor.v_battery)
    i_actual = (v_pwm - v_emf) / motor.r_ter
    tau_motor = motor.kt * i_actual
    return MotorStepResult(
        tau_motor=tau_motor,
        tau_joint_drive=r_gear * tau_motor,
        i_actual=i_actual,
        v_pwm=v_pwm,
    )


def brake_torque(tau_m: float, tau_a: float, eta_fw: float, eta_bw: float) -> float:
    """Brake torque emulating the gear's direction-dependent transmission loss.

    tau_m is the gear-output drive torque, tau_a the load torque on the joint.
    Forward drive (motor clearly drives the load) loses a fraction of tau_m,
    backward drive (load clearly drives the motor) loses a fraction of tau_a,
    and the antagonistic state cancels the two torques outright.
    """
    if not (math.isfinite(tau_m) and math.isfinite(tau_a)):
        raise ValueError(f"non-finite torques: tau_m={tau_m}, tau_a={tau_a}")
    s_m = _sign(tau_m)
    if s_m != 0.0 and _sign(eta_fw * tau_m + tau_a) == s_m:
        return -(1.0 - eta_fw) * tau_m
    s_a = _sign(tau_a)
    if s_a != 0.0 and _sign(tau_m + eta_bw * tau_a) == s_a:
        return -(1.0 - eta_bw) * tau_a
    return -(tau_m + tau_a)


def friction_bound(qdot: float, fric: FrictionParams) -> float:
    """Velocity-dependent upper bound of the load-independent friction torque.

    Equals f_s at rest and decays exponentially (scale qdot_static) toward the
    Coulomb torque, plus a viscous term. Always nonnegative.
    """
    if not math.isfinite(qdot):
        raise ValueError(f"non-finite qdot: {qdot}")
    s = math.exp(-abs(qdot) / fric.qdot_static)
    return fric.f_c + s * (fric.f_s - fric.f_c) + fric.k_v * abs(qdot)


def pd_target_current(cmd: ActuatorCommand, q: float, qdot: float) -> float:
    """Target current from the position loop: kp * error - kd * qdot."""
    return cmd.kp * (cmd.q_target - q) - cmd.kd * qdot


def actuator_step(
    act: JointActuator, qdot_joint: float, i_target: float, tau_load: float
) -> ActuatorStepResult:
    """One 1 ms actuator update given the held target current and estimated load.

    Returns the torque to apply at the joint (drive plus brake) together with
    the friction clamp bound the integrator must enforce. i_target is the most
    recent position-loop output, held between control ticks.
    """
    m = motor_step(act.motor, qdot_joint, act.gear.ratio, i_target)
    brake = brake_torque(m.tau_joint_drive, tau_load, act.gear.eta_fw, act.gear.eta_bw)
    cap = friction_bound(qdot_joint, act.friction)
    return ActuatorStepResult(
        tau_applied=m.tau_joint_drive + brake,
        friction_cap=cap,
        i_actual=m.i_actual,
        v_pwm=m.v_pwm,
    )
