"""Planar articulated-chain testbed.

A serial chain of rigid links stands on a board whose tilt angle is a
prescribed function of time. Joint 0 sits exactly on the board's pivot axis,
so the board angle enters the dynamics only through the link orientation
reference and its prescribed rates. The equations of motion are assembled in
absolute link angles (where the mass matrix is nearly diagonal and the
velocity-product terms have a simple closed form) and then mapped to joint
coordinates.

Conventions: x forward, z up, angles counterclockwise in the x-z plane.
A link's absolute angle u points along its axis; u = pi/2 is straight up.
With board tilt psi and joint angles q, u_i = pi/2 + psi + sum(q[:i+1]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .actuator import (
    FrictionParams,
    GearParams,
    JointActuator,
    MotorParams,
    actuator_step,
)

__all__ = [
    "LinkSpec",
    "JointSpec",
    "BaseOffsets",
    "ChainModel",
    "PhysicalChain",
    "SimState",
    "StepInfo",
    "materialize",
    "forward_dynamics",
    "estimate_load_torque",
    "step",
    "total_energy",
    "body_pose",
]

UP = math.pi / 2.0


@dataclass(frozen=True)
class LinkSpec:
    mass: float      # [kg]
    length: float    # [m]
    com: float       # COM distance from the proximal joint, along the axis [m]
    inertia: float   # about the COM [kg*m^2]


@dataclass(frozen=True)
class JointSpec:
    actuator: JointActuator
    limit_lo: float = -2.4
    limit_hi: float = 2.4


@dataclass(frozen=True)
class BaseOffsets:
    """Extra payload rigidly attached to the body (distal) link.

    The offset mass sits at (com_offset_x forward, com_offset_z along the
    axis) relative to the body link's own COM, in the body frame.
    """

    mass_offset: float = 0.0
    com_offset_x: float = 0.0
    com_offset_z: float = 0.0


@dataclass
class ChainModel:
    links: list[LinkSpec]
    joints: list[JointSpec]
    base: BaseOffsets = field(default_factory=BaseOffsets)
    gravity: float = 9.81

    def __post_init__(self):
        if len(self.links) != len(self.joints):
            raise ValueError(
                f"joint count {len(self.joints)} != link count {len(self.links)}"
            )
        for i, lk in enumerate(self.links):
            if not (lk.mass > 0.0 and lk.length > 0.0 and lk.inertia > 0.0):
                raise ValueError(f"link {i} needs positive mass/length/inertia: {lk}")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    def to_json(self) -> str:
        def link_d(lk: LinkSpec) -> dict:
            return {"mass": lk.mass, "length": lk.length, "com": lk.com, "inertia": lk.inertia}

        def joint_d(j: JointSpec) -> dict:
            a = j.actuator
            return {
                "motor": {
                    "kt": a.motor.kt,
                    "r_ter": a.motor.r_ter,
                    "armature": a.motor.armature,
                    "v_battery": a.motor.v_battery,
                },
                "gear": {"ratio": a.gear.ratio, "eta_fw": a.gear.eta_fw, "eta_bw": a.gear.eta_bw},
                "friction": {
                    "f_s": a.friction.f_s,
                    "f_c": a.friction.f_c,
                    "k_v": a.friction.k_v,
                    "qdot_static": a.friction.qdot_static,
                },
                "limit_lo": j.limit_lo,
                "limit_hi": j.limit_hi,
            }

        doc = {
            "links": [link_d(lk) for lk in self.links],
            "joints": [joint_d(j) for j in self.joints],
            "base": {
                "mass_offset": self.base.mass_offset,
                "com_offset_x": self.base.com_offset_x,
                "com_offset_z": self.base.com_offset_z,
            },
            "gravity": self.gravity,
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "ChainModel":
        doc = json.loads(text)
        links = [LinkSpec(**d) for d in doc["links"]]
        joints = [
            JointSpec(
                actuator=JointActuator(
                    motor=MotorParams(**d["motor"]),
                    gear=GearParams(**d["gear"]),
                    friction=FrictionParams(**d["friction"]),
                ),
                limit_lo=d["limit_lo"],
                limit_hi=d["limit_hi"],
            )
            for d in doc["joints"]
        ]
        return ChainModel(
            links=links,
            joints=joints,
            base=BaseOffsets(**doc["base"]),
            gravity=doc["gravity"],
        )


@dataclass
class PhysicalChain:
    """ChainModel materialized into flat arrays for the integrator.

    Base offsets are merged into the last link: combined mass, COM (possibly
    off-axis, stored as lever com_r and angular offset com_delta relative to
    the link axis) and inertia via the parallel-axis rule.
    """

    n: int
    masses: np.ndarray
    lengths: np.ndarray
    com_r: np.ndarray
    com_delta: np.ndarray
    inertias: np.ndarray
    armature: np.ndarray
    kt: np.ndarray
    r_ter: np.ndarray
    v_battery: np.ndarray
    r_gear: np.ndarray
    eta_fw: np.ndarray
    eta_bw: np.ndarray
    f_s: np.ndarray
    f_c: np.ndarray
    k_v: np.ndarray
    qdot_static: np.ndarray
    limit_lo: np.ndarray
    limit_hi: np.ndarray
    gravity: float

    def joint_actuator(self, j: int) -> JointActuator:
        return JointActuator(
            motor=MotorParams(
                kt=float(self.kt[j]),
                r_ter=float(self.r_ter[j]),
                armature=float(self.armature[j]),
                v_battery=float(self.v_battery[j]),
            ),
            gear=GearParams(
                ratio=float(self.r_gear[j]),
                eta_fw=float(self.eta_fw[j]),
                eta_bw=float(self.eta_bw[j]),
            ),
            friction=FrictionParams(
                f_s=float(self.f_s[j]),
                f_c=float(self.f_c[j]),
                k_v=float(self.k_v[j]),
                qdot_static=float(self.qdot_static[j]),
            ),
        )


@dataclass
class SimState:
    q: np.ndarray
    qdot: np.ndarray
    base_tilt: float = 0.0
    t: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.q.copy(), self.qdot.copy(), self.base_tilt, self.t)


@dataclass
class StepInfo:
    i_actual: np.ndarray
    v_pwm: np.ndarray
    tau_applied: np.ndarray
    friction_cap: np.ndarray
    friction_torque: np.ndarray
    stuck: np.ndarray


def materialize(model: ChainModel) -> PhysicalChain:
    n = model.n_joints
    masses = np.array([lk.mass for lk in model.links], float)
    lengths = np.array([lk.length for lk in model.links], float)
    com_r = np.array([lk.com for lk in model.links], float)
    com_delta = np.zeros(n)
    inertias = np.array([lk.inertia for lk in model.links], float)

    b = model.base
    if b.mass_offset > 0.0:
        # Fold the payload into the body link. In the link frame the axis is
        # "z" and forward is "x"; forward maps to minus the in-plane normal.
        m0 = masses[-1]
        dm = b.mass_offset
        along0, perp0 = com_r[-1], 0.0
        along1, perp1 = com_r[-1] + b.com_offset_z, -b.com_offset_x
        m_tot = m0 + dm
        ca = (m0 * along0 + dm * along1) / m_tot
        cp = (m0 * perp0 + dm * perp1) / m_tot
        d0 = math.hypot(along0 - ca, perp0 - cp)
        d1 = math.hypot(along1 - ca, perp1 - cp)
        inertias[-1] = inertias[-1] + m0 * d0 * d0 + dm * d1 * d1
        masses[-1] = m_tot
        com_r[-1] = math.hypot(ca, cp)
        com_delta[-1] = math.atan2(cp, ca)

    def arr(get) -> np.ndarray:
        return np.array([get(j.actuator) for j in model.joints], float)

    return PhysicalChain(
        n=n,
        masses=masses,
        lengths=lengths,
        com_r=com_r,
        com_delta=com_delta,
        inertias=inertias,
        armature=arr(lambda a: a.motor.armature),
        kt=arr(lambda a: a.motor.kt),
        r_ter=arr(lambda a: a.motor.r_ter),
        v_battery=arr(lambda a: a.motor.v_battery),
        r_gear=arr(lambda a: a.gear.ratio),
        eta_fw=arr(lambda a: a.gear.eta_fw),
        eta_bw=arr(lambda a: a.gear.eta_bw),
        f_s=arr(lambda a: a.friction.f_s),
        f_c=arr(lambda a: a.friction.f_c),
        k_v=arr(lambda a: a.friction.k_v),
        qdot_static=arr(lambda a: a.friction.qdot_static),
        limit_lo=np.array([j.limit_lo for j in model.joints], float),
        limit_hi=np.array([j.limit_hi for j in model.joints], float),
        gravity=model.gravity,
    )


def _as_physical(chain: ChainModel | PhysicalChain) -> PhysicalChain:
    return chain if isinstance(chain, PhysicalChain) else materialize(chain)


def _dyn_terms(
    phys: PhysicalChain,
    q: np.ndarray,
    qd: np.ndarray,
    psi: float,
    dpsi: float,
    ddpsi: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Mass matrix and bias torque in joint coordinates.

    Returns (M_q, b_q) with M_q q'' = tau - b_q; b_q collects gravity,
    velocity-product terms and the inertial coupling from the prescribed
    board acceleration, all mapped onto the joints.
    """
    n = phys.n
    u = UP + psi + np.cumsum(q)
    ud = dpsi + np.cumsum(qd)

    M = np.zeros((n, n))
    h = np.zeros(n)
    gv = np.zeros(n)
    g = phys.gravity
    for i in range(n):
        m_i = phys.masses[i]
        for j in range(i + 1):
            r_ij = phys.com_r[i] if j == i else phys.lengths[j]
            th_ij = u[j] + (phys.com_delta[i] if j == i else 0.0)
            gv[j] += g * m_i * r_ij * math.cos(th_ij)
            for k in range(i + 1):
                r_ik = phys.com_r[i] if k == i else phys.lengths[k]
                th_ik = u[k] + (phys.com_delta[i] if k == i else 0.0)
                c = m_i * r_ij * r_ik
                M[j, k] += c * math.cos(th_ij - th_ik)
                h[j] += c * math.sin(th_ij - th_ik) * ud[k] * ud[k]
        M[i, i] += phys.inertias[i]

    bias_u = h + gv + (M @ np.ones(n)) * ddpsi
    # Map from absolute-angle space to joint space: L is lower-triangular ones.
    # (L^T v)[a] = sum_{j >= a} v[j]; M_q = L^T M L.
    b_q = np.array([bias_u[a:].sum() for a in range(n)])
    M_q = np.empty((n, n))
    for a in range(n):
        for bcol in range(n):
            M_q[a, bcol] = M[a:, bcol:].sum()
    M_q += np.diag(phys.armature)
    return M_q, b_q


def forward_dynamics(
    chain: ChainModel | PhysicalChain,
    state: SimState,
    tau: np.ndarray,
    base_rate: float = 0.0,
    base_acc: float = 0.0,
) -> np.ndarray:
    """Joint accelerations for the given applied joint torques.

    The board is held at state.base_tilt unless prescribed rates are passed.
    """
    phys = _as_physical(chain)
    if not (np.all(np.isfinite(state.q)) and np.all(np.isfinite(state.qdot))):
        raise ValueError(f"non-finite state: q={state.q}, qdot={state.qdot}")
    M_q, b_q = _dyn_terms(phys, state.q, state.qdot, state.base_tilt, base_rate, base_acc)
    try:
        qdd = np.linalg.solve(M_q, np.asarray(tau, float) - b_q)
    except np.linalg.LinAlgError as e:
        raise RuntimeError(f"singular mass matrix: {M_q!r}") from e
    if not np.all(np.isfinite(qdd)):
        raise RuntimeError(f"non-finite accelerations: {qdd}")
    return qdd


def estimate_load_torque(
    chain: ChainModel | PhysicalChain,
    state: SimState,
    joint_index: int,
    base_rate: float = 0.0,
    base_acc: float = 0.0,
    tau_ext: np.ndarray | None = None,
) -> float:
    """Generalized non-motor torque acting on a joint at the current state.

    This is the load the gear output must overcome: gravity, velocity-product
    coupling, prescribed-board inertial coupling and any external torque.
    """
    phys = _as_physical(chain)
    _, b_q = _dyn_terms(phys, state.q, state.qdot, state.base_tilt, base_rate, base_acc)
    ext = 0.0 if tau_ext is None else float(tau_ext[joint_index])
    return ext - float(b_q[joint_index])


def step(
    chain: ChainModel | PhysicalChain,
    state: SimState,
    i_targets: np.ndarray,
    dt: float,
    base_rate: float = 0.0,
    base_acc: float = 0.0,
    base_tilt_next: float | None = None,
    tau_ext: np.ndarray | None = None,
) -> tuple[SimState, StepInfo]:
    """Advance one simulation step with the held target currents.

    Semi-implicit Euler: velocities from accelerations first, then positions
    from the new velocities. The friction bound acts as a torque clamp: it
    reduces the net joint torque toward zero by at most the bound, and a
    near-rest joint whose net torque is within the bound sticks (its velocity
    is zeroed and it is dropped from the solve for this step).
    """
    phys = _as_physical(chain)
    n = phys.n
    q, qd = state.q, state.qdot
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise ValueError(f"non-finite state at t={state.t}: q={q}, qdot={qd}")

    M_q, b_q = _dyn_terms(phys, q, qd, state.base_tilt, base_rate, base_acc)
    ext = np.zeros(n) if tau_ext is None else np.asarray(tau_ext, float)

    tau_applied = np.empty(n)
    caps = np.empty(n)
    i_act = np.empty(n)
    v_pwm = np.empty(n)
    for j in range(n):
        tau_load = ext[j] - b_q[j]
        res = actuator_step(phys.joint_actuator(j), float(qd[j]), float(i_targets[j]), tau_load)
        tau_applied[j] = res.tau_applied
        caps[j] = res.friction_cap
        i_act[j] = res.i_actual
        v_pwm[j] = res.v_pwm

    f = tau_applied + ext - b_q
    f_eff = f.copy()
    fric = np.zeros(n)
    stuck = np.zeros(n, dtype=bool)
    for j in range(n):
        cap = caps[j]
        if abs(qd[j]) < phys.qdot_static[j]:
            if abs(f[j]) <= cap:
                stuck[j] = True
                fric[j] = -f[j]
                f_eff[j] = 0.0
            else:
                fric[j] = -math.copysign(cap, f[j])
                f_eff[j] = f[j] + fric[j]
        else:
            fric[j] = -math.copysign(cap, qd[j])
            f_eff[j] = f[j] + fric[j]

    qdd = np.zeros(n)
    free = ~stuck
    if free.any():
        sub = np.ix_(free, free)
        try:
            qdd[free] = np.linalg.solve(M_q[sub], f_eff[free])
        except np.linalg.LinAlgError as e:
            raise RuntimeError(f"singular mass matrix at t={state.t}") from e

    qd_new = qd + qdd * dt
    qd_new[stuck] = 0.0
    q_new = q + qd_new * dt
    for j in range(n):
        if q_new[j] < phys.limit_lo[j]:
            q_new[j] = phys.limit_lo[j]
            qd_new[j] = 0.0
        elif q_new[j] > phys.limit_hi[j]:
            q_new[j] = phys.limit_hi[j]
            qd_new[j] = 0.0

    if not np.all(np.isfinite(q_new)):
        raise RuntimeError(f"non-finite state after step at t={state.t}")

    tilt_next = state.base_tilt if base_tilt_next is None else base_tilt_next
    new_state = SimState(q=q_new, qdot=qd_new, base_tilt=tilt_next, t=state.t + dt)
    info = StepInfo(
        i_actual=i_act,
        v_pwm=v_pwm,
        tau_applied=tau_applied,
        friction_cap=caps,
        friction_torque=fric,
        stuck=stuck,
    )
    return new_state, info


def body_pose(
    phys: PhysicalChain, q: np.ndarray, qd: np.ndarray, psi: float, dpsi: float
) -> tuple[float, float, np.ndarray, np.ndarray]:
    """Pitch, pitch rate, COM position and COM velocity of the distal link.

    Pitch is measured from the upward vertical and includes the board tilt.
    """
    n = phys.n
    u = UP + psi + np.cumsum(q)
    ud = dpsi + np.cumsum(qd)
    pos = np.zeros(2)
    vel = np.zeros(2)
    for j in range(n - 1):
        c, s = math.cos(u[j]), math.sin(u[j])
        pos += phys.lengths[j] * np.array([c, s])
        vel += phys.lengths[j] * ud[j] * np.array([-s, c])
    th = u[n - 1] + phys.com_delta[n - 1]
    c, s = math.cos(th), math.sin(th)
    pos = pos + phys.com_r[n - 1] * np.array([c, s])
    vel = vel + phys.com_r[n - 1] * ud[n - 1] * np.array([-s, c])
    pitch = u[n - 1] - UP
    return float(pitch), float(ud[n - 1]), pos, vel


def total_energy(
    phys: PhysicalChain, state: SimState, base_rate: float = 0.0
) -> float:
    """Kinetic plus gravitational potential energy of the chain."""
    n = phys.n
    u = UP + state.base_tilt + np.cumsum(state.q)
    ud = base_rate + np.cumsum(state.qdot)
    e = 0.0
    pos = np.zeros(2)
    vel = np.zeros(2)
    for i in range(n):
        th = u[i] + phys.com_delta[i]
        c, s = math.cos(th), math.sin(th)
        com = pos + phys.com_r[i] * np.array([c, s])
        vcom = vel + phys.com_r[i] * ud[i] * np.array([-s, c])
        e += 0.5 * phys.masses[i] * float(vcom @ vcom)
        e += 0.5 * phys.inertias[i] * ud[i] * ud[i]
        e += 0.5 * phys.armature[i] * state.qdot[i] * state.qdot[i]
        e += phys.masses[i] * phys.gravity * com[1]
        c, s = math.cos(u[i]), math.sin(u[i])
        pos = pos + phys.lengths[i] * np.array([c, s])
        vel = vel + phys.lengths[i] * ud[i] * np.array([-s, c])
    return e
