"""Multi-rate rollout loop: 1 ms physics, 125 Hz position control, 31.25 Hz policy.

Commands stream through a latency queue before the position loop sees them;
the position loop itself always reads fresh joint state. Trajectories are
logged at the control-tick rate. This module is the plain-Python reference
engine; `fastsim` holds the compiled twin used for optimization workloads.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .chain import ChainModel, PhysicalChain, SimState, _as_physical, body_pose, step
from .excitation import ExcitationMotion
from .task import RewardCoeffs, StepObservation, TaskConfig, board_wave_arrays, reward_step

__all__ = [
    "SchedulerConfig",
    "Trajectory",
    "ExcitationController",
    "PolicyController",
    "RolloutResult",
    "run_rollout",
]


@dataclass(frozen=True)
class SchedulerConfig:
    sim_dt: float = 0.001
    pd_hz: float = 125.0
    policy_hz: float = 31.25
    latency: float = 0.008

    def __post_init__(self):
        for name, every in (("pd_hz", self.steps_per_pd), ("policy_hz", self.steps_per_policy)):
            if every < 1:
                raise ValueError(f"{name} slower than the simulation step")
        if abs(self.steps_per_pd - 1.0 / (self.pd_hz * self.sim_dt)) > 1e-9:
            raise ValueError("pd_hz does not divide the simulation rate")
        if abs(self.steps_per_policy - 1.0 / (self.policy_hz * self.sim_dt)) > 1e-9:
            raise ValueError("policy_hz does not divide the simulation rate")
        if self.latency < 0.0:
            raise ValueError("latency must be >= 0")
        if abs(self.latency / self.sim_dt - round(self.latency / self.sim_dt)) > 1e-9:
            raise ValueError("latency must be a multiple of sim_dt")

    @property
    def steps_per_pd(self) -> int:
        return int(round(1.0 / (self.pd_hz * self.sim_dt)))

    @property
    def steps_per_policy(self) -> int:
        return int(round(1.0 / (self.policy_hz * self.sim_dt)))

    @property
    def latency_steps(self) -> int:
        return int(round(self.latency / self.sim_dt))


@dataclass
class Trajectory:
    """Control-tick-rate log of body orientation, joint state and currents."""

    t: np.ndarray
    r: np.ndarray
    rdot: np.ndarray
    theta: np.ndarray      # (ticks, n_joints)
    thetadot: np.ndarray
    current: np.ndarray

    def __post_init__(self):
        if len(self.t) > 1:
            dts = np.diff(self.t)
            if not np.allclose(dts, dts[0], rtol=0.0, atol=1e-12):
                raise ValueError("trajectory time base is not uniform")

    @property
    def n_ticks(self) -> int:
        return len(self.t)

    @property
    def n_joints(self) -> int:
        return self.theta.shape[1]

    def to_csv(self, header_comment: str | None = None) -> str:
        buf = io.StringIO()
        if header_comment:
            for line in header_comment.splitlines():
                buf.write(f"# {line}\n")
        n = self.n_joints
        cols = ["t", "r", "rdot"]
        for j in range(n):
            cols += [f"theta_{j}", f"thetadot_{j}", f"current_{j}"]
        buf.write(",".join(cols) + "\n")
        for k in range(self.n_ticks):
            row = [self.t[k], self.r[k], self.rdot[k]]
            for j in range(n):
                row += [self.theta[k, j], self.thetadot[k, j], self.current[k, j]]
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @staticmethod
    def from_csv(text: str) -> "Trajectory":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        header = lines[0].split(",")
        n = (len(header) - 3) // 3
        data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
        theta = np.empty((len(data), n))
        thetadot = np.empty((len(data), n))
        current = np.empty((len(data), n))
        for j in range(n):
            theta[:, j] = data[:, 3 + 3 * j]
            thetadot[:, j] = data[:, 4 + 3 * j]
            current[:, j] = data[:, 5 + 3 * j]
        return Trajectory(
            t=data[:, 0], r=data[:, 1], rdot=data[:, 2],
            theta=theta, thetadot=thetadot, current=current,
        )


@dataclass(frozen=True)
class ExcitationController:
    """Streams a scripted target series at the control-tick rate with fixed gain."""

    motion: ExcitationMotion


@dataclass(frozen=True)
class PolicyController:
    """Linear policy emitting per-joint (target, gain) at the policy rate."""

    policy: "object"        # policy.PolicyParams; kept loose to avoid an import cycle
    task: TaskConfig
    coeffs: RewardCoeffs = field(default_factory=RewardCoeffs.evaluation)


@dataclass
class RolloutResult:
    trajectory: Trajectory
    rewards: np.ndarray | None
    terminated: bool
    steps_done: int
    v_pwm_max: float

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum()) if self.rewards is not None else 0.0


def run_rollout(
    chain: ChainModel | PhysicalChain,
    controller: ExcitationController | PolicyController,
    duration: float | None = None,
    seed: int = 0,
    scheduler: SchedulerConfig = SchedulerConfig(),
    engine: str = "numba",
    initial_state: SimState | None = None,
) -> RolloutResult:
    """Roll the chain forward under a controller. Deterministic in all inputs.

    The seed drives the board wave in policy mode; excitation runs on a flat
    board. duration defaults to the controller's own duration.
    """
    phys = _as_physical(chain)
    if isinstance(controller, ExcitationController):
        dur = controller.motion.duration if duration is None else duration
        if engine == "numba":
            from . import fastsim

            return fastsim.excitation_rollout(phys, controller.motion, dur, scheduler, initial_state)
        return _py_excitation(phys, controller.motion, dur, scheduler, initial_state)
    if isinstance(controller, PolicyController):
        dur = controller.task.episode_duration if duration is None else duration
        if engine == "numba":
            from . import fastsim

            return fastsim.policy_rollout(
                phys, controller.policy, controller.task, controller.coeffs,
                dur, seed, scheduler, initial_state,
            )
        return _py_policy(
            phys, controller.policy, controller.task, controller.coeffs,
            dur, seed, scheduler, initial_state,
        )
    raise TypeError(f"unknown controller type: {type(controller)!r}")


def _default_state(phys: PhysicalChain, tilt0: float) -> SimState:
    from .testbed import NEUTRAL_POSTURE

    q0 = NEUTRAL_POSTURE[: phys.n].copy()
    return SimState(q=q0, qdot=np.zeros(phys.n), base_tilt=tilt0, t=0.0)


def _py_excitation(
    phys: PhysicalChain,
    motion: ExcitationMotion,
    duration: float,
    sched: SchedulerConfig,
    initial_state: SimState | None,
) -> RolloutResult:
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    n = phys.n
    dt = sched.sim_dt
    pd_every = sched.steps_per_pd
    lat = sched.latency_steps
    n_ticks = min(int(round(duration / dt)) // pd_every, motion.n_ticks)
    n_steps = n_ticks * pd_every
    kd = 0.1

    state = initial_state.copy() if initial_state is not None else _default_state(phys, 0.0)
    state = SimState(state.q.copy(), state.qdot.copy(), 0.0, 0.0)

    traj_t = np.empty(n_ticks)
    traj_r = np.empty(n_ticks)
    traj_rd = np.empty(n_ticks)
    traj_th = np.empty((n_ticks, n))
    traj_thd = np.empty((n_ticks, n))
    traj_cur = np.empty((n_ticks, n))

    i_targets = np.zeros(n)
    i_prev = np.zeros(n)
    active = 0
    nxt = 0
    vmax = 0.0
    for k in range(n_steps):
        while nxt < motion.n_ticks and nxt * pd_every + lat <= k:
            active = nxt
            nxt += 1
        if k % pd_every == 0:
            tick = k // pd_every
            tgt = motion.targets[active]
            for j in range(n):
                i_targets[j] = motion.kp * (tgt[j] - state.q[j]) - kd * state.qdot[j]
            r, rd, _, _ = body_pose(phys, state.q, state.qdot, 0.0, 0.0)
            traj_t[tick] = k * dt
            traj_r[tick] = r
            traj_rd[tick] = rd
            traj_th[tick] = state.q
            traj_thd[tick] = state.qdot
            traj_cur[tick] = i_prev
        state, info = step(phys, state, i_targets, dt)
        i_prev = info.i_actual
        vmax = max(vmax, float(np.abs(info.v_pwm).max()))

    traj = Trajectory(traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur)
    return RolloutResult(traj, None, False, n_steps, vmax)


def _py_policy(
    phys: PhysicalChain,
    policy,
    task: TaskConfig,
    coeffs: RewardCoeffs,
    duration: float,
    seed: int,
    sched: SchedulerConfig,
    initial_state: SimState | None,
) -> RolloutResult:
    if duration <= 0.0:
        raise ValueError("duration must be positive")
    from .policy import action_from_raw, normalized_obs

    n = phys.n
    dt = sched.sim_dt
    pd_every = sched.steps_per_pd
    pol_every = sched.steps_per_policy
    lat = sched.latency_steps
    n_steps = int(round(duration / dt)) // pol_every * pol_every
    max_ticks = n_steps // pol_every
    pd_ticks = n_steps // pd_every
    kd = 0.1

    psi, dpsi, ddpsi = board_wave_arrays(seed, n_steps, dt, task)
    state = initial_state.copy() if initial_state is not None else _default_state(phys, psi[0])
    state = SimState(state.q.copy(), state.qdot.copy(), float(psi[0]), 0.0)
    height_min = task.height_fraction * policy.nominal_height

    cmd_targets = np.empty((max_ticks + 1, n))
    cmd_kps = np.empty((max_ticks + 1, n))
    cmd_effect = np.empty(max_ticks + 1, dtype=int)
    cmd_targets[0] = policy.neutral[:n]
    cmd_kps[0] = policy.kp_mid
    cmd_effect[0] = -1
    n_cmds = 1

    rewards = np.empty(max_ticks)
    traj_t = np.empty(pd_ticks)
    traj_r = np.empty(pd_ticks)
    traj_rd = np.empty(pd_ticks)
    traj_th = np.empty((pd_ticks, n))
    traj_thd = np.empty((pd_ticks, n))
    traj_cur = np.empty((pd_ticks, n))

    i_targets = np.zeros(n)
    i_prev = np.zeros(n)
    action_prev = np.concatenate([cmd_targets[0], cmd_kps[0]])
    obs_prev: np.ndarray | None = None
    comvel_prev = np.zeros(2)
    active = 0
    nxt = 1
    vmax = 0.0
    ticks_done = 0
    steps_done = 0
    terminated = False

    for k in range(n_steps):
        if k % pol_every == 0:
            tick = k // pol_every
            r, rd, compos, comvel = body_pose(
                phys, state.q, state.qdot, float(psi[k]), float(dpsi[k])
            )
            if abs(r) > task.tilt_limit or compos[1] < height_min:
                terminated = True
                break
            obs_now = normalized_obs(policy, r, rd, state.q, state.qdot, action_prev)
            x = np.concatenate([obs_now, obs_prev if obs_prev is not None else obs_now])
            obs_prev = obs_now
            raw = policy.weights @ x + policy.bias
            targets, kps = action_from_raw(policy, raw, phys.limit_lo, phys.limit_hi)
            action = np.concatenate([targets, kps])
            cmd_targets[n_cmds] = targets
            cmd_kps[n_cmds] = kps
            cmd_effect[n_cmds] = k + lat
            n_cmds += 1

            if tick == 0:
                acc = 0.0
            else:
                dv = comvel - comvel_prev
                acc = float(np.hypot(dv[0], dv[1])) / (pol_every * dt)
            comvel_prev = comvel
            obs = StepObservation(
                r_actual=r, rdot=rd,
                xdot_actual=float(comvel[0]), ydot_actual=0.0,
                acc_pelvis=acc, currents=i_prev.copy(),
                action_prev=action_prev.copy(), action=action,
            )
            rewards[tick] = reward_step(obs, coeffs, task)
            ticks_done = tick + 1
            action_prev = action

        while nxt < n_cmds and cmd_effect[nxt] <= k:
            active = nxt
            nxt += 1
        if k % pd_every == 0:
            tick = k // pd_every
            for j in range(n):
                i_targets[j] = cmd_kps[active, j] * (cmd_targets[active, j] - state.q[j]) - kd * state.qdot[j]
            r, rd, _, _ = body_pose(phys, state.q, state.qdot, float(psi[k]), float(dpsi[k]))
            traj_t[tick] = k * dt
            traj_r[tick] = r
            traj_rd[tick] = rd
            traj_th[tick] = state.q
            traj_thd[tick] = state.qdot
            traj_cur[tick] = i_prev

        state, info = step(
            phys, state, i_targets, dt,
            base_rate=float(dpsi[k]), base_acc=float(ddpsi[k]),
            base_tilt_next=float(psi[k + 1]),
        )
        i_prev = info.i_actual
        vmax = max(vmax, float(np.abs(info.v_pwm).max()))
        steps_done = k + 1

    done_pd = steps_done // pd_every
    traj = Trajectory(
        traj_t[:done_pd], traj_r[:done_pd], traj_rd[:done_pd],
        traj_th[:done_pd], traj_thd[:done_pd], traj_cur[:done_pd],
    )
    return RolloutResult(traj, rewards[:ticks_done].copy(), terminated, steps_done, vmax)
