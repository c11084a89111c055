"""Compiled twin of the reference rollout engine.

Same step semantics as `chain.step` driven by the `rollout` loop, written as
numba kernels so identification and policy-training workloads run at full
speed. The kernels release the GIL, so rollouts parallelize across threads.
Set NUMBA_DISABLE_JIT=1 to run them as plain Python.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .chain import PhysicalChain, SimState
from .excitation import ExcitationMotion
from .task import RewardCoeffs, TaskConfig, board_wave_arrays

HALF_PI = math.pi / 2.0
KD = 0.1
KP_MIN = 0.1
KP_MAX = 6.0


@njit(cache=True, nogil=True)
def _dyn_terms(q, qd, psi, dpsi, ddpsi,
               masses, lengths, com_r, com_delta, inertias, armature, gravity,
               u, ud, M, h, gv, bias_u, M_q, b_q):
    n = q.shape[0]
    s0 = HALF_PI + psi
    cq = 0.0
    cqd = 0.0
    for i in range(n):
        cq += q[i]
        cqd += qd[i]
        u[i] = s0 + cq
        ud[i] = dpsi + cqd
    for j in range(n):
        gv[j] = 0.0
        h[j] = 0.0
        for k in range(n):
            M[j, k] = 0.0
    for i in range(n):
        m_i = masses[i]
        for j in range(i + 1):
            if j == i:
                r_ij = com_r[i]
                th_ij = u[j] + com_delta[i]
            else:
                r_ij = lengths[j]
                th_ij = u[j]
            gv[j] += gravity * m_i * r_ij * math.cos(th_ij)
            for k in range(i + 1):
                if k == i:
                    r_ik = com_r[i]
                    th_ik = u[k] + com_delta[i]
                else:
                    r_ik = lengths[k]
                    th_ik = u[k]
                c = m_i * r_ij * r_ik
                M[j, k] += c * math.cos(th_ij - th_ik)
                h[j] += c * math.sin(th_ij - th_ik) * ud[k] * ud[k]
        M[i, i] += inertias[i]
    for j in range(n):
        s = 0.0
        for k in range(n):
            s += M[j, k]
        bias_u[j] = h[j] + gv[j] + s * ddpsi
    for a in range(n):
        s = 0.0
        for j in range(a, n):
            s += bias_u[j]
        b_q[a] = s
        for bcol in range(n):
            s2 = 0.0
            for j in range(a, n):
                for k in range(bcol, n):
                    s2 += M[j, k]
            M_q[a, bcol] = s2
    for a in range(n):
        M_q[a, a] += armature[a]


@njit(cache=True, nogil=True)
def _sign(x):
    if x > 0.0:
        return 1.0
    if x < 0.0:
        return -1.0
    return 0.0


@njit(cache=True, nogil=True)
def _solve_reduced(M_q, f_eff, stuck, qdd, A, x, idx):
    """qdd for non-stuck joints by Gaussian elimination; nan marks singularity."""
    n = M_q.shape[0]
    m = 0
    for j in range(n):
        qdd[j] = 0.0
        if not stuck[j]:
            idx[m] = j
            m += 1
    if m == 0:
        return
    for a in range(m):
        x[a] = f_eff[idx[a]]
        for b in range(m):
            A[a, b] = M_q[idx[a], idx[b]]
    for col in range(m):
        piv = col
        best = abs(A[col, col])
        for r in range(col + 1, m):
            v = abs(A[r, col])
            if v > best:
                best = v
                piv = r
        if best == 0.0:
            for a in range(m):
                qdd[idx[a]] = np.nan
            return
        if piv != col:
            for b in range(m):
                tmp = A[col, b]
                A[col, b] = A[piv, b]
                A[piv, b] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        inv = 1.0 / A[col, col]
        for r in range(col + 1, m):
            factor = A[r, col] * inv
            if factor != 0.0:
                for b in range(col, m):
                    A[r, b] -= factor * A[col, b]
                x[r] -= factor * x[col]
    for a in range(m - 1, -1, -1):
        s = x[a]
        for b in range(a + 1, m):
            s -= A[a, b] * qdd[idx[b]]
        qdd[idx[a]] = s / A[a, a]


@njit(cache=True, nogil=True)
def _body_pose(q, qd, psi, dpsi, lengths, com_r, com_delta):
    n = q.shape[0]
    px = 0.0
    pz = 0.0
    vx = 0.0
    vz = 0.0
    cq = 0.0
    cqd = 0.0
    for j in range(n - 1):
        cq += q[j]
        cqd += qd[j]
        uj = HALF_PI + psi + cq
        udj = dpsi + cqd
        c = math.cos(uj)
        s = math.sin(uj)
        px += lengths[j] * c
        pz += lengths[j] * s
        vx += lengths[j] * udj * (-s)
        vz += lengths[j] * udj * c
    cq += q[n - 1]
    cqd += qd[n - 1]
    un = HALF_PI + psi + cq
    udn = dpsi + cqd
    th = un + com_delta[n - 1]
    c = math.cos(th)
    s = math.sin(th)
    px += com_r[n - 1] * c
    pz += com_r[n - 1] * s
    vx += com_r[n - 1] * udn * (-s)
    vz += com_r[n - 1] * udn * c
    return un - HALF_PI, udn, px, pz, vx, vz


@njit(cache=True, nogil=True)
def _sim_step(q, qd, i_targets, psi_k, dpsi_k, ddpsi_k,
              masses, lengths, com_r, com_delta, inertias, armature, gravity,
              kt, r_ter, v_bat, r_gear, eta_fw, eta_bw, f_s, f_c, k_v, qd_static,
              lim_lo, lim_hi, dt,
              u, ud, M, h, gv, bias_u, M_q, b_q, f_eff, stuck, qdd, A, x, idx,
              i_act_out):
    """One integration step; mutates q/qd, fills currents, returns (vmax, ok)."""
    n = q.shape[0]
    _dyn_terms(q, qd, psi_k, dpsi_k, ddpsi_k,
               masses, lengths, com_r, com_delta, inertias, armature, gravity,
               u, ud, M, h, gv, bias_u, M_q, b_q)
    vmax = 0.0
    for j in range(n):
        tau_load = -b_q[j]
        v_emf = kt[j] * (r_gear[j] * qd[j])
        v_targ = r_ter[j] * i_targets[j] + v_emf
        v_pwm = min(max(v_targ, -v_bat[j]), v_bat[j])
        i_act = (v_pwm - v_emf) / r_ter[j]
        tau_m = r_gear[j] * (kt[j] * i_act)
        av = abs(v_pwm)
        if av > vmax:
            vmax = av
        i_act_out[j] = i_act

        s_m = _sign(tau_m)
        if s_m != 0.0 and _sign(eta_fw[j] * tau_m + tau_load) == s_m:
            brake = -(1.0 - eta_fw[j]) * tau_m
        else:
            s_a = _sign(tau_load)
            if s_a != 0.0 and _sign(tau_m + eta_bw[j] * tau_load) == s_a:
                brake = -(1.0 - eta_bw[j]) * tau_load
            else:
                brake = -(tau_m + tau_load)
        tau_applied = tau_m + brake
        cap = f_c[j] + math.exp(-abs(qd[j]) / qd_static[j]) * (f_s[j] - f_c[j]) + k_v[j] * abs(qd[j])

        fj = tau_applied - b_q[j]
        stuck[j] = False
        if abs(qd[j]) < qd_static[j]:
            if abs(fj) <= cap:
                stuck[j] = True
                f_eff[j] = 0.0
            else:
                f_eff[j] = fj - math.copysign(cap, fj)
        else:
            f_eff[j] = fj - math.copysign(cap, qd[j])

    _solve_reduced(M_q, f_eff, stuck, qdd, A, x, idx)
    ok = True
    for j in range(n):
        qdn = qd[j] + qdd[j] * dt
        if stuck[j]:
            qdn = 0.0
        qn = q[j] + qdn * dt
        if qn < lim_lo[j]:
            qn = lim_lo[j]
            qdn = 0.0
        elif qn > lim_hi[j]:
            qn = lim_hi[j]
            qdn = 0.0
        if not (math.isfinite(qn) and math.isfinite(qdn)):
            ok = False
        q[j] = qn
        qd[j] = qdn
    return vmax, ok


@njit(cache=True, nogil=True)
def _excitation_kernel(masses, lengths, com_r, com_delta, inertias, armature, gravity,
                       kt, r_ter, v_bat, r_gear, eta_fw, eta_bw, f_s, f_c, k_v, qd_static,
                       lim_lo, lim_hi,
                       q, qd, targets, kp, dt, n_steps, pd_every, latency_steps,
                       traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur):
    n = q.shape[0]
    n_cmd = targets.shape[0]
    u = np.empty(n)
    ud = np.empty(n)
    M = np.empty((n, n))
    h = np.empty(n)
    gv = np.empty(n)
    bias_u = np.empty(n)
    M_q = np.empty((n, n))
    b_q = np.empty(n)
    f_eff = np.empty(n)
    stuck = np.zeros(n, np.bool_)
    qdd = np.empty(n)
    A = np.empty((n, n))
    x = np.empty(n)
    idx = np.empty(n, np.int64)
    i_act = np.zeros(n)
    i_prev = np.zeros(n)
    i_targets = np.zeros(n)

    active = 0
    nxt = 0
    vmax = 0.0
    err_step = -1
    for k in range(n_steps):
        while nxt < n_cmd and nxt * pd_every + latency_steps <= k:
            active = nxt
            nxt += 1
        if k % pd_every == 0:
            tick = k // pd_every
            for j in range(n):
                i_targets[j] = kp * (targets[active, j] - q[j]) - KD * qd[j]
            r, rd, _, _, _, _ = _body_pose(q, qd, 0.0, 0.0, lengths, com_r, com_delta)
            traj_t[tick] = k * dt
            traj_r[tick] = r
            traj_rd[tick] = rd
            for j in range(n):
                traj_th[tick, j] = q[j]
                traj_thd[tick, j] = qd[j]
                traj_cur[tick, j] = i_prev[j]
        v, ok = _sim_step(q, qd, i_targets, 0.0, 0.0, 0.0,
                          masses, lengths, com_r, com_delta, inertias, armature, gravity,
                          kt, r_ter, v_bat, r_gear, eta_fw, eta_bw, f_s, f_c, k_v, qd_static,
                          lim_lo, lim_hi, dt,
                          u, ud, M, h, gv, bias_u, M_q, b_q, f_eff, stuck, qdd, A, x, idx,
                          i_act)
        if not ok:
            err_step = k
            break
        if v > vmax:
            vmax = v
        for j in range(n):
            i_prev[j] = i_act[j]
    return vmax, err_step


@njit(cache=True, nogil=True)
def _policy_kernel(masses, lengths, com_r, com_delta, inertias, armature, gravity,
                   kt, r_ter, v_bat, r_gear, eta_fw, eta_bw, f_s, f_c, k_v, qd_static,
                   lim_lo, lim_hi,
                   q, qd, psi, dpsi, ddpsi,
                   W, bvec, obs_scales, neutral, kp_mid, kp_span, target_scale,
                   k_cmd, k_smooth, k_xd, k_yd, xdot_des, ydot_des, r_des,
                   tilt_limit, height_min,
                   dt, n_steps, pd_every, pol_every, latency_steps,
                   rewards, traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur):
    n = q.shape[0]
    n_obs = obs_scales.shape[0]
    n_act = W.shape[0]
    max_ticks = n_steps // pol_every
    u = np.empty(n)
    ud = np.empty(n)
    M = np.empty((n, n))
    h = np.empty(n)
    gv = np.empty(n)
    bias_u = np.empty(n)
    M_q = np.empty((n, n))
    b_q = np.empty(n)
    f_eff = np.empty(n)
    stuck = np.zeros(n, np.bool_)
    qdd = np.empty(n)
    A = np.empty((n, n))
    xs = np.empty(n)
    idx = np.empty(n, np.int64)
    i_act = np.zeros(n)
    i_prev = np.zeros(n)
    i_targets = np.zeros(n)

    cmd_targets = np.empty((max_ticks + 1, n))
    cmd_kps = np.empty((max_ticks + 1, n))
    cmd_effect = np.empty(max_ticks + 1, np.int64)
    for j in range(n):
        cmd_targets[0, j] = neutral[j]
        cmd_kps[0, j] = kp_mid
    cmd_effect[0] = -1
    n_cmds = 1

    obs_now = np.empty(n_obs)
    obs_prev = np.empty(n_obs)
    xin = np.empty(2 * n_obs)
    raw = np.empty(n_act)
    action_prev = np.empty(2 * n)
    action = np.empty(2 * n)
    for j in range(n):
        action_prev[j] = neutral[j]
        action_prev[n + j] = kp_mid
    have_prev_obs = False
    cv_prev_x = 0.0
    cv_prev_z = 0.0

    active = 0
    nxt = 1
    vmax = 0.0
    ticks_done = 0
    steps_done = 0
    terminated = False
    err_step = -1

    for k in range(n_steps):
        if k % pol_every == 0:
            tick = k // pol_every
            r, rd, _, pz, vx, vz = _body_pose(q, qd, psi[k], dpsi[k], lengths, com_r, com_delta)
            if abs(r) > tilt_limit or pz < height_min:
                terminated = True
                break
            obs_now[0] = r
            obs_now[1] = rd
            for j in range(n):
                obs_now[2 + j] = q[j]
                obs_now[4 + j] = qd[j]
                obs_now[6 + j] = action_prev[j] - neutral[j]
                obs_now[8 + j] = action_prev[n + j] - kp_mid
            for a in range(n_obs):
                obs_now[a] = obs_now[a] / obs_scales[a]
            if not have_prev_obs:
                for a in range(n_obs):
                    obs_prev[a] = obs_now[a]
                have_prev_obs = True
            for a in range(n_obs):
                xin[a] = obs_now[a]
                xin[n_obs + a] = obs_prev[a]
            for a in range(n_obs):
                obs_prev[a] = obs_now[a]
            for a in range(n_act):
                s = bvec[a]
                for c in range(2 * n_obs):
                    s += W[a, c] * xin[c]
                raw[a] = s
            for j in range(n):
                tj = neutral[j] + target_scale * raw[j]
                if tj < lim_lo[j]:
                    tj = lim_lo[j]
                elif tj > lim_hi[j]:
                    tj = lim_hi[j]
                gj = kp_mid + kp_span * raw[n + j]
                if gj < KP_MIN:
                    gj = KP_MIN
                elif gj > KP_MAX:
                    gj = KP_MAX
                action[j] = tj
                action[n + j] = gj
            cmd_targets[n_cmds] = action[:n]
            cmd_kps[n_cmds] = action[n:]
            cmd_effect[n_cmds] = k + latency_steps
            n_cmds += 1

            if tick == 0:
                acc = 0.0
            else:
                dvx = vx - cv_prev_x
                dvz = vz - cv_prev_z
                acc = math.hypot(dvx, dvz) / (pol_every * dt)
            cv_prev_x = vx
            cv_prev_z = vz

            cur_l1 = 0.0
            for j in range(n):
                cur_l1 += abs(i_prev[j])
            d_t = 0.0
            d_g = 0.0
            for j in range(n):
                d_t += abs(action[j] - action_prev[j])
                d_g += abs(action[n + j] - action_prev[n + j])
            da = d_t + d_g / 5.9
            r_cmd = (
                -(1.0 - math.exp(-k_xd * abs(xdot_des - vx)))
                - (1.0 - math.exp(-k_yd * abs(ydot_des - 0.0)))
                - (1.0 - math.exp(-4.0 * abs(r_des - r)))
            )
            r_smt = (
                -(1.0 - math.exp(-0.1 * da))
                - (1.0 - math.exp(-0.05 * (cur_l1 * 10.0)))
                - (1.0 - math.exp(-0.1 * (abs(rd) + abs(acc))))
            )
            rewards[tick] = k_cmd * r_cmd + k_smooth * r_smt + 1.0
            ticks_done = tick + 1
            for j in range(2 * n):
                action_prev[j] = action[j]

        while nxt < n_cmds and cmd_effect[nxt] <= k:
            active = nxt
            nxt += 1
        if k % pd_every == 0:
            tick = k // pd_every
            for j in range(n):
                i_targets[j] = cmd_kps[active, j] * (cmd_targets[active, j] - q[j]) - KD * qd[j]
            r, rd, _, _, _, _ = _body_pose(q, qd, psi[k], dpsi[k], lengths, com_r, com_delta)
            traj_t[tick] = k * dt
            traj_r[tick] = r
            traj_rd[tick] = rd
            for j in range(n):
                traj_th[tick, j] = q[j]
                traj_thd[tick, j] = qd[j]
                traj_cur[tick, j] = i_prev[j]

        v, ok = _sim_step(q, qd, i_targets, psi[k], dpsi[k], ddpsi[k],
                          masses, lengths, com_r, com_delta, inertias, armature, gravity,
                          kt, r_ter, v_bat, r_gear, eta_fw, eta_bw, f_s, f_c, k_v, qd_static,
                          lim_lo, lim_hi, dt,
                          u, ud, M, h, gv, bias_u, M_q, b_q, f_eff, stuck, qdd, A, xs, idx,
                          i_act)
        if not ok:
            err_step = k
            break
        if v > vmax:
            vmax = v
        for j in range(n):
            i_prev[j] = i_act[j]
        steps_done = k + 1

    return vmax, ticks_done, steps_done, terminated, err_step


def _unpack(phys: PhysicalChain):
    return (
        phys.masses, phys.lengths, phys.com_r, phys.com_delta, phys.inertias,
        phys.armature, phys.gravity,
        phys.kt, phys.r_ter, phys.v_battery, phys.r_gear, phys.eta_fw, phys.eta_bw,
        phys.f_s, phys.f_c, phys.k_v, phys.qdot_static,
        phys.limit_lo, phys.limit_hi,
    )


def excitation_rollout(phys: PhysicalChain, motion: ExcitationMotion, duration, sched, initial_state=None):
    from .rollout import RolloutResult, Trajectory
    from .testbed import NEUTRAL_POSTURE

    if duration <= 0.0:
        raise ValueError("duration must be positive")
    n = phys.n
    dt = sched.sim_dt
    pd_every = sched.steps_per_pd
    n_ticks = min(int(round(duration / dt)) // pd_every, motion.n_ticks)
    n_steps = n_ticks * pd_every

    if initial_state is not None:
        q = initial_state.q.astype(float).copy()
        qd = initial_state.qdot.astype(float).copy()
    else:
        q = NEUTRAL_POSTURE[:n].astype(float).copy()
        qd = np.zeros(n)

    traj_t = np.empty(n_ticks)
    traj_r = np.empty(n_ticks)
    traj_rd = np.empty(n_ticks)
    traj_th = np.empty((n_ticks, n))
    traj_thd = np.empty((n_ticks, n))
    traj_cur = np.empty((n_ticks, n))

    vmax, err_step = _excitation_kernel(
        *_unpack(phys), q, qd,
        np.ascontiguousarray(motion.targets, dtype=float), float(motion.kp),
        dt, n_steps, pd_every, sched.latency_steps,
        traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur,
    )
    if err_step >= 0:
        raise RuntimeError(f"non-finite state at step {err_step}")
    traj = Trajectory(traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur)
    return RolloutResult(traj, None, False, n_steps, float(vmax))


def policy_rollout(phys: PhysicalChain, policy, task: TaskConfig, coeffs: RewardCoeffs,
                   duration, seed, sched, initial_state=None):
    from .rollout import RolloutResult, Trajectory

    if duration <= 0.0:
        raise ValueError("duration must be positive")
    n = phys.n
    dt = sched.sim_dt
    pd_every = sched.steps_per_pd
    pol_every = sched.steps_per_policy
    n_steps = int(round(duration / dt)) // pol_every * pol_every
    max_ticks = n_steps // pol_every
    pd_ticks = n_steps // pd_every

    psi, dpsi, ddpsi = board_wave_arrays(seed, n_steps, dt, task)
    if initial_state is not None:
        q = initial_state.q.astype(float).copy()
        qd = initial_state.qdot.astype(float).copy()
    else:
        from .testbed import NEUTRAL_POSTURE

        q = NEUTRAL_POSTURE[:n].astype(float).copy()
        qd = np.zeros(n)

    rewards = np.zeros(max_ticks)
    traj_t = np.empty(pd_ticks)
    traj_r = np.empty(pd_ticks)
    traj_rd = np.empty(pd_ticks)
    traj_th = np.empty((pd_ticks, n))
    traj_thd = np.empty((pd_ticks, n))
    traj_cur = np.empty((pd_ticks, n))

    vmax, ticks_done, steps_done, terminated, err_step = _policy_kernel(
        *_unpack(phys), q, qd, psi, dpsi, ddpsi,
        np.ascontiguousarray(policy.weights, dtype=float),
        np.ascontiguousarray(policy.bias, dtype=float),
        np.ascontiguousarray(policy.obs_scales, dtype=float),
        np.ascontiguousarray(policy.neutral[:n], dtype=float),
        float(policy.kp_mid), float(policy.kp_span), float(policy.target_scale),
        float(coeffs.k_cmd), float(coeffs.k_smooth), float(coeffs.k_xd), float(coeffs.k_yd),
        float(task.xdot_desired), float(task.ydot_desired), float(task.r_desired),
        float(task.tilt_limit), float(task.height_fraction * policy.nominal_height),
        dt, n_steps, pd_every, pol_every, sched.latency_steps,
        rewards, traj_t, traj_r, traj_rd, traj_th, traj_thd, traj_cur,
    )
    if err_step >= 0:
        raise RuntimeError(f"non-finite state at step {err_step}")
    done_pd = steps_done // pd_every
    traj = Trajectory(
        traj_t[:done_pd], traj_r[:done_pd], traj_rd[:done_pd],
        traj_th[:done_pd], traj_thd[:done_pd], traj_cur[:done_pd],
    )
    return RolloutResult(traj, rewards[:ticks_done].copy(), bool(terminated), int(steps_done), float(vmax))
