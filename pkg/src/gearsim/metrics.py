"""Distance functions used by identification: trajectory loss and 1-D Wasserstein."""

from __future__ import annotations

import numpy as np

from .rollout import Trajectory

__all__ = ["l_exc", "wasserstein_1d"]


def l_exc(sim: Trajectory, real: Trajectory) -> float:
    """Mean squared mismatch between two logged motions.

    Body orientation and its rate are averaged over time; joint angles,
    velocities and currents are averaged over joints and time. Symmetric and
    zero only for identical logs.
    """
    if sim.n_ticks != real.n_ticks:
        raise ValueError(f"trajectory lengths differ: {sim.n_ticks} vs {real.n_ticks}")
    if sim.n_joints != real.n_joints:
        raise ValueError(f"joint counts differ: {sim.n_joints} vs {real.n_joints}")
    if sim.n_ticks == 0:
        raise ValueError("empty trajectories")
    body = np.mean((sim.r - real.r) ** 2) + np.mean((sim.rdot - real.rdot) ** 2)
    joints = (
        np.mean((sim.theta - real.theta) ** 2)
        + np.mean((sim.thetadot - real.thetadot) ** 2)
        + np.mean((sim.current - real.current) ** 2)
    )
    return float(body + joints)


def wasserstein_1d(a, b) -> float:
    """First Wasserstein distance between two empirical distributions.

    For equal sample counts this is the mean absolute difference of the sorted
    samples; in general it integrates |CDF_a - CDF_b| over the pooled support.
    """
    xa = np.sort(np.asarray(a, float).ravel())
    xb = np.sort(np.asarray(b, float).ravel())
    if xa.size == 0 or xb.size == 0:
        raise ValueError("empty sample set")
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(xb))):
        raise ValueError("non-finite samples")
    if xa.size == xb.size:
        return float(np.abs(xa - xb).mean())
    pooled = np.sort(np.concatenate([xa, xb]))
    deltas = np.diff(pooled)
    cdf_a = np.searchsorted(xa, pooled[:-1], side="right") / xa.size
    cdf_b = np.searchsorted(xb, pooled[:-1], side="right") / xb.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * deltas))
