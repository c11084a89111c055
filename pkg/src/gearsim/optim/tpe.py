"""Tree-structured Parzen estimator over a unit box.

History is split at a quantile (with a cap on the good-set size, so long
histories keep a concentrated good model) into good and bad sets; each
dimension gets a pair of Gaussian kernel densities (truncated to [0, 1],
bandwidths from adjacent-point spacing, plus a unit-wide exploration kernel
at the box center). Candidates are drawn from the good density and the one
with the best good/bad density ratio wins, dimension by dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["TpeConfig", "TpeSampler", "tpe_suggest"]

_SQRT2 = math.sqrt(2.0)


@dataclass(frozen=True)
class TpeConfig:
    n_startup: int = 20
    gamma: float = 0.25
    n_candidates: int = 24
    bandwidth_floor: float = 1e-3
    prior_weight: bool = True  # blend a unit-wide kernel at the box center
    good_cap: int = 25         # cap on the good-set size once history grows long


def _kde_logpdf(x: np.ndarray, centers: np.ndarray, bw: np.ndarray) -> np.ndarray:
    """Log density of a truncated-Gaussian mixture on [0, 1], uniform weights."""
    z = (x[:, None] - centers[None, :]) / bw[None, :]
    log_norm = np.log(bw[None, :]) + 0.5 * math.log(2.0 * math.pi)
    # mass inside [0, 1] for each kernel
    lo = (0.0 - centers) / bw
    hi = (1.0 - centers) / bw
    from scipy.special import erf

    mass = 0.5 * (erf(hi / _SQRT2) - erf(lo / _SQRT2))
    mass = np.maximum(mass, 1e-12)
    log_k = -0.5 * z * z - log_norm - np.log(mass[None, :])
    m = log_k.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(log_k - m).sum(axis=1, keepdims=True))).ravel() - math.log(
        len(centers)
    )


def _bandwidths(points: np.ndarray, floor: float) -> np.ndarray:
    """Per-kernel bandwidth: the larger gap to the adjacent sorted neighbor.

    Virtual neighbors sit at the box edges so edge kernels stay wide enough,
    and the floor scales with the point count so a tight cluster keeps enough
    spread to move off its current best.
    """
    order = np.argsort(points)
    sorted_pts = points[order]
    padded = np.concatenate([[0.0], sorted_pts, [1.0]])
    left = sorted_pts - padded[:-2]
    right = padded[2:] - sorted_pts
    floor = max(floor, 1.0 / (2.0 * (1.0 + len(points))))
    bw_sorted = np.maximum(np.maximum(left, right), floor)
    bw = np.empty_like(bw_sorted)
    bw[order] = bw_sorted
    return bw


def _with_prior(centers: np.ndarray, bw: np.ndarray, enabled: bool):
    if not enabled:
        return centers, bw
    return np.append(centers, 0.5), np.append(bw, 1.0)


def tpe_suggest(
    history_z: np.ndarray,
    history_vals: np.ndarray,
    rng: np.random.Generator,
    cfg: TpeConfig = TpeConfig(),
) -> np.ndarray:
    """Next normalized candidate given (points, objective values) so far."""
    history_z = np.asarray(history_z, float)
    history_vals = np.asarray(history_vals, float)
    n = len(history_vals)
    if n == 0:
        dim = history_z.shape[1] if history_z.ndim == 2 else 1
        return rng.uniform(size=dim)
    dim = history_z.shape[1]
    if n < cfg.n_startup:
        return rng.uniform(size=dim)

    finite = np.isfinite(history_vals)
    vals = np.where(finite, history_vals, np.inf)
    n_good = max(1, min(int(math.ceil(cfg.gamma * n)), cfg.good_cap))
    order = np.argsort(vals, kind="stable")
    good = history_z[order[:n_good]]
    bad = history_z[order[n_good:]]
    if len(bad) == 0:
        return rng.uniform(size=dim)

    out = np.empty(dim)
    for d in range(dim):
        g_pts, g_bw = _with_prior(good[:, d], _bandwidths(good[:, d], cfg.bandwidth_floor),
                                  cfg.prior_weight)
        b_pts, b_bw = _with_prior(bad[:, d], _bandwidths(bad[:, d], cfg.bandwidth_floor),
                                  cfg.prior_weight)
        picks = rng.integers(0, len(g_pts), cfg.n_candidates)
        cand = g_pts[picks] + g_bw[picks] * rng.standard_normal(cfg.n_candidates)
        cand = np.clip(cand, 0.0, 1.0)
        score = _kde_logpdf(cand, g_pts, g_bw) - _kde_logpdf(cand, b_pts, b_bw)
        out[d] = cand[int(np.argmax(score))]
    return out


class TpeSampler:
    """Stateful wrapper: feed (point, value) pairs, ask for the next point."""

    def __init__(self, dim: int, seed: int, cfg: TpeConfig = TpeConfig()):
        self.dim = dim
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        self._z: list[np.ndarray] = []
        self._v: list[float] = []

    def ask(self) -> np.ndarray:
        hist = np.array(self._z) if self._z else np.empty((0, self.dim))
        return tpe_suggest(hist, np.array(self._v), self.rng, self.cfg)

    def tell(self, z: np.ndarray, value: float) -> None:
        self._z.append(np.asarray(z, float).copy())
        self._v.append(float(value))
