"""Covariance matrix adaptation evolution strategy on a unit box.

Standard (mu/mu_w, lambda) update: rank-based recombination weights,
cumulation paths for step size and covariance, rank-one plus rank-mu
covariance update. Out-of-bounds samples are redrawn a bounded number of
times, then clamped.
"""

from __future__ import annotations

import logging
import math

import numpy as np

__all__ = ["CmaEs", "cmaes_suggest"]

log = logging.getLogger(__name__)

_MAX_RESAMPLE = 100


class CmaEs:
    def __init__(
        self,
        x0: np.ndarray,
        sigma0: float = 0.3,
        lam: int | None = None,
    ):
        x0 = np.asarray(x0, float)
        self.dim = len(x0)
        if lam is None:
            lam = 4 + int(3 * math.log(self.dim))
        if lam < 2:
            raise ValueError(f"population size must be >= 2, got {lam}")
        self.lam = lam
        self.mu = lam // 2
        w = np.log(lam / 2.0 + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mu_eff = 1.0 / np.sum(self.weights**2)

        n = self.dim
        self.c_sigma = (self.mu_eff + 2.0) / (n + self.mu_eff + 5.0)
        self.d_sigma = (
            1.0 + 2.0 * max(0.0, math.sqrt((self.mu_eff - 1.0) / (n + 1.0)) - 1.0) + self.c_sigma
        )
        self.c_c = (4.0 + self.mu_eff / n) / (n + 4.0 + 2.0 * self.mu_eff / n)
        self.c_1 = 2.0 / ((n + 1.3) ** 2 + self.mu_eff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mu_eff - 2.0 + 1.0 / self.mu_eff) / ((n + 2.0) ** 2 + self.mu_eff),
        )
        self.chi_n = math.sqrt(n) * (1.0 - 1.0 / (4.0 * n) + 1.0 / (21.0 * n * n))

        self.mean = x0.copy()
        self.sigma = float(sigma0)
        self.C = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.generation = 0
        self.resets = 0
        self._decompose()

    def _decompose(self) -> None:
        self.C = 0.5 * (self.C + self.C.T)
        vals, vecs = np.linalg.eigh(self.C)
        if (
            not np.all(np.isfinite(vals))
            or vals.min() <= 0.0
            or vals.max() / max(vals.min(), 1e-300) > 1e14
        ):
            log.warning("covariance degenerate (eigenvalues %s); resetting to identity", vals)
            self.C = np.eye(self.dim)
            vals = np.ones(self.dim)
            vecs = np.eye(self.dim)
            self.p_sigma[:] = 0.0
            self.p_c[:] = 0.0
            self.resets += 1
        self._eigvals = vals
        self._eigvecs = vecs
        self._sqrt_c = vecs @ np.diag(np.sqrt(vals)) @ vecs.T
        self._inv_sqrt_c = vecs @ np.diag(1.0 / np.sqrt(vals)) @ vecs.T

    def ask(self, rng: np.random.Generator) -> np.ndarray:
        """Sample lambda candidates inside [0, 1]^dim."""
        out = np.empty((self.lam, self.dim))
        for i in range(self.lam):
            x = None
            for _ in range(_MAX_RESAMPLE):
                cand = self.mean + self.sigma * (self._sqrt_c @ rng.standard_normal(self.dim))
                if np.all(cand >= 0.0) and np.all(cand <= 1.0):
                    x = cand
                    break
            if x is None:
                cand = self.mean + self.sigma * (self._sqrt_c @ rng.standard_normal(self.dim))
                x = np.clip(cand, 0.0, 1.0)
            out[i] = x
        return out

    def tell(self, xs: np.ndarray, values: np.ndarray) -> None:
        xs = np.asarray(xs, float)
        values = np.asarray(values, float)
        order = np.argsort(values, kind="stable")
        elite = xs[order[: self.mu]]
        old_mean = self.mean.copy()
        self.mean = self.weights @ elite

        y = (self.mean - old_mean) / self.sigma
        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + math.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff
        ) * (self._inv_sqrt_c @ y)
        self.generation += 1
        ps_norm = float(np.linalg.norm(self.p_sigma))
        denom = math.sqrt(
            1.0 - (1.0 - self.c_sigma) ** (2.0 * self.generation)
        )
        h_sigma = 1.0 if ps_norm / denom < (1.4 + 2.0 / (self.dim + 1.0)) * self.chi_n else 0.0
        self.p_c = (1.0 - self.c_c) * self.p_c + h_sigma * math.sqrt(
            self.c_c * (2.0 - self.c_c) * self.mu_eff
        ) * y

        ys = (elite - old_mean) / self.sigma
        rank_mu = sum(w * np.outer(yi, yi) for w, yi in zip(self.weights, ys))
        delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c)
        self.C = (
            (1.0 - self.c_1 - self.c_mu) * self.C
            + self.c_1 * (np.outer(self.p_c, self.p_c) + delta_h * self.C)
            + self.c_mu * rank_mu
        )
        self.sigma *= math.exp((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0))
        self.sigma = min(self.sigma, 1e3)
        self._decompose()


def cmaes_suggest(state: CmaEs, rng: np.random.Generator) -> np.ndarray:
    """One generation worth of candidates from the current search state."""
    return state.ask(rng)
