"""Linear balancing policy, its cross-entropy training loop, and evaluation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .actuator import KP_MAX, KP_MIN
from .task import RewardCoeffs, TaskConfig

__all__ = [
    "PolicyParams",
    "RewardDistribution",
    "policy_act",
    "evaluate_policy",
    "train_policy",
    "transfer_success",
    "CemConfig",
    "zero_policy",
]

OBS_DIM = 10   # [r, rdot, q0, q1, qd0, qd1, prev targets (2), prev gains (2)]
ACT_DIM = 4    # per-joint target offset + per-joint gain
KP_MID = 0.5 * (KP_MIN + KP_MAX)
KP_SPAN = 0.5 * (KP_MAX - KP_MIN)
TARGET_SCALE = 0.6  # [rad] per unit of raw policy output


@dataclass
class PolicyParams:
    """Linear map from the stacked (current, previous) observation to actions.

    Raw outputs are affinely mapped to joint target angles around the neutral
    posture and to proportional gains around mid-range; both are clamped to
    their admissible ranges.
    """

    weights: np.ndarray                     # (ACT_DIM, 2 * OBS_DIM)
    bias: np.ndarray                        # (ACT_DIM,)
    neutral: np.ndarray                     # neutral joint targets [rad]
    nominal_height: float                   # body COM height at neutral [m]
    obs_scales: np.ndarray = field(
        default_factory=lambda: np.array([0.5, 3.0, 1.5, 1.5, 5.0, 5.0, 0.6, 0.6, KP_SPAN, KP_SPAN])
    )
    kp_mid: float = KP_MID
    kp_span: float = KP_SPAN
    target_scale: float = TARGET_SCALE

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.bias])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        nw = self.weights.size
        return PolicyParams(
            weights=vec[:nw].reshape(self.weights.shape).copy(),
            bias=vec[nw:].copy(),
            neutral=self.neutral,
            nominal_height=self.nominal_height,
            obs_scales=self.obs_scales,
            kp_mid=self.kp_mid,
            kp_span=self.kp_span,
            target_scale=self.target_scale,
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "bias": self.bias.tolist(),
                "neutral": self.neutral.tolist(),
                "nominal_height": self.nominal_height,
                "obs_scales": self.obs_scales.tolist(),
                "kp_mid": self.kp_mid,
                "kp_span": self.kp_span,
                "target_scale": self.target_scale,
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "PolicyParams":
        d = json.loads(text)
        return PolicyParams(
            weights=np.array(d["weights"], float),
            bias=np.array(d["bias"], float),
            neutral=np.array(d["neutral"], float),
            nominal_height=float(d["nominal_height"]),
            obs_scales=np.array(d["obs_scales"], float),
            kp_mid=float(d["kp_mid"]),
            kp_span=float(d["kp_span"]),
            target_scale=float(d["target_scale"]),
        )


def zero_policy(neutral: np.ndarray, nominal_height: float) -> PolicyParams:
    """All-zero policy: emits neutral targets with mid-range gains."""
    return PolicyParams(
        weights=np.zeros((ACT_DIM, 2 * OBS_DIM)),
        bias=np.zeros(ACT_DIM),
        neutral=np.asarray(neutral, float).copy(),
        nominal_height=nominal_height,
    )


def normalized_obs(
    policy: PolicyParams,
    r: float,
    rdot: float,
    q: np.ndarray,
    qdot: np.ndarray,
    action_prev: np.ndarray,
) -> np.ndarray:
    n = len(q)
    raw = np.empty(OBS_DIM)
    raw[0] = r
    raw[1] = rdot
    raw[2:4] = q[:2]
    raw[4:6] = qdot[:2]
    raw[6:8] = action_prev[:n] - policy.neutral[:n]
    raw[8:10] = action_prev[n : 2 * n] - policy.kp_mid
    return raw / policy.obs_scales


def action_from_raw(
    policy: PolicyParams, raw: np.ndarray, limit_lo: np.ndarray, limit_hi: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n = len(limit_lo)
    targets = np.clip(policy.neutral[:n] + policy.target_scale * raw[:n], limit_lo, limit_hi)
    kps = np.clip(policy.kp_mid + policy.kp_span * raw[n : 2 * n], KP_MIN, KP_MAX)
    return targets, kps


def policy_act(
    policy: PolicyParams,
    obs_history: list[np.ndarray],
    limit_lo: np.ndarray,
    limit_hi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Commands for the given normalized observation stack (latest first)."""
    if len(obs_history) != 2:
        raise ValueError(f"expected a 2-deep observation stack, got {len(obs_history)}")
    x = np.concatenate(obs_history)
    raw = policy.weights @ x + policy.bias
    return action_from_raw(policy, raw, limit_lo, limit_hi)


@dataclass
class RewardDistribution:
    """Undiscounted episode returns collected over K evaluation episodes."""

    returns: np.ndarray
    seeds: np.ndarray
    episode_duration: float

    def __post_init__(self):
        self.returns = np.asarray(self.returns, float)
        self.seeds = np.asarray(self.seeds, int)
        if self.returns.size < 1:
            raise ValueError("need at least one episode return")
        if not np.all(np.isfinite(self.returns)):
            raise ValueError(f"non-finite returns: {self.returns}")

    @property
    def mean(self) -> float:
        return float(self.returns.mean())

    def to_csv(self, header_comment: str | None = None) -> str:
        lines = []
        if header_comment:
            lines += [f"# {ln}" for ln in header_comment.splitlines()]
        lines.append("seed,episode_return")
        lines += [f"{int(s)},{repr(float(v))}" for s, v in zip(self.seeds, self.returns)]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str, episode_duration: float = 0.0) -> "RewardDistribution":
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")][1:]
        seeds = [int(ln.split(",")[0]) for ln in rows]
        rets = [float(ln.split(",")[1]) for ln in rows]
        return RewardDistribution(np.array(rets), np.array(seeds), episode_duration)


def evaluate_policy(system, policy: PolicyParams, k: int, seeds, jobs: int = 1) -> RewardDistribution:
    """Run K episodes with the given seeds and collect the episode returns.

    `system` provides run_episode(policy, seed) -> (return, terminated);
    early-terminated episodes keep their truncated sums.
    """
    if k < 1:
        raise ValueError("need k >= 1 episodes")
    seeds = np.asarray(list(seeds)[:k], int)
    if len(seeds) != k:
        raise ValueError(f"need {k} seeds, got {len(seeds)}")
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rets = list(ex.map(lambda s: system.run_episode(policy, int(s))[0], seeds))
    else:
        rets = [system.run_episode(policy, int(s))[0] for s in seeds]
    return RewardDistribution(np.array(rets), seeds, system.task.episode_duration)


def transfer_success(expected: RewardDistribution, actual: RewardDistribution) -> bool:
    """Transfer passes when the achieved mean return reaches 80% of the expected one."""
    return actual.mean >= 0.8 * expected.mean


@dataclass(frozen=True)
class CemConfig:
    population: int = 32
    elite_frac: float = 0.25
    init_std: float = 0.4
    min_std: float = 0.02
    episodes_per_eval: int = 2
    std_decay: float = 0.997


def train_policy(
    system,
    budget: int,
    seed: int,
    cem: CemConfig = CemConfig(),
    jobs: int = 1,
) -> tuple[PolicyParams, dict]:
    """Cross-entropy search over the linear policy parameters.

    One evaluation is the mean return over a fixed set of episodes
    (episodes_per_eval), the same set for every candidate and iteration so
    the objective is deterministic. Returns the final distribution mean and
    a history dict with per-iteration statistics.
    """
    base = zero_policy(system.neutral, system.nominal_height)
    dim = base.flat().size
    rng = np.random.default_rng(seed)
    ep_seeds = [int(s) for s in rng.integers(0, 2**31 - 1, cem.episodes_per_eval)]

    def score(vec: np.ndarray) -> float:
        pol = base.with_flat(vec)
        total = 0.0
        for s in ep_seeds:
            total += system.run_episode(pol, s)[0]
        return total / len(ep_seeds)

    mean = base.flat()
    std = np.full(dim, cem.init_std)
    n_elite = max(1, int(round(cem.population * cem.elite_frac)))
    iters = max(0, budget // cem.population)
    history = {"iteration": [], "mean_return": [], "best_return": [], "elite_return": []}

    if iters == 0:
        return base, history

    for it in range(iters):
        samples = mean[None, :] + std[None, :] * rng.standard_normal((cem.population, dim))
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as ex:
                vals = np.array(list(ex.map(score, samples)))
        else:
            vals = np.array([score(s) for s in samples])
        order = np.argsort(-vals)
        elite = samples[order[:n_elite]]
        mean = elite.mean(axis=0)
        std = np.maximum(elite.std(axis=0) * cem.std_decay, cem.min_std)
        history["iteration"].append(it)
        history["mean_return"].append(float(vals.mean()))
        history["best_return"].append(float(vals.max()))
        history["elite_return"].append(float(vals[order[:n_elite]].mean()))

    if not np.isfinite(history["best_return"][-1]):
        raise RuntimeError("policy training failed: non-finite returns")
    return base.with_flat(mean), history
