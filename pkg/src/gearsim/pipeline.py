"""Three-phase transfer pipeline against the hidden ground truth.

Phase 1 collects excitation data from the hidden system and fits parameters
to it. Phase 2 trains a policy on the fitted simulator and evaluates it on
the hidden system. Phase 3 re-identifies from the failed episodes' reward
distribution, retrains, and re-evaluates.

For the in-family mode, phase 1 searches under a conservative catalog prior
(the backward-efficiency and Coulomb ranges are narrowed to the bands quoted
for this actuator class); phase 3 searches the full ranges. For the
out-of-family mode, both phases fit the lossless-gear model class against a
direction-dependent ground truth.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .excitation import ExcitationConfig, excitation_motion
from .groundtruth import GT_MODES, HiddenGroundTruth
from .identify import (
    ExcitationProblem,
    ReidProblem,
    identify_first,
    records_to_jsonl,
    reidentify,
    select_operating_point,
)
from .policy import CemConfig, evaluate_policy, train_policy, transfer_success
from .rollout import SchedulerConfig
from .space import default_space
from .system import SimSystem
from .task import RewardCoeffs, TaskConfig

__all__ = ["RunConfig", "run_pipeline", "subseed", "config_hash"]

# Catalog prior used by the first identification in in-family runs:
# conservative ranges for backward efficiency and Coulomb friction, the bands
# the manufacturer quotes for this actuator class.
PHASE1_PRIOR_BOUNDS = {"eta_bw": (0.60, 0.72), "f_c": (0.12, 0.25)}

_STREAM_HIDDEN = 97
_STREAM_IDENTIFY = 11
_STREAM_TRAIN1 = 23
_STREAM_EVAL = 31
_STREAM_REID = 41
_STREAM_TRAIN2 = 53


def subseed(master_seed: int, stream: int) -> int:
    return int(np.random.SeedSequence((master_seed, stream)).generate_state(1)[0])


@dataclass
class RunConfig:
    gt_mode: str = "in-family"
    master_seed: int = 1
    hidden_seed: int | None = None
    budget_first: int = 2000
    budget_re: int = 3000
    train_budget: int = 3200
    k_episodes: int = 10
    jobs: int = 2
    out_dir: str = "runs/run"
    engine: str = "numba"
    phase1_catalog_prior: bool = True
    reid_population: int = 50
    excitation_duration: float = 5.0
    episode_duration: float = 6.4
    sampler: str = "tpe"

    def __post_init__(self):
        if self.gt_mode not in GT_MODES:
            raise ValueError(f"gt_mode must be one of {GT_MODES}, got {self.gt_mode!r}")
        if self.budget_first < 1 or self.budget_re < 1:
            raise ValueError("budgets must be >= 1")
        if self.k_episodes < 1:
            raise ValueError("k_episodes must be >= 1")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @staticmethod
    def from_json(text: str) -> "RunConfig":
        d = json.loads(text)
        unknown = set(d) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**d)

    def resolved_hidden_seed(self) -> int:
        return self.hidden_seed if self.hidden_seed is not None else subseed(
            self.master_seed, _STREAM_HIDDEN
        )


def config_hash(cfg: RunConfig) -> str:
    """Hash of the experiment-defining fields (not where or how wide it runs)."""
    doc = asdict(cfg)
    doc.pop("out_dir")
    doc.pop("jobs")
    blob = json.dumps(doc, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class _Ctx:
    cfg: RunConfig
    out: Path
    stamp: str  # "config_hash=... master_seed=..." embedded into every file

    def write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)

    def write_json(self, name: str, doc: dict) -> None:
        doc = {"config_hash": self.stamp.split()[0].split("=")[1],
               "master_seed": self.cfg.master_seed, **doc}
        self.write(name, json.dumps(doc, indent=2, sort_keys=True) + "\n")

    def write_jsonl(self, name: str, records) -> None:
        meta = json.dumps(
            {"config_hash": self.stamp.split()[0].split("=")[1],
             "master_seed": self.cfg.master_seed}
        )
        self.write(name, meta + "\n" + records_to_jsonl(records))


def run_pipeline(cfg: RunConfig, progress=None) -> dict:
    """Execute phases 1-3 end to end; returns the report dict."""
    t_start = time.perf_counter()
    say = progress if progress is not None else (lambda msg: None)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    stamp = f"config_hash={chash} master_seed={cfg.master_seed}"
    ctx = _Ctx(cfg, out, stamp)
    ctx.write_json("config.json", {"config": asdict(cfg)})

    task = TaskConfig(episode_duration=cfg.episode_duration)
    coeffs = RewardCoeffs.evaluation()
    sched = SchedulerConfig()
    full_space = default_space()
    motion = excitation_motion(ExcitationConfig(duration=cfg.excitation_duration))
    timings: dict[str, float] = {}

    truth = HiddenGroundTruth(
        mode=cfg.gt_mode,
        hidden_seed=cfg.resolved_hidden_seed(),
        task=task,
        coeffs=coeffs,
        sched=sched,
        engine=cfg.engine,
    )
    ctx.write("chain_model.json", full_space.make_chain(full_space.sample(
        np.random.default_rng(0))).to_json())

    # ---- phase 1: excitation data + first identification -------------------
    say("phase 1: collecting excitation data")
    t0 = time.perf_counter()
    real_exc = truth.excitation_trajectory(motion)
    ctx.write("real_excitation.csv", real_exc.to_csv(stamp))

    if cfg.gt_mode == "out-of-family-dte":
        fit_space = full_space.without_dte()
        reid_space = full_space.without_dte()
    elif cfg.phase1_catalog_prior:
        fit_space = full_space.with_bounds(**PHASE1_PRIOR_BOUNDS)
        reid_space = full_space
    else:
        fit_space = full_space
        reid_space = full_space
    ctx.write("space_phase1.json", fit_space.to_json())
    ctx.write("space.json", full_space.to_json())

    say(f"phase 1: identifying ({cfg.budget_first} trials)")
    problem1 = ExcitationProblem(fit_space, motion, real_exc, sched, cfg.engine)
    ident = identify_first(
        problem1, cfg.budget_first, subseed(cfg.master_seed, _STREAM_IDENTIFY), cfg.sampler
    )
    phi1, l_exc_ref = ident.best_phi, ident.best_loss
    ctx.write_jsonl("phase1_trials.jsonl", ident.records)
    ctx.write("phi1.json", fit_space.params_to_json(phi1))
    sys1 = SimSystem(fit_space.make_chain(phi1), task, coeffs, sched, cfg.engine)
    ctx.write("sim_excitation_phi1.csv", sys1.excitation_trajectory(motion).to_csv(stamp))
    timings["phase1_s"] = time.perf_counter() - t0

    # ---- phase 2: train on the fitted simulator, evaluate on the truth -----
    say(f"phase 2: training policy ({cfg.train_budget} evaluations)")
    t0 = time.perf_counter()
    pol1, hist1 = train_policy(
        sys1, cfg.train_budget, subseed(cfg.master_seed, _STREAM_TRAIN1), CemConfig(),
        jobs=cfg.jobs,
    )
    ctx.write("policy1.json", pol1.to_json())
    ctx.write("train1_curve.csv", _curve_csv(hist1, stamp))

    eval_rng = np.random.default_rng(subseed(cfg.master_seed, _STREAM_EVAL))
    eval_seeds = [int(s) for s in eval_rng.integers(0, 2**31 - 1, cfg.k_episodes)]
    expected1 = evaluate_policy(sys1, pol1, cfg.k_episodes, eval_seeds, jobs=cfg.jobs)
    actual1 = evaluate_policy(truth, pol1, cfg.k_episodes, eval_seeds, jobs=cfg.jobs)
    ctx.write("rewards_expected1.csv", expected1.to_csv(stamp))
    ctx.write("rewards_actual1.csv", actual1.to_csv(stamp))
    phase2_ok = transfer_success(expected1, actual1)
    timings["phase2_s"] = time.perf_counter() - t0
    say(
        f"phase 2: expected {expected1.mean:.1f}, on truth {actual1.mean:.1f} "
        f"-> transfer {'PASS' if phase2_ok else 'FAIL'}"
    )

    # ---- phase 3: re-identify from the failed episodes, retrain ------------
    say(f"phase 3: re-identifying ({cfg.budget_re} evaluations)")
    t0 = time.perf_counter()
    problem_re = ReidProblem(
        space=reid_space,
        motion=motion,
        real_excitation=real_exc,
        policy=pol1,
        r_real=actual1,
        task=task,
        coeffs=coeffs,
        sched=sched,
        engine=cfg.engine,
    )
    reid = reidentify(
        problem_re, cfg.budget_re, subseed(cfg.master_seed, _STREAM_REID),
        population=cfg.reid_population, jobs=cfg.jobs,
    )
    ctx.write_jsonl("reid_trials.jsonl", reid.records)
    ctx.write("pareto.csv", reid.front.to_csv(stamp))
    # the reference loss must be comparable: re-evaluate phi1 under the reid space
    chosen = select_operating_point(reid.front, l_exc_ref)
    phi2 = chosen.phi
    ctx.write("phi2.json", reid_space.params_to_json(phi2))
    sys2 = SimSystem(reid_space.make_chain(phi2), task, coeffs, sched, cfg.engine)
    ctx.write("sim_excitation_phi2.csv", sys2.excitation_trajectory(motion).to_csv(stamp))

    say("phase 3: retraining policy")
    pol2, hist2 = train_policy(
        sys2, cfg.train_budget, subseed(cfg.master_seed, _STREAM_TRAIN2), CemConfig(),
        jobs=cfg.jobs,
    )
    ctx.write("policy2.json", pol2.to_json())
    ctx.write("train2_curve.csv", _curve_csv(hist2, stamp))
    expected2 = evaluate_policy(sys2, pol2, cfg.k_episodes, eval_seeds, jobs=cfg.jobs)
    actual2 = evaluate_policy(truth, pol2, cfg.k_episodes, eval_seeds, jobs=cfg.jobs)
    ctx.write("rewards_expected2.csv", expected2.to_csv(stamp))
    ctx.write("rewards_actual2.csv", actual2.to_csv(stamp))
    phase3_ok = transfer_success(expected2, actual2)
    timings["phase3_s"] = time.perf_counter() - t0
    say(
        f"phase 3: expected {expected2.mean:.1f}, on truth {actual2.mean:.1f} "
        f"-> transfer {'PASS' if phase3_ok else 'FAIL'}"
    )

    report = {
        "gt_mode": cfg.gt_mode,
        "eval_seeds": eval_seeds,
        "phase1": {
            "budget": cfg.budget_first,
            "l_exc_ref": l_exc_ref,
            "phi1": fit_space.as_dict(phi1),
            "catalog_prior": sorted(PHASE1_PRIOR_BOUNDS)
            if (cfg.gt_mode == "in-family" and cfg.phase1_catalog_prior)
            else [],
        },
        "phase2": {
            "expected_mean": expected1.mean,
            "actual_mean": actual1.mean,
            "actual_over_expected": actual1.mean / expected1.mean,
            "transfer_success": bool(phase2_ok),
            "expected_returns": expected1.returns.tolist(),
            "actual_returns": actual1.returns.tolist(),
        },
        "phase3": {
            "front_size": len(reid.front.members),
            "l_exc": chosen.l_exc,
            "w": chosen.w,
            "phi2": reid_space.as_dict(phi2),
            "expected_mean": expected2.mean,
            "actual_mean": actual2.mean,
            "actual_over_expected": actual2.mean / expected2.mean,
            "transfer_success": bool(phase3_ok),
            "expected_returns": expected2.returns.tolist(),
            "actual_returns": actual2.returns.tolist(),
        },
    }
    ctx.write_json("report.json", report)
    timings["total_s"] = time.perf_counter() - t_start
    ctx.write("timings.json", json.dumps(timings, indent=2) + "\n")
    return report


def _curve_csv(history: dict, stamp: str) -> str:
    lines = [f"# {stamp}", "iteration,mean_return,elite_return,best_return"]
    for i, m, e, b in zip(
        history["iteration"], history["mean_return"],
        history["elite_return"], history["best_return"],
    ):
        lines.append(f"{i},{repr(m)},{repr(e)},{repr(b)}")
    return "\n".join(lines) + "\n"
