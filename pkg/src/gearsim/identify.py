"""Two identification phases.

Phase one fits the parameter vector to a recorded excitation motion by
sampling-based search (TPE by default). The re-identification phase searches
the same space with a bi-objective genetic algorithm, trading the excitation
loss against the Wasserstein distance between the episode-reward
distributions of a fixed policy on the candidate simulator and on the real
system.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .excitation import ExcitationMotion
from .metrics import l_exc, wasserstein_1d
from .optim.cmaes import CmaEs
from .optim.nsga2 import Nsga2Config, fast_nondominated_sort, nsga2_evolve
from .optim.tpe import TpeConfig, TpeSampler
from .policy import PolicyParams, RewardDistribution
from .rollout import SchedulerConfig, Trajectory
from .space import ParamSpace
from .system import SimSystem
from .task import RewardCoeffs, TaskConfig

__all__ = [
    "TrialRecord",
    "IdentificationError",
    "ExcitationProblem",
    "identify_first",
    "FrontMember",
    "ParetoFront",
    "ReidProblem",
    "reidentify",
    "select_operating_point",
]

FAILED_OBJECTIVE = 1e30


class IdentificationError(RuntimeError):
    pass


@dataclass
class TrialRecord:
    index: int
    phi: np.ndarray
    objectives: tuple[float, ...]
    seed: int
    wall_time: float
    failed: bool = False

    def to_json(self) -> str:
        return json.dumps(
            {
                "index": self.index,
                "phi": np.asarray(self.phi, float).tolist(),
                "objectives": list(self.objectives),
                "seed": self.seed,
                "wall_time": self.wall_time,
                "failed": self.failed,
            }
        )

    @staticmethod
    def from_json(line: str) -> "TrialRecord":
        d = json.loads(line)
        return TrialRecord(
            index=d["index"],
            phi=np.array(d["phi"], float),
            objectives=tuple(d["objectives"]),
            seed=d["seed"],
            wall_time=d["wall_time"],
            failed=d["failed"],
        )


def records_to_jsonl(records: list[TrialRecord]) -> str:
    return "\n".join(r.to_json() for r in records) + "\n"


@dataclass
class ExcitationProblem:
    """Excitation-matching objective over a parameter space."""

    space: ParamSpace
    motion: ExcitationMotion
    real: Trajectory
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    engine: str = "numba"

    def loss(self, phi: np.ndarray) -> float:
        sys = SimSystem(self.space.make_chain(phi), sched=self.sched, engine=self.engine)
        try:
            sim = sys.excitation_trajectory(self.motion)
            return l_exc(sim, self.real)
        except (RuntimeError, ValueError):
            return FAILED_OBJECTIVE


@dataclass
class IdentifyResult:
    best_phi: np.ndarray
    best_loss: float
    records: list[TrialRecord]


def identify_first(
    problem: ExcitationProblem,
    budget: int,
    seed: int,
    sampler: str = "tpe",
    tpe_cfg: TpeConfig | None = None,
) -> IdentifyResult:
    """Minimize the excitation loss with the chosen sampling strategy."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    space = problem.space
    records: list[TrialRecord] = []
    best_phi = None
    best_loss = np.inf

    def run_trial(idx: int, z: np.ndarray) -> float:
        nonlocal best_phi, best_loss
        phi = space.denormalize(np.clip(z, 0.0, 1.0))
        t0 = time.perf_counter()
        val = problem.loss(phi)
        failed = not np.isfinite(val) or val >= FAILED_OBJECTIVE
        records.append(
            TrialRecord(
                index=idx,
                phi=phi,
                objectives=(val,),
                seed=seed,
                wall_time=time.perf_counter() - t0,
                failed=failed,
            )
        )
        if not failed and val < best_loss:
            best_loss = val
            best_phi = phi
        return val

    if sampler == "tpe":
        cfg = tpe_cfg if tpe_cfg is not None else TpeConfig(n_startup=max(1, budget // 10))
        tpe = TpeSampler(space.dim, seed, cfg)
        for i in range(budget):
            z = tpe.ask()
            v = run_trial(i, z)
            tpe.tell(z, v)
    elif sampler == "cmaes":
        rng = np.random.default_rng(seed)
        es = CmaEs(x0=np.full(space.dim, 0.5), sigma0=0.3)
        i = 0
        while i < budget:
            xs = es.ask(rng)
            vals = []
            for z in xs:
                if i >= budget:
                    break
                vals.append(run_trial(i, z))
                i += 1
            if len(vals) == len(xs):
                es.tell(xs, np.array(vals))
    elif sampler == "random":
        rng = np.random.default_rng(seed)
        for i in range(budget):
            run_trial(i, rng.uniform(size=space.dim))
    else:
        raise ValueError(f"unknown sampler: {sampler!r}")

    if best_phi is None:
        raise IdentificationError("all trials failed (non-finite loss)")
    return IdentifyResult(best_phi=best_phi, best_loss=float(best_loss), records=records)


@dataclass
class FrontMember:
    phi: np.ndarray
    l_exc: float
    w: float


@dataclass
class ParetoFront:
    members: list[FrontMember]

    def __post_init__(self):
        if not self.members:
            raise ValueError("empty front")
        objs = self.objectives()
        ranks = fast_nondominated_sort(objs)
        if np.any(ranks != 0):
            raise ValueError("front contains dominated members")

    def objectives(self) -> np.ndarray:
        return np.array([[m.l_exc, m.w] for m in self.members])

    def to_csv(self, header_comment: str | None = None) -> str:
        d = len(self.members[0].phi)
        lines = []
        if header_comment:
            lines += [f"# {ln}" for ln in header_comment.splitlines()]
        lines.append("l_exc,w," + ",".join(f"param_{i}" for i in range(d)))
        for m in self.members:
            lines.append(
                ",".join([repr(float(m.l_exc)), repr(float(m.w))] + [repr(float(v)) for v in m.phi])
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_csv(text: str) -> "ParetoFront":
        rows = [ln for ln in text.splitlines() if ln and not ln.startswith("#")][1:]
        members = []
        for ln in rows:
            vals = [float(v) for v in ln.split(",")]
            members.append(FrontMember(phi=np.array(vals[2:]), l_exc=vals[0], w=vals[1]))
        return ParetoFront(members)


@dataclass
class ReidProblem:
    """Bi-objective re-identification: excitation loss and reward-distribution gap.

    Episode seeds are fixed for the whole run so the Wasserstein objective
    reflects parameter changes rather than disturbance draws; they are the
    seeds the frozen real-system distribution was collected with.
    """

    space: ParamSpace
    motion: ExcitationMotion
    real_excitation: Trajectory
    policy: PolicyParams
    r_real: RewardDistribution
    task: TaskConfig
    coeffs: RewardCoeffs = field(default_factory=RewardCoeffs.evaluation)
    sched: SchedulerConfig = field(default_factory=SchedulerConfig)
    engine: str = "numba"

    def evaluate(self, phi: np.ndarray) -> tuple[float, float]:
        sys = SimSystem(
            self.space.make_chain(phi),
            task=self.task,
            coeffs=self.coeffs,
            sched=self.sched,
            engine=self.engine,
        )
        try:
            sim_traj = sys.excitation_trajectory(self.motion)
            loss = l_exc(sim_traj, self.real_excitation)
            rets = np.array(
                [sys.run_episode(self.policy, int(s))[0] for s in self.r_real.seeds]
            )
            w = wasserstein_1d(rets, self.r_real.returns)
        except (RuntimeError, ValueError):
            return FAILED_OBJECTIVE, FAILED_OBJECTIVE
        if not (np.isfinite(loss) and np.isfinite(w)):
            return FAILED_OBJECTIVE, FAILED_OBJECTIVE
        return float(loss), float(w)


@dataclass
class ReidResult:
    front: ParetoFront
    records: list[TrialRecord]


def reidentify(
    problem: ReidProblem,
    budget: int,
    seed: int,
    population: int = 50,
    jobs: int = 1,
    nsga_cfg: Nsga2Config = Nsga2Config(),
) -> ReidResult:
    """Evolve candidates against (excitation loss, reward-distribution gap).

    Runs the initial population plus as many full generations as the budget
    allows and returns the non-dominated set of everything evaluated.
    """
    space = problem.space
    if budget < population:
        raise ValueError(f"budget {budget} smaller than population {population}")
    rng = np.random.default_rng(seed)
    records: list[TrialRecord] = []
    counter = [0]

    def eval_one(z: np.ndarray) -> tuple[float, float]:
        phi = space.denormalize(np.clip(z, 0.0, 1.0))
        t0 = time.perf_counter()
        loss, w = problem.evaluate(phi)
        failed = loss >= FAILED_OBJECTIVE or w >= FAILED_OBJECTIVE
        records.append(
            TrialRecord(
                index=counter[0],
                phi=phi,
                objectives=(loss, w),
                seed=seed,
                wall_time=time.perf_counter() - t0,
                failed=failed,
            )
        )
        counter[0] += 1
        return loss, w

    def eval_batch(zs: np.ndarray) -> np.ndarray:
        if jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=jobs) as ex:
                phis = [space.denormalize(np.clip(z, 0.0, 1.0)) for z in zs]
                results = list(ex.map(problem.evaluate, phis))
            out = np.empty((len(zs), 2))
            for i, (loss, w) in enumerate(results):
                failed = loss >= FAILED_OBJECTIVE or w >= FAILED_OBJECTIVE
                records.append(
                    TrialRecord(
                        index=counter[0], phi=phis[i], objectives=(loss, w),
                        seed=seed, wall_time=0.0, failed=failed,
                    )
                )
                counter[0] += 1
                out[i] = (loss, w)
            return out
        return np.array([eval_one(z) for z in zs])

    pop = rng.uniform(size=(population, space.dim))
    objs = eval_batch(pop)
    n_gens = max(0, (budget - population) // population)
    archive_z = [pop.copy()]
    archive_f = [objs.copy()]
    for _ in range(n_gens):
        pop, objs = nsga2_evolve(pop, objs, eval_batch, rng, nsga_cfg)
        archive_z.append(pop.copy())
        archive_f.append(objs.copy())

    all_z = np.vstack(archive_z)
    all_f = np.vstack(archive_f)
    ok = np.all(all_f < FAILED_OBJECTIVE, axis=1)
    if not ok.any():
        raise IdentificationError("all re-identification trials failed")
    all_z, all_f = all_z[ok], all_f[ok]
    ranks = fast_nondominated_sort(all_f)
    front_idx = np.where(ranks == 0)[0]
    # drop duplicate objective pairs so the front stays readable
    seen: set[tuple[float, float]] = set()
    members = []
    for i in front_idx:
        key = (float(all_f[i, 0]), float(all_f[i, 1]))
        if key in seen:
            continue
        seen.add(key)
        members.append(
            FrontMember(
                phi=space.denormalize(np.clip(all_z[i], 0.0, 1.0)),
                l_exc=float(all_f[i, 0]),
                w=float(all_f[i, 1]),
            )
        )
    return ReidResult(front=ParetoFront(members), records=records)


def select_operating_point(front: ParetoFront, l_exc_ref: float) -> FrontMember:
    """Pick the member with the smallest reward gap among those whose
    excitation loss stays within twice the reference; fall back to the
    lowest-loss member when none qualifies."""
    qualified = [m for m in front.members if m.l_exc <= 2.0 * l_exc_ref]
    if qualified:
        return min(qualified, key=lambda m: m.w)
    return min(front.members, key=lambda m: m.l_exc)
