"""Command-line front end for the identification and transfer pipeline.

Exit codes: 0 success, 1 phase failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .excitation import ExcitationConfig, excitation_motion
from .groundtruth import HiddenGroundTruth
from .identify import ExcitationProblem, ReidProblem, identify_first, reidentify, select_operating_point
from .pipeline import RunConfig, config_hash, run_pipeline, subseed
from .policy import CemConfig, PolicyParams, RewardDistribution, evaluate_policy, train_policy, transfer_success
from .reporting import write_report_files
from .rollout import SchedulerConfig, Trajectory
from .space import ParamSpace, default_space
from .system import SimSystem
from .task import TaskConfig

EXIT_OK = 0
EXIT_PHASE = 1
EXIT_CONFIG = 2


def _load_config(args) -> RunConfig:
    if args.config:
        try:
            cfg = RunConfig.from_json(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as e:
            raise SystemExit2(f"bad config file {args.config!r}: {e}")
    else:
        cfg = RunConfig()
    overrides = {
        "budget_first": args.budget_first,
        "budget_re": args.budget_re,
        "master_seed": args.seed,
        "jobs": args.jobs,
        "gt_mode": args.gt_mode,
        "out_dir": args.out,
        "hidden_seed": args.hidden_seed,
        "train_budget": args.train_budget,
    }
    fields = {k: v for k, v in overrides.items() if v is not None}
    if fields:
        try:
            cfg = RunConfig(**{**asdict(cfg), **fields})
        except ValueError as e:
            raise SystemExit2(str(e))
    return cfg


class SystemExit2(Exception):
    pass


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--budget-first", dest="budget_first", type=int)
    p.add_argument("--budget-re", dest="budget_re", type=int)
    p.add_argument("--train-budget", dest="train_budget", type=int)
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--hidden-seed", dest="hidden_seed", type=int)
    p.add_argument("--jobs", type=int)
    p.add_argument("--gt-mode", dest="gt_mode", choices=["in-family", "out-of-family-dte"])
    p.add_argument("--out", help="output directory")


def _truth_from(cfg: RunConfig) -> HiddenGroundTruth:
    return HiddenGroundTruth(
        mode=cfg.gt_mode,
        hidden_seed=cfg.resolved_hidden_seed(),
        task=TaskConfig(episode_duration=cfg.episode_duration),
        engine=cfg.engine,
    )


def _stamp(cfg: RunConfig) -> str:
    return f"config_hash={config_hash(cfg)} master_seed={cfg.master_seed}"


def cmd_gen_real(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth = _truth_from(cfg)
    motion = excitation_motion(ExcitationConfig(duration=cfg.excitation_duration))
    traj = truth.excitation_trajectory(motion)
    (out / "real_excitation.csv").write_text(traj.to_csv(_stamp(cfg)))
    print(f"wrote {out / 'real_excitation.csv'} ({traj.n_ticks} ticks)")
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    real = Trajectory.from_csv((out / "real_excitation.csv").read_text())
    space = default_space() if not args.no_dte else default_space().without_dte()
    motion = excitation_motion(ExcitationConfig(duration=cfg.excitation_duration))
    problem = ExcitationProblem(space, motion, real, SchedulerConfig(), cfg.engine)
    res = identify_first(problem, cfg.budget_first, subseed(cfg.master_seed, 11), cfg.sampler)
    (out / "phi1.json").write_text(space.params_to_json(res.best_phi))
    print(f"best excitation loss {res.best_loss:.6f} after {cfg.budget_first} trials")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    space = default_space()
    phi = ParamSpace.params_from_json((out / args.phi).read_text())
    sys_ = SimSystem(
        space.make_chain(phi), TaskConfig(episode_duration=cfg.episode_duration),
        engine=cfg.engine,
    )
    pol, hist = train_policy(sys_, cfg.train_budget, subseed(cfg.master_seed, 23), CemConfig(), jobs=cfg.jobs)
    (out / args.policy).write_text(pol.to_json())
    best = hist["best_return"][-1] if hist["best_return"] else float("nan")
    print(f"trained policy; final best return {best:.1f}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    pol = PolicyParams.from_json((out / args.policy).read_text())
    rng = np.random.default_rng(subseed(cfg.master_seed, 31))
    seeds = [int(s) for s in rng.integers(0, 2**31 - 1, cfg.k_episodes)]
    if args.on == "real":
        system = _truth_from(cfg)
    else:
        space = default_space()
        phi = ParamSpace.params_from_json((out / args.phi).read_text())
        system = SimSystem(
            space.make_chain(phi), TaskConfig(episode_duration=cfg.episode_duration),
            engine=cfg.engine,
        )
    dist = evaluate_policy(system, pol, cfg.k_episodes, seeds, jobs=cfg.jobs)
    (out / args.rewards).write_text(dist.to_csv(_stamp(cfg)))
    print(f"mean return on {args.on}: {dist.mean:.2f} over {cfg.k_episodes} episodes")
    if args.expected:
        expected = RewardDistribution.from_csv((out / args.expected).read_text())
        ok = transfer_success(expected, dist)
        print(f"transfer {'PASS' if ok else 'FAIL'} ({dist.mean:.1f} vs 0.8 * {expected.mean:.1f})")
    return EXIT_OK


def cmd_reidentify(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    real = Trajectory.from_csv((out / "real_excitation.csv").read_text())
    pol = PolicyParams.from_json((out / args.policy).read_text())
    r_real = RewardDistribution.from_csv((out / args.rewards).read_text())
    space = default_space() if not args.no_dte else default_space().without_dte()
    motion = excitation_motion(ExcitationConfig(duration=cfg.excitation_duration))
    problem = ReidProblem(
        space=space, motion=motion, real_excitation=real, policy=pol, r_real=r_real,
        task=TaskConfig(episode_duration=cfg.episode_duration), engine=cfg.engine,
    )
    res = reidentify(problem, cfg.budget_re, subseed(cfg.master_seed, 41),
                     population=cfg.reid_population, jobs=cfg.jobs)
    (out / "pareto.csv").write_text(res.front.to_csv(_stamp(cfg)))
    ref = float(args.l_exc_ref) if args.l_exc_ref is not None else min(
        m.l_exc for m in res.front.members
    )
    chosen = select_operating_point(res.front, ref)
    (out / "phi2.json").write_text(space.params_to_json(chosen.phi))
    print(f"front size {len(res.front.members)}; selected l_exc={chosen.l_exc:.4f} w={chosen.w:.3f}")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    report = run_pipeline(cfg, progress=lambda msg: print(msg, flush=True))
    print(json.dumps({
        "phase2_transfer": report["phase2"]["transfer_success"],
        "phase3_transfer": report["phase3"]["transfer_success"],
    }))
    return EXIT_OK


def cmd_report(args) -> int:
    run_dirs = args.run_dirs
    manifest = write_report_files(run_dirs, args.report_out)
    for w in manifest["written"]:
        print(f"wrote {Path(args.report_out) / w}")
    for m in manifest["missing"]:
        print(f"missing: {m}")
    if args.reveal:
        for rd in run_dirs:
            cfg = RunConfig.from_json(
                json.dumps(json.loads((Path(rd) / "config.json").read_text())["config"])
            )
            truth = _truth_from(cfg)
            audit = truth.reveal(audit=True)
            audit_path = Path(args.report_out) / f"ground_truth_audit_{Path(rd).name}.json"
            audit_path.write_text(json.dumps(audit, indent=2, sort_keys=True) + "\n")
            print(f"wrote {audit_path} (hidden parameters revealed for audit)")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gearsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-real", help="collect excitation data from the hidden system")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_real)

    p = sub.add_parser("identify", help="first identification from excitation data")
    _add_common(p)
    p.add_argument("--no-dte", action="store_true", help="fit the lossless-gear model class")
    p.set_defaults(fn=cmd_identify)

    p = sub.add_parser("train", help="train a policy on an identified simulator")
    _add_common(p)
    p.add_argument("--phi", default="phi1.json")
    p.add_argument("--policy", default="policy1.json")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a policy on sim or the hidden system")
    _add_common(p)
    p.add_argument("--policy", default="policy1.json")
    p.add_argument("--phi", default="phi1.json")
    p.add_argument("--on", choices=["sim", "real"], default="sim")
    p.add_argument("--rewards", default="rewards.csv")
    p.add_argument("--expected", help="expected rewards CSV for a transfer verdict")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("reidentify", help="re-identify from failed-transfer rewards")
    _add_common(p)
    p.add_argument("--policy", default="policy1.json")
    p.add_argument("--rewards", default="rewards_actual1.csv")
    p.add_argument("--l-exc-ref", dest="l_exc_ref", type=float)
    p.add_argument("--no-dte", action="store_true")
    p.set_defaults(fn=cmd_reidentify)

    p = sub.add_parser("pipeline", help="run phases 1-3 end to end")
    _add_common(p)
    p.set_defaults(fn=cmd_pipeline)

    p = sub.add_parser("report", help="emit plot-data files for completed runs")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--report-out", default="report")
    p.add_argument("--reveal", action="store_true",
                   help="audit step: also write the hidden ground-truth parameters")
    p.set_defaults(fn=cmd_report)

    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_CONFIG if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except SystemExit2 as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as e:
        print(f"phase failure: {e}", file=sys.stderr)
        return EXIT_PHASE


if __name__ == "__main__":
    sys.exit(main())
