"""Plot-data exports for completed runs: overlays, reward histograms, parameter tables."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .policy import RewardDistribution
from .rollout import Trajectory
from .space import default_space

__all__ = ["write_report_files"]


def _stamp_of(run_dir: Path) -> str:
    doc = json.loads((run_dir / "config.json").read_text())
    return f"config_hash={doc['config_hash']} master_seed={doc['master_seed']}"


def _excitation_overlay(run_dir: Path) -> str | None:
    names = {
        "real": "real_excitation.csv",
        "phi1": "sim_excitation_phi1.csv",
        "phi2": "sim_excitation_phi2.csv",
    }
    trajs = {}
    for label, fname in names.items():
        f = run_dir / fname
        if f.exists():
            trajs[label] = Trajectory.from_csv(f.read_text())
    if "real" not in trajs:
        return None
    base = trajs["real"]
    cols = ["t"]
    series: list[np.ndarray] = [base.t]
    for label, tr in trajs.items():
        cols += [f"{label}_r", f"{label}_rdot"]
        series += [tr.r, tr.rdot]
        for j in range(tr.n_joints):
            cols += [f"{label}_theta_{j}", f"{label}_thetadot_{j}", f"{label}_current_{j}"]
            series += [tr.theta[:, j], tr.thetadot[:, j], tr.current[:, j]]
    lines = [f"# {_stamp_of(run_dir)}", ",".join(cols)]
    for k in range(base.n_ticks):
        lines.append(",".join(repr(float(s[k])) for s in series))
    return "\n".join(lines) + "\n"


def _reward_table(run_dir: Path) -> str | None:
    phases = {
        "phase2_expected": "rewards_expected1.csv",
        "phase2_actual": "rewards_actual1.csv",
        "phase3_expected": "rewards_expected2.csv",
        "phase3_actual": "rewards_actual2.csv",
    }
    rows = []
    for label, fname in phases.items():
        f = run_dir / fname
        if not f.exists():
            continue
        dist = RewardDistribution.from_csv(f.read_text())
        for s, v in zip(dist.seeds, dist.returns):
            rows.append(f"{label},{int(s)},{repr(float(v))}")
    if not rows:
        return None
    return "\n".join([f"# {_stamp_of(run_dir)}", "phase,seed,episode_return"] + rows) + "\n"


def _param_table(run_dirs: list[Path]) -> str:
    space = default_space()
    by_phase: dict[str, dict[str, list[float]]] = {"phi1": {}, "phi2": {}}
    for rd in run_dirs:
        for phase in ("phi1", "phi2"):
            f = rd / f"{phase}.json"
            if not f.exists():
                continue
            named = json.loads(f.read_text())["named"]
            for e in space.entries:
                name = e.name
                if name == "f_s_offset":
                    value = named.get("f_s", 0.0) - named.get("f_c", 0.0)
                elif name not in named:
                    continue
                else:
                    value = named[name]
                z = (value - e.lower) / (e.upper - e.lower)
                by_phase[phase].setdefault(name, []).append(z)
    lines = ["phase,param,normalized_mean,normalized_std,n_runs"]
    for phase, table in by_phase.items():
        for name, vals in table.items():
            arr = np.array(vals)
            lines.append(
                f"{phase},{name},{repr(float(arr.mean()))},{repr(float(arr.std()))},{len(arr)}"
            )
    return "\n".join(lines) + "\n"


def write_report_files(run_dirs: list[str | Path], out_dir: str | Path) -> dict:
    """Emit plot-data CSV families for one or more completed run directories.

    Missing artifacts are listed rather than fatal; whatever can be built is
    built. Returns a manifest of written and missing pieces.
    """
    run_dirs = [Path(d) for d in run_dirs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    missing: list[str] = []

    for rd in run_dirs:
        tag = rd.name
        overlay = _excitation_overlay(rd)
        if overlay is None:
            missing.append(f"{tag}: excitation trajectories")
        else:
            (out / f"excitation_overlay_{tag}.csv").write_text(overlay)
            written.append(f"excitation_overlay_{tag}.csv")
        rewards = _reward_table(rd)
        if rewards is None:
            missing.append(f"{tag}: reward distributions")
        else:
            (out / f"reward_distributions_{tag}.csv").write_text(rewards)
            written.append(f"reward_distributions_{tag}.csv")

    params = _param_table(run_dirs)
    (out / "identified_params.csv").write_text(params)
    written.append("identified_params.csv")
    return {"written": written, "missing": missing}
