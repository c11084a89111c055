"""Identifiable simulation-parameter space.

A parameter vector holds the free entries in declaration order, in physical
units. The static friction peak is expressed as an offset above the Coulomb
torque so every vector in the box satisfies f_s >= f_c by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from .actuator import FrictionParams, GearParams, JointActuator, MotorParams
from .chain import BaseOffsets, ChainModel
from .testbed import GEAR_RATIO, QDOT_STATIC, V_BATTERY, default_chain

__all__ = ["ParamEntry", "ParamSpace", "default_space"]


@dataclass(frozen=True)
class ParamEntry:
    name: str
    unit: str
    lower: float
    upper: float
    coupling: str | None = None

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: need lower < upper, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ParamSpace:
    entries: tuple[ParamEntry, ...]
    fixed: tuple[tuple[str, float], ...] = ()

    @property
    def dim(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def lower(self) -> np.ndarray:
        return np.array([e.lower for e in self.entries])

    @property
    def upper(self) -> np.ndarray:
        return np.array([e.upper for e in self.entries])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def normalize(self, phi: np.ndarray) -> np.ndarray:
        return (np.asarray(phi, float) - self.lower) / (self.upper - self.lower)

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(z, float) * (self.upper - self.lower)

    def clip(self, phi: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(phi, float), self.lower, self.upper)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def contains(self, phi: np.ndarray) -> bool:
        phi = np.asarray(phi, float)
        return bool(np.all(phi >= self.lower - 1e-12) and np.all(phi <= self.upper + 1e-12))

    def as_dict(self, phi: np.ndarray) -> dict[str, float]:
        """Named physical values, fixed entries and couplings resolved."""
        d = {e.name: float(v) for e, v in zip(self.entries, np.asarray(phi, float))}
        d.update({k: v for k, v in self.fixed})
        if "f_s_offset" in d:
            d["f_s"] = d["f_c"] + d.pop("f_s_offset")
        return d

    def with_bounds(self, **bounds: tuple[float, float]) -> "ParamSpace":
        """Same space with some entries restricted to narrower ranges."""
        entries = []
        for e in self.entries:
            if e.name in bounds:
                lo, hi = bounds.pop(e.name)
                if lo < e.lower - 1e-12 or hi > e.upper + 1e-12:
                    raise ValueError(f"{e.name}: [{lo}, {hi}] is not inside [{e.lower}, {e.upper}]")
                entries.append(replace(e, lower=lo, upper=hi))
            else:
                entries.append(e)
        if bounds:
            raise KeyError(f"unknown parameters: {sorted(bounds)}")
        return ParamSpace(entries=tuple(entries), fixed=self.fixed)

    def without_dte(self) -> "ParamSpace":
        """Model class with lossless gears: both efficiencies pinned at 1."""
        entries = tuple(e for e in self.entries if e.name != "eta_bw")
        fixed = dict(self.fixed)
        fixed["eta_bw"] = 1.0
        return ParamSpace(entries=entries, fixed=tuple(sorted(fixed.items())))

    def make_chain(self, phi: np.ndarray) -> ChainModel:
        """Instantiate the testbed chain with this parameter vector."""
        d = self.as_dict(phi)
        act = JointActuator(
            motor=MotorParams(
                kt=d["kt"], r_ter=d["r_ter"], armature=d["armature"], v_battery=V_BATTERY
            ),
            gear=GearParams(ratio=GEAR_RATIO, eta_fw=d["eta_fw"], eta_bw=d["eta_bw"]),
            friction=FrictionParams(
                f_s=d["f_s"], f_c=d["f_c"], k_v=d["k_v"], qdot_static=QDOT_STATIC
            ),
        )
        base = BaseOffsets(
            mass_offset=d["base_mass_offset"],
            com_offset_x=d["base_com_x"],
            com_offset_z=d["base_com_z"],
        )
        return default_chain(actuator=act, base=base)

    def to_json(self) -> str:
        return json.dumps(
            {
                "entries": [
                    {"name": e.name, "unit": e.unit, "lower": e.lower, "upper": e.upper,
                     "coupling": e.coupling}
                    for e in self.entries
                ],
                "fixed": dict(self.fixed),
            },
            indent=2,
        )

    @staticmethod
    def from_json(text: str) -> "ParamSpace":
        d = json.loads(text)
        return ParamSpace(
            entries=tuple(ParamEntry(**e) for e in d["entries"]),
            fixed=tuple(sorted(d["fixed"].items())),
        )

    def params_to_json(self, phi: np.ndarray) -> str:
        return json.dumps(
            {"vector": np.asarray(phi, float).tolist(), "named": self.as_dict(phi)},
            indent=2,
        )

    @staticmethod
    def params_from_json(text: str) -> np.ndarray:
        return np.array(json.loads(text)["vector"], float)


def default_space() -> ParamSpace:
    """Identification ranges for the testbed actuator and body payload."""
    return ParamSpace(
        entries=(
            ParamEntry("kt", "N*m/A", 0.003, 0.009),
            ParamEntry("r_ter", "ohm", 4.0, 9.0),
            ParamEntry("armature", "kg*m^2", 0.0025, 0.011),
            ParamEntry("eta_bw", "-", 0.6, 1.0),
            ParamEntry("f_c", "N*m", 0.01, 0.25),
            ParamEntry("k_v", "N*m*s/rad", 0.0025, 0.15),
            ParamEntry("f_s_offset", "N*m", 0.0, 0.25, coupling="f_s = f_c + f_s_offset"),
            ParamEntry("base_mass_offset", "kg", 0.0, 0.5),
            ParamEntry("base_com_x", "m", -0.02, 0.02),
            ParamEntry("base_com_z", "m", -0.02, 0.02),
        ),
        fixed=(("eta_fw", 1.0),),
    )
