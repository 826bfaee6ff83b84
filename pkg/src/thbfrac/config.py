"""Run configuration: JSON schema, presets and overrides.

A configuration is a nested dictionary validated strictly (unknown keys are
rejected with their path). The two benchmark presets encode the single-edge
notched square (side 1 mm, horizontal crack from the left edge to the
center): `sen_tensile` (l0 = 0.015 mm, level-0 mesh 20x20, up to five levels)
and `sen_shear` (l0 = 0.010 mm, 25x25 base). `sen_tensile_desk` is a reduced
setup (l0 = 0.03 mm, two refinement levels) sized for laptop-scale runs.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .model import MaterialParams, ModelSpec
from .solvers import SolverTolerances


class ConfigError(ValueError):
    pass


@dataclass
class MeshConfig:
    kind: str = "thb"          # thb | tp
    base: int = 20             # level-0 cells per side
    lmax: int = 4              # finest hierarchy level (thb); tp refines base


@dataclass
class RunConfig:
    name: str = "run"
    side: float = 1.0                       # square edge length [mm]
    crack: tuple = (0.0, 0.5, 0.5, 0.5)     # initial crack segment [mm]
    material: MaterialParams = field(default_factory=MaterialParams)
    model: ModelSpec = field(default_factory=ModelSpec)
    mesh: MeshConfig = field(default_factory=MeshConfig)
    bc: str = "tensile"                     # tensile | shear
    load_schedule: list = field(default_factory=lambda: [[14, 3e-4], [60, 3e-5]])
    tolerances: SolverTolerances = field(default_factory=SolverTolerances)
    stepping: str = "hybrid"                # explicit | implicit | hybrid
    d_min: float = 0.1
    admissibility: int = 2
    band_radius: float | None = None
    mesh_band_radius: float | None = None
    contour_resolution: int = 512
    out: str = "out"

    def validate(self):
        if self.side != 1.0:
            raise ConfigError("geometry.side: only the unit square is supported")
        if self.bc not in ("tensile", "shear"):
            raise ConfigError(f"bc: unknown preset {self.bc!r}")
        if self.stepping not in ("explicit", "implicit", "hybrid"):
            raise ConfigError(f"stepping: unknown policy {self.stepping!r}")
        if self.mesh.kind not in ("thb", "tp"):
            raise ConfigError(f"mesh.kind: must be 'thb' or 'tp'")
        if self.mesh.base < 2 or self.mesh.lmax < 0:
            raise ConfigError("mesh: base >= 2 and lmax >= 0 required")
        h_min = self.side / (self.mesh.base * 2 ** self.mesh.lmax)
        if h_min > self.material.l0 / 2 + 1e-12:
            raise ConfigError(
                f"mesh: finest size {h_min:g} exceeds l0/2 = {self.material.l0 / 2:g}")
        for phase in self.load_schedule:
            if len(phase) != 2 or phase[0] < 0 or phase[1] <= 0:
                raise ConfigError("load_schedule: phases are [count, step_size]")
        return self

    @property
    def nsteps(self) -> int:
        return int(sum(c for c, _ in self.load_schedule))

    def displacements(self):
        """Cumulative edge displacement per load step."""
        u = 0.0
        for count, du in self.load_schedule:
            for _ in range(int(count)):
                u += du
                yield u


_PRESETS = {
    "sen_tensile": {
        "name": "sen_tensile",
        "material": {"l0": 0.015},
        "mesh": {"kind": "thb", "base": 20, "lmax": 4},
        "bc": "tensile",
        "load_schedule": [[14, 3e-4], [60, 3e-5]],
    },
    "sen_shear": {
        "name": "sen_shear",
        "material": {"l0": 0.010},
        "mesh": {"kind": "thb", "base": 25, "lmax": 4},
        "bc": "shear",
        "load_schedule": [[30, 3e-4], [100, 3e-5]],
    },
    "sen_tensile_desk": {
        "name": "sen_tensile_desk",
        "material": {"l0": 0.03},
        "mesh": {"kind": "thb", "base": 30, "lmax": 2},
        "bc": "tensile",
        "load_schedule": [[14, 3e-4], [60, 3e-5]],
        # keep the refined band lean at this large l0/domain ratio
        "d_min": 0.35,
    },
}


def preset_names():
    return sorted(_PRESETS)


def _merge(base: dict, extra: dict, path=""):
    for key, val in extra.items():
        here = f"{path}.{key}" if path else key
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _merge(base[key], val, here)
        else:
            base[key] = val
    return base


_SCHEMA = {
    "name": str,
    "side": (int, float),
    "crack": list,
    "material": {"E": (int, float), "nu": (int, float), "Gc": (int, float),
                 "l0": (int, float), "eta": (int, float)},
    "model": {"family": str, "order": int, "rho": (int, float),
              "c_rho": (int, float)},
    "mesh": {"kind": str, "base": int, "lmax": int},
    "bc": str,
    "load_schedule": list,
    "tolerances": {"tol_picard": (int, float), "tol_psor": (int, float),
                   "tol_stag": (int, float), "max_picard": int,
                   "max_psor": int, "max_stag": int, "omega": (int, float)},
    "stepping": str,
    "d_min": (int, float),
    "admissibility": int,
    "band_radius": (int, float, type(None)),
    "mesh_band_radius": (int, float, type(None)),
    "contour_resolution": int,
    "out": str,
}


def _check_schema(data: dict, schema: dict, path=""):
    for key, val in data.items():
        here = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown configuration key: {here}")
        expected = schema[key]
        if isinstance(expected, dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{here}: expected an object")
            _check_schema(val, expected, here)
        elif not isinstance(val, expected):
            raise ConfigError(f"{here}: invalid type {type(val).__name__}")


def _to_config(data: dict) -> RunConfig:
    data = copy.deepcopy(data)
    _check_schema(data, _SCHEMA)
    kwargs = {}
    if "material" in data:
        kwargs["material"] = MaterialParams(**data.pop("material"))
    if "model" in data:
        kwargs["model"] = ModelSpec(**data.pop("model"))
    if "mesh" in data:
        kwargs["mesh"] = MeshConfig(**data.pop("mesh"))
    if "tolerances" in data:
        kwargs["tolerances"] = SolverTolerances(**data.pop("tolerances"))
    if "crack" in data:
        kwargs["crack"] = tuple(data.pop("crack"))
    kwargs.update(data)
    return RunConfig(**kwargs).validate()


def load_config(source: str, overrides: dict | None = None,
                mesh: str | None = None, model: str | None = None,
                order: int | None = None, resolution: str | None = None,
                stepping: str | None = None, out: str | None = None) -> RunConfig:
    """Resolve a preset name or JSON file into a validated RunConfig.

    The keyword arguments mirror the CLI flags; ``overrides`` carries dotted
    --set entries applied last.
    """
    if source in _PRESETS:
        data = copy.deepcopy(_PRESETS[source])
    else:
        try:
            with open(source) as f:
                data = json.load(f)
        except FileNotFoundError:
            raise ConfigError(f"unknown preset or missing file: {source}")
    if mesh is not None:
        _merge(data, {"mesh": {"kind": mesh}})
    if resolution is not None:
        if resolution not in ("coarse", "fine"):
            raise ConfigError("resolution must be coarse or fine")
        base_lmax = data.get("mesh", {}).get("lmax", 4)
        if resolution == "coarse":
            _merge(data, {"mesh": {"lmax": base_lmax - 1}})
    if data.get("mesh", {}).get("kind") == "tp":
        # single-level tensor mesh at the finest resolution
        m = data["mesh"]
        m["base"] = int(m.get("base", 20) * 2 ** m.get("lmax", 0))
        m["lmax"] = 0
    if model is not None:
        _merge(data, {"model": {"family": model}})
    if order is not None:
        _merge(data, {"model": {"order": order}})
    if stepping is not None:
        _merge(data, {"stepping": stepping})
    if out is not None:
        _merge(data, {"out": out})
    if overrides:
        for key, val in overrides.items():
            node = data
            parts = key.split(".")
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = val
    return _to_config(data)
