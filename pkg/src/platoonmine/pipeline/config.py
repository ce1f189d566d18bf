"""Pipeline configuration: one TOML file with a section per module."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..clustering import ClusterParams
from ..fuel import FuelParams
from ..matching import HmmParams


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


@dataclass(frozen=True)
class GridParams:
    dt_s: float = 15.0
    staleness_s: float = 30.0

    def __post_init__(self):
        if not self.dt_s > 0:
            raise ValueError("dt_s must be positive")
        if self.staleness_s < self.dt_s:
            raise ValueError("staleness_s must be at least dt_s")


@dataclass(frozen=True)
class MiningParams:
    min_o: int = 2
    min_t: int = 2


@dataclass(frozen=True)
class MetricsParams:
    window_s: float = 300.0
    per_gap_headway: bool = False
    haul_bucket_km: float = 100.0


@dataclass(frozen=True)
class PipelineConfig:
    network: str = ""
    trajectories: str = ""
    grid: GridParams = field(default_factory=GridParams)
    matching: HmmParams = field(default_factory=HmmParams)
    clustering: ClusterParams = field(default_factory=ClusterParams)
    mining: MiningParams = field(default_factory=MiningParams)
    fuel: FuelParams = field(default_factory=FuelParams)
    metrics: MetricsParams = field(default_factory=MetricsParams)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["input"] = {"network": d.pop("network"), "trajectories": d.pop("trajectories")}
        return d

    def digest(self) -> str:
        """Hash of every parameter except input paths."""
        d = self.to_dict()
        d.pop("input")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_SECTIONS = {
    "grid": GridParams,
    "matching": HmmParams,
    "clustering": ClusterParams,
    "mining": MiningParams,
    "fuel": FuelParams,
    "metrics": MetricsParams,
}


def _build(cls, values: dict, section: str):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"[{section}] unknown keys: {sorted(unknown)}")
    return cls(**values)


def config_from_dict(data: dict) -> PipelineConfig:
    unknown = set(data) - set(_SECTIONS) - {"input"}
    if unknown:
        raise ValueError(f"unknown config sections: {sorted(unknown)}")
    inp = data.get("input", {})
    parts = {name: dict(data.get(name, {})) for name in _SECTIONS}
    # the fuel integration step is the grid step
    grid = _build(GridParams, parts["grid"], "grid")
    parts["fuel"].setdefault("dt_s", grid.dt_s)
    if parts["fuel"]["dt_s"] != grid.dt_s:
        raise ValueError("[fuel] dt_s must equal [grid] dt_s")
    return PipelineConfig(
        network=str(inp.get("network", "")),
        trajectories=str(inp.get("trajectories", "")),
        grid=grid,
        **{name: _build(cls, parts[name], name) for name, cls in _SECTIONS.items() if name != "grid"},
    )


def default_config_text() -> str:
    return resources.files("platoonmine").joinpath("default_config.toml").read_text()


def load_config(path=None) -> PipelineConfig:
    """Defaults overlaid with the sections of ``path`` (if given)."""
    base = tomllib.loads(default_config_text())
    if path is not None:
        user = load_toml(path)
        for section, values in user.items():
            if isinstance(values, dict):
                base.setdefault(section, {}).update(values)
            else:
                base[section] = values
        # relative input paths are relative to the config file
        for key in ("network", "trajectories"):
            val = base.get("input", {}).get(key)
            if val and not Path(val).is_absolute() and key in user.get("input", {}):
                base["input"][key] = str((Path(path).parent / val).resolve())
    return config_from_dict(base)
