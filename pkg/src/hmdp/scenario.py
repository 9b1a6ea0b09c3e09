"""Scenario configuration: YAML loading, defaults and validation."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .lanechange import VEHICLE_IDS, LaneChangeParams, ParameterError, SurroundingVehicle
from .solver import SolverConfig
from .vehicle import TrackingGains, VehicleGeometry


class ConfigError(ValueError):
    """Unreadable or invalid scenario file."""


@dataclass(frozen=True)
class EgoInit:
    x: float = 0.0
    v: float = 25.0
    lane: str = "original"


@dataclass(frozen=True)
class ScenarioConfig:
    ego: EgoInit
    vehicles: tuple  # SurroundingVehicle, one per id in VEHICLE_IDS
    params: LaneChangeParams = field(default_factory=LaneChangeParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    geometry: VehicleGeometry = field(default_factory=VehicleGeometry)
    gains: TrackingGains = field(default_factory=TrackingGains)
    duration: float = 11.0
    mode: str = "hmdp"
    seed: int = 0
    name: str = "scenario"

    @property
    def lane_centers(self):
        return (0.0, self.params.lane_width)

    @property
    def decision_count(self) -> int:
        return int(self.duration / self.params.T_h + 1e-9)

    def with_mode(self, mode: str) -> "ScenarioConfig":
        return dataclasses.replace(self, mode=mode)

    def vehicle(self, vid: str) -> SurroundingVehicle:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


DEFAULT_SCENARIO = "default_scenario.yaml"


def default_scenario_path() -> Path:
    return Path(str(resources.files("hmdp") / "data" / DEFAULT_SCENARIO))


def _section(doc, key):
    sec = doc.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected a mapping")
    return sec


def _build(cls, sec, where):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(sec) - names
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    try:
        return cls(**sec)
    except ParameterError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _vehicle(entry, i):
    where = f"vehicles[{i}]"
    if not isinstance(entry, dict):
        raise ConfigError(f"{where}: expected a mapping")
    try:
        vid = str(entry["id"])
        x0, y0, v0 = float(entry["x0"]), float(entry["y0"]), float(entry["v0"])
    except KeyError as exc:
        raise ConfigError(f"{where}: missing field {exc.args[0]}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    if v0 < 0:
        raise ConfigError(f"{where}.v0: speed must be non-negative")
    prof = []
    for j, pair in enumerate(entry.get("accel_profile") or []):
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise ConfigError(f"{where}.accel_profile[{j}]: expected [t_start, a]")
        prof.append((float(pair[0]), float(pair[1])))
    starts = [p[0] for p in prof]
    if starts != sorted(starts) or len(set(starts)) != len(starts):
        raise ConfigError(f"{where}.accel_profile: t_start values must strictly increase")
    return SurroundingVehicle(vid, x0, y0, v0, tuple(prof))


def parse_scenario(doc, name="scenario") -> ScenarioConfig:
    if not isinstance(doc, dict):
        raise ConfigError("scenario must be a non-empty mapping")
    params_sec = dict(_section(doc, "params"))
    lanes = _section(doc, "lanes")
    if "width" in lanes:
        params_sec.setdefault("lane_width", float(lanes["width"]))
        params_sec.setdefault("y_qlc", float(lanes["width"]))
    if "costs" in params_sec:
        params_sec["costs"] = tuple(params_sec["costs"])
    params = _build(LaneChangeParams, params_sec, "params")
    solver = _build(SolverConfig, _section(doc, "solver"), "solver")
    geometry = _build(VehicleGeometry, _section(doc, "geometry"), "geometry")
    gains = _build(TrackingGains, _section(doc, "tracking"), "tracking")
    ego = _build(EgoInit, _section(doc, "ego"), "ego")
    if ego.lane not in ("original", "target"):
        raise ConfigError("ego.lane: must be 'original' or 'target'")
    raw = doc.get("vehicles") or []
    if not isinstance(raw, list):
        raise ConfigError("vehicles: expected a list")
    vehicles = tuple(_vehicle(e, i) for i, e in enumerate(raw))
    ids = sorted(v.id for v in vehicles)
    if ids != sorted(VEHICLE_IDS):
        raise ConfigError(f"vehicles: need exactly one each of {list(VEHICLE_IDS)}, got {ids}")
    sim = _section(doc, "simulation")
    duration = float(sim.get("duration", 11.0))
    if duration <= 0:
        raise ConfigError("simulation.duration: must be positive")
    mode = str(sim.get("mode", "hmdp"))
    if mode not in ("hmdp", "rule"):
        raise ConfigError("simulation.mode: must be 'hmdp' or 'rule'")
    seed = int(sim.get("seed", 0))
    return ScenarioConfig(ego, vehicles, params, solver, geometry, gains, duration,
                          mode, seed, str(doc.get("name", name)))


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc
    if doc is None:
        raise ConfigError(f"{path}: parse error: empty file")
    return parse_scenario(doc, path.stem)


def default_scenario() -> ScenarioConfig:
    return load_scenario(default_scenario_path())


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    """Plain-data view, suitable for YAML/JSON dumps."""
    p = dataclasses.asdict(cfg.params)
    p["costs"] = list(p["costs"])
    return {
        "name": cfg.name,
        "lanes": {"width": cfg.params.lane_width, "centers": list(cfg.lane_centers)},
        "ego": dataclasses.asdict(cfg.ego),
        "vehicles": [
            {"id": v.id, "x0": v.x, "y0": v.y, "v0": v.v,
             "accel_profile": [list(q) for q in v.accel_profile]}
            for v in cfg.vehicles
        ],
        "params": p,
        "solver": dataclasses.asdict(cfg.solver),
        "geometry": dataclasses.asdict(cfg.geometry),
        "tracking": dataclasses.asdict(cfg.gains),
        "simulation": {"duration": cfg.duration, "mode": cfg.mode, "seed": cfg.seed},
    }
