"""Scenario generator: trucks driving template corridors, with planted platoons.

Randomness comes from numpy's PCG64 bit generator seeded with ``ScenarioSpec.seed``,
so a given spec produces the same bytes on every platform numpy supports.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..following import SnapshotTruck, following_distance
from ..geo import geo_distance, offset
from ..ids import natural_key
from ..matching import TruckPoint
from ..network import ALONG, INF
from .templates import Template, make_template


class InfeasibleScenario(ValueError):
    pass


@dataclass
class PlatoonPlan:
    size: int
    start_ts: int
    end_ts: int
    headway_m: float = 200.0
    corridor: str | None = None


@dataclass
class ScenarioSpec:
    seed: int = 0
    template: str = "line"
    template_args: dict = field(default_factory=dict)
    n_timesteps: int = 80
    dt_s: float = 15.0
    speed_mps: float = 20.0
    platoons: list[PlatoonPlan] = field(default_factory=list)
    n_solo: int = 0
    solo_steps: tuple[int, int] = (10, 40)
    noise_sigma_m: float = 0.0
    sample_s: float = 15.0
    jitter_s: float = 0.0
    dropout: float = 0.0
    grade: float = 0.0
    base_altitude_m: float = 100.0
    eps_m: float = 1000.0
    # solo trucks keep at least this following distance from everyone else
    separation_m: float = 2500.0
    separate: bool = True
    max_tries: int = 200

    def __post_init__(self):
        self.platoons = [p if isinstance(p, PlatoonPlan) else PlatoonPlan(**p) for p in self.platoons]
        self.solo_steps = tuple(self.solo_steps)
        for p in self.platoons:
            if p.size < 2:
                raise InfeasibleScenario("a planted platoon needs at least 2 trucks")
            if not 0 < p.headway_m < self.eps_m:
                raise InfeasibleScenario(f"planted headway {p.headway_m} m must be in (0, eps)")
            if not 0 <= p.start_ts < p.end_ts < self.n_timesteps:
                raise InfeasibleScenario(f"platoon window {p.start_ts}..{p.end_ts} outside the horizon")
        if self.noise_sigma_m < 0 or not 0 <= self.dropout < 1 or self.sample_s <= 0 or self.dt_s <= 0:
            raise InfeasibleScenario("invalid noise, dropout or sampling settings")
        if self.jitter_s * 2 >= self.sample_s:
            raise InfeasibleScenario("jitter must be below half the sampling interval")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TruckPlan:
    truck_id: str
    corridor: str
    phase_m: float  # odometer at time 0 if the truck had been driving all along
    t_on: float
    t_off: float
    platoon: int | None = None


@dataclass
class GroundTruth:
    dt_s: float
    speed_mps: float
    grade: float
    sets_by_t: dict[int, list[tuple[str, ...]]]
    patterns: list[tuple[tuple[str, ...], tuple[int, ...]]]
    # per truck: list of (timestamp, segment_id, r, dir) for every emitted GPS fix
    states: dict[str, list[tuple[float, str, float, int]]]
    plans: dict[str, TruckPlan]

    def pattern_duration_s(self, i: int) -> float:
        return len(self.patterns[i][1]) * self.dt_s

    def pattern_distance_km(self, i: int) -> float:
        return self.pattern_duration_s(i) * self.speed_mps / 1000.0


@dataclass
class Scenario:
    spec: ScenarioSpec
    template: Template
    trajectories: dict[str, list[TruckPoint]]
    truth: GroundTruth

    @property
    def graph(self):
        return self.template.graph


class CorridorWalker:
    """Maps an odometer reading on a corridor to a position on the graph."""

    def __init__(self, template: Template, name: str):
        self.graph = template.graph
        self.arcs = template.corridors[name]
        self.cum = [0.0]
        for seg, _ in self.arcs:
            self.cum.append(self.cum[-1] + self.graph.segments[seg].length_m)

    @property
    def length(self) -> float:
        return self.cum[-1]

    def locate(self, odo: float) -> tuple[str, float, int]:
        odo = min(max(odo, 0.0), self.length)
        i = min(bisect.bisect_right(self.cum, odo) - 1, len(self.arcs) - 1)
        seg, d = self.arcs[i]
        frac = (odo - self.cum[i]) / (self.cum[i + 1] - self.cum[i])
        r = frac if d == ALONG else 1.0 - frac
        return seg, min(1.0, max(0.0, r)), d

    def snapshot(self, truck_id: str, odo: float) -> SnapshotTruck:
        seg, r, d = self.locate(odo)
        return SnapshotTruck.on(self.graph, truck_id, seg, r, d)


def _grid_steps(t_on: float, t_off: float, dt: float) -> range:
    return range(int(math.ceil(t_on / dt - 1e-9)), int(math.floor(t_off / dt + 1e-9)) + 1)


def generate(spec: ScenarioSpec) -> Scenario:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    template = make_template(spec.template, **spec.template_args)
    names = sorted(template.corridors)
    walkers = {n: CorridorWalker(template, n) for n in names}
    v, dt = spec.speed_mps, spec.dt_s
    margin = 50.0

    n_platoon_trucks = sum(p.size for p in spec.platoons)
    n_total = n_platoon_trucks + spec.n_solo
    ids = [str(i + 1) for i in rng.permutation(n_total)]
    placed: list[TruckPlan] = []

    def position(plan: TruckPlan, k: int) -> SnapshotTruck:
        return walkers[plan.corridor].snapshot(plan.truck_id, plan.phase_m + v * k * dt)

    def compatible(group: list[TruckPlan]) -> bool:
        if not spec.separate:
            return True
        for a in group:
            for b in placed:
                if a.platoon is not None and a.platoon == b.platoon:
                    continue
                for k in _grid_steps(max(a.t_on, b.t_on), min(a.t_off, b.t_off), dt):
                    pa, pb = position(a, k), position(b, k)
                    if geo_distance(pa.lonlat, pb.lonlat) > spec.separation_m:
                        continue
                    if following_distance(pa, pb, template.graph, spec.eps_m, 3.0 * spec.separation_m) <= spec.separation_m:
                        return False
        return True

    def place(size: int, headway: float, t_on: float, t_off: float, corridor: str | None, platoon: int | None):
        fits = False
        for _ in range(spec.max_tries):
            name = corridor if corridor is not None else names[int(rng.integers(len(names)))]
            length = walkers[name].length
            span = (size - 1) * headway
            lo = margin + span - v * t_on
            hi = length - margin - v * t_off
            if hi < lo:
                if corridor is not None:
                    raise InfeasibleScenario(f"corridor {name!r} is too short for a {t_off - t_on:.0f} s window")
                continue
            fits = True
            lead = float(rng.uniform(lo, hi))
            group = [
                TruckPlan(ids[len(placed) + m], name, lead - m * headway, t_on, t_off, platoon)
                for m in range(size)
            ]
            if compatible(group):
                placed.extend(group)
                return group
        if not fits:
            raise InfeasibleScenario(f"no corridor is long enough for a {t_off - t_on:.0f} s drive")
        raise InfeasibleScenario("could not place trucks without accidental co-driving; lengthen the network")

    for pi, p in enumerate(spec.platoons):
        place(p.size, p.headway_m, p.start_ts * dt, p.end_ts * dt, p.corridor, pi)
    lo_steps, hi_steps = spec.solo_steps
    for _ in range(spec.n_solo):
        steps = int(rng.integers(lo_steps, hi_steps + 1))
        steps = min(steps, spec.n_timesteps - 1)
        start = int(rng.integers(0, spec.n_timesteps - steps))
        place(1, 0.0, start * dt, (start + steps) * dt, None, None)

    trajectories: dict[str, list[TruckPoint]] = {}
    states: dict[str, list] = {}
    for plan in sorted(placed, key=lambda p: natural_key(p.truck_id)):
        walker = walkers[plan.corridor]
        pts, sts = [], []
        n_fix = int(math.floor((plan.t_off - plan.t_on) / spec.sample_s + 1e-9)) + 1
        for j in range(n_fix):
            t = plan.t_on + j * spec.sample_s
            if spec.jitter_s > 0 and 0 < j < n_fix - 1:
                t += float(rng.uniform(-spec.jitter_s, spec.jitter_s))
            drop = spec.dropout > 0 and float(rng.random()) < spec.dropout
            ex, ny = (rng.normal(0.0, spec.noise_sigma_m, 2) if spec.noise_sigma_m > 0 else (0.0, 0.0))
            if drop:
                continue
            odo = plan.phase_m + v * t
            seg, r, d = walker.locate(odo)
            lon, lat = template.graph.interpolate(seg, r)
            if spec.noise_sigma_m > 0:
                lon, lat = offset(lon, lat, float(ex), float(ny))
            alt = spec.base_altitude_m + spec.grade * (odo - plan.phase_m - v * plan.t_on)
            pts.append(TruckPoint(plan.truck_id, round(t, 3), lon, lat, alt))
            sts.append((round(t, 3), seg, r, d))
        trajectories[plan.truck_id] = pts
        states[plan.truck_id] = sts

    sets_by_t: dict[int, list[tuple[str, ...]]] = {}
    patterns = []
    for pi, p in enumerate(spec.platoons):
        members = sorted((pl for pl in placed if pl.platoon == pi), key=lambda pl: -pl.phase_m)
        front_to_back = tuple(m.truck_id for m in members)
        steps = tuple(range(p.start_ts, p.end_ts + 1))
        for k in steps:
            sets_by_t.setdefault(k, []).append(front_to_back)
        patterns.append((tuple(sorted(front_to_back, key=natural_key)), steps))
    truth = GroundTruth(dt, v, spec.grade, sets_by_t, patterns, states, {p.truck_id: p for p in placed})
    return Scenario(spec, template, trajectories, truth)


def load_spec(path) -> ScenarioSpec:
    from ..pipeline.config import load_toml

    return ScenarioSpec.from_dict(load_toml(path).get("scenario", {}))


def write_scenario(scenario: Scenario, directory) -> dict:
    """Write ``network/``, ``trajectories.csv`` and ``truth.json`` under ``directory``."""
    from ..matching import write_trajectories
    from ..network import write_network

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_network(scenario.graph, out / "network")
    write_trajectories(out / "trajectories.csv", scenario.trajectories)
    truth = scenario.truth
    doc = {
        "seed": scenario.spec.seed,
        "template": scenario.spec.template,
        "dt_s": truth.dt_s,
        "speed_mps": truth.speed_mps,
        "patterns": [
            {"trucks": list(trucks), "timesteps": list(steps),
             "duration_s": truth.pattern_duration_s(i), "distance_km": truth.pattern_distance_km(i)}
            for i, (trucks, steps) in enumerate(truth.patterns)
        ],
        "sets": {str(t): [list(s) for s in sets] for t, sets in sorted(truth.sets_by_t.items())},
    }
    with open(out / "truth.json", "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"n_trucks": len(scenario.trajectories), "n_points": sum(map(len, scenario.trajectories.values()))}
