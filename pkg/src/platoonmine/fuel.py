"""Longitudinal-dynamics fuel model and platoon fuel savings."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

from .ids import natural_key
from .mining import PlatoonPattern, consecutive_runs, step_distance


@dataclass(frozen=True)
class FuelParams:
    rho_air: float = 1.29  # kg/m^3
    frontal_area: float = 10.26  # m^2
    c_d: float = 0.6
    c_r: float = 0.007
    mass_kg: float = 26800.0
    g: float = 9.8
    phi_lead: float = 0.92
    phi_follow: float = 0.72
    psi: float = 0.737  # g/ml
    eta_eng: float = 0.4
    rho_d: float = 44000.0  # J/g
    dt_s: float = 15.0
    substeps: int = 15
    coordination_factor: float = 17.0
    headway_stat: str = "mean"  # "mean" or "max" headway in the coordination rule
    table2_verbatim: bool = False

    def __post_init__(self):
        for name in ("rho_air", "frontal_area", "c_d", "c_r", "mass_kg", "g", "phi_lead", "phi_follow", "psi",
                     "rho_d", "dt_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.phi_lead > 1 or self.phi_follow > 1:
            raise ValueError("drag reduction coefficients must not exceed 1")
        if not 0 < self.eta_eng <= 1:
            raise ValueError("eta_eng must be in (0, 1]")
        if self.headway_stat not in ("mean", "max"):
            raise ValueError("headway_stat must be 'mean' or 'max'")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")

    def resolved(self) -> "FuelParams":
        """The coefficients actually used: the printed drag and rolling values are
        swapped back unless ``table2_verbatim`` asks for them as printed."""
        if self.table2_verbatim:
            return replace(self, c_d=0.007, c_r=0.6)
        return self


@dataclass
class DrivingProfile:
    """Per-grid-step kinematics for one truck."""

    truck_id: str
    timesteps: list[int]
    v: list[float]
    a: list[float]
    alpha: list[float]

    def __len__(self) -> int:
        return len(self.timesteps)

    def position(self, t: int) -> int | None:
        try:
            return self._pos[t]
        except AttributeError:
            self._pos = {k: i for i, k in enumerate(self.timesteps)}
            return self._pos.get(t)
        except KeyError:
            return None


def derive_profile(truck_id: str, timesteps, odo, altitude, dt_s: float) -> DrivingProfile:
    """Speed, acceleration and slope on the grid from odometer and altitude samples.

    ``v`` uses the forward odometer difference (backward at the end of an active
    stretch), ``a`` the forward speed difference, and ``alpha`` the slope over the
    next step's network distance (0 for a standstill).
    """
    ts = list(timesteps)
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("timesteps must be strictly increasing")
    odo_map = dict(zip(ts, odo))
    alt_map = dict(zip(ts, altitude))
    v = []
    for t in ts:
        d = step_distance(odo_map, t)
        v.append(max(0.0, d) / dt_s)
    acc, slope = [], []
    for i, t in enumerate(ts):
        if t + 1 in odo_map:
            acc.append((v[i + 1] - v[i]) / dt_s)
            dist = odo_map[t + 1] - odo_map[t]
            dh = alt_map[t + 1] - alt_map[t]
        elif t - 1 in odo_map:
            acc.append(0.0)
            dist = odo_map[t] - odo_map[t - 1]
            dh = alt_map[t] - alt_map[t - 1]
        else:
            acc.append(0.0)
            dist = dh = 0.0
        slope.append(math.atan(dh / dist) if dist > 0 else 0.0)
    return DrivingProfile(truck_id, ts, v, acc, slope)


def traction_force(v: float, a: float, alpha: float, phi: float, params: FuelParams) -> float:
    """Tractive (positive) or braking (negative) force in newtons."""
    p = params.resolved()
    m, g = p.mass_kg, p.g
    return (m * a + 0.5 * p.rho_air * p.frontal_area * p.c_d * v * v * phi
            + m * g * p.c_r * math.cos(alpha) + m * g * math.sin(alpha))


def fuel_rate(force: float, v: float, params: FuelParams) -> float:
    """Fuel flow in ml/s; nothing is burned while braking."""
    if force < 0:
        return 0.0
    return force * v / (params.psi * params.eta_eng * params.rho_d)


def step_fuel(v: float, a: float, alpha: float, phi: float, params: FuelParams, substeps: int | None = None) -> float:
    """Fuel over one grid step with constant acceleration, by the composite trapezoid rule."""
    n = substeps or params.substeps
    h = params.dt_s / n
    total = 0.0
    for k in range(n + 1):
        vk = max(0.0, v + a * k * h)
        rate = fuel_rate(traction_force(vk, a, alpha, phi, params), vk, params)
        total += rate * (0.5 if k in (0, n) else 1.0)
    return total * h


def interval_fuel(profile: DrivingProfile, phi, params: FuelParams, steps=None) -> float:
    """Total fuel in ml; ``phi`` is a constant or a ``{timestep: phi}`` mapping (default 1)."""
    chosen = profile.timesteps if steps is None else steps
    parts = []
    for t in chosen:
        i = profile.position(t)
        if i is None:
            continue
        ph = phi.get(t, 1.0) if isinstance(phi, dict) else phi
        parts.append(step_fuel(profile.v[i], profile.a[i], profile.alpha[i], ph, params))
    return math.fsum(parts)


# -------------------------------------------------------------- savings
@dataclass
class PatternSaving:
    pattern_id: int
    coordinable: bool
    overlap_km: float | None
    mean_headway_m: float | None
    baseline_ml: float
    platooned_ml: float

    @property
    def saving_pct(self) -> float:
        return 100.0 * (self.baseline_ml - self.platooned_ml) / self.baseline_ml if self.baseline_ml > 0 else 0.0


@dataclass
class SavingsReport:
    patterns: list[PatternSaving]
    fleet_baseline_ml: float
    fleet_platooned_ml: float
    excluded: int

    @property
    def fleet_saving_pct(self) -> float:
        if self.fleet_baseline_ml <= 0:
            return 0.0
        return 100.0 * (self.fleet_baseline_ml - self.fleet_platooned_ml) / self.fleet_baseline_ml

    @property
    def coordinable_share(self) -> float:
        return sum(p.coordinable for p in self.patterns) / len(self.patterns) if self.patterns else 0.0


def is_coordinable(overlap_km, headway_m, params: FuelParams) -> bool:
    if overlap_km is None or headway_m is None:
        return False
    return overlap_km * 1000.0 > params.coordination_factor * headway_m


def pattern_roles(p: PlatoonPattern, front_to_back) -> dict[tuple[str, int], str]:
    """Leader/follower role per (truck, timestep), fixed over each consecutive run from
    the member order at the run's first timestep.  ``front_to_back(p, t)`` returns
    the order of the set containing the pattern at ``t``."""
    roles = {}
    for first, last in consecutive_runs(p.timesteps):
        order = [m for m in front_to_back(p, first) if m in set(p.trucks)]
        for t in range(first, last + 1):
            if t not in p.timesteps:
                continue
            for k, m in enumerate(order):
                roles[(m, t)] = "leader" if k == 0 else "follower"
    return roles


def platoon_savings(patterns: list[PlatoonPattern], profiles: dict[str, DrivingProfile], front_to_back,
                    params: FuelParams) -> SavingsReport:
    """Per-pattern and fleet fuel with and without platoon drag reduction.

    A pattern counts as coordinable when its overlap distance exceeds
    ``coordination_factor`` times its mean (or, with ``headway_stat = "max"``, largest)
    headway.  When a truck is in several
    coordinable patterns at one timestep it gets the lowest coefficient among them.
    """
    phi_fleet: dict[str, dict[int, float]] = {}
    rows = []
    excluded = 0
    for pid, p in enumerate(patterns):
        overlap = p.summary.get("distance_km")
        headway = p.summary.get("mean_headway_m")
        rule_headway = p.summary.get(f"{params.headway_stat}_headway_m")
        covered = all(tid in profiles and all(profiles[tid].position(t) is not None for t in p.timesteps)
                      for tid in p.trucks)
        if not covered:
            excluded += 1
            continue
        coord = is_coordinable(overlap, rule_headway, params)
        roles = pattern_roles(p, front_to_back) if coord else {}
        base, plat = [], []
        for tid in p.trucks:
            prof = profiles[tid]
            phi = {t: (params.phi_lead if roles.get((tid, t)) == "leader" else params.phi_follow)
                   for t in p.timesteps} if coord else 1.0
            base.append(interval_fuel(prof, 1.0, params, p.timesteps))
            plat.append(interval_fuel(prof, phi, params, p.timesteps))
            if coord:
                mine = phi_fleet.setdefault(tid, {})
                for t, v in phi.items():
                    mine[t] = min(mine.get(t, 1.0), v)
        rows.append(PatternSaving(pid, coord, overlap, headway, math.fsum(base), math.fsum(plat)))
    fleet_base, fleet_plat = [], []
    for tid in sorted(profiles, key=natural_key):
        fleet_base.append(interval_fuel(profiles[tid], 1.0, params))
        fleet_plat.append(interval_fuel(profiles[tid], phi_fleet.get(tid, {}), params))
    return SavingsReport(rows, math.fsum(fleet_base), math.fsum(fleet_plat), excluded)


SAVINGS_HEADER = ["pattern_id", "coordinable", "overlap_km", "mean_headway_m", "baseline_ml", "platooned_ml",
                  "saving_pct"]


def write_savings(path, report: SavingsReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAVINGS_HEADER)
        for r in report.patterns:
            w.writerow([r.pattern_id, "true" if r.coordinable else "false",
                        "" if r.overlap_km is None else f"{r.overlap_km:.4f}",
                        "" if r.mean_headway_m is None else f"{r.mean_headway_m:.2f}",
                        f"{r.baseline_ml:.3f}", f"{r.platooned_ml:.3f}", f"{r.saving_pct:.4f}"])
