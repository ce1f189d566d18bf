"""Platooning performance measures: per-timestep co-driving ratio, headway and size,
fleet distance/time ratios, and segment hotspots."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

from .ids import natural_key
from .mining import PlatoonPattern, step_distance

ALL = "all"


def icr(set_sizes, n_total: int) -> float | None:
    """Share of available trucks that are in some co-driving set; None if no trucks."""
    if n_total <= 0:
        return None
    return sum(set_sizes) / n_total


def ich(set_gaps) -> float | None:
    """Sum of all adjacent gaps over the number of set members (as printed).

    ``set_gaps`` is one list of adjacent gaps per set; a set of n trucks has n-1 gaps.
    """
    set_gaps = [list(g) for g in set_gaps]
    if not set_gaps:
        return None
    members = sum(len(g) + 1 for g in set_gaps)
    return sum(sum(g) for g in set_gaps) / members


def ich_per_gap(set_gaps) -> float | None:
    set_gaps = [list(g) for g in set_gaps]
    n_gaps = sum(len(g) for g in set_gaps)
    if n_gaps == 0:
        return None
    return sum(sum(g) for g in set_gaps) / n_gaps


def ics(set_sizes) -> float | None:
    set_sizes = list(set_sizes)
    if not set_sizes:
        return None
    return sum(set_sizes) / len(set_sizes)


@dataclass
class MetricState:
    """Additive sufficient statistics; windows are sums of per-timestep states."""

    n_total: int = 0
    n_members: int = 0
    n_sets: int = 0
    n_gaps: int = 0
    gap_sum: float = 0.0

    def __add__(self, other: "MetricState") -> "MetricState":
        return MetricState(self.n_total + other.n_total, self.n_members + other.n_members,
                           self.n_sets + other.n_sets, self.n_gaps + other.n_gaps, self.gap_sum + other.gap_sum)

    def icr(self) -> float | None:
        return self.n_members / self.n_total if self.n_total > 0 else None

    def ich(self, per_gap: bool = False) -> float | None:
        denom = self.n_gaps if per_gap else self.n_members
        return self.gap_sum / denom if denom > 0 else None

    def ics(self) -> float | None:
        return self.n_members / self.n_sets if self.n_sets > 0 else None


def timestep_states(active_by_class: dict[int, Counter], sets_by_t: dict[int, list]) -> dict[int, dict[str, MetricState]]:
    """Per timestep and road class (plus ``"all"``) metric states.

    ``active_by_class[t]`` counts available trucks per road class; ``sets_by_t[t]`` holds
    objects with ``road_class``, ``size`` and ``headways_m``.
    """
    out: dict[int, dict[str, MetricState]] = {}
    for t in sorted(set(active_by_class) | set(sets_by_t)):
        counts = active_by_class.get(t, Counter())
        row = {ALL: MetricState(n_total=sum(counts.values()))}
        for rc, n in counts.items():
            row[str(rc)] = MetricState(n_total=n)
        for s in sets_by_t.get(t, []):
            add = MetricState(0, s.size, 1, len(s.headways_m), float(sum(s.headways_m)))
            rc = str(s.road_class.value if hasattr(s.road_class, "value") else s.road_class)
            row[ALL] = row[ALL] + add
            row[rc] = row.get(rc, MetricState()) + add
        out[t] = row
    return out


def aggregate_windows(states: dict[int, dict[str, MetricState]], steps_per_window: int) -> dict[int, dict[str, MetricState]]:
    """Sum per-timestep states into windows of ``steps_per_window`` grid steps."""
    if steps_per_window < 1:
        raise ValueError("steps_per_window must be positive")
    out: dict[int, dict[str, MetricState]] = {}
    for t, row in states.items():
        w = (t // steps_per_window) * steps_per_window
        acc = out.setdefault(w, {})
        for rc, st in row.items():
            acc[rc] = acc.get(rc, MetricState()) + st
    return dict(sorted(out.items()))


METRICS_HEADER = ["window_start", "road_class", "n_total", "icr", "ich_m", "ics"]


def write_window_metrics(path, windows: dict[int, dict[str, MetricState]], dt_s: float, per_gap: bool = False) -> None:
    def f(x, spec):
        return "" if x is None else format(x, spec)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for start, row in windows.items():
            for rc in sorted(row, key=lambda c: (c != ALL, c)):
                st = row[rc]
                w.writerow([f(start * dt_s, ".0f"), rc, st.n_total, f(st.icr(), ".6f"), f(st.ich(per_gap), ".3f"),
                            f(st.ics(), ".4f")])


# ------------------------------------------------------------------ fleet
@dataclass
class FleetMetrics:
    pdr: float
    ptr: float
    k: int
    per_truck: dict[str, dict] = field(default_factory=dict)


def pdr_ptr(patterns: list[PlatoonPattern], odometers: dict[str, dict[int, float]], dt_s: float) -> FleetMetrics:
    """Platooned distance and time ratios over all trucks with grid coverage.

    A truck's platooned timesteps are the union over its patterns, so overlapping
    patterns are counted once.
    """
    platooned: dict[str, set[int]] = {}
    for p in patterns:
        for tid in p.trucks:
            platooned.setdefault(tid, set()).update(p.timesteps)
    per = {}
    sd = st = spd = spt = 0.0
    for tid in sorted(odometers, key=natural_key):
        odo = odometers[tid]
        d_all = sum(step_distance(odo, t) or 0.0 for t in odo)
        t_all = len(odo) * dt_s
        steps = platooned.get(tid, set()) & set(odo)
        d_pl = sum(step_distance(odo, t) or 0.0 for t in steps)
        t_pl = len(steps) * dt_s
        per[tid] = {"D": d_all, "T": t_all, "PD": d_pl, "PT": t_pl}
        sd, st, spd, spt = sd + d_all, st + t_all, spd + d_pl, spt + t_pl
    return FleetMetrics(spd / sd if sd > 0 else 0.0, spt / st if st > 0 else 0.0, len(per), per)


def haul_buckets(fleet: FleetMetrics, bucket_km: float = 100.0) -> list[dict]:
    """Trucks grouped by total distance driven, with each bucket's platooned shares."""
    if not bucket_km > 0:
        raise ValueError("bucket_km must be positive")
    buckets: dict[int, dict] = {}
    for rec in fleet.per_truck.values():
        b = int(rec["D"] / 1000.0 // bucket_km)
        acc = buckets.setdefault(b, {"n": 0, "D": 0.0, "T": 0.0, "PD": 0.0, "PT": 0.0})
        acc["n"] += 1
        for k in ("D", "T", "PD", "PT"):
            acc[k] += rec[k]
    out = []
    for b in sorted(buckets):
        acc = buckets[b]
        out.append({
            "from_km": b * bucket_km, "to_km": (b + 1) * bucket_km, "n_trucks": acc["n"],
            "pdr": acc["PD"] / acc["D"] if acc["D"] > 0 else 0.0,
            "ptr": acc["PT"] / acc["T"] if acc["T"] > 0 else 0.0,
        })
    return out


# ---------------------------------------------------------------- hotspots
def segment_hotspots(patterns: list[PlatoonPattern], segment_at, segment_ids=()) -> list[tuple[str, int]]:
    """Count (pattern, timestep, member) occurrences per segment, busiest first.

    ``segment_at(truck_id, t)`` gives the segment a truck is on at a grid step.
    Segments listed in ``segment_ids`` appear with count 0 when never hit.
    """
    counts: Counter = Counter({sid: 0 for sid in segment_ids})
    for p in patterns:
        for t in p.timesteps:
            for tid in p.trucks:
                sid = segment_at(tid, t)
                if sid is not None:
                    counts[sid] += 1
    return sorted(counts.items(), key=lambda kv: (-kv[1], natural_key(kv[0])))


def write_hotspots(csv_path, geojson_path, hotspots, graph) -> None:
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_id", "road_class", "count"])
        for sid, n in hotspots:
            w.writerow([sid, graph.segments[sid].road_class.value, n])
    features = []
    for sid, n in hotspots:
        seg = graph.segments[sid]
        features.append({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": [[lon, lat] for lon, lat in seg.geometry]},
            "properties": {"segment_id": sid, "road_class": seg.road_class.value, "count": n},
        })
    with open(geojson_path, "w") as fh:
        json.dump({"type": "FeatureCollection", "features": features}, fh, indent=1, sort_keys=True)
        fh.write("\n")


# --------------------------------------------------------------- headline
def headline_stats(n_trucks: int, patterns: list[PlatoonPattern], fleet: FleetMetrics, savings=None,
                   codriving_trucks: set | None = None) -> dict:
    """The day-level figures: share of trucks ever in a platoon pattern, PDR, PTR,
    share of patterns worth coordinating, and fleet fuel saving."""
    in_pattern = {tid for p in patterns for tid in p.trucks}
    out = {
        "n_trucks": n_trucks,
        "n_patterns": len(patterns),
        "share_trucks_platooning": len(in_pattern) / n_trucks if n_trucks else 0.0,
        "pdr": fleet.pdr,
        "ptr": fleet.ptr,
    }
    if codriving_trucks is not None:
        out["share_trucks_codriving"] = len(codriving_trucks) / n_trucks if n_trucks else 0.0
    if savings is not None:
        out["share_patterns_coordinable"] = savings.coordinable_share
        out["fleet_fuel_saving_pct"] = savings.fleet_saving_pct
        out["fleet_baseline_ml"] = savings.fleet_baseline_ml
        out["fleet_platooned_ml"] = savings.fleet_platooned_ml
    return out
