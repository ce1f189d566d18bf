"""Put matched trajectories on the common time grid and build per-timestep snapshots."""

from __future__ import annotations

import bisect
import csv
import math
from collections import defaultdict
from dataclasses import dataclass

from ..following import SnapshotTruck
from ..geo import geo_distance
from ..ids import natural_key
from ..network import ALONG, INF, RoadGraph


@dataclass(frozen=True)
class GridPoint:
    truck_id: str
    timestep: int
    segment_id: str
    r: float
    dir: int
    lonlat: tuple[float, float]
    altitude_m: float
    odo_m: float


def _arc_off(graph: RoadGraph, m):
    arc = graph.arc(m.segment_id, m.dir)
    length = graph.segments[m.segment_id].length_m
    return arc, (m.r * length if m.dir == ALONG else (1.0 - m.r) * length)


def _place(graph: RoadGraph, arc: int, off: float) -> tuple[str, float, int]:
    seg = graph.arc_segment(arc)
    d = graph.arc_dir(arc)
    length = graph.arc_length(arc)
    frac = min(1.0, max(0.0, off / length))
    return seg, (frac if d == ALONG else 1.0 - frac), d


@dataclass
class _Leg:
    t0: float
    t1: float
    dist: float  # signed along-route distance; may be slightly negative for jitter
    path: list[int]
    off0: float
    ok: bool


def _walk(graph: RoadGraph, leg: _Leg, s: float) -> tuple[int, float]:
    if len(leg.path) == 1:
        return leg.path[0], leg.off0 + s
    rem = graph.arc_length(leg.path[0]) - leg.off0
    if s <= rem:
        return leg.path[0], leg.off0 + s
    s -= rem
    for arc in leg.path[1:-1]:
        length = graph.arc_length(arc)
        if s <= length:
            return arc, s
        s -= length
    return leg.path[-1], s


def resample(matched, graph: RoadGraph, dt_s: float = 15.0, staleness_s: float = 30.0,
             max_speed_mps: float = 50.0, backward_slack_m: float = 40.0) -> list[GridPoint]:
    """Grid positions of one truck, interpolated along its matched route.

    A grid instant is active when it coincides with a fix, or when the two fixes
    bracketing it are at most ``staleness_s`` apart and joined by a route.
    """
    pts = sorted(matched, key=lambda m: m.timestamp)
    if not pts:
        return []
    legs: list[_Leg] = []
    for a, b in zip(pts, pts[1:]):
        dt = b.timestamp - a.timestamp
        arc_a, off_a = _arc_off(graph, a)
        arc_b, off_b = _arc_off(graph, b)
        d, path = INF, []
        if dt <= staleness_s and arc_a is not None and arc_b is not None:
            d, path = graph.route_path(arc_a, off_a, arc_b, off_b, max_speed_mps * dt + backward_slack_m,
                                       backward_slack_m)
            if d < INF and len(path) == 1:
                d = off_b - off_a
        legs.append(_Leg(a.timestamp, b.timestamp, d, path, off_a, d < INF))

    # odometer: route distance where known, straight line across breaks
    odo = [0.0]
    for a, b, leg in zip(pts, pts[1:], legs):
        step = max(0.0, leg.dist) if leg.ok else geo_distance(a.snapped_lonlat, b.snapped_lonlat)
        odo.append(odo[-1] + step)

    times = [p.timestamp for p in pts]
    out = []
    k0 = int(math.ceil(times[0] / dt_s - 1e-9))
    k1 = int(math.floor(times[-1] / dt_s + 1e-9))
    for k in range(k0, k1 + 1):
        g = k * dt_s
        i = bisect.bisect_right(times, g + 1e-9) - 1
        i = min(max(i, 0), len(pts) - 1)
        p = pts[i]
        if abs(times[i] - g) <= 1e-9:
            out.append(GridPoint(p.truck_id, k, p.segment_id, p.r, p.dir, p.snapped_lonlat, p.altitude_m, odo[i]))
            continue
        if i >= len(legs):
            continue
        leg = legs[i]
        if not leg.ok:
            continue
        f = (g - leg.t0) / (leg.t1 - leg.t0)
        arc, off = _walk(graph, leg, f * leg.dist)
        seg, r, d = _place(graph, arc, off)
        alt = p.altitude_m + f * (pts[i + 1].altitude_m - p.altitude_m)
        out.append(GridPoint(p.truck_id, k, seg, r, d, graph.interpolate(seg, r), alt,
                             odo[i] + f * max(0.0, leg.dist)))
    return out


def snapshots(grid_points, graph: RoadGraph) -> dict[int, list[SnapshotTruck]]:
    by_t: dict[int, list[SnapshotTruck]] = defaultdict(list)
    for gp in grid_points:
        by_t[gp.timestep].append(SnapshotTruck.on(graph, gp.truck_id, gp.segment_id, gp.r, gp.dir,
                                                  lonlat=gp.lonlat, altitude_m=gp.altitude_m))
    return {t: sorted(v, key=lambda s: natural_key(s.truck_id)) for t, v in sorted(by_t.items())}


GRID_HEADER = ["truck_id", "timestep", "segment_id", "r", "dir", "lon", "lat", "altitude_m", "odo_m"]


def write_grid(path, points) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GRID_HEADER)
        for gp in points:
            w.writerow([gp.truck_id, gp.timestep, gp.segment_id, f"{gp.r:.9f}", gp.dir, f"{gp.lonlat[0]:.7f}",
                        f"{gp.lonlat[1]:.7f}", f"{gp.altitude_m:.2f}", f"{gp.odo_m:.3f}"])


def read_grid(path) -> list[GridPoint]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if [h.strip() for h in header] != GRID_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(GRID_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                out.append(GridPoint(row[0], int(row[1]), row[2], float(row[3]), int(row[4]),
                                     (float(row[5]), float(row[6])), float(row[7]), float(row[8])))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
