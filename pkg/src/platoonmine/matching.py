"""HMM map matching with the driving direction folded into the hidden state.

Each hidden state is a ``(segment, dir)`` pair, so choosing between "along" and
"against" the digitized direction of a segment happens inside the Viterbi search
instead of as a greedy post-processing step.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from .geo import geo_distance
from .ids import natural_key
from .network import ALONG, AGAINST, INF, Projection, RoadGraph

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class TrajectoryRejected(ValueError):
    """Raised when a trajectory cannot be matched; ``reason`` says why."""

    def __init__(self, truck_id, reason: str):
        super().__init__(f"truck {truck_id}: {reason}")
        self.truck_id = truck_id
        self.reason = reason


@dataclass(frozen=True)
class TruckPoint:
    truck_id: str
    timestamp: float
    lon: float
    lat: float
    altitude_m: float = 0.0
    speed_mps: float | None = None

    @property
    def lonlat(self) -> tuple[float, float]:
        return (self.lon, self.lat)


@dataclass(frozen=True)
class MatchedPoint:
    truck_id: str
    timestamp: float
    segment_id: str
    r: float
    dir: int
    snapped_lonlat: tuple[float, float]
    altitude_m: float = 0.0


@dataclass(frozen=True)
class HmmParams:
    match_radius_m: float = 50.0
    emission_sigma_m: float = 20.0
    transition_beta: float = 200.0
    speed_weight: float = 0.05
    max_skip: int = 4
    max_speed_mps: float = 50.0
    # backward moves this short on one arc are GPS jitter, not a loop around the block
    backward_slack_m: float = 40.0

    def __post_init__(self):
        for name in ("match_radius_m", "emission_sigma_m", "transition_beta", "speed_weight", "max_speed_mps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_skip < 0 or self.backward_slack_m < 0:
            raise ValueError("max_skip and backward_slack_m must be non-negative")


@dataclass(frozen=True)
class State:
    """Hypothesis for one observation: projection onto a segment plus a direction."""

    segment_id: str
    r: float
    dir: int
    perp_dist_m: float = 0.0
    snapped_lonlat: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def of(cls, proj: Projection, direction: int) -> "State":
        return cls(proj.segment_id, proj.r, direction, proj.perp_dist_m, proj.snapped_lonlat)


def state_order(s) -> tuple:
    return (natural_key(s.segment_id), 0 if s.dir == ALONG else 1)


# ------------------------------------------------------------- probabilities
def log_emission(perp_dist_m: float, params: HmmParams) -> float:
    sigma = params.emission_sigma_m
    return -0.5 * (perp_dist_m / sigma) ** 2 - math.log(sigma) - _LOG_SQRT_2PI


def emission_prob(proj: Projection, params: HmmParams) -> float:
    """Zero-mean Gaussian density of the perpendicular distance."""
    if proj.perp_dist_m < 0:
        raise ValueError("perp_dist_m must be non-negative")
    return math.exp(log_emission(proj.perp_dist_m, params))


def _arc_offset(graph: RoadGraph, s) -> tuple[int | None, float]:
    arc = graph.arc(s.segment_id, s.dir)
    length = graph.segments[s.segment_id].length_m
    off = s.r * length if s.dir == ALONG else (1.0 - s.r) * length
    return arc, off


def route_between(prev, nxt, graph: RoadGraph, params: HmmParams, cutoff: float = INF) -> float:
    """Directed network distance from ``prev`` to ``nxt`` honoring both hypothesized dirs."""
    arc_a, off_a = _arc_offset(graph, prev)
    arc_b, off_b = _arc_offset(graph, nxt)
    if arc_a is None or arc_b is None:
        return INF
    return graph.route_distance(arc_a, off_a, arc_b, off_b, cutoff, params.backward_slack_m)


def _route_cutoff(gc_m: float, params: HmmParams) -> float:
    # beyond this the transition density is below e^-10 of its peak
    return gc_m + 10.0 * params.transition_beta


def log_transition(prev, nxt, gc_m: float, dt_s: float, graph: RoadGraph, params: HmmParams) -> float:
    if not dt_s > 0:
        raise ValueError("time gap must be positive")
    d = route_between(prev, nxt, graph, params, _route_cutoff(gc_m, params))
    if d == INF:
        return -INF
    diff = abs(d - gc_m)
    return -diff / params.transition_beta - params.speed_weight * diff / dt_s


def transition_prob(prev, nxt, obs_gap: tuple[float, float], graph: RoadGraph, params: HmmParams) -> float:
    """Transition density for a pair of candidate states.

    ``obs_gap`` is ``(great-circle meters, seconds)`` between the two observations.
    Infeasible direction hypotheses (against a oneway, no directed path) give 0.
    """
    gc_m, dt_s = obs_gap
    lp = log_transition(prev, nxt, gc_m, dt_s, graph, params)
    return 0.0 if lp == -INF else math.exp(lp)


# ------------------------------------------------------------------ cleaning
def clean_points(points, params: HmmParams) -> list[TruckPoint]:
    """Sort, drop duplicate timestamps (first wins), and drop fixes implying overspeed."""
    pts = sorted(points, key=lambda p: p.timestamp)
    out: list[TruckPoint] = []
    for p in pts:
        if out and p.timestamp <= out[-1].timestamp:
            continue
        if out:
            last = out[-1]
            if geo_distance(last.lonlat, p.lonlat) / (p.timestamp - last.timestamp) > params.max_speed_mps:
                continue
        out.append(p)
    return out


def candidate_states(graph: RoadGraph, point: TruckPoint, params: HmmParams) -> list[State]:
    states = []
    for proj in graph.candidates(point.lonlat, params.match_radius_m):
        states.append(State.of(proj, ALONG))
        if not graph.segments[proj.segment_id].oneway:
            states.append(State.of(proj, AGAINST))
    states.sort(key=state_order)
    return states


# ------------------------------------------------------------------- viterbi
# scores this close to the best count as ties, broken by candidate order
TIE_TOL = 1e-9


class _Chain:
    def __init__(self, point, layer, params):
        self.points = [point]
        self.layers = [layer]
        self.emit = [[log_emission(s.perp_dist_m, params) for s in layer]]
        self.trans: list[list[list[float]]] = [[]]
        self.scores = list(self.emit[0])

    def step(self, point, layer, graph, params) -> bool:
        """Extend by one observation; False (and no change) if no state is reachable."""
        p0 = self.points[-1]
        gc = geo_distance(p0.lonlat, point.lonlat)
        dt = point.timestamp - p0.timestamp
        prev_layer, scores = self.layers[-1], self.scores
        emit = [log_emission(s.perp_dist_m, params) for s in layer]
        trans = [[-INF if scores[j] == -INF else log_transition(prev, s, gc, dt, graph, params) for s in layer]
                 for j, prev in enumerate(prev_layer)]
        new_scores = []
        for i in range(len(layer)):
            best = max((scores[j] + trans[j][i] for j in range(len(prev_layer))), default=-INF)
            new_scores.append(best + emit[i] if best > -INF else -INF)
        if all(v == -INF for v in new_scores):
            return False
        self.points.append(point)
        self.layers.append(layer)
        self.emit.append(emit)
        self.trans.append(trans)
        self.scores = new_scores
        return True

    def decode(self) -> list[State]:
        """The optimal path; among (near-)ties the first in candidate order, compared
        from the first observation on."""
        n = len(self.layers)
        togo = [None] * n
        togo[-1] = list(self.emit[-1])
        for k in range(n - 2, -1, -1):
            nxt, trans = togo[k + 1], self.trans[k + 1]
            togo[k] = [e + max((t + g for t, g in zip(trans[j], nxt)), default=-INF)
                       for j, e in enumerate(self.emit[k])]
        best = max(togo[0])
        tol = TIE_TOL * max(1.0, abs(best))
        cur = next(j for j, v in enumerate(togo[0]) if v >= best - tol)
        path = [cur]
        for k in range(1, n):
            need = togo[k - 1][cur] - self.emit[k - 1][cur]
            cur = next(i for i, g in enumerate(togo[k]) if self.trans[k][cur][i] + g >= need - tol)
            path.append(cur)
        return [self.layers[k][j] for k, j in enumerate(path)]


def decode_chains(points, graph: RoadGraph, params: HmmParams) -> list[tuple[list, list[State]]]:
    """Viterbi over matchable points, split into independent chains.

    Points without candidates are skipped and bridged by routing from the last matched
    state.  A chain ends after more than ``max_skip`` consecutive skips, or when no
    state of the next point is reachable from the current chain.
    """
    chains: list[_Chain] = []
    cur: _Chain | None = None
    skipped = 0
    for p in points:
        layer = candidate_states(graph, p, params)
        if not layer:
            skipped += 1
            continue
        if cur is None or skipped > params.max_skip or not cur.step(p, layer, graph, params):
            cur = _Chain(p, layer, params)
            chains.append(cur)
        skipped = 0
    return [(c.points, c.decode()) for c in chains]


def match_trajectory(points, graph: RoadGraph, params: HmmParams | None = None) -> list[MatchedPoint]:
    """Viterbi-optimal ``(segment, dir)`` sequence for one truck's trajectory."""
    params = params or HmmParams()
    points = list(points)
    truck_id = points[0].truck_id if points else None
    if len(points) < 2:
        raise TrajectoryRejected(truck_id, "fewer than 2 points")
    chains = decode_chains(clean_points(points, params), graph, params)
    if sum(len(c[0]) for c in chains) < 2:
        raise TrajectoryRejected(truck_id, "fewer than 2 matchable points")
    out = []
    for pts, states in chains:
        for p, s in zip(pts, states):
            out.append(MatchedPoint(p.truck_id, p.timestamp, s.segment_id, s.r, s.dir, s.snapped_lonlat, p.altitude_m))
    return out


def path_log_prob(points, states, graph: RoadGraph, params: HmmParams) -> float:
    """Log score of a given state sequence; the objective Viterbi maximizes."""
    total = log_emission(states[0].perp_dist_m, params)
    for k in range(1, len(points)):
        gc = geo_distance(points[k - 1].lonlat, points[k].lonlat)
        dt = points[k].timestamp - points[k - 1].timestamp
        total += log_transition(states[k - 1], states[k], gc, dt, graph, params)
        total += log_emission(states[k].perp_dist_m, params)
    return total


def match_all(trajectories: dict, graph: RoadGraph, params: HmmParams | None = None):
    """Match every truck; returns ``(matched_by_truck, rejected)`` in truck id order."""
    matched, rejected = {}, {}
    for tid in sorted(trajectories, key=natural_key):
        try:
            matched[tid] = match_trajectory(trajectories[tid], graph, params)
        except TrajectoryRejected as exc:
            rejected[tid] = exc.reason
    return matched, rejected


# ----------------------------------------------------------------------- I/O
TRAJ_HEADER = ["truck_id", "timestamp", "lon", "lat", "altitude_m"]
MATCHED_HEADER = ["truck_id", "timestamp", "segment_id", "r", "dir", "snap_lon", "snap_lat", "altitude_m"]


def read_trajectories(path) -> dict[str, list[TruckPoint]]:
    out: dict[str, list[TruckPoint]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header[:5] != TRAJ_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(TRAJ_HEADER)}[,speed_mps]")
        has_speed = len(header) > 5 and header[5] == "speed_mps"
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                speed = float(row[5]) if has_speed and len(row) > 5 and row[5].strip() else None
                p = TruckPoint(row[0].strip(), float(row[1]), float(row[2]), float(row[3]),
                               float(row[4]) if row[4].strip() else 0.0, speed)
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            out[p.truck_id].append(p)
    return {k: sorted(v, key=lambda p: p.timestamp) for k, v in sorted(out.items(), key=lambda kv: natural_key(kv[0]))}


def write_trajectories(path, trajectories: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRAJ_HEADER + ["speed_mps"])
        for tid in sorted(trajectories, key=natural_key):
            for p in trajectories[tid]:
                w.writerow([p.truck_id, _num(p.timestamp), f"{p.lon:.7f}", f"{p.lat:.7f}", f"{p.altitude_m:.2f}",
                            "" if p.speed_mps is None else f"{p.speed_mps:.3f}"])


def write_matched(path, matched: dict) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCHED_HEADER)
        for tid in sorted(matched, key=natural_key):
            for m in matched[tid]:
                w.writerow([m.truck_id, _num(m.timestamp), m.segment_id, f"{m.r:.9f}", m.dir,
                            f"{m.snapped_lonlat[0]:.7f}", f"{m.snapped_lonlat[1]:.7f}", f"{m.altitude_m:.2f}"])


def read_matched(path) -> dict[str, list[MatchedPoint]]:
    out: dict[str, list[MatchedPoint]] = defaultdict(list)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader, [])]
        if header != MATCHED_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(MATCHED_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                m = MatchedPoint(row[0], float(row[1]), row[2], float(row[3]), int(row[4]),
                                 (float(row[5]), float(row[6])), float(row[7]))
            except (IndexError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            out[m.truck_id].append(m)
    return {k: out[k] for k in sorted(out, key=natural_key)}


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
