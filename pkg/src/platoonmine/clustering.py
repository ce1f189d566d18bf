"""Instantaneous co-driving set detection: OPTICS under the following distance,
then reachability-plot valley refinement with the angle/rate criteria."""

from __future__ import annotations

import csv
import heapq
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .following import SnapshotTruck, following_distance, member_gaps, order_front_to_back
from .geo import geo_distance, to_local
from .ids import natural_key
from .network import INF, RoadClass, RoadGraph

SENTINEL_FACTOR = 1.01


@dataclass(frozen=True)
class ClusterParams:
    eps_km: float = 1.0
    min_pts: int = 2
    delta: float = 0.5
    theta_thresh_deg: float = 150.0
    lambda_thresh: float = 0.0
    ete_cutoff_km: float | None = None  # None means 3 * eps_km

    def __post_init__(self):
        if not self.eps_km > 0:
            raise ValueError("eps_km must be positive")
        if self.min_pts < 2:
            raise ValueError("min_pts must be at least 2")
        if not self.delta > 0:
            raise ValueError("delta must be positive")

    @property
    def eps_m(self) -> float:
        return self.eps_km * 1000.0

    @property
    def cutoff_m(self) -> float:
        return 1000.0 * (self.ete_cutoff_km if self.ete_cutoff_km is not None else 3.0 * self.eps_km)

    @property
    def sentinel(self) -> float:
        return SENTINEL_FACTOR * self.eps_km


@dataclass
class OpticsOutput:
    ordering: list[str]
    reach_dist: list[float]
    core_dist: list[float]


@dataclass(frozen=True)
class CoDrivingSet:
    timestep: int
    members: tuple[str, ...]
    road_class: RoadClass
    positions: tuple[SnapshotTruck, ...] = field(repr=False)
    headways_m: tuple[float, ...] = ()

    @property
    def size(self) -> int:
        return len(self.members)


# ------------------------------------------------------------ FD structure
def neighbor_pairs(snapshot: list[SnapshotTruck], radius_m: float) -> list[tuple[int, int]]:
    """Index pairs ``i < j`` whose geographic distance is at most ``radius_m``."""
    n = len(snapshot)
    if n < 2:
        return []
    lon = np.array([t.lonlat[0] for t in snapshot])
    lat = np.array([t.lonlat[1] for t in snapshot])
    x, y = to_local(lon, lat, float(lon.mean()), float(lat.mean()))
    # the flat frame distorts by well under 1% at these ranges; pad the cell a little
    cell = radius_m * 1.02
    buckets: dict[tuple[int, int], list[int]] = {}
    keys = [(int(math.floor(a / cell)), int(math.floor(b / cell))) for a, b in zip(x, y)]
    for i, k in enumerate(keys):
        buckets.setdefault(k, []).append(i)
    pairs = []
    for i, (cx, cy) in enumerate(keys):
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in buckets.get((cx + dx, cy + dy), ()):
                    if j > i and geo_distance(snapshot[i].lonlat, snapshot[j].lonlat) <= radius_m:
                        pairs.append((i, j))
    pairs.sort()
    return pairs


def fd_neighbors(snapshot: list[SnapshotTruck], graph: RoadGraph, params: ClusterParams) -> list[dict[int, float]]:
    """Finite following distances (km) between geographically close trucks."""
    nbrs: list[dict[int, float]] = [{} for _ in snapshot]
    for i, j in neighbor_pairs(snapshot, params.eps_m):
        d = following_distance(snapshot[i], snapshot[j], graph, params.eps_m, params.cutoff_m)
        if d < INF:
            nbrs[i][j] = nbrs[j][i] = d / 1000.0
    return nbrs


# ------------------------------------------------------------------ OPTICS
def p_optics(snapshot: list[SnapshotTruck], graph: RoadGraph, params: ClusterParams | None = None,
             nbrs: list[dict[int, float]] | None = None) -> OpticsOutput:
    """OPTICS ordering with the following distance as metric.

    The ordering is generated over every finite following distance, so a truck whose
    nearest follower is further than eps still links into the plot.  Reported core
    distances are undefined (inf) beyond eps, and any finite reachability distance
    beyond eps is reported as the ``1.01 * eps`` sentinel.
    """
    params = params or ClusterParams()
    snapshot = sorted(snapshot, key=lambda t: natural_key(t.truck_id))
    n = len(snapshot)
    if nbrs is None:
        nbrs = fd_neighbors(snapshot, graph, params)
    k = params.min_pts - 1  # the point itself counts toward min_pts
    gen_core = []
    for i in range(n):
        ds = sorted(nbrs[i].values())
        gen_core.append(ds[k - 1] if len(ds) >= k else INF)

    reach = [INF] * n
    done = [False] * n
    order: list[int] = []

    def expand(p: int, heap: list) -> None:
        if gen_core[p] == INF:
            return
        for q, d in nbrs[p].items():
            if done[q]:
                continue
            rd = max(gen_core[p], d)
            if rd < reach[q]:
                reach[q] = rd
                heapq.heappush(heap, (rd, q))

    for start in range(n):  # snapshot is sorted, so index order is truck id order
        if done[start]:
            continue
        done[start] = True
        order.append(start)
        heap: list[tuple[float, int]] = []
        expand(start, heap)
        while heap:
            rd, q = heapq.heappop(heap)
            if done[q] or rd > reach[q]:
                continue
            done[q] = True
            order.append(q)
            expand(q, heap)

    eps, sentinel = params.eps_km, params.sentinel
    out_rd, out_cd = [], []
    for pos, i in enumerate(order):
        rd = reach[i]
        out_rd.append(sentinel if eps < rd < INF else rd)
        out_cd.append(gen_core[i] if gen_core[i] <= eps else INF)
    return OpticsOutput([snapshot[i].truck_id for i in order], out_rd, out_cd)


# ------------------------------------------------------ valley refinement
def angle_lambda(ordered_rd, y: int, delta: float) -> tuple[float, float]:
    """Angle (degrees) at ``y`` between the plot vectors to its neighbors, and the rate."""
    if not 1 <= y <= len(ordered_rd) - 2:
        raise ValueError("y needs a neighbor on both sides")
    xr, yr, zr = ordered_rd[y - 1], ordered_rd[y], ordered_rd[y + 1]
    if not all(math.isfinite(v) for v in (xr, yr, zr)):
        raise ValueError("angle undefined next to an infinite reachability distance")
    a, b = xr - yr, zr - yr
    cos = (-delta * delta + a * b) / (math.hypot(delta, a) * math.hypot(delta, b))
    theta = math.degrees(math.acos(min(1.0, max(-1.0, cos))))
    lam = -delta * b - delta * a
    return theta, lam


def find_valley(core_dist, eps_km: float = 1.0) -> list[range]:
    """Runs of consecutive core positions, widened by one position on each side."""
    idx = [i for i, c in enumerate(core_dist) if c < eps_km]
    n = len(core_dist)
    out = []
    i = 0
    while i < len(idx):
        j = i
        while j + 1 < len(idx) and idx[j + 1] == idx[j] + 1:
            j += 1
        out.append(range(max(0, idx[i] - 1), min(n, idx[j] + 2)))
        i = j + 1
    return out


def _trim_run(vr: list[float], members: list[int], params: ClusterParams) -> list[list[int]]:
    """Apply the front / end rules to one density-connected run.

    ``vr`` holds the plot values with the run's neighbors at ``members[0] - 1`` and
    ``members[-1] + 1``.  Returns the emitted index lists (positions in ``vr``).
    """
    out = []
    start = members[0]
    for i in members:
        theta, lam = angle_lambda(vr, i, params.delta)
        if theta >= params.theta_thresh_deg:
            continue
        prev, nxt = vr[i - 1], vr[i + 1]
        if lam > params.lambda_thresh:
            # front of a platoon when the plot is lower after it, else an outlier beside one
            if nxt < prev:
                start = i
        elif lam < -params.lambda_thresh:
            # end of a platoon when the plot is higher after it, else the second truck
            if nxt > prev and start is not None:
                if i - start + 1 >= params.min_pts:
                    out.append(list(range(start, i + 1)))
                start = None
    if start is not None and members[-1] - start + 1 >= params.min_pts:
        out.append(list(range(start, members[-1] + 1)))
    return out


def adaptive_recognition(valleys, ordered_rd, params: ClusterParams | None = None,
                         core_dist=None) -> list[list[int]]:
    """Trim sparse boundary trucks from each valley; returns ordering-position lists.

    The two boundary positions of a valley take the sentinel value and are never
    members.  When ``core_dist`` shows a valley was clipped at the end of the
    ordering (its edge position is itself a core), a virtual sentinel stands in for
    the missing boundary instead.
    """
    params = params or ClusterParams()
    eps, sentinel = params.eps_km, params.sentinel
    out = []
    for v in valleys:
        lo, hi = v.start, v.stop - 1
        left_clip = core_dist is not None and core_dist[lo] < eps
        right_clip = core_dist is not None and core_dist[hi] < eps
        positions = list(range(lo, hi + 1))
        vr = [min(ordered_rd[p], sentinel) for p in positions]
        if left_clip:
            positions.insert(0, None)
            vr.insert(0, sentinel)
        else:
            vr[0] = sentinel
        if right_clip:
            positions.append(None)
            vr.append(sentinel)
        else:
            vr[-1] = sentinel
        if len(vr) < 3:
            continue
        inner = list(range(1, len(vr) - 1))
        # split into density-connected runs: a jump above eps starts a new run
        runs, cur = [], [inner[0]]
        for i in inner[1:]:
            if vr[i] > eps:
                runs.append(cur)
                cur = [i]
            else:
                cur.append(i)
        runs.append(cur)
        for run in runs:
            for emitted in _trim_run(vr, run, params):
                out.append([positions[i] for i in emitted])
    return out


# ---------------------------------------------------------------- pipeline
def _majority_class(trucks) -> RoadClass:
    counts = Counter(t.road_class for t in trucks)
    return max(RoadClass, key=lambda c: (counts.get(c, 0), c is RoadClass.EXPRESSWAY))


def _fd_components(trucks, graph: RoadGraph, params: ClusterParams) -> list[list[SnapshotTruck]]:
    """Connected components of ``FD <= eps`` among ``trucks``, in input order."""
    parent = list(range(len(trucks)))

    def root(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(trucks)):
        for j in range(i + 1, len(trucks)):
            if following_distance(trucks[i], trucks[j], graph, params.eps_m, params.cutoff_m) <= params.eps_m:
                parent[root(j)] = root(i)
    comps: dict[int, list] = {}
    for i, t in enumerate(trucks):
        comps.setdefault(root(i), []).append(t)
    return list(comps.values())


def _split_conflicts(trucks, graph: RoadGraph, params: ClusterParams) -> list[list[SnapshotTruck]]:
    """Order a recognized group front to back, splitting it where two members drive
    opposite ways on one segment.

    That only happens around short loops, where trucks are chained together through
    others driving round the block.  The order is cut before the first conflicting
    member and each part is split again into its connected pieces.
    """
    ordered = order_front_to_back(trucks, graph, params.cutoff_m * len(trucks))
    heading: dict[str, int] = {}
    for k, t in enumerate(ordered):
        if heading.setdefault(t.segment_id, t.dir) != t.dir:
            break
    else:
        return [ordered]
    out = []
    for part in (ordered[:k], ordered[k:]):
        for comp in _fd_components(part, graph, params):
            if len(comp) >= params.min_pts:
                out.extend(_split_conflicts(comp, graph, params))
    return out


def detect_codriving_sets(snapshot, graph: RoadGraph, params: ClusterParams | None = None,
                          timestep: int = 0) -> list[CoDrivingSet]:
    params = params or ClusterParams()
    snapshot = sorted(snapshot, key=lambda t: natural_key(t.truck_id))
    if len(snapshot) < params.min_pts:
        return []
    nbrs = fd_neighbors(snapshot, graph, params)
    opt = p_optics(snapshot, graph, params, nbrs=nbrs)
    by_id = {t.truck_id: t for t in snapshot}
    sets = []
    for group in adaptive_recognition(find_valley(opt.core_dist, params.eps_km), opt.reach_dist, params,
                                      core_dist=opt.core_dist):
        trucks = [by_id[opt.ordering[p]] for p in group]
        for ordered in _split_conflicts(trucks, graph, params):
            heads = member_gaps(ordered, graph, params.eps_m, params.cutoff_m * len(ordered))
            sets.append(CoDrivingSet(
                timestep=timestep,
                members=tuple(t.truck_id for t in ordered),
                road_class=_majority_class(ordered),
                positions=tuple(ordered),
                headways_m=heads,
            ))
    sets.sort(key=lambda s: natural_key(min(s.members, key=natural_key)))
    return sets


SETS_HEADER = ["timestep", "set_id", "truck_id", "segment_id", "r", "dir", "road_class"]


def write_sets(path, sets_by_t: dict[int, list[CoDrivingSet]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SETS_HEADER)
        for t in sorted(sets_by_t):
            for k, s in enumerate(sets_by_t[t]):
                for pos in s.positions:
                    w.writerow([t, k, pos.truck_id, pos.segment_id, f"{pos.r:.9f}", pos.dir, s.road_class.value])


def read_sets(path) -> dict[int, list[tuple[str, ...]]]:
    """Member tuples (front to back) per timestep, as written by :func:`write_sets`."""
    groups: dict[tuple[int, int], list[str]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, [])
        if [h.strip() for h in header] != SETS_HEADER:
            raise ValueError(f"{path}:1: expected header {','.join(SETS_HEADER)}")
        for row in reader:
            if row:
                groups.setdefault((int(row[0]), int(row[1])), []).append(row[2])
    out: dict[int, list[tuple[str, ...]]] = {}
    for (t, _), members in sorted(groups.items()):
        out.setdefault(t, []).append(tuple(members))
    return out
