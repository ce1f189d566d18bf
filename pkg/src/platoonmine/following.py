"""Network-constrained following distance between two map-matched trucks."""

from __future__ import annotations

import heapq
from dataclasses import dataclass

from .ids import natural_key
from .network import ALONG, INF, RoadClass, RoadGraph


@dataclass(frozen=True)
class SnapshotTruck:
    """One truck's matched position at a single grid timestep."""

    truck_id: str
    segment_id: str
    r: float
    dir: int
    seglen_m: float
    to_node: str
    lonlat: tuple[float, float]
    altitude_m: float = 0.0
    road_class: RoadClass = RoadClass.TRUNK

    @classmethod
    def on(cls, graph: RoadGraph, truck_id, segment_id, r, direction, *, lonlat=None, altitude_m=0.0):
        seg = graph.segments[segment_id]
        if direction != ALONG and seg.oneway:
            raise ValueError(f"segment {segment_id!r} is oneway; dir must be ALONG")
        return cls(
            truck_id=truck_id,
            segment_id=segment_id,
            r=float(r),
            dir=direction,
            seglen_m=seg.length_m,
            to_node=graph.heading_node(segment_id, direction),
            lonlat=lonlat if lonlat is not None else graph.interpolate(segment_id, r),
            altitude_m=altitude_m,
            road_class=seg.road_class,
        )

    @property
    def offset_m(self) -> float:
        """Distance already driven on the current segment in the direction of travel."""
        return (1.0 - theta_remaining(self)) * self.seglen_m


def theta_remaining(t: SnapshotTruck) -> float:
    """Fraction of the segment still ahead of the truck."""
    return 1.0 - t.r if t.dir == ALONG else t.r


def catch_up_distance(a: SnapshotTruck, b: SnapshotTruck, graph: RoadGraph, cutoff: float = INF) -> float:
    """Distance ``a`` must drive to reach ``b``'s current position (``a`` follows ``b``).

    The route leaves ``a``'s heading node without a U-turn, never re-uses ``a``'s own
    segment, and reaches ``b`` by entering ``b``'s segment in ``b``'s direction.
    """
    if a.segment_id == b.segment_id:
        if a.dir != b.dir:
            return INF
        gap = b.offset_m - a.offset_m
        return gap if gap >= 0 else INF
    arc_a = graph.arc(a.segment_id, a.dir)
    arc_b = graph.arc(b.segment_id, b.dir)
    if arc_a is None or arc_b is None:
        return INF
    remaining = theta_remaining(a) * a.seglen_m
    leader_left = theta_remaining(b) * b.seglen_m
    ete = graph.constrained_arc_distance(arc_a, arc_b, cutoff - remaining + leader_left)
    if ete == INF:
        return INF
    cd = remaining + ete - leader_left
    return cd if cd <= cutoff else INF


def following_distance(a: SnapshotTruck, b: SnapshotTruck, graph: RoadGraph, eps_m: float = 1000.0,
                       cutoff: float | None = None) -> float:
    """Symmetric following distance in meters; ``inf`` when neither truck follows the other.

    ``cutoff`` (default ``3 * eps_m``) is the threshold above which an end-to-end
    distance counts as "much larger than eps" and the pair is not following.
    """
    if a.segment_id == b.segment_id:
        if a.dir != b.dir:
            return INF
        return a.seglen_m * abs(a.r - b.r)
    if cutoff is None:
        cutoff = 3.0 * eps_m
    return min(catch_up_distance(a, b, graph, cutoff), catch_up_distance(b, a, graph, cutoff))


def order_front_to_back(trucks, graph: RoadGraph, cutoff: float) -> list[SnapshotTruck]:
    """Order a co-driving group from the front truck to the last one.

    The front truck is the member that follows the fewest others.  The rest are
    placed by shortest chains of catch-up distances back to it, so every truck comes
    after one it follows.  Members no such chain reaches (possible around loops) are
    attached afterwards through any finite following distance; disconnected ones go
    last in id order.
    """
    trucks = sorted(trucks, key=lambda t: natural_key(t.truck_id))
    n = len(trucks)
    if n <= 1:
        return trucks
    cu = [[INF if i == j else catch_up_distance(trucks[i], trucks[j], graph, cutoff) for j in range(n)]
          for i in range(n)]
    front = min(range(n), key=lambda i: (sum(d < INF for d in cu[i]), i))
    dist = [INF] * n
    dist[front] = 0.0
    done = [False] * n
    order: list[int] = []
    heap = [(0.0, front)]

    def settle(weight):
        while heap:
            d, i = heapq.heappop(heap)
            if done[i] or d > dist[i]:
                continue
            done[i] = True
            order.append(i)
            for j in range(n):
                w = weight(j, i)
                if not done[j] and d + w < dist[j]:
                    dist[j] = d + w
                    heapq.heappush(heap, (dist[j], j))

    settle(lambda j, i: cu[j][i])  # j follows i
    if len(order) < n:
        either = lambda j, i: min(cu[j][i], cu[i][j])
        for i in order:
            for j in range(n):
                if not done[j] and dist[i] + either(j, i) < dist[j]:
                    dist[j] = dist[i] + either(j, i)
                    heapq.heappush(heap, (dist[j], j))
        settle(either)
    order += [i for i in range(n) if not done[i]]
    return [trucks[i] for i in order]


def member_gaps(ordered, graph: RoadGraph, eps_m: float = 1000.0, cutoff: float | None = None) -> tuple[float, ...]:
    """Gap of each member behind the front truck of an ordered group.

    The gap is the following distance to the nearest member ahead.  In a single file
    that is the truck directly in front; where two roads merge, trucks on different
    approaches may both trail the same leader without following each other.
    """
    gaps = []
    for k in range(1, len(ordered)):
        ahead = [following_distance(ordered[k], u, graph, eps_m, cutoff) for u in ordered[:k]]
        gaps.append(min(ahead))
    return tuple(gaps)
