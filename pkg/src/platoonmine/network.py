"""Road network: loading, spatial candidate search, projection and directed routing.

Every segment contributes one or two directed *arcs*.  Arc ``2*i`` traverses segment
``i`` from its ``from_node`` to its ``to_node`` (dir ALONG), arc ``2*i + 1`` the reverse
(dir AGAINST) and exists only for bidirectional segments.  Routing is arc based so the
no-U-turn rule (never leave a node on the reverse of the arc you arrived by) is exact.
"""

from __future__ import annotations

import csv
import heapq
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .geo import M_PER_DEG_LAT, geo_distance, polyline_length, to_local
from .ids import natural_key

ALONG = 0
AGAINST = -1
DIRS = (ALONG, AGAINST)
INF = math.inf


class NetworkError(ValueError):
    """Raised for malformed or inconsistent network files."""


class RoadClass(str, Enum):
    EXPRESSWAY = "expressway"
    TRUNK = "trunk"


@dataclass(frozen=True)
class RoadNode:
    node_id: str
    lon: float
    lat: float


@dataclass(frozen=True)
class RoadSegment:
    segment_id: str
    from_node: str
    to_node: str
    length_m: float
    road_class: RoadClass
    oneway: bool
    geometry: tuple[tuple[float, float], ...]


@dataclass(frozen=True)
class Projection:
    segment_id: str
    r: float
    perp_dist_m: float
    snapped_lonlat: tuple[float, float]


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "y", "t"):
        return True
    if t in ("0", "false", "no", "n", "f", ""):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_WKT_RE = re.compile(r"^\s*LINESTRING\s*\((.*)\)\s*$", re.IGNORECASE)


def parse_linestring(wkt: str) -> tuple[tuple[float, float], ...]:
    m = _WKT_RE.match(wkt)
    if not m:
        raise ValueError(f"unsupported geometry {wkt[:40]!r}")
    pts = []
    for pair in m.group(1).split(","):
        lon, lat = pair.split()
        pts.append((float(lon), float(lat)))
    if len(pts) < 2:
        raise ValueError("linestring needs at least two points")
    return tuple(pts)


def format_linestring(coords) -> str:
    return "LINESTRING (" + ", ".join(f"{lon!r} {lat!r}" for lon, lat in coords) + ")"


class RoadGraph:
    """Immutable directed road graph with a uniform-grid spatial index.

    Query methods are read-only.  Shortest-path trees are memoized per source arc; the
    memo only ever grows with entries that are a pure function of the graph, so
    concurrent readers at worst recompute a tree.
    """

    def __init__(self, nodes, segments, *, cell_m: float = 500.0, check_lengths: bool = True):
        self.nodes: dict[str, RoadNode] = {}
        for n in nodes:
            if n.node_id in self.nodes:
                raise NetworkError(f"duplicate node id {n.node_id!r}")
            if not (-180.0 <= n.lon <= 180.0 and -90.0 <= n.lat <= 90.0):
                raise NetworkError(f"node {n.node_id!r} has invalid coordinates")
            self.nodes[n.node_id] = n

        segs = {}
        for s in segments:
            if s.segment_id in segs:
                raise NetworkError(f"duplicate segment id {s.segment_id!r}")
            for nid in (s.from_node, s.to_node):
                if nid not in self.nodes:
                    raise NetworkError(f"segment {s.segment_id!r} references missing node {nid!r}")
            if s.from_node == s.to_node:
                raise NetworkError(f"segment {s.segment_id!r} is a self loop")
            if not s.length_m > 0:
                raise NetworkError(f"segment {s.segment_id!r} has non-positive length")
            if s.road_class is RoadClass.EXPRESSWAY and not s.oneway:
                raise NetworkError(f"expressway segment {s.segment_id!r} must be oneway")
            if check_lengths:
                geo_len = polyline_length(s.geometry)
                if abs(geo_len - s.length_m) > 0.01 * s.length_m + 0.5:
                    raise NetworkError(
                        f"segment {s.segment_id!r}: length_m {s.length_m} differs from geometry length {geo_len:.1f}"
                    )
            segs[s.segment_id] = s

        self.segment_ids: list[str] = sorted(segs, key=natural_key)
        self.segments: dict[str, RoadSegment] = {sid: segs[sid] for sid in self.segment_ids}
        self._seg_index = {sid: i for i, sid in enumerate(self.segment_ids)}

        n_arcs = 2 * len(self.segment_ids)
        self._arc_len = [0.0] * n_arcs
        self._arc_tail: list = [None] * n_arcs
        self._arc_head: list = [None] * n_arcs
        self._arc_ok = [False] * n_arcs
        out: dict[str, list[int]] = {nid: [] for nid in self.nodes}
        for i, sid in enumerate(self.segment_ids):
            s = self.segments[sid]
            for k, (tail, head) in enumerate(((s.from_node, s.to_node), (s.to_node, s.from_node))):
                if k == 1 and s.oneway:
                    continue
                a = 2 * i + k
                self._arc_ok[a] = True
                self._arc_len[a] = s.length_m
                self._arc_tail[a] = tail
                self._arc_head[a] = head
                out[tail].append(a)
        self._out = {nid: tuple(sorted(arcs)) for nid, arcs in out.items()}

        # per-segment polyline arrays for projection / interpolation
        self._geom_lon = []
        self._geom_lat = []
        self._geom_cum = []
        for sid in self.segment_ids:
            g = self.segments[sid].geometry
            lon = np.array([p[0] for p in g])
            lat = np.array([p[1] for p in g])
            steps = [geo_distance(g[j], g[j + 1]) for j in range(len(g) - 1)]
            self._geom_lon.append(lon)
            self._geom_lat.append(lat)
            self._geom_cum.append(np.concatenate([[0.0], np.cumsum(steps)]))

        self._build_grid(cell_m)
        self._trees: dict[int, tuple[float, dict, dict]] = {}
        self._pair_cache: dict[tuple, tuple[float, tuple[int, ...]]] = {}

    # ------------------------------------------------------------------ arcs
    def arc(self, segment_id: str, direction: int) -> int | None:
        i = self._seg_index[segment_id]
        a = 2 * i + (0 if direction == ALONG else 1)
        return a if self._arc_ok[a] else None

    def arc_segment(self, arc: int) -> str:
        return self.segment_ids[arc // 2]

    def arc_dir(self, arc: int) -> int:
        return ALONG if arc % 2 == 0 else AGAINST

    def arc_length(self, arc: int) -> float:
        return self._arc_len[arc]

    def arc_head(self, arc: int) -> str:
        return self._arc_head[arc]

    def arc_tail(self, arc: int) -> str:
        return self._arc_tail[arc]

    def heading_node(self, segment_id: str, direction: int) -> str:
        s = self.segments[segment_id]
        return s.to_node if direction == ALONG else s.from_node

    def entry_node(self, segment_id: str, direction: int) -> str:
        s = self.segments[segment_id]
        return s.from_node if direction == ALONG else s.to_node

    def out_arcs(self, node_id: str) -> tuple[int, ...]:
        return self._out[node_id]

    @property
    def max_segment_length(self) -> float:
        return max((s.length_m for s in self.segments.values()), default=0.0)

    def adjacency(self) -> dict[str, list[str]]:
        """Undirected neighbor lists (node -> sorted neighbor node ids)."""
        adj: dict[str, set] = {nid: set() for nid in self.nodes}
        for s in self.segments.values():
            adj[s.from_node].add(s.to_node)
            adj[s.to_node].add(s.from_node)
        return {k: sorted(v, key=natural_key) for k, v in adj.items()}

    # --------------------------------------------------------------- spatial
    def _build_grid(self, cell_m: float) -> None:
        lats = [n.lat for n in self.nodes.values()] or [0.0]
        self._lat_ref = float(np.mean(lats))
        self._cell_dlat = cell_m / M_PER_DEG_LAT
        self._cell_dlon = cell_m / (M_PER_DEG_LAT * max(math.cos(math.radians(self._lat_ref)), 1e-6))
        grid: dict[tuple[int, int], set[int]] = {}
        for i in range(len(self.segment_ids)):
            lon, lat = self._geom_lon[i], self._geom_lat[i]
            for j in range(len(lon) - 1):
                x0, x1 = sorted((lon[j], lon[j + 1]))
                y0, y1 = sorted((lat[j], lat[j + 1]))
                for cx in range(self._cx(x0), self._cx(x1) + 1):
                    for cy in range(self._cy(y0), self._cy(y1) + 1):
                        grid.setdefault((cx, cy), set()).add(i)
        self._grid = {k: tuple(sorted(v)) for k, v in grid.items()}

    def _cx(self, lon: float) -> int:
        return int(math.floor(lon / self._cell_dlon))

    def _cy(self, lat: float) -> int:
        return int(math.floor(lat / self._cell_dlat))

    def _project_index(self, i: int, lon: float, lat: float) -> Projection:
        glon, glat, cum = self._geom_lon[i], self._geom_lat[i], self._geom_cum[i]
        x, y = to_local(glon, glat, lon, lat)
        ax, ay, bx, by = x[:-1], y[:-1], x[1:], y[1:]
        dx, dy = bx - ax, by - ay
        den = dx * dx + dy * dy
        with np.errstate(invalid="ignore", divide="ignore"):
            t = np.where(den > 0, -(ax * dx + ay * dy) / den, 0.0)
        t = np.clip(t, 0.0, 1.0)
        px, py = ax + t * dx, ay + t * dy
        d2 = px * px + py * py
        j = int(np.argmin(d2))
        tj = float(t[j])
        slon = glon[j] + tj * (glon[j + 1] - glon[j])
        slat = glat[j] + tj * (glat[j + 1] - glat[j])
        total = cum[-1]
        along = cum[j] + tj * (cum[j + 1] - cum[j])
        r = min(1.0, max(0.0, along / total)) if total > 0 else 0.0
        snapped = (float(slon), float(slat))
        return Projection(self.segment_ids[i], r, geo_distance((lon, lat), snapped), snapped)

    def project(self, segment_id: str, lonlat) -> Projection:
        return self._project_index(self._seg_index[segment_id], float(lonlat[0]), float(lonlat[1]))

    def interpolate(self, segment_id: str, r: float) -> tuple[float, float]:
        """Point at fraction ``r`` of the segment's length, measured from ``from_node``."""
        i = self._seg_index[segment_id]
        cum = self._geom_cum[i]
        target = min(1.0, max(0.0, r)) * cum[-1]
        j = int(np.searchsorted(cum, target, side="right") - 1)
        j = min(max(j, 0), len(cum) - 2)
        span = cum[j + 1] - cum[j]
        t = (target - cum[j]) / span if span > 0 else 0.0
        glon, glat = self._geom_lon[i], self._geom_lat[i]
        return (float(glon[j] + t * (glon[j + 1] - glon[j])), float(glat[j] + t * (glat[j + 1] - glat[j])))

    def candidates(self, lonlat, radius_m: float) -> list[Projection]:
        """Projections onto every segment within ``radius_m`` of ``lonlat``, nearest first."""
        if not radius_m > 0:
            raise ValueError("radius_m must be positive")
        lon, lat = float(lonlat[0]), float(lonlat[1])
        dlat = radius_m / M_PER_DEG_LAT * 1.001
        dlon = radius_m / (M_PER_DEG_LAT * max(math.cos(math.radians(abs(lat) + dlat)), 1e-6)) * 1.001
        seen: set[int] = set()
        for cx in range(self._cx(lon - dlon), self._cx(lon + dlon) + 1):
            for cy in range(self._cy(lat - dlat), self._cy(lat + dlat) + 1):
                seen.update(self._grid.get((cx, cy), ()))
        out = []
        for i in sorted(seen):
            p = self._project_index(i, lon, lat)
            if p.perp_dist_m <= radius_m:
                out.append(p)
        out.sort(key=lambda p: (p.perp_dist_m, natural_key(p.segment_id)))
        return out

    # --------------------------------------------------------------- routing
    def _search(self, src_arc: int | None, start_node: str | None, radius: float,
                avoid: frozenset = frozenset(), target: int | None = None):
        """Arc-based Dijkstra.  Distances are measured to the *head* of each arc.

        Starting from ``src_arc`` means standing at its head having arrived by it, so
        its reverse is banned as the first move and ``src_arc`` itself is only reached
        again through a loop.
        """
        dist: dict[int, float] = {}
        pred: dict[int, int] = {}
        heap: list[tuple[float, int]] = []
        if src_arc is not None:
            node = self._arc_head[src_arc]
            banned = src_arc ^ 1
        else:
            node = start_node
            banned = -1
        for a in self._out[node]:
            if a == banned or a in avoid:
                continue
            d = self._arc_len[a]
            if d <= radius and d < dist.get(a, INF):
                dist[a] = d
                pred[a] = -1
                heapq.heappush(heap, (d, a))
        done: set[int] = set()
        while heap:
            d, a = heapq.heappop(heap)
            if a in done or d > dist[a]:
                continue
            done.add(a)
            if a == target:
                break
            rev = a ^ 1
            for b in self._out[self._arc_head[a]]:
                if b == rev or b in avoid:
                    continue
                nd = d + self._arc_len[b]
                if nd <= radius and nd < dist.get(b, INF):
                    dist[b] = nd
                    pred[b] = a
                    heapq.heappush(heap, (nd, b))
        return dist, pred

    def arc_tree(self, src_arc: int, radius: float) -> tuple[dict, dict]:
        """Memoized shortest-path tree from ``src_arc`` covering at least ``radius`` meters."""
        hit = self._trees.get(src_arc)
        if hit is not None and hit[0] >= radius:
            return hit[1], hit[2]
        r = max(radius, 2000.0, 2.0 * hit[0] if hit is not None else 0.0)
        dist, pred = self._search(src_arc, None, r)
        self._trees[src_arc] = (r, dist, pred)
        return dist, pred

    @staticmethod
    def _unwind(pred: dict, arc: int) -> list[int]:
        path = [arc]
        while pred[path[-1]] != -1:
            path.append(pred[path[-1]])
        path.reverse()
        return path

    def arc_distance(self, src_arc: int, dst_arc: int, radius: float) -> float:
        """Distance from the head of ``src_arc`` to the head of ``dst_arc`` (inf beyond radius)."""
        dist, _ = self.arc_tree(src_arc, radius)
        d = dist.get(dst_arc, INF)
        return d if d <= radius else INF

    def arc_path(self, src_arc: int, dst_arc: int, radius: float) -> tuple[float, list[int]]:
        dist, pred = self.arc_tree(src_arc, radius)
        d = dist.get(dst_arc, INF)
        if d > radius:
            return INF, []
        return d, self._unwind(pred, dst_arc)

    def constrained_arc_distance(self, src_arc: int, dst_arc: int, radius: float) -> float:
        """Like :meth:`arc_distance` but the route may not use either direction of the
        source segment, nor the destination segment before its final arc."""
        key = (src_arc, dst_arc, radius)
        hit = self._pair_cache.get(key)
        if hit is not None:
            return hit[0]
        s = src_arc - src_arc % 2
        t = dst_arc - dst_arc % 2
        avoid = frozenset({s, s + 1, t, t + 1} - {dst_arc})
        dist, _ = self._search(src_arc, None, radius, avoid=avoid, target=dst_arc)
        d = dist.get(dst_arc, INF)
        d = d if d <= radius else INF
        self._pair_cache[key] = (d, ())
        return d

    def ete_route(self, from_node: str, to_node: str, arrive_via: tuple[str, int] | None = None,
                  cutoff: float = INF) -> tuple[list[str], float]:
        """Shortest directed route between two nodes honoring oneway and no-U-turn.

        ``arrive_via`` is the ``(segment_id, dir)`` by which the traveller reached
        ``from_node``; its reverse may not be the first move.  Returns the list of
        segment ids and the distance, or ``([], inf)`` when unreachable within ``cutoff``.
        """
        for nid in (from_node, to_node):
            if nid not in self.nodes:
                raise KeyError(f"unknown node {nid!r}")
        if from_node == to_node:
            return [], 0.0
        if arrive_via is not None:
            src = self.arc(*arrive_via)
            if src is None or self._arc_head[src] != from_node:
                raise ValueError(f"{arrive_via} does not arrive at {from_node!r}")
            dist, pred = self._search(src, None, cutoff)
        else:
            dist, pred = self._search(None, from_node, cutoff)
        hits = [(d, a) for a, d in dist.items() if self._arc_head[a] == to_node]
        if not hits:
            return [], INF
        best, best_arc = min(hits)
        return [self.arc_segment(a) for a in self._unwind(pred, best_arc)], best

    def route_distance(self, arc_a: int, off_a: float, arc_b: int, off_b: float,
                       cutoff: float = INF, backward_slack: float = 0.0) -> float:
        """Directed network distance between two on-arc positions.

        ``off`` is the distance already travelled along the arc from its tail.  Backward
        moves on the same arc up to ``backward_slack`` are treated as positioning jitter.
        """
        if arc_a == arc_b and off_b >= off_a - backward_slack:
            d = abs(off_b - off_a)
            return d if d <= cutoff else INF
        rem = self._arc_len[arc_a] - off_a
        back = self._arc_len[arc_b] - off_b
        need = cutoff - rem + back
        if need < 0:
            return INF
        d = self.arc_distance(arc_a, arc_b, need)
        if d == INF:
            return INF
        total = rem + d - back
        return total if total <= cutoff else INF

    def route_path(self, arc_a: int, off_a: float, arc_b: int, off_b: float,
                   cutoff: float = INF, backward_slack: float = 0.0) -> tuple[float, list[int]]:
        """Same as :meth:`route_distance` but also returns the arcs traversed (incl. both ends)."""
        if arc_a == arc_b and off_b >= off_a - backward_slack:
            d = abs(off_b - off_a)
            return (d, [arc_a]) if d <= cutoff else (INF, [])
        rem = self._arc_len[arc_a] - off_a
        back = self._arc_len[arc_b] - off_b
        need = cutoff - rem + back
        if need < 0:
            return INF, []
        d, path = self.arc_path(arc_a, arc_b, need)
        if d == INF:
            return INF, []
        total = rem + d - back
        if total > cutoff:
            return INF, []
        return total, [arc_a] + path


# ---------------------------------------------------------------------- I/O
def load_network(path, edges_path=None, **kwargs) -> RoadGraph:
    """Load ``nodes.csv`` + ``edges.csv``.

    ``path`` may be a directory holding both files, or the nodes file (then the edges
    file is ``edges_path`` or ``edges.csv`` next to it).
    """
    path = Path(path)
    if path.is_dir():
        nodes_path, edges_path = path / "nodes.csv", path / "edges.csv"
    else:
        nodes_path = path
        edges_path = Path(edges_path) if edges_path else path.with_name("edges.csv")

    nodes = []
    with open(nodes_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["node_id", "lon", "lat"]:
            raise NetworkError(f"{nodes_path}:1: expected header node_id,lon,lat")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                nodes.append(RoadNode(row[0].strip(), float(row[1]), float(row[2])))
            except (IndexError, ValueError) as exc:
                raise NetworkError(f"{nodes_path}:{lineno}: {exc}") from None
    coords = {n.node_id: (n.lon, n.lat) for n in nodes}

    segments = []
    expected = ["segment_id", "from_node", "to_node", "length_m", "road_class", "oneway"]
    with open(edges_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:6]] != expected:
            raise NetworkError(f"{edges_path}:1: expected header {','.join(expected)}[,geometry_wkt]")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            try:
                sid, fn, tn = row[0].strip(), row[1].strip(), row[2].strip()
                length = float(row[3])
                rc = RoadClass(row[4].strip().lower())
                oneway = _parse_bool(row[5])
                wkt = row[6].strip() if len(row) > 6 else ""
            except (IndexError, ValueError) as exc:
                raise NetworkError(f"{edges_path}:{lineno}: {exc}") from None
            for nid in (fn, tn):
                if nid not in coords:
                    raise NetworkError(f"{edges_path}:{lineno}: segment {sid!r} references missing node {nid!r}")
            if length <= 0:
                raise NetworkError(f"{edges_path}:{lineno}: segment {sid!r} has non-positive length")
            if wkt:
                try:
                    geom = parse_linestring(wkt)
                except ValueError as exc:
                    raise NetworkError(f"{edges_path}:{lineno}: {exc}") from None
            else:
                geom = (coords[fn], coords[tn])
            segments.append(RoadSegment(sid, fn, tn, length, rc, oneway, geom))
    return RoadGraph(nodes, segments, **kwargs)


def write_network(graph: RoadGraph, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "nodes.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "lon", "lat"])
        for nid in sorted(graph.nodes, key=natural_key):
            n = graph.nodes[nid]
            w.writerow([nid, repr(n.lon), repr(n.lat)])
    with open(directory / "edges.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment_id", "from_node", "to_node", "length_m", "road_class", "oneway", "geometry_wkt"])
        for sid in graph.segment_ids:
            s = graph.segments[sid]
            w.writerow([sid, s.from_node, s.to_node, repr(s.length_m), s.road_class.value,
                        "true" if s.oneway else "false", format_linestring(s.geometry)])
