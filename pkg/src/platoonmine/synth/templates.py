"""Small road-network templates laid out in a local metric frame."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..geo import from_local, polyline_length
from ..network import ALONG, AGAINST, RoadClass, RoadGraph, RoadNode, RoadSegment

ORIGIN = (116.0, 40.0)


@dataclass
class Template:
    """A graph plus named corridors (long directed routes) trucks can drive."""

    graph: RoadGraph
    corridors: dict[str, list[tuple[str, int]]] = field(default_factory=dict)

    def corridor_length(self, name: str) -> float:
        return sum(self.graph.segments[s].length_m for s, _ in self.corridors[name])


def build_graph(nodes_xy: dict, edges, origin=ORIGIN, **kwargs) -> RoadGraph:
    """Build a graph from node positions in meters east/north of ``origin``.

    ``edges`` items are ``(segment_id, from_node, to_node, road_class, oneway)`` with an
    optional sixth element listing intermediate ``(x, y)`` shape points.
    """
    lon0, lat0 = origin
    ll = {}
    nodes = []
    for nid, (x, y) in nodes_xy.items():
        lon, lat = from_local(x, y, lon0, lat0)
        ll[nid] = (float(lon), float(lat))
        nodes.append(RoadNode(str(nid), *ll[nid]))
    segs = []
    for e in edges:
        sid, fn, tn, rc, oneway = e[:5]
        via = e[5] if len(e) > 5 else ()
        geom = [ll[fn]]
        for x, y in via:
            lon, lat = from_local(x, y, lon0, lat0)
            geom.append((float(lon), float(lat)))
        geom.append(ll[tn])
        geom = tuple(geom)
        segs.append(RoadSegment(str(sid), str(fn), str(tn), polyline_length(geom), RoadClass(rc), bool(oneway), geom))
    return RoadGraph(nodes, segs, **kwargs)


def line(n_segments: int = 10, segment_m: float = 2000.0, road_class: str = "trunk", y: float = 0.0,
         prefix: str = "") -> Template:
    """Straight east-west road.  Trunk lines are bidirectional; expressways oneway east."""
    oneway = road_class == "expressway"
    nodes = {f"{prefix}n{i}": (i * segment_m, y) for i in range(n_segments + 1)}
    edges = [(f"{prefix}s{i}", f"{prefix}n{i}", f"{prefix}n{i + 1}", road_class, oneway) for i in range(n_segments)]
    g = build_graph(nodes, edges)
    corridors = {f"{prefix}east": [(f"{prefix}s{i}", ALONG) for i in range(n_segments)]}
    if not oneway:
        corridors[f"{prefix}west"] = [(f"{prefix}s{i}", AGAINST) for i in reversed(range(n_segments))]
    return Template(g, corridors)


def parallel_corridor(n_segments: int = 10, segment_m: float = 2000.0, gap_m: float = 30.0) -> Template:
    """Two unconnected bidirectional trunk roads ``gap_m`` apart."""
    nodes, edges, corridors = {}, [], {}
    for tag, y in (("a", 0.0), ("b", gap_m)):
        for i in range(n_segments + 1):
            nodes[f"{tag}n{i}"] = (i * segment_m, y)
        for i in range(n_segments):
            edges.append((f"{tag}s{i}", f"{tag}n{i}", f"{tag}n{i + 1}", "trunk", False))
        corridors[f"{tag}_east"] = [(f"{tag}s{i}", ALONG) for i in range(n_segments)]
        corridors[f"{tag}_west"] = [(f"{tag}s{i}", AGAINST) for i in reversed(range(n_segments))]
    return Template(build_graph(nodes, edges), corridors)


def dual_carriageway(n_segments: int = 10, segment_m: float = 2000.0, gap_m: float = 20.0) -> Template:
    """Expressway with one oneway carriageway per direction."""
    nodes, edges = {}, []
    for i in range(n_segments + 1):
        nodes[f"e{i}"] = (i * segment_m, 0.0)
        nodes[f"w{i}"] = (i * segment_m, gap_m)
    for i in range(n_segments):
        edges.append((f"e{i}", f"e{i}", f"e{i + 1}", "expressway", True))
        edges.append((f"w{i}", f"w{i + 1}", f"w{i}", "expressway", True))
    corridors = {
        "east": [(f"e{i}", ALONG) for i in range(n_segments)],
        "west": [(f"w{i}", ALONG) for i in reversed(range(n_segments))],
    }
    return Template(build_graph(nodes, edges), corridors)


def junction(arm_segments: int = 5, segment_m: float = 2000.0) -> Template:
    """A trunk road from the west meets a junction; an expressway continues east and
    a trunk branch turns north."""
    nodes = {"j": (0.0, 0.0)}
    edges = []
    for i in range(arm_segments):
        nodes[f"w{i}"] = (-(arm_segments - i) * segment_m, 0.0)
        nodes[f"x{i}"] = ((i + 1) * segment_m, 0.0)
        nodes[f"u{i}"] = (0.0, (i + 1) * segment_m)
    west = [f"w{i}" for i in range(arm_segments)] + ["j"]
    for i in range(arm_segments):
        edges.append((f"tw{i}", west[i], west[i + 1], "trunk", False))
    east = ["j"] + [f"x{i}" for i in range(arm_segments)]
    for i in range(arm_segments):
        edges.append((f"ex{i}", east[i], east[i + 1], "expressway", True))
    north = ["j"] + [f"u{i}" for i in range(arm_segments)]
    for i in range(arm_segments):
        edges.append((f"tn{i}", north[i], north[i + 1], "trunk", False))
    g = build_graph(nodes, edges)
    tw = [(f"tw{i}", ALONG) for i in range(arm_segments)]
    corridors = {
        "west_to_east": tw + [(f"ex{i}", ALONG) for i in range(arm_segments)],
        "west_to_north": tw + [(f"tn{i}", ALONG) for i in range(arm_segments)],
        "north_to_west": [(f"tn{i}", AGAINST) for i in reversed(range(arm_segments))]
        + [(f"tw{i}", AGAINST) for i in reversed(range(arm_segments))],
    }
    return Template(g, corridors)


def grid(nx: int = 6, ny: int = 6, spacing_m: float = 2000.0, expressway_rows=(0,)) -> Template:
    """Rectangular grid.  Rows listed in ``expressway_rows`` become a dual carriageway
    (eastbound on the row, westbound on a twin 20 m north); everything else is trunk.

    Corridors: every full row eastbound / westbound and every full column both ways.
    """
    nodes, edges, corridors = {}, [], {}
    for i in range(nx):
        for j in range(ny):
            nodes[f"g{i}_{j}"] = (i * spacing_m, j * spacing_m)
    for j in range(ny):
        if j in expressway_rows:
            for i in range(nx):
                nodes[f"h{i}_{j}"] = (i * spacing_m, j * spacing_m + 20.0)
            east = []
            west = []
            for i in range(nx - 1):
                edges.append((f"re{i}_{j}", f"g{i}_{j}", f"g{i + 1}_{j}", "expressway", True))
                edges.append((f"rw{i}_{j}", f"h{i + 1}_{j}", f"h{i}_{j}", "expressway", True))
                east.append((f"re{i}_{j}", ALONG))
                west.append((f"rw{i}_{j}", ALONG))
            # ramps between the carriageways at both ends
            edges.append((f"ramp_w{j}", f"h0_{j}", f"g0_{j}", "trunk", False))
            edges.append((f"ramp_e{j}", f"g{nx - 1}_{j}", f"h{nx - 1}_{j}", "trunk", False))
            corridors[f"row{j}_east"] = east
            corridors[f"row{j}_west"] = list(reversed(west))
        else:
            for i in range(nx - 1):
                edges.append((f"r{i}_{j}", f"g{i}_{j}", f"g{i + 1}_{j}", "trunk", False))
            corridors[f"row{j}_east"] = [(f"r{i}_{j}", ALONG) for i in range(nx - 1)]
            corridors[f"row{j}_west"] = [(f"r{i}_{j}", AGAINST) for i in reversed(range(nx - 1))]
    for i in range(nx):
        for j in range(ny - 1):
            edges.append((f"c{i}_{j}", f"g{i}_{j}", f"g{i}_{j + 1}", "trunk", False))
        corridors[f"col{i}_north"] = [(f"c{i}_{j}", ALONG) for j in range(ny - 1)]
        corridors[f"col{i}_south"] = [(f"c{i}_{j}", AGAINST) for j in reversed(range(ny - 1))]
    return Template(build_graph(nodes, edges), corridors)


TEMPLATES = {
    "line": line,
    "parallel-corridor": parallel_corridor,
    "dual-carriageway": dual_carriageway,
    "junction": junction,
    "grid": grid,
}


def make_template(name: str, **kwargs) -> Template:
    try:
        factory = TEMPLATES[name]
    except KeyError:
        raise ValueError(f"unknown template {name!r}; choose from {sorted(TEMPLATES)}") from None
    return factory(**kwargs)
