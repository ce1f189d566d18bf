"""Snapshot builders shared by the clustering tests and the acceptance suite."""

import random

from platoonmine.following import SnapshotTruck
from platoonmine.network import AGAINST, ALONG
from platoonmine.synth.templates import build_graph, grid

# Ten-truck reference scene on one long winding segment: a hairpin at the start
# puts o1 within eps of o2 in a straight line but 1.2 km away along the road.
TEN_TRUCK_POLYLINE = [(0, 600), (-300, 600), (-300, 0), (0, 0), (2500, 0), (2500, 600), (2000, 600)]
TEN_TRUCK_ALONG_M = [0, 1200, 2049, 2190, 2261, 2318, 2375, 3280, 4580]
TEN_TRUCK_RD = [float("inf"), 1.01, 0.849, 0.141, 0.071, 0.057, 0.057, 0.905, 1.01, float("inf")]
REF_THETA = [163, 142, 133, 174, 178, 120, 131]
REF_LAMBDA = [0.08, 0.27, -0.31, -0.03, -0.01, -0.42, 0.38]


def ten_truck_scene():
    nodes = {"A": TEN_TRUCK_POLYLINE[0], "B": TEN_TRUCK_POLYLINE[-1], "F1": (20000, 0), "F2": (21000, 0)}
    edges = [("road", "A", "B", "trunk", False, TEN_TRUCK_POLYLINE[1:-1]), ("far", "F1", "F2", "trunk", False)]
    g = build_graph(nodes, edges)
    length = g.segments["road"].length_m
    snap = [SnapshotTruck.on(g, f"o{i + 1}", "road", s / length, ALONG) for i, s in enumerate(TEN_TRUCK_ALONG_M)]
    snap.append(SnapshotTruck.on(g, "o10", "far", 0.5, ALONG))
    return g, snap


_GRAPH = None


def small_grid():
    global _GRAPH
    if _GRAPH is None:
        _GRAPH = grid(3, 3, 1000.0, expressway_rows=(0,)).graph
    return _GRAPH


def random_snapshot(rng: random.Random, graph, n: int):
    """``n`` trucks at random positions, biased into a few clumps so that clusters occur."""
    seeds = [(rng.choice(graph.segment_ids), rng.random()) for _ in range(max(1, n // 3))]
    out = []
    for i in range(n):
        if rng.random() < 0.75:
            sid, r = rng.choice(seeds)
            r = min(1.0, max(0.0, r + rng.uniform(-0.35, 0.35)))
        else:
            sid, r = rng.choice(graph.segment_ids), rng.random()
        d = ALONG if graph.segments[sid].oneway else rng.choice([ALONG, AGAINST])
        out.append(SnapshotTruck.on(graph, str(i + 1), sid, r, d))
    return out


def convoy_snapshot(rng: random.Random, n_convoys: int = 3):
    """Equal-gap convoys on a long straight road, separated by more than 3 eps, so no
    truck sits on the sparse edge of a cluster."""
    seg_m = 2000.0
    n_seg = 12 * n_convoys
    nodes = {f"v{i}": (i * seg_m, 0.0) for i in range(n_seg + 1)}
    edges = [(f"s{i}", f"v{i}", f"v{i + 1}", "trunk", False) for i in range(n_seg)]
    g = build_graph(nodes, edges)
    out, groups, tid = [], [], 1
    start = 500.0
    for _ in range(n_convoys):
        size = rng.randint(1, 4)
        gap = rng.uniform(50, 900)
        d = rng.choice([ALONG, AGAINST])
        members = []
        for k in range(size):
            x = start + k * gap
            i = min(int(x // seg_m), n_seg - 1)
            r = (x - i * seg_m) / seg_m
            out.append(SnapshotTruck.on(g, str(tid), f"s{i}", r, d))
            members.append(str(tid))
            tid += 1
        groups.append(frozenset(members))
        start += (size - 1) * gap + rng.uniform(3500, 6000)
    rng.shuffle(out)
    return g, out, [m for m in groups if len(m) >= 2]


def noisy_fleet(seed: int, template: str = "line", n_trucks: int = 12, sigma: float = 20.0, **template_args):
    """Solo trucks with GPS noise; ground-truth (segment, dir) for every fix."""
    from platoonmine.synth import ScenarioSpec, generate

    spec = ScenarioSpec(seed=seed, template=template, template_args=template_args, n_timesteps=60,
                        n_solo=n_trucks, solo_steps=(20, 40), noise_sigma_m=sigma, separate=False)
    return generate(spec)


def random_sets(rng: random.Random, n_trucks: int = 8, n_steps: int = 12):
    """Per-timestep partitions of a random subset of trucks into groups of 2 or more,
    with a few persistent groups so that long patterns exist."""
    trucks = [str(i + 1) for i in range(n_trucks)]
    base = list(trucks)
    rng.shuffle(base)
    sticky = [base[: rng.randint(2, max(2, n_trucks // 2))]]
    out = {}
    for t in range(n_steps):
        pool = list(trucks)
        rng.shuffle(pool)
        sets = []
        if rng.random() < 0.7:
            grp = [m for m in sticky[0] if rng.random() < 0.85]
            if len(grp) >= 2:
                sets.append(tuple(grp))
                pool = [m for m in pool if m not in grp]
        while len(pool) >= 2 and rng.random() < 0.7:
            k = rng.randint(2, min(4, len(pool)))
            sets.append(tuple(pool[:k]))
            pool = pool[k:]
        if sets:
            out[t] = sets
    return out
