"""Pipeline stages.  Every stage reads its inputs from files and writes CSV/JSON
outputs, so running the stages one by one gives the same bytes as a full run."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import shutil
import tempfile
import time
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..clustering import ClusterParams, detect_codriving_sets, read_sets, write_sets
from ..following import SnapshotTruck, member_gaps
from ..fuel import derive_profile, platoon_savings, write_savings
from ..ids import natural_key
from ..matching import match_all, read_matched, read_trajectories, write_matched
from ..metrics import (aggregate_windows, haul_buckets, headline_stats, pdr_ptr, segment_hotspots,
                       timestep_states, write_hotspots, write_window_metrics)
from ..mining import SnapshotIndex, mine_patterns, read_patterns, summarize_pattern, write_patterns
from ..network import RoadGraph, load_network
from .config import PipelineConfig
from .resample import read_grid, resample, snapshots, write_grid

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


FILES = {
    "matched": "matched.csv",
    "rejected": "rejected.csv",
    "grid": "grid.csv",
    "sets": "sets.csv",
    "patterns": "patterns.csv",
    "pattern_steps": "pattern_steps.csv",
    "savings": "savings.csv",
    "fuel_summary": "fuel_summary.json",
    "metrics_windows": "metrics_windows.csv",
    "metrics_timesteps": "metrics_timesteps.csv",
    "fleet": "fleet_summary.csv",
    "haul": "haul_buckets.csv",
    "hotspots_csv": "hotspots.csv",
    "hotspots_geojson": "hotspots.geojson",
    "headline": "headline.json",
}


# --------------------------------------------------------------- workers
_WORKER_GRAPH: RoadGraph | None = None


def _init_worker(network_path: str) -> None:
    global _WORKER_GRAPH
    _WORKER_GRAPH = load_network(network_path)


def _match_chunk(args):
    trajs, params = args
    return match_all(trajs, _WORKER_GRAPH, params)


def _cluster_chunk(args):
    items, params = args
    return [(t, detect_codriving_sets(snap, _WORKER_GRAPH, params, timestep=t)) for t, snap in items]


def _chunks(items: list, n: int) -> list[list]:
    size = max(1, -(-len(items) // n))
    return [items[i:i + size] for i in range(0, len(items), size)]


# ---------------------------------------------------------------- stages
def stage_match(cfg: PipelineConfig, trajectories_path, network_path, out_dir, threads: int = 1) -> dict:
    graph = load_network(network_path)
    trajs = read_trajectories(trajectories_path)
    if threads > 1 and len(trajs) > 1:
        ids = list(trajs)
        jobs = [({k: trajs[k] for k in chunk}, cfg.matching) for chunk in _chunks(ids, threads * 4)]
        matched, rejected = {}, {}
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(str(network_path),)) as ex:
            for m, r in ex.map(_match_chunk, jobs):
                matched.update(m)
                rejected.update(r)
    else:
        matched, rejected = match_all(trajs, graph, cfg.matching)
    matched = {k: matched[k] for k in sorted(matched, key=natural_key)}
    out = Path(out_dir)
    write_matched(out / FILES["matched"], matched)
    with open(out / FILES["rejected"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truck_id", "reason"])
        for tid in sorted(rejected, key=natural_key):
            w.writerow([tid, rejected[tid]])
    return {
        "n_points": sum(len(v) for v in trajs.values()),
        "n_trucks": len(trajs),
        "n_matched_points": sum(len(v) for v in matched.values()),
        "n_rejected_trucks": len(rejected),
    }


def stage_resample(cfg: PipelineConfig, matched_path, network_path, out_dir) -> dict:
    graph = load_network(network_path)
    matched = read_matched(matched_path)
    points = []
    for tid in matched:
        points.extend(resample(matched[tid], graph, cfg.grid.dt_s, cfg.grid.staleness_s,
                               cfg.matching.max_speed_mps, cfg.matching.backward_slack_m))
    write_grid(Path(out_dir) / FILES["grid"], points)
    return {"n_grid_points": len(points), "n_timesteps": len({p.timestep for p in points})}


def stage_cluster(cfg: PipelineConfig, grid_path, network_path, out_dir, threads: int = 1) -> dict:
    graph = load_network(network_path)
    snaps = snapshots(read_grid(grid_path), graph)
    items = [(t, s) for t, s in snaps.items() if len(s) >= cfg.clustering.min_pts]
    results: dict[int, list] = {}
    if threads > 1 and len(items) > 1:
        jobs = [(chunk, cfg.clustering) for chunk in _chunks(items, threads * 4)]
        with ProcessPoolExecutor(threads, initializer=_init_worker, initargs=(str(network_path),)) as ex:
            for part in ex.map(_cluster_chunk, jobs):
                results.update(part)
    else:
        for t, snap in items:
            results[t] = detect_codriving_sets(snap, graph, cfg.clustering, timestep=t)
    results = {t: results[t] for t in sorted(results) if results[t]}
    write_sets(Path(out_dir) / FILES["sets"], results)
    return {"n_sets": sum(len(v) for v in results.values()),
            "n_set_members": sum(s.size for v in results.values() for s in v)}


def _set_positions(sets_path) -> dict[tuple[int, tuple[str, ...]], list[tuple[str, str, float, int]]]:
    rows: dict[tuple[int, int], list] = defaultdict(list)
    with open(sets_path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows[(int(row["timestep"]), int(row["set_id"]))].append(
                (row["truck_id"], row["segment_id"], float(row["r"]), int(row["dir"]), row["road_class"]))
    return rows


def set_headways(sets_path, graph: RoadGraph, params: ClusterParams):
    """Adjacent following distances of every stored set, keyed by ``(t, members)``."""
    out = {}
    classes = {}
    for (t, _), members in sorted(_set_positions(sets_path).items()):
        trucks = [SnapshotTruck.on(graph, tid, seg, r, d) for tid, seg, r, d, _ in members]
        gaps = list(member_gaps(trucks, graph, params.eps_m, params.cutoff_m * len(trucks)))
        key = (t, tuple(tid for tid, *_ in members))
        out[key] = gaps
        classes[key] = members[0][4] if len(set(m[4] for m in members)) == 1 else Counter(
            m[4] for m in members).most_common(1)[0][0]
    return out, classes


def _odometers(grid_points) -> dict[str, dict[int, float]]:
    odo: dict[str, dict[int, float]] = defaultdict(dict)
    for gp in grid_points:
        odo[gp.truck_id][gp.timestep] = gp.odo_m
    return {k: odo[k] for k in sorted(odo, key=natural_key)}


def stage_mine(cfg: PipelineConfig, sets_path, grid_path, network_path, out_dir) -> dict:
    graph = load_network(network_path)
    index = SnapshotIndex(read_sets(sets_path))
    patterns = mine_patterns(index, cfg.mining.min_o, cfg.mining.min_t)
    odo = _odometers(read_grid(grid_path))
    headways, _ = set_headways(sets_path, graph, cfg.clustering)
    for p in patterns:
        p.summary.update(summarize_pattern(p, odo, cfg.grid.dt_s, headways))
    out = Path(out_dir)
    write_patterns(out / FILES["patterns"], patterns, out / FILES["pattern_steps"])
    return {"n_patterns": len(patterns)}


def _profiles(grid_points, dt_s):
    by_truck: dict[str, list] = defaultdict(list)
    for gp in grid_points:
        by_truck[gp.truck_id].append(gp)
    out = {}
    for tid in sorted(by_truck, key=natural_key):
        pts = sorted(by_truck[tid], key=lambda g: g.timestep)
        out[tid] = derive_profile(tid, [g.timestep for g in pts], [g.odo_m for g in pts],
                                  [g.altitude_m for g in pts], dt_s)
    return out


def set_order(index: SnapshotIndex):
    """Order function for :func:`platoon_savings`: the front-to-back order of the set
    holding a pattern at a timestep."""
    def order(p, t):
        return index.group_of(p.trucks[0], t) or p.trucks
    return order


def stage_fuel(cfg: PipelineConfig, grid_path, sets_path, patterns_path, steps_path, out_dir,
               network_path=None) -> dict:
    grid_points = read_grid(grid_path)
    profiles = _profiles(grid_points, cfg.grid.dt_s)
    index = SnapshotIndex(read_sets(sets_path))
    patterns = read_patterns(patterns_path, steps_path)
    if cfg.fuel.headway_stat == "max":
        # patterns.csv only carries the mean; the largest gap comes from the stored sets
        if network_path is None:
            raise ValueError("headway_stat = 'max' needs the road network")
        headways, _ = set_headways(sets_path, load_network(network_path), cfg.clustering)
        odo = _odometers(grid_points)
        for p in patterns:
            p.summary["max_headway_m"] = summarize_pattern(p, odo, cfg.grid.dt_s, headways)["max_headway_m"]
    report = platoon_savings(patterns, profiles, set_order(index), cfg.fuel)
    out = Path(out_dir)
    write_savings(out / FILES["savings"], report)
    _write_json(out / FILES["fuel_summary"], {
        "fleet_baseline_ml": round(report.fleet_baseline_ml, 3),
        "fleet_platooned_ml": round(report.fleet_platooned_ml, 3),
        "fleet_saving_pct": round(report.fleet_saving_pct, 6),
        "coordinable_share": round(report.coordinable_share, 6),
        "n_patterns": len(report.patterns),
        "n_excluded_patterns": report.excluded,
    })
    return {"n_coordinable": sum(r.coordinable for r in report.patterns)}


def _write_json(path, data) -> None:
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")



def stage_report(cfg: PipelineConfig, grid_path, sets_path, patterns_path, steps_path, fuel_summary_path,
                 network_path, out_dir) -> dict:
    graph = load_network(network_path)
    grid_points = read_grid(grid_path)
    dt = cfg.grid.dt_s
    out = Path(out_dir)

    active: dict[int, Counter] = defaultdict(Counter)
    where: dict[tuple[str, int], str] = {}
    for gp in grid_points:
        active[gp.timestep][graph.segments[gp.segment_id].road_class.value] += 1
        where[(gp.truck_id, gp.timestep)] = gp.segment_id

    headways, classes = set_headways(sets_path, graph, cfg.clustering)
    sets_by_t: dict[int, list] = defaultdict(list)
    for (t, members), gaps in headways.items():
        sets_by_t[t].append(_SetView(len(members), tuple(gaps), classes[(t, members)]))
    states = timestep_states(active, sets_by_t)
    per_gap = cfg.metrics.per_gap_headway
    write_window_metrics(out / FILES["metrics_timesteps"], aggregate_windows(states, 1), dt, per_gap)
    steps = max(1, int(round(cfg.metrics.window_s / dt)))
    write_window_metrics(out / FILES["metrics_windows"], aggregate_windows(states, steps), dt, per_gap)

    patterns = read_patterns(patterns_path, steps_path)
    odo = _odometers(grid_points)
    fleet = pdr_ptr(patterns, odo, dt)
    with open(out / FILES["fleet"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["truck_id", "distance_km", "time_s", "platooned_km", "platooned_s"])
        for tid, rec in fleet.per_truck.items():
            w.writerow([tid, f"{rec['D'] / 1000:.4f}", f"{rec['T']:.0f}", f"{rec['PD'] / 1000:.4f}", f"{rec['PT']:.0f}"])
    with open(out / FILES["haul"], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from_km", "to_km", "n_trucks", "pdr", "ptr"])
        for b in haul_buckets(fleet, cfg.metrics.haul_bucket_km):
            w.writerow([f"{b['from_km']:g}", f"{b['to_km']:g}", b["n_trucks"], f"{b['pdr']:.6f}", f"{b['ptr']:.6f}"])
    hot = segment_hotspots(patterns, lambda tid, t: where.get((tid, t)), graph.segment_ids)
    write_hotspots(out / FILES["hotspots_csv"], out / FILES["hotspots_geojson"], hot, graph)

    codriving = {m for (_, members) in headways for m in members}
    fuel = json.loads(Path(fuel_summary_path).read_text()) if fuel_summary_path else {}
    head = headline_stats(len(odo), patterns, fleet, None, codriving)
    if fuel:
        head["share_patterns_coordinable"] = fuel["coordinable_share"]
        head["fleet_fuel_saving_pct"] = fuel["fleet_saving_pct"]
    _write_json(out / FILES["headline"], {k: (round(v, 6) if isinstance(v, float) else v) for k, v in head.items()})
    return {"n_active_trucks": len(odo)}


class _SetView:
    def __init__(self, size, headways_m, road_class):
        self.size = size
        self.headways_m = headways_m
        self.road_class = road_class


# ------------------------------------------------------------------- run
def _file_sha(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def run_pipeline(cfg: PipelineConfig, out_dir, threads: int = 1, network=None, trajectories=None) -> Path:
    """Run every stage into ``out_dir``.

    Outputs are built in a scratch directory next to ``out_dir`` and moved into place
    only when every stage succeeded; on failure nothing is left behind.
    """
    network = Path(network or cfg.network)
    trajectories = Path(trajectories or cfg.trajectories)
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=out_dir.name + ".tmp-", dir=out_dir.parent))
    counts: dict = {}
    timings: dict = {}
    f = {k: tmp / v for k, v in FILES.items()}
    plan = [
        ("match", lambda: stage_match(cfg, trajectories, network, tmp, threads)),
        ("resample", lambda: stage_resample(cfg, f["matched"], network, tmp)),
        ("cluster", lambda: stage_cluster(cfg, f["grid"], network, tmp, threads)),
        ("mine", lambda: stage_mine(cfg, f["sets"], f["grid"], network, tmp)),
        ("fuel", lambda: stage_fuel(cfg, f["grid"], f["sets"], f["patterns"], f["pattern_steps"], tmp, network)),
        ("report", lambda: stage_report(cfg, f["grid"], f["sets"], f["patterns"], f["pattern_steps"],
                                        f["fuel_summary"], network, tmp)),
    ]
    try:
        for name, fn in plan:
            t0 = time.perf_counter()
            try:
                counts.update(fn())
            except Exception as exc:
                raise PipelineError(name, exc) from exc
            timings[name] = round(time.perf_counter() - t0, 3)
            log.info("stage %s done in %.2f s", name, timings[name])
        _write_json(tmp / "manifest.json", {
            "config_sha256": cfg.digest(),
            "inputs": {
                "trajectories_sha256": _file_sha(trajectories),
                "nodes_sha256": _file_sha(network / "nodes.csv"),
                "edges_sha256": _file_sha(network / "edges.csv"),
            },
            "counts": counts,
            "files": sorted(FILES.values()),
        })
        _write_json(tmp / "timings.json", {"wall_s": timings, "threads": threads})
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return out_dir
