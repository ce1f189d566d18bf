"""Command line entry point.

    platoonmine [--config FILE] [--threads N] [--out DIR] <command> ...

``run`` executes every stage; the other commands run one stage on files that a
previous stage wrote into ``--out``.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .following import SnapshotTruck, following_distance
from .network import load_network
from .pipeline import stages
from .pipeline.config import default_config_text, load_config
from .pipeline.stages import FILES, PipelineError

log = logging.getLogger("platoonmine")


def _network(args, cfg) -> Path:
    path = args.network or cfg.network
    if not path:
        raise SystemExit("no road network given (use --network or [input] network)")
    return Path(path)


def _stage(name, fn):
    try:
        return fn()
    except PipelineError:
        raise
    except Exception as exc:
        raise PipelineError(name, exc) from exc


def cmd_run(args, cfg, out: Path) -> dict:
    traj = args.trajectories or cfg.trajectories
    if not traj:
        raise SystemExit("no trajectories given (use --trajectories or [input] trajectories)")
    stages.run_pipeline(cfg, out, args.threads, _network(args, cfg), traj)
    return json.loads((out / FILES["headline"]).read_text())


def cmd_match(args, cfg, out):
    traj = args.trajectories or cfg.trajectories
    return _stage("match", lambda: stages.stage_match(cfg, traj, _network(args, cfg), out, args.threads))


def cmd_resample(args, cfg, out):
    return _stage("resample", lambda: stages.stage_resample(cfg, out / FILES["matched"], _network(args, cfg), out))


def cmd_cluster(args, cfg, out):
    return _stage("cluster", lambda: stages.stage_cluster(cfg, out / FILES["grid"], _network(args, cfg), out,
                                                          args.threads))


def cmd_mine(args, cfg, out):
    return _stage("mine", lambda: stages.stage_mine(cfg, out / FILES["sets"], out / FILES["grid"],
                                                    _network(args, cfg), out))


def cmd_fuel(args, cfg, out):
    return _stage("fuel", lambda: stages.stage_fuel(cfg, out / FILES["grid"], out / FILES["sets"],
                                                    out / FILES["patterns"], out / FILES["pattern_steps"], out,
                                                    args.network or cfg.network or None))


def cmd_report(args, cfg, out):
    fuel = out / FILES["fuel_summary"]
    return _stage("report", lambda: stages.stage_report(
        cfg, out / FILES["grid"], out / FILES["sets"], out / FILES["patterns"], out / FILES["pattern_steps"],
        fuel if fuel.exists() else None, _network(args, cfg), out))


def cmd_synth(args, cfg, out):
    from .synth import generate, write_scenario
    from .synth.generate import load_spec

    spec = load_spec(args.scenario)
    if args.seed is not None:
        spec.seed = args.seed
    return write_scenario(generate(spec), out)


def _parse_pos(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected segment_id,r,dir")
    return parts[0], float(parts[1]), int(parts[2])


def cmd_fd(args, cfg, out):
    graph = load_network(_network(args, cfg))
    a = SnapshotTruck.on(graph, "a", *args.a)
    b = SnapshotTruck.on(graph, "b", *args.b)
    d = following_distance(a, b, graph, cfg.clustering.eps_m, cfg.clustering.cutoff_m)
    return {"fd_m": d if d != float("inf") else "inf"}


def cmd_config(args, cfg, out):
    sys.stdout.write(default_config_text())
    return None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="platoonmine", description="Platoon pattern mining for truck GPS data.")
    ap.add_argument("--config", help="TOML config; unset keys take the built-in defaults")
    ap.add_argument("--threads", type=int, default=1, help="worker processes for match and cluster")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, net=True, traj=False):
        p = sub.add_parser(name, help=help_)
        if net:
            p.add_argument("--network", help="directory with nodes.csv and edges.csv")
        if traj:
            p.add_argument("--trajectories", help="GPS CSV")
        p.set_defaults(func=fn)
        return p

    add("run", cmd_run, "all stages, atomically", traj=True)
    add("match", cmd_match, "map-match trajectories", traj=True)
    add("resample", cmd_resample, "put matched points on the time grid")
    add("cluster", cmd_cluster, "detect co-driving sets per timestep")
    add("mine", cmd_mine, "mine platoon patterns from the sets")
    add("fuel", cmd_fuel, "fuel use and platoon savings")
    add("report", cmd_report, "metrics, hotspots and headline figures")
    p = add("synth", cmd_synth, "generate a synthetic scenario", net=False)
    p.add_argument("scenario", help="TOML file with a [scenario] section")
    p.add_argument("--seed", type=int)
    p = add("fd", cmd_fd, "following distance between two positions")
    p.add_argument("a", type=_parse_pos, help="segment_id,r,dir")
    p.add_argument("b", type=_parse_pos, help="segment_id,r,dir")
    add("config", cmd_config, "print the default config", net=False)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        args.threads = os.cpu_count() or 1
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out)
    if args.command not in ("run", "fd", "config"):
        out.mkdir(parents=True, exist_ok=True)
    try:
        result = args.func(args, cfg, out)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if result is not None:
        print(json.dumps(result, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
