"""Spontaneous platoon pattern mining: closed (truck set, timestep set) pairs found by
a depth-first walk over the truck set-enumeration tree."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from .ids import natural_key


class SnapshotIndex:
    """Co-driving sets per timestep, with a per-truck membership timeline.

    ``sets_by_t`` maps a timestep index to a list of member tuples (front to back).
    """

    def __init__(self, sets_by_t: dict[int, list]):
        self.sets_by_t = {t: [tuple(s) for s in sets_by_t[t]] for t in sorted(sets_by_t)}
        self.trucks: list[str] = sorted({m for sets in self.sets_by_t.values() for s in sets for m in s},
                                        key=natural_key)
        self.index = {tid: i for i, tid in enumerate(self.trucks)}
        self.members: list[frozenset[int]] = []  # group id -> truck indices
        self.order: list[tuple[str, ...]] = []  # group id -> members front to back
        self.group_t: list[int] = []
        self.timeline: list[dict[int, int]] = [dict() for _ in self.trucks]  # truck -> {t: group id}
        for t, sets in self.sets_by_t.items():
            for s in sets:
                g = len(self.members)
                self.members.append(frozenset(self.index[m] for m in s))
                self.order.append(s)
                self.group_t.append(t)
                for m in s:
                    if t in self.timeline[self.index[m]]:
                        raise ValueError(f"truck {m!r} is in two sets at timestep {t}")
                    self.timeline[self.index[m]][t] = g

    def group_of(self, truck_id: str, t: int) -> tuple[str, ...] | None:
        g = self.timeline[self.index[truck_id]].get(t)
        return None if g is None else self.order[g]


def t_max(group, index: SnapshotIndex) -> frozenset[int]:
    """Timesteps at which every truck of ``group`` is in one and the same set."""
    ids = list(group)
    if not ids:
        raise ValueError("group must not be empty")
    for tid in ids:
        if tid not in index.index:
            raise KeyError(f"unknown truck id {tid!r}")
    lines = [index.timeline[index.index[tid]] for tid in ids]
    first = lines[0]
    return frozenset(t for t, g in first.items() if all(line.get(t) == g for line in lines[1:]))


@dataclass(frozen=True)
class PlatoonPattern:
    trucks: tuple[str, ...]
    timesteps: tuple[int, ...]
    summary: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def runs(self) -> list[tuple[int, int]]:
        return consecutive_runs(self.timesteps)

    def sort_key(self):
        return (-len(self.trucks), self.timesteps[0], [natural_key(x) for x in self.trucks])


def consecutive_runs(steps) -> list[tuple[int, int]]:
    """Maximal runs of consecutive integers as inclusive ``(first, last)`` pairs."""
    out = []
    for t in sorted(steps):
        if out and t == out[-1][1] + 1:
            out[-1] = (out[-1][0], t)
        else:
            out.append((t, t))
    return out


@dataclass
class MiningStats:
    nodes: int = 0
    pruned_logical: int = 0
    pruned_apriori: int = 0
    pruned_subset: int = 0
    removed_marginal: int = 0


def mine_patterns(index: SnapshotIndex, min_o: int = 2, min_t: int = 2, *, logical: bool = True,
                  apriori: bool = True, subset: bool = True, marginal: bool = True,
                  stats: MiningStats | None = None) -> list[PlatoonPattern]:
    """All time-closed and size-closed patterns with ``|O| >= min_o`` and ``|T| >= min_t``.

    Each pruning rule can be switched off; the output is the same either way.

    * logical: stop when the trucks left in index order cannot reach ``min_o``;
    * apriori: a node whose time set is below ``min_t`` has no useful descendant;
    * subset: if a truck with a smaller index than the last one added always
      co-drives with the node, the node and its subtree only re-derive patterns
      reached elsewhere in the tree, so the subtree is skipped;
    * marginal: if some other truck always co-drives with the node, the node is not
      size-closed and is not emitted.
    """
    if min_o < 2 or min_t < 1:
        raise ValueError("need min_o >= 2 and min_t >= 1")
    stats = stats if stats is not None else MiningStats()
    n = len(index.trucks)
    out: list[PlatoonPattern] = []
    timeline, members = index.timeline, index.members

    def closure(times: dict[int, int]) -> frozenset[int]:
        groups = iter(times.values())
        acc = set(members[next(groups)])
        for g in groups:
            acc &= members[g]
            if not acc:
                break
        return frozenset(acc)

    def visit(node: list[int], times: dict[int, int]) -> None:
        # times: t -> group id holding every truck of node
        stats.nodes += 1
        last = node[-1]
        if apriori and len(times) < min_t:
            stats.pruned_apriori += 1
            return
        if logical and len(node) + (n - 1 - last) < min_o:
            stats.pruned_logical += 1
            return
        clo = closure(times) if times else None
        if subset and clo is not None and any(x < last and x not in node for x in clo):
            stats.pruned_subset += 1
            return
        closed = clo is not None and len(clo) == len(node)
        if not closed and marginal:
            stats.removed_marginal += 1
        if closed and len(node) >= min_o and len(times) >= min_t:
            out.append(PlatoonPattern(tuple(index.trucks[i] for i in node), tuple(sorted(times))))
        if apriori and times:
            cands = sorted({x for g in set(times.values()) for x in members[g] if x > last})
        else:
            cands = range(last + 1, n)
        for j in cands:
            line = timeline[j]
            child = {t: g for t, g in times.items() if line.get(t) == g}
            node.append(j)
            visit(node, child)
            node.pop()

    for i in range(n):
        visit([i], dict(timeline[i]))
    out.sort(key=PlatoonPattern.sort_key)
    return out


# ------------------------------------------------------------------ summary
def step_distance(odo: dict[int, float], t: int) -> float | None:
    """Distance credited to timestep ``t``: forward difference, or backward at the end
    of an active stretch.  None when the truck has no neighbor step to measure from."""
    if t not in odo:
        return None
    if t + 1 in odo:
        return odo[t + 1] - odo[t]
    if t - 1 in odo:
        return odo[t] - odo[t - 1]
    return 0.0


def summarize_pattern(p: PlatoonPattern, odometers: dict[str, dict[int, float]], dt_s: float,
                      headways: dict[tuple[int, tuple[str, ...]], list[float]] | None = None) -> dict:
    """Duration, distance and mean headway of a pattern.

    ``odometers`` maps truck id to ``{timestep: odometer meters}`` on the grid.
    ``headways`` maps ``(t, members)`` of a co-driving set to its adjacent gaps (front to
    back); the pattern's headway at ``t`` sums the gaps between consecutive pattern
    members inside that set.
    """
    summary = {
        "duration_s": len(p.timesteps) * dt_s,
        "n_runs": len(consecutive_runs(p.timesteps)),
        "distance_km": None,
        "mean_headway_m": None,
        "max_headway_m": None,
        "coverage_ok": True,
    }
    totals = []
    for tid in p.trucks:
        odo = odometers.get(tid, {})
        steps = [step_distance(odo, t) for t in p.timesteps]
        if any(s is None for s in steps):
            summary["coverage_ok"] = False
            break
        totals.append(sum(steps))
    if summary["coverage_ok"] and totals:
        summary["distance_km"] = sum(totals) / len(totals) / 1000.0
    if headways is not None:
        gaps = []
        wanted = set(p.trucks)
        for (t, order), hw in headways.items():
            if t not in p.timesteps or not wanted <= set(order):
                continue
            pos = [i for i, m in enumerate(order) if m in wanted]
            for a, b in zip(pos, pos[1:]):
                gaps.append(sum(hw[a:b]))
        if gaps:
            summary["mean_headway_m"] = sum(gaps) / len(gaps)
            summary["max_headway_m"] = max(gaps)
    return summary


PATTERN_HEADER = ["pattern_id", "truck_ids", "first_ts", "last_ts", "n_timesteps", "duration_s", "distance_km",
                  "mean_headway_m", "n_runs"]


def _fmt(x, spec: str) -> str:
    return "" if x is None else format(x, spec)


def write_patterns(path, patterns: list[PlatoonPattern], steps_path=None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PATTERN_HEADER)
        for i, p in enumerate(patterns):
            s = p.summary
            w.writerow([i, " ".join(p.trucks), p.timesteps[0], p.timesteps[-1], len(p.timesteps),
                        _fmt(s.get("duration_s"), ".1f"), _fmt(s.get("distance_km"), ".4f"),
                        _fmt(s.get("mean_headway_m"), ".2f"), len(consecutive_runs(p.timesteps))])
    if steps_path is not None:
        with open(steps_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["pattern_id", "timestep"])
            for i, p in enumerate(patterns):
                for t in p.timesteps:
                    w.writerow([i, t])


def read_patterns(path, steps_path) -> list[PlatoonPattern]:
    steps: dict[int, list[int]] = {}
    with open(steps_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        for row in reader:
            if row:
                steps.setdefault(int(row[0]), []).append(int(row[1]))
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            pid = int(row["pattern_id"])
            summary = {
                "duration_s": float(row["duration_s"]) if row["duration_s"] else None,
                "distance_km": float(row["distance_km"]) if row["distance_km"] else None,
                "mean_headway_m": float(row["mean_headway_m"]) if row["mean_headway_m"] else None,
                "n_runs": int(row["n_runs"]),
            }
            out.append(PlatoonPattern(tuple(row["truck_ids"].split()), tuple(sorted(steps.get(pid, []))), summary))
    return out
