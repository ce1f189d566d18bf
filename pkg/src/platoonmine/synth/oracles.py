"""Brute-force reference implementations used to check the fast code paths.

Nothing here calls the clustering, mining or routing internals; each oracle
re-derives its answer by exhaustive enumeration.
"""

from __future__ import annotations

import itertools
import math

from ..following import SnapshotTruck, following_distance, theta_remaining
from ..ids import natural_key
from ..network import ALONG, INF, RoadGraph

MAX_CLUSTER_TRUCKS = 12
MAX_PATTERN_TRUCKS = 8
MAX_PATTERN_STEPS = 12


class OracleTooLarge(ValueError):
    pass


# ------------------------------------------------------------------ clusters
def oracle_cluster(snapshot, graph: RoadGraph, eps_m: float = 1000.0, min_pts: int = 2,
                   fd=following_distance) -> list[frozenset[str]]:
    """Density-connected components of the ``FD <= eps`` relation.

    A core truck has at least ``min_pts - 1`` others within eps.  Cores within eps of
    each other share a component; a non-core truck joins the component of the
    lowest-id core within eps of it.
    """
    snapshot = sorted(snapshot, key=lambda t: natural_key(t.truck_id))
    n = len(snapshot)
    if n > MAX_CLUSTER_TRUCKS:
        raise OracleTooLarge(f"oracle_cluster handles at most {MAX_CLUSTER_TRUCKS} trucks")
    close = [[False] * n for _ in range(n)]
    for i in range(n):
        for j in range(i + 1, n):
            if fd(snapshot[i], snapshot[j], graph, eps_m) <= eps_m:
                close[i][j] = close[j][i] = True
    core = [sum(close[i]) + 1 >= min_pts for i in range(n)]
    label = [-1] * n
    comp = 0
    for i in range(n):
        if not core[i] or label[i] >= 0:
            continue
        stack = [i]
        label[i] = comp
        while stack:
            p = stack.pop()
            for q in range(n):
                if close[p][q] and label[q] < 0:
                    label[q] = comp
                    if core[q]:
                        stack.append(q)
        comp += 1
    out = []
    for c in range(comp):
        members = frozenset(snapshot[i].truck_id for i in range(n) if label[i] == c)
        if len(members) >= min_pts:
            out.append(members)
    return sorted(out, key=lambda s: natural_key(min(s, key=natural_key)))


# ------------------------------------------------------------------ patterns
def _brute_tmax(group, sets_by_t) -> frozenset[int]:
    return frozenset(t for t, sets in sets_by_t.items() if any(group <= frozenset(s) for s in sets))


def oracle_patterns(sets_by_t: dict, min_o: int = 2, min_t: int = 2) -> list[tuple[tuple[str, ...], tuple[int, ...]]]:
    """Every ``(O, T_max(O))`` meeting the thresholds that is both time- and size-closed."""
    trucks = sorted({m for sets in sets_by_t.values() for s in sets for m in s}, key=natural_key)
    if len(trucks) > MAX_PATTERN_TRUCKS or len(sets_by_t) > MAX_PATTERN_STEPS:
        raise OracleTooLarge("oracle_patterns handles at most 8 trucks and 12 timesteps")
    cands = []
    for k in range(max(min_o, 1), len(trucks) + 1):
        for combo in itertools.combinations(trucks, k):
            group = frozenset(combo)
            tm = _brute_tmax(group, sets_by_t)
            if len(tm) >= min_t:
                cands.append((group, tm))
    keep = []
    for o, t in cands:
        dominated = False
        for o2, t2 in cands:
            if (o == o2 and t < t2) or (o < o2 and t == t2):
                dominated = True
                break
        if not dominated:
            keep.append((tuple(sorted(o, key=natural_key)), tuple(sorted(t))))
    keep.sort(key=lambda p: (-len(p[0]), p[1][0], [natural_key(x) for x in p[0]]))
    return keep


# ------------------------------------------------------- following distance
def _trails(graph: RoadGraph, start_node: str, banned_first: tuple[str, int] | None, cutoff: float,
            forbidden: set[str], final: tuple[str, int]):
    """Yield lengths of every directed trail from ``start_node`` that ends by traversing
    ``final``; intermediate steps avoid segments in ``forbidden``, never U-turn and never
    repeat a directed segment.  Pure enumeration over the edge list."""
    seg_list = list(graph.segments.values())
    out_moves: dict[str, list[tuple[str, int, str, float]]] = {}
    for s in seg_list:
        out_moves.setdefault(s.from_node, []).append((s.segment_id, ALONG, s.to_node, s.length_m))
        if not s.oneway:
            out_moves.setdefault(s.to_node, []).append((s.segment_id, -1, s.from_node, s.length_m))

    def walk(node, last_seg, length, used):
        for seg, d, head, ln in out_moves.get(node, ()):
            if seg == last_seg or (seg, d) in used:
                continue
            nl = length + ln
            if nl > cutoff:
                continue
            if (seg, d) == final:
                yield nl
                continue
            if seg in forbidden:
                continue
            yield from walk(head, seg, nl, used | {(seg, d)})

    first_last = banned_first[0] if banned_first else None
    yield from walk(start_node, first_last, 0.0, frozenset())


def fd_bruteforce(a: SnapshotTruck, b: SnapshotTruck, graph: RoadGraph, eps_m: float = 1000.0,
                  cutoff: float | None = None) -> float:
    """Following distance by enumerating every simple directed trail up to the cutoff."""
    if cutoff is None:
        cutoff = 3.0 * eps_m
    if a.segment_id == b.segment_id:
        return a.seglen_m * abs(a.r - b.r) if a.dir == b.dir else INF

    def catch(f, l):
        rem = theta_remaining(f) * f.seglen_m
        left = theta_remaining(l) * l.seglen_m
        forbidden = {f.segment_id, l.segment_id}
        best = INF
        for length in _trails(graph, f.to_node, (f.segment_id, f.dir), cutoff - rem + left, forbidden,
                              (l.segment_id, l.dir)):
            best = min(best, length)
        if best == INF:
            return INF
        cd = rem + best - left
        return cd if cd <= cutoff else INF

    return min(catch(a, b), catch(b, a))


# --------------------------------------------------------------- map matching
def viterbi_bruteforce(points, layers, score_fn, tie_tol: float = 1e-9):
    """Best state sequence by scoring every combination.  Scores within ``tie_tol``
    (relative) of the best count as ties; the first of them in lexicographic order
    of the layers wins."""
    if math.prod(len(layer) for layer in layers) > 2_000_000:
        raise OracleTooLarge("too many state paths to enumerate")
    scored = [(score_fn(points, list(path)), path) for path in itertools.product(*layers)]
    best = max(s for s, _ in scored)
    tol = tie_tol * max(1.0, abs(best))
    path = next(p for s, p in scored if s >= best - tol)
    return list(path), best
