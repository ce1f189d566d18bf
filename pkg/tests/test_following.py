"""Following distance: scenario fixtures for same-segment, single-carriageway,
dual-carriageway and mixed junction geometry, plus oracle and symmetry checks."""

import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoonmine.following import catch_up_distance, following_distance, order_front_to_back, theta_remaining
from platoonmine.network import AGAINST, ALONG, INF
from platoonmine.synth.oracles import fd_bruteforce
from platoonmine.synth.templates import grid

from conftest import truck, xy_graph


def fd(g, a, b, eps=1000.0):
    d = following_distance(a, b, g, eps)
    assert d == following_distance(b, a, g, eps)
    return d


def table_formula(ete, len_f, theta_f, len_l, theta_l):
    """Follower-to-leader end-to-end distance plus the follower's remaining part of
    its segment, minus the leader's remaining part of its own."""
    return ete + len_f * theta_f - len_l * theta_l


@pytest.fixture(scope="module")
def single():
    return xy_graph({"a": (0, 0), "b": (1000, 0)}, [("s", "a", "b", "trunk", False)])


@pytest.fixture(scope="module")
def dual():
    """Four 1 km segments per carriageway, 20 m apart, joined at both ends."""
    nodes = {}
    edges = []
    for i in range(5):
        nodes[f"e{i}"] = (i * 1000.0, 0.0)
        nodes[f"w{i}"] = (i * 1000.0, 20.0)
    for i in range(4):
        edges.append((f"E{i}", f"e{i}", f"e{i + 1}", "expressway", True))
        edges.append((f"W{i}", f"w{i + 1}", f"w{i}", "expressway", True))
    edges.append(("U0", "w0", "e0", "expressway", True))
    edges.append(("U4", "e4", "w4", "expressway", True))
    return xy_graph(nodes, edges)


# ------------------------------------------------------------------ theta
@pytest.mark.parametrize("r,d,want", [(0.3, ALONG, 0.7), (0.3, AGAINST, 0.3), (1.0, ALONG, 0.0)])
def test_theta_remaining(single, r, d, want):
    assert theta_remaining(truck(single, "x", "s", r, d)) == pytest.approx(want)


# --------------------------------------------------------- same segment
def test_same_segment_face_to_face(single):
    assert fd(single, truck(single, "1", "s", 0.2, ALONG), truck(single, "2", "s", 0.7, AGAINST)) == INF


def test_same_segment_back_to_back(single):
    assert fd(single, truck(single, "1", "s", 0.2, AGAINST), truck(single, "2", "s", 0.7, ALONG)) == INF


@pytest.mark.parametrize("d", [ALONG, AGAINST])
def test_same_segment_same_dir(single, d):
    a, b = truck(single, "1", "s", 0.2, d), truck(single, "2", "s", 0.7, d)
    assert fd(single, a, b) == pytest.approx(500.0, abs=0.5)


def test_catch_up_same_segment(single):
    a, b = truck(single, "1", "s", 0.2), truck(single, "2", "s", 0.7)
    assert catch_up_distance(a, b, single) == pytest.approx(1000 * (0.7 - 0.2))
    assert catch_up_distance(b, a, single) == INF


# ------------------------------------------------- single carriageway
def test_single_face_to_face(line3):
    a = truck(line3, "1", "s1", 0.8, ALONG)
    b = truck(line3, "2", "s2", 0.2, AGAINST)
    assert fd(line3, a, b) == INF


def test_single_back_to_back(line3):
    a = truck(line3, "1", "s1", 0.8, AGAINST)
    b = truck(line3, "2", "s2", 0.2, ALONG)
    assert fd(line3, a, b) == INF


def test_single_westbound_follow(line3):
    # truck 1 leads westbound on s1; truck 2 follows on s2
    lead = truck(line3, "1", "s1", 0.5, AGAINST)
    foll = truck(line3, "2", "s2", 0.3, AGAINST)
    ete = line3.ete_route(foll.to_node, lead.to_node)[1]
    want = table_formula(ete, foll.seglen_m, theta_remaining(foll), lead.seglen_m, theta_remaining(lead))
    assert want == pytest.approx(800.0, abs=1.0)
    assert fd(line3, lead, foll) == pytest.approx(want, abs=0.5)


def test_single_eastbound_follow(line3):
    foll = truck(line3, "1", "s1", 0.5, ALONG)
    lead = truck(line3, "2", "s2", 0.3, ALONG)
    ete = line3.ete_route(foll.to_node, lead.to_node)[1]
    want = table_formula(ete, foll.seglen_m, theta_remaining(foll), lead.seglen_m, theta_remaining(lead))
    assert fd(line3, foll, lead) == pytest.approx(want, abs=0.5)
    # hand routing: rest of s1 plus the part of s2 already driven
    assert catch_up_distance(foll, lead, line3) == pytest.approx(1000 * 0.5 + 1000 * 0.3, abs=1.0)


# --------------------------------------------------- dual carriageway
def test_dual_opposite_carriageways(dual):
    a = truck(dual, "1", "E1", 0.5)
    b = truck(dual, "2", "W1", 0.5)
    # both end-to-end routes loop around an end of the road: far beyond eps
    assert dual.ete_route(a.to_node, b.to_node)[1] > 3000
    assert dual.ete_route(b.to_node, a.to_node)[1] > 3000
    assert fd(dual, a, b) == INF


def test_dual_same_carriageway(dual):
    foll = truck(dual, "1", "E1", 0.5)
    lead = truck(dual, "2", "E2", 0.3)
    assert dual.ete_route(lead.to_node, foll.to_node)[1] > 3000
    ete = dual.ete_route(foll.to_node, lead.to_node)[1]
    want = table_formula(ete, foll.seglen_m, theta_remaining(foll), lead.seglen_m, theta_remaining(lead))
    assert fd(dual, foll, lead) == pytest.approx(want, abs=0.5)


# ------------------------------------------------------------ junction
def test_junction_trunk_to_expressway(junction6):
    foll = truck(junction6, "1", "t2", 0.5, ALONG)
    lead = truck(junction6, "2", "x1", 0.4, ALONG)
    path, ete = junction6.ete_route(foll.to_node, lead.to_node)
    assert "x1" in path and "t2" not in path
    want = table_formula(ete, foll.seglen_m, theta_remaining(foll), lead.seglen_m, theta_remaining(lead))
    got = fd(junction6, foll, lead)
    assert got == pytest.approx(want, abs=0.5)
    assert got == pytest.approx(fd_bruteforce(foll, lead, junction6), abs=0.5)


def test_junction_follower_route_uses_own_segment(junction6):
    a = truck(junction6, "1", "t2", 0.5, AGAINST)
    b = truck(junction6, "2", "x1", 0.4, ALONG)
    assert fd(junction6, a, b) == INF


def test_junction_diverging(junction6):
    a = truck(junction6, "1", "b1", 0.5, ALONG)
    b = truck(junction6, "2", "t2", 0.5, AGAINST)
    assert fd(junction6, a, b) == INF


def test_junction_branch_follow(junction6):
    lead = truck(junction6, "1", "b1", 0.4, ALONG)
    foll = truck(junction6, "2", "t2", 0.5, ALONG)
    path, ete = junction6.ete_route(foll.to_node, lead.to_node)
    assert path == ["b1"]
    want = table_formula(ete, foll.seglen_m, theta_remaining(foll), lead.seglen_m, theta_remaining(lead))
    assert fd(junction6, lead, foll) == pytest.approx(want, abs=0.5)


def test_unreachable_is_inf():
    g = xy_graph({"a": (0, 0), "b": (500, 0), "c": (0, 300), "d": (500, 300)},
                 [("p", "a", "b", "trunk", False), ("q", "c", "d", "trunk", False)])
    assert catch_up_distance(truck(g, "1", "p", 0.5), truck(g, "2", "q", 0.5), g) == INF


# ------------------------------------------------------------ properties
@settings(max_examples=200, deadline=None)
@given(r=st.lists(st.floats(0, 1), min_size=3, max_size=3), d=st.sampled_from([ALONG, AGAINST]))
def test_additive_on_one_segment(single, r, d):
    t = sorted(r)
    a, b, c = (truck(single, str(i), "s", x, d) for i, x in enumerate(t))
    assert fd(single, a, c) == pytest.approx(fd(single, a, b) + fd(single, b, c), abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(r1=st.floats(0, 1), r2=st.floats(0, 1), d=st.sampled_from([ALONG, AGAINST]))
def test_zero_iff_same_position(single, r1, r2, d):
    v = fd(single, truck(single, "1", "s", r1, d), truck(single, "2", "s", r2, d))
    assert v >= 0
    assert (v == 0) == (r1 == r2)


def random_trucks(graph, rng, n):
    out = []
    for i in range(n):
        sid = rng.choice(graph.segment_ids)
        d = ALONG if graph.segments[sid].oneway else rng.choice([ALONG, AGAINST])
        out.append(truck(graph, str(i), sid, rng.random(), d))
    return out


def test_matches_bruteforce_on_small_networks(junction6, dual):
    rng = random.Random(5)
    small_grid = grid(3, 3, 800.0, expressway_rows=(0,)).graph
    for g in (junction6, dual, small_grid):
        ts = random_trucks(g, rng, 30)
        for a, b in zip(ts, ts[1:]):
            got = following_distance(a, b, g, 1000.0)
            want = fd_bruteforce(a, b, g, 1000.0)
            assert (got == want == INF) or got == pytest.approx(want, abs=1e-6), (a, b)


def test_order_front_to_back(line3):
    ts = [truck(line3, "a", "s1", 0.9), truck(line3, "b", "s2", 0.3), truck(line3, "c", "s1", 0.5)]
    assert [t.truck_id for t in order_front_to_back(ts, line3, 3000.0)] == ["b", "a", "c"]
