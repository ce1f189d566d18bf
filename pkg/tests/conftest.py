import math

import pytest

from platoonmine.following import SnapshotTruck
from platoonmine.network import ALONG, AGAINST
from platoonmine.synth.templates import build_graph


def xy_graph(nodes, edges, **kw):
    """Graph from node positions in meters; see ``build_graph``."""
    return build_graph(nodes, edges, **kw)


def truck(graph, tid, seg, r, d=ALONG):
    return SnapshotTruck.on(graph, tid, seg, r, d)


@pytest.fixture(scope="session")
def line3():
    """Three 1 km bidirectional trunk segments in a row, west to east."""
    nodes = {"n0": (0, 0), "n1": (1000, 0), "n2": (2000, 0), "n3": (3000, 0)}
    edges = [("s1", "n0", "n1", "trunk", False), ("s2", "n1", "n2", "trunk", False),
             ("s3", "n2", "n3", "trunk", False)]
    return xy_graph(nodes, edges)


@pytest.fixture(scope="session")
def junction6():
    """Trunk from the west into junction J; expressway continues east (oneway),
    a trunk branch goes north.  Six segments of 500 m."""
    nodes = {"w2": (-1000, 0), "w1": (-500, 0), "j": (0, 0), "e1": (500, 0), "e2": (1000, 0),
             "n1": (0, 500), "n2": (0, 1000)}
    edges = [("t1", "w2", "w1", "trunk", False), ("t2", "w1", "j", "trunk", False),
             ("x1", "j", "e1", "expressway", True), ("x2", "e1", "e2", "expressway", True),
             ("b1", "j", "n1", "trunk", False), ("b2", "n1", "n2", "trunk", False)]
    return xy_graph(nodes, edges)


def close(a, b, tol):
    return (math.isinf(a) and math.isinf(b)) or abs(a - b) <= tol


__all__ = ["xy_graph", "truck", "close", "ALONG", "AGAINST"]


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[n])
