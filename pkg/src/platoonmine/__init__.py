"""Spontaneous truck platoon mining from GPS trajectories and a road network."""

from .clustering import ClusterParams, CoDrivingSet, OpticsOutput, detect_codriving_sets, p_optics
from .following import SnapshotTruck, catch_up_distance, following_distance, theta_remaining
from .geo import geo_distance
from .matching import HmmParams, MatchedPoint, TruckPoint, match_trajectory
from .network import ALONG, AGAINST, RoadClass, RoadGraph, RoadNode, RoadSegment, load_network

__version__ = "0.1.0"
