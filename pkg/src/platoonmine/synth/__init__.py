"""Synthetic networks, trajectories with planted platoons, and brute-force oracles."""

from .generate import GroundTruth, InfeasibleScenario, PlatoonPlan, Scenario, ScenarioSpec, generate, write_scenario
from .oracles import fd_bruteforce, oracle_cluster, oracle_patterns
from .templates import Template, build_graph, make_template
