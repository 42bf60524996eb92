"""Fault detection engine for acyclic device dependency networks."""

from .errors import FaultEngineError
from .topology import DependencyGraph, build_reachability, depth_levels, parse_topology, topological_sort

__version__ = "0.1.0"

__all__ = [
    "DependencyGraph",
    "FaultEngineError",
    "build_reachability",
    "depth_levels",
    "parse_topology",
    "topological_sort",
]
