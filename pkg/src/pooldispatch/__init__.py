"""Dispatch optimization toolkit for large ride-pooling fleets.

The package simulates a metropolitan ride-pooling service in discrete
dispatch rounds. Each round solves a small linear assignment problem whose
serve coefficients combine the immediate reward with a learned estimate of
the marginal value of the vehicle's resulting state; the estimates are
trained offline from the LP's own dual prices by repeated forward simulation.

Layout:

* :mod:`pooldispatch.network` - road graphs, travel times, spatial zones
* :mod:`pooldispatch.demand` - request model fitting and path sampling
* :mod:`pooldispatch.routing` - vehicles, pooling feasibility, route motion
* :mod:`pooldispatch.matching` - per-round assignment LP and its duals
* :mod:`pooldispatch.values` - hierarchical post-decision value table
* :mod:`pooldispatch.simulate` - episode roll-outs under a fixed policy
* :mod:`pooldispatch.training` - dual-driven value iteration
* :mod:`pooldispatch.cli` - generate / train / evaluate / sweep commands

Hot kernels live in :mod:`pooldispatch._kernels` with a compiled extension
and a pure-Python fallback chosen at import time (set POOLDISPATCH_PURE=1 to
force the fallback).
"""

from pooldispatch._kernels import BACKEND
from pooldispatch.demand import ArrivalModel, Request, SamplePath, sample_path
from pooldispatch.matching import AssignmentSolution, enumerate_candidates, solve
from pooldispatch.network import (
    AggregationHierarchy,
    RoadNetwork,
    build_aggregation,
    generate_grid,
    load_network,
    make_network,
    save_network,
)
from pooldispatch.routing import Limits, Vehicle
from pooldispatch.simulate import Policy, Scenario, run_episode
from pooldispatch.training import TrainingConfig, train
from pooldispatch.values import ValueTable

__version__ = "0.1.0"

__all__ = [
    "AggregationHierarchy",
    "ArrivalModel",
    "AssignmentSolution",
    "BACKEND",
    "Limits",
    "Policy",
    "Request",
    "RoadNetwork",
    "SamplePath",
    "Scenario",
    "TrainingConfig",
    "ValueTable",
    "Vehicle",
    "build_aggregation",
    "enumerate_candidates",
    "generate_grid",
    "load_network",
    "make_network",
    "run_episode",
    "sample_path",
    "save_network",
    "solve",
    "train",
]
