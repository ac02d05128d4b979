"""Epoch-stepped fleet simulation.

Each epoch: observe the new request batch, compute exogenous context
(request volume, per-vehicle crowding), enumerate and solve the assignment
LP, commit the chosen actions deterministically (lowest ids first), then move
every vehicle `delta` seconds with exact pickup/drop-off events. Requests not
matched in their arrival epoch leave the system.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import matching
from .demand import SamplePath, realize
from .routing import Limits, Vehicle, advance, apply_serve, check_insertion, relocate
from .values import AuxConfig, ValueTable


@dataclass
class Scenario:
    """Everything fixed across an episode: network, limits, demand model."""

    net: object
    oracle: object
    hierarchy: object
    limits: Limits
    n_epochs: int
    fleet_size: int = 100
    rebalance_points: list[int] = field(default_factory=list)
    aux: AuxConfig = field(default_factory=AuxConfig)
    model: object = None


@dataclass
class Policy:
    """Dispatch policy: value-guided ("adp") or myopic; optional relocation."""

    kind: str = "myopic"  # "adp" | "myopic"
    rebalancing: bool = False
    table: ValueTable | None = None

    def __post_init__(self):
        if self.kind not in ("adp", "myopic"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "adp" and self.table is None:
            raise ValueError("adp policy needs a value table")


def make_fleet(fleet_size: int, n_nodes: int, seed) -> list[Vehicle]:
    """Vehicles idle at uniformly drawn intersections."""
    rng = np.random.default_rng(seed)
    nodes = rng.integers(0, n_nodes, size=fleet_size)
    return [Vehicle(id=i, node=int(nodes[i])) for i in range(fleet_size)]


def nearby_vehicles(vehicles, oracle, wait_max: int) -> np.ndarray:
    """For each vehicle, how many others could reach its intersection within
    the wait budget (measured from their exact mid-arc positions)."""
    V = len(vehicles)
    if V == 0:
        return np.zeros(0, dtype=np.int64)
    anchors = np.array([v.heading if v.heading >= 0 else v.node for v in vehicles])
    rems = np.array([v.rem for v in vehicles], dtype=np.int64)
    locs = np.array([v.node for v in vehicles])
    eta = rems[:, None] + oracle.dist[np.ix_(anchors, locs)].astype(np.int64)
    within = eta <= wait_max
    np.fill_diagonal(within, False)
    return within.sum(axis=0).astype(np.int64)


@dataclass
class StepResult:
    seen: int
    served: int
    rebalanced: int
    empty_after: int
    avg_groups_nonempty: float
    avg_capacity_used: float
    events: list
    problem: matching.AssignmentProblem
    solution: matching.AssignmentSolution
    volume_bucket: int
    nearby_bucket_of: dict[int, int]


def step(vehicles, open_requests, epoch: int, scenario: Scenario,
         policy: Policy) -> StepResult:
    """Run one decision epoch in place (vehicles mutate, requests resolve)."""
    limits = scenario.limits
    oracle = scenario.oracle
    now = (epoch - 1) * limits.delta

    vol_bucket = scenario.aux.volume_bucket(len(open_requests))
    near = nearby_vehicles(vehicles, oracle, limits.wait_max)
    near_bucket_of = {v.id: scenario.aux.nearby_bucket(int(near[i]))
                      for i, v in enumerate(vehicles)}

    value_fn = None
    if policy.kind == "adp":
        table = policy.table
        cache: dict = {}

        def value_fn(post, rep):
            nb = near_bucket_of[rep.id]
            ck = (post.node, post.drops, post.pax, nb)
            val = cache.get(ck)
            if val is None:
                keys = table.keys_for(epoch, post.node, post.drops, post.pax,
                                      vol_bucket, nb)
                val = cache[ck] = table.estimate(keys)
            return val

    points = scenario.rebalance_points if policy.rebalancing else None
    problem = matching.enumerate_candidates(
        vehicles, open_requests, oracle, limits, now,
        rebalance_points=points, value_fn=value_fn)
    solution = matching.solve(problem)

    served = 0
    rebalanced = 0
    acted: set[int] = set()
    taken: set[int] = set()
    for cand, flow in zip(problem.candidates, solution.flows):
        f = int(flow)
        if f == 0:
            continue
        members = [v for v in problem.vclasses[cand.vclass].members
                   if v.id not in acted][:f]
        if cand.kind == "serve":
            reqs = [r for r in problem.rclasses[cand.rclass].members
                    if r.id not in taken][:f]
            for v, r in zip(members, reqs):
                verdict = check_insertion(v, r, oracle, limits, now)
                if not verdict.feasible:  # class members are attribute-identical
                    raise matching.MatchingError(
                        f"member {v.id} infeasible for solved serve flow")
                apply_serve(v, r, verdict)
                acted.add(v.id)
                taken.add(r.id)
                served += 1
        elif cand.kind == "relocate":
            for v in members:
                relocate(v, cand.target)
                acted.add(v.id)
                rebalanced += 1
        else:
            for v in members:
                acted.add(v.id)

    nonempty = [v for v in vehicles if not v.is_empty]
    avg_groups = (sum(len(v.assigned) for v in nonempty) / len(nonempty)
                  if nonempty else 0.0)
    avg_cap = (sum(v.passengers for v in nonempty) / len(nonempty)
               if nonempty else 0.0)

    events = []
    for v in vehicles:
        events.extend(advance(v, oracle, now, limits.delta))
    empty_after = sum(1 for v in vehicles if v.is_empty)

    return StepResult(len(open_requests), served, rebalanced, empty_after,
                      avg_groups, avg_cap, events, problem, solution,
                      vol_bucket, near_bucket_of)


# ---------------------------------------------------------------------------
# episodes and metrics

EPOCH_CSV_HEADER = ("epoch,seen,served,empty_vehicles,rebalanced,"
                    "avg_groups_nonempty,avg_capacity_used")


@dataclass
class EpochRow:
    epoch: int
    seen: int
    served: int
    empty_vehicles: int
    rebalanced: int
    avg_groups_nonempty: float
    avg_capacity_used: float


@dataclass
class EpisodeMetrics:
    rows: list[EpochRow] = field(default_factory=list)

    @property
    def total_seen(self) -> int:
        return sum(r.seen for r in self.rows)

    @property
    def total_served(self) -> int:
        return sum(r.served for r in self.rows)

    def write_csv(self, fh) -> None:
        fh.write(EPOCH_CSV_HEADER + "\n")
        for r in self.rows:
            fh.write(f"{r.epoch},{r.seen},{r.served},{r.empty_vehicles},"
                     f"{r.rebalanced},{r.avg_groups_nonempty!r},"
                     f"{r.avg_capacity_used!r}\n")

    @staticmethod
    def read_csv(fh) -> "EpisodeMetrics":
        rows = []
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("epoch"):
                continue
            p = ln.split(",")
            rows.append(EpochRow(int(p[0]), int(p[1]), int(p[2]), int(p[3]),
                                 int(p[4]), float(p[5]), float(p[6])))
        return EpisodeMetrics(rows)


def run_episode(scenario: Scenario, policy: Policy, path: SamplePath,
                fleet_seed) -> EpisodeMetrics:
    """Simulate one demand day from a fresh uniformly placed fleet."""
    vehicles = make_fleet(scenario.fleet_size, scenario.net.n_nodes, fleet_seed)
    requests = realize(path, scenario.oracle, scenario.limits.wait_max,
                       scenario.limits.delay_max, scenario.limits.delta)
    metrics = EpisodeMetrics()
    for t in range(1, scenario.n_epochs + 1):
        res = step(vehicles, requests.get(t, []), t, scenario, policy)
        metrics.rows.append(EpochRow(t, res.seen, res.served, res.empty_after,
                                     res.rebalanced, res.avg_groups_nonempty,
                                     res.avg_capacity_used))
    return metrics
