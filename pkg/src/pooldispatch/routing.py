"""Vehicle state, pooling feasibility, and second-exact motion.

A vehicle serves up to `groups_max` passenger groups at once subject to its
seat capacity. New pickups are only accepted when every previously assigned
group is already on board, the pickup is reachable within the request's wait
budget, and some drop-off ordering (pickup first) meets every deadline. Among
deadline-feasible orderings the one finishing earliest wins; ties go to the
lexicographically smallest request-id sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .demand import Request


class RoutingError(RuntimeError):
    """Internal motion/feasibility contract violation."""


@dataclass
class Limits:
    """Service quality and pooling limits, all integer seconds/counts."""

    wait_max: int = 90
    delay_max: int = 90
    groups_max: int = 3
    capacity_max: int = 6
    delta: int = 60

    def validate(self) -> "Limits":
        for name in ("wait_max", "delay_max", "groups_max", "capacity_max", "delta"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {v!r}")
            setattr(self, name, int(v))
        if self.wait_max < 0 or self.delay_max < 0:
            raise ValueError("wait/delay budgets must be >= 0")
        if not 1 <= self.groups_max <= _kernels.MAX_STOPS - 1:
            raise ValueError(f"groups_max must be 1..{_kernels.MAX_STOPS - 1}")
        if self.capacity_max < 1 or self.delta < 1:
            raise ValueError("capacity_max and delta must be >= 1")
        return self


class Stop(NamedTuple):
    node: int
    kind: str  # "pickup" | "dropoff"
    request_id: int


class Event(NamedTuple):
    kind: str  # "pickup" | "dropoff" | "relocated"
    request_id: int
    node: int
    time: int


@dataclass
class RoutePlan:
    """Stop sequence with projected arrival seconds (absolute)."""

    stops: list[Stop]
    arrivals: list[int]


@dataclass
class Vehicle:
    """One vehicle: exact position plus its committed assignments and route.

    Position is (node, heading, rem): at `node` when heading < 0, otherwise
    `rem` seconds from finishing the arc node->heading. `assigned` stays
    sorted by request id; `stops` is the committed visit order.
    """

    id: int
    node: int
    heading: int = -1
    rem: int = 0
    assigned: list[Request] = field(default_factory=list)
    stops: list[Stop] = field(default_factory=list)
    relocate_target: int = -1

    @property
    def is_empty(self) -> bool:
        return not self.assigned

    @property
    def passengers(self) -> int:
        return sum(r.passengers for r in self.assigned)

    @property
    def has_pending_pickup(self) -> bool:
        return any(not r.picked_up for r in self.assigned)

    def class_key(self):
        """Exact-attribute grouping key for the assignment LP."""
        return (self.node, self.heading, self.rem,
                tuple(r.id for r in self.assigned), self.relocate_target)

    def position(self):
        return (self.node, self.heading, self.rem)


@dataclass
class FeasibilityVerdict:
    feasible: bool
    reason: str = ""
    plan: RoutePlan | None = None
    projected_dropoffs: dict[int, int] | None = None
    pickup_time: int = -1


def _merged_dropoffs(vehicle: Vehicle, request: Request):
    """Drop-off candidates (existing + new) in ascending request-id order."""
    entries = [(r.id, r.destination, r.deadline, r.passengers) for r in vehicle.assigned]
    entries.append((request.id, request.destination, request.deadline,
                    request.passengers))
    entries.sort()
    ids = [e[0] for e in entries]
    drops = np.array([e[1] for e in entries], dtype=np.int64)
    deads = np.array([e[2] for e in entries], dtype=np.int64)
    return ids, drops, deads


def check_insertion(vehicle: Vehicle, request: Request, oracle, limits: Limits,
                    now: int) -> FeasibilityVerdict:
    """Can `vehicle` additionally serve `request` starting now?

    Checks capacity, group count, the all-aboard rule, the wait budget from
    the vehicle's exact mid-arc position, and deadline feasibility of the
    best drop-off ordering. On success the verdict carries the new route and
    projected drop-off seconds per request id.
    """
    if any(r.id == request.id for r in vehicle.assigned):
        raise RoutingError(f"request {request.id} already assigned to vehicle {vehicle.id}")
    if vehicle.passengers + request.passengers > limits.capacity_max:
        return FeasibilityVerdict(False, "capacity")
    if len(vehicle.assigned) + 1 > limits.groups_max:
        return FeasibilityVerdict(False, "groups")
    if vehicle.has_pending_pickup:
        return FeasibilityVerdict(False, "pending_pickup")

    ids, drops, deads = _merged_dropoffs(vehicle, request)
    ok, perm, times, pickup_time = _kernels.best_insertion(
        oracle.dist, vehicle.node, vehicle.heading, vehicle.rem, now,
        limits.wait_max, request.origin, drops, deads)
    if not ok:
        reason = "wait" if pickup_time - now > limits.wait_max else "deadline"
        return FeasibilityVerdict(False, reason, pickup_time=pickup_time)
    stops = [Stop(request.origin, "pickup", request.id)]
    arrivals = [int(pickup_time)]
    projected = {}
    for j, p in enumerate(perm.tolist()):
        stops.append(Stop(int(drops[p]), "dropoff", ids[p]))
        arrivals.append(int(times[j]))
        projected[ids[p]] = int(times[j])
    return FeasibilityVerdict(True, "", RoutePlan(stops, arrivals), projected,
                              int(pickup_time))


def apply_serve(vehicle: Vehicle, request: Request, verdict: FeasibilityVerdict) -> None:
    """Commit a feasible insertion: new route, cleared relocation."""
    if not verdict.feasible or verdict.plan is None:
        raise RoutingError("cannot apply an infeasible verdict")
    vehicle.assigned.append(request)
    vehicle.assigned.sort(key=lambda r: r.id)
    vehicle.stops = list(verdict.plan.stops)
    vehicle.relocate_target = -1


def relocate(vehicle: Vehicle, target: int) -> None:
    """Point an empty vehicle at a relocation anchor (no-op when already there)."""
    if not vehicle.is_empty:
        raise RoutingError("only empty vehicles relocate")
    vehicle.stops = []
    if vehicle.heading < 0 and vehicle.node == target:
        vehicle.relocate_target = -1
        return
    vehicle.relocate_target = int(target)


def advance(vehicle: Vehicle, oracle, now: int, delta: int) -> list[Event]:
    """Move the vehicle `delta` seconds along its committed route.

    Pickup/drop-off events fire at the exact second their stop is reached;
    drop-offs must meet their deadline (a violation is a contract bug, not a
    recoverable condition). Splitting the advance into consecutive smaller
    calls yields identical events and final position.
    """
    events: list[Event] = []
    if vehicle.stops:
        stop_nodes = np.array([s.node for s in vehicle.stops], dtype=np.int32)
        arrivals, nreach, node, heading, rem = _kernels.walk_route(
            oracle.indptr, oracle.indices, oracle.weights, oracle.dist,
            oracle.next_hop, vehicle.node, vehicle.heading, vehicle.rem,
            stop_nodes, now, delta)
        by_id = {r.id: r for r in vehicle.assigned}
        for i in range(int(nreach)):
            stop = vehicle.stops[i]
            t = int(arrivals[i])
            req = by_id.get(stop.request_id)
            if req is None:
                raise RoutingError(f"stop for unknown request {stop.request_id}")
            if stop.kind == "pickup":
                req.picked_up = True
            else:
                if t > req.deadline:
                    raise RoutingError(
                        f"deadline violated: request {req.id} dropped at {t} "
                        f"> {req.deadline}")
                vehicle.assigned.remove(req)
            events.append(Event(stop.kind, stop.request_id, stop.node, t))
        vehicle.stops = vehicle.stops[int(nreach):]
        vehicle.node, vehicle.heading, vehicle.rem = int(node), int(heading), int(rem)
    elif vehicle.relocate_target >= 0:
        target = np.array([vehicle.relocate_target], dtype=np.int32)
        arrivals, nreach, node, heading, rem = _kernels.walk_route(
            oracle.indptr, oracle.indices, oracle.weights, oracle.dist,
            oracle.next_hop, vehicle.node, vehicle.heading, vehicle.rem,
            target, now, delta)
        vehicle.node, vehicle.heading, vehicle.rem = int(node), int(heading), int(rem)
        if int(nreach) == 1:
            events.append(Event("relocated", -1, vehicle.relocate_target,
                                int(arrivals[0])))
            vehicle.relocate_target = -1
    elif vehicle.heading >= 0:
        # no commitments but still mid-arc: roll to the arc's end
        step = min(vehicle.rem, delta)
        vehicle.rem -= step
        if vehicle.rem == 0:
            vehicle.node = vehicle.heading
            vehicle.heading = -1
    return events


def route_stop_nodes(vehicle: Vehicle) -> np.ndarray:
    """Nodes this vehicle is committed to visit, relocation target included."""
    if vehicle.stops:
        return np.array([s.node for s in vehicle.stops], dtype=np.int32)
    if vehicle.relocate_target >= 0:
        return np.array([vehicle.relocate_target], dtype=np.int32)
    return np.empty(0, dtype=np.int32)
