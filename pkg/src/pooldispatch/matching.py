"""Per-epoch assignment: feasible candidates, exact LP, flows and duals.

Vehicles and open requests are grouped into classes by exact attribute
equality. Decision variables are class-level action flows: Serve a request
class (coefficient 1 plus the value of the resulting post-decision state),
Relocate an empty class toward an anchor point, or Null (follow the current
route). Vehicle-class flows are conserved exactly; request-class flows are
capped by the class count. The constraint matrix is an interval/assignment
structure, so basic optimal solutions are integral; we solve with an exact
simplex method and assert integrality rather than rounding heuristically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix

from . import _kernels
from .routing import Limits, Vehicle, route_stop_nodes


class MatchingError(RuntimeError):
    """LP failure or a non-integral vertex (should be impossible)."""


class PostSummary(NamedTuple):
    """Vehicle state projected one epoch forward under a candidate action."""

    node: int
    heading: int
    rem: int
    drops: tuple  # remaining drop-off nodes in visit order
    pax: int


@dataclass
class VehicleClass:
    key: tuple
    members: list[Vehicle]

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def rep(self) -> Vehicle:
        return self.members[0]


@dataclass
class RequestClass:
    key: tuple
    members: list

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def rep(self):
        return self.members[0]


@dataclass
class Candidate:
    vclass: int
    kind: str  # "serve" | "relocate" | "null"
    rclass: int = -1
    target: int = -1
    coeff: float = 0.0
    post: PostSummary | None = None


@dataclass
class AssignmentProblem:
    vclasses: list[VehicleClass]
    rclasses: list[RequestClass]
    candidates: list[Candidate]
    vclass_of: dict[int, int] = field(default_factory=dict)  # vehicle id -> class


@dataclass
class AssignmentSolution:
    flows: np.ndarray
    objective: float
    vehicle_duals: np.ndarray
    request_duals: np.ndarray


ValueFn = Callable[[PostSummary, Vehicle], float]


def _null_posts(problem_vclasses, oracle, now, delta):
    """Post-decision summaries for every class following its current route."""
    V = len(problem_vclasses)
    vnode = np.empty(V, dtype=np.int32)
    vheading = np.empty(V, dtype=np.int32)
    vrem = np.empty(V, dtype=np.int32)
    stops_list = []
    for i, vc in enumerate(problem_vclasses):
        rep = vc.rep
        vnode[i], vheading[i], vrem[i] = rep.node, rep.heading, rep.rem
        stops_list.append(route_stop_nodes(rep))
    sptr = np.zeros(V + 1, dtype=np.int32)
    for i, s in enumerate(stops_list):
        sptr[i + 1] = sptr[i] + len(s)
    snode = (np.concatenate(stops_list).astype(np.int32)
             if stops_list and sptr[-1] else np.empty(0, dtype=np.int32))
    nreach, node2, heading2, rem2 = _kernels.batch_walk(
        oracle.indptr, oracle.indices, oracle.weights, oracle.dist,
        oracle.next_hop, vnode, vheading, vrem, sptr, snode, now, delta)
    posts = []
    for i, vc in enumerate(problem_vclasses):
        rep = vc.rep
        nr = int(nreach[i])
        dropped_pax = 0
        drops = []
        for j, stop in enumerate(rep.stops):
            if stop.kind != "dropoff":
                continue
            req = next(r for r in rep.assigned if r.id == stop.request_id)
            if j < nr:
                dropped_pax += req.passengers
            else:
                drops.append(stop.node)
        posts.append(PostSummary(int(node2[i]), int(heading2[i]), int(rem2[i]),
                                 tuple(drops), rep.passengers - dropped_pax))
    return posts


def enumerate_candidates(vehicles, requests, oracle, limits: Limits, now: int,
                         rebalance_points=None, value_fn: ValueFn | None = None,
                         ) -> AssignmentProblem:
    """Group vehicles/requests into classes and list every admissible action.

    `value_fn(post, rep_vehicle)` scores post-decision states; absent, the
    objective is purely myopic (serve coefficients 1, everything else 0).
    Relocate candidates exist only when `rebalance_points` is given, and only
    for empty vehicle classes.
    """
    by_vkey: dict[tuple, list[Vehicle]] = {}
    for v in vehicles:
        by_vkey.setdefault(v.class_key(), []).append(v)
    vclasses = [VehicleClass(k, sorted(ms, key=lambda v: v.id))
                for k, ms in sorted(by_vkey.items())]
    by_rkey: dict[tuple, list] = {}
    for r in requests:
        key = (r.origin, r.destination, r.passengers, r.deadline)
        by_rkey.setdefault(key, []).append(r)
    rclasses = [RequestClass(k, sorted(ms, key=lambda r: r.id))
                for k, ms in sorted(by_rkey.items())]

    problem = AssignmentProblem(vclasses, rclasses, [])
    for i, vc in enumerate(vclasses):
        for v in vc.members:
            problem.vclass_of[v.id] = i

    def value(post, rep):
        return 0.0 if value_fn is None else float(value_fn(post, rep))

    # Null: every class follows its committed route
    null_posts = _null_posts(vclasses, oracle, now, limits.delta)
    null_coeffs = [value(null_posts[i], vc.rep) for i, vc in enumerate(vclasses)]
    # Serve: batch-screen class representatives
    V, R = len(vclasses), len(rclasses)
    if V and R:
        vnode = np.array([vc.rep.node for vc in vclasses], dtype=np.int32)
        vheading = np.array([vc.rep.heading for vc in vclasses], dtype=np.int32)
        vrem = np.array([vc.rep.rem for vc in vclasses], dtype=np.int32)
        vpend = np.array([1 if vc.rep.has_pending_pickup else 0 for vc in vclasses],
                         dtype=np.uint8)
        vpax = np.array([vc.rep.passengers for vc in vclasses], dtype=np.int32)
        dptr = np.zeros(V + 1, dtype=np.int32)
        ddest, ddead, dpax, drid = [], [], [], []
        for i, vc in enumerate(vclasses):
            for r in vc.rep.assigned:  # sorted by id
                ddest.append(r.destination)
                ddead.append(r.deadline)
                dpax.append(r.passengers)
                drid.append(r.id)
            dptr[i + 1] = len(ddest)
        rorig = np.array([rc.rep.origin for rc in rclasses], dtype=np.int32)
        rdest = np.array([rc.rep.destination for rc in rclasses], dtype=np.int32)
        rdead = np.array([rc.rep.deadline for rc in rclasses], dtype=np.int64)
        rpax = np.array([rc.rep.passengers for rc in rclasses], dtype=np.int32)
        rid = np.array([rc.rep.id for rc in rclasses], dtype=np.int64)
        out = _kernels.batch_serve(
            oracle.dist, oracle.indptr, oracle.indices, oracle.weights,
            oracle.next_hop, vnode, vheading, vrem, vpend, vpax,
            dptr, np.array(ddest, dtype=np.int32), np.array(ddead, dtype=np.int64),
            np.array(dpax, dtype=np.int32), np.array(drid, dtype=np.int64),
            rorig, rdest, rdead, rpax, rid,
            now, limits.delta, limits.wait_max, limits.groups_max,
            limits.capacity_max)
        feas = out["feas"]
        for i in range(V):
            rep = vclasses[i].rep
            for j in range(R):
                if not feas[i, j]:
                    continue
                nd = int(out["post_ndrop"][i, j])
                post = PostSummary(
                    int(out["post_node"][i, j]), int(out["post_heading"][i, j]),
                    int(out["post_rem"][i, j]),
                    tuple(int(x) for x in out["post_drop"][i, j, :nd]),
                    int(out["post_pax"][i, j]))
                problem.candidates.append(Candidate(
                    i, "serve", rclass=j, coeff=1.0 + value(post, rep), post=post))

    # Relocate: empty classes toward each anchor. A relocation whose value
    # does not strictly beat the same class's null value is a dominated
    # column (both occupy only the class-conservation row), so dropping it
    # leaves the optimum and the dual polyhedron untouched while keeping the
    # solver off zero-gain mass relocations under a flat value table.
    if rebalance_points:
        walk_cache: dict[tuple, PostSummary] = {}
        for i, vc in enumerate(vclasses):
            rep = vc.rep
            if not rep.is_empty:
                continue
            for p in rebalance_points:
                ck = (rep.node, rep.heading, rep.rem, p)
                post = walk_cache.get(ck)
                if post is None:
                    stops = np.array([p], dtype=np.int32)
                    _arr, _nr, n2, h2, rm2 = _kernels.walk_route(
                        oracle.indptr, oracle.indices, oracle.weights,
                        oracle.dist, oracle.next_hop, rep.node, rep.heading,
                        rep.rem, stops, now, limits.delta)
                    post = PostSummary(int(n2), int(h2), int(rm2), (), 0)
                    walk_cache[ck] = post
                coeff = value(post, rep)
                if coeff > null_coeffs[i]:
                    problem.candidates.append(Candidate(
                        i, "relocate", target=int(p), coeff=coeff, post=post))

    for i, vc in enumerate(vclasses):
        problem.candidates.append(Candidate(
            i, "null", coeff=null_coeffs[i], post=null_posts[i]))
    return problem


def solve(problem: AssignmentProblem) -> AssignmentSolution:
    """Exact LP over candidate flows; returns integral flows plus duals.

    Vehicle-class constraints are equalities (every vehicle acts, Null always
    available); request-class constraints are <= counts. Duals are reported
    for the maximization problem.
    """
    n = len(problem.candidates)
    if n == 0:
        return AssignmentSolution(np.empty(0, dtype=np.int64), 0.0,
                                  np.empty(0), np.empty(0))
    c = np.array([-cand.coeff for cand in problem.candidates], dtype=np.float64)
    rows_eq = np.array([cand.vclass for cand in problem.candidates], dtype=np.int64)
    a_eq = csr_matrix((np.ones(n), (rows_eq, np.arange(n))),
                      shape=(len(problem.vclasses), n))
    b_eq = np.array([vc.count for vc in problem.vclasses], dtype=np.float64)
    serve_idx = [i for i, cand in enumerate(problem.candidates) if cand.kind == "serve"]
    a_ub = None
    b_ub = None
    if problem.rclasses and serve_idx:
        rows_ub = np.array([problem.candidates[i].rclass for i in serve_idx])
        a_ub = csr_matrix((np.ones(len(serve_idx)),
                           (rows_ub, np.array(serve_idx))),
                          shape=(len(problem.rclasses), n))
        b_ub = np.array([rc.count for rc in problem.rclasses], dtype=np.float64)
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=(0, None), method="highs-ds")
    if not res.success:
        raise MatchingError(f"assignment LP failed: {res.message}")
    flows = np.round(res.x)
    if np.max(np.abs(res.x - flows)) >= 1e-6:
        raise MatchingError("non-integral vertex from the assignment LP")
    flows = flows.astype(np.int64)
    objective = float(sum(cand.coeff * int(f)
                          for cand, f in zip(problem.candidates, flows)))
    vehicle_duals = -np.asarray(res.eqlin.marginals, dtype=np.float64)
    if a_ub is not None:
        request_duals = -np.asarray(res.ineqlin.marginals, dtype=np.float64)
    else:
        request_duals = np.zeros(len(problem.rclasses), dtype=np.float64)
    return AssignmentSolution(flows, objective, vehicle_duals, request_duals)


def reward(problem: AssignmentProblem, solution: AssignmentSolution) -> int:
    """Requests served this epoch under the chosen flows."""
    return int(sum(int(f) for cand, f in zip(problem.candidates, solution.flows)
                   if cand.kind == "serve"))


def dump_problem(problem: AssignmentProblem, solution: AssignmentSolution | None,
                 fh) -> None:
    """Line-oriented debug dump of classes, candidates, flows, and duals."""
    fh.write(f"vehicle_classes={len(problem.vclasses)} "
             f"request_classes={len(problem.rclasses)} "
             f"candidates={len(problem.candidates)}\n")
    for i, vc in enumerate(problem.vclasses):
        dual = "" if solution is None else f" dual={solution.vehicle_duals[i]!r}"
        fh.write(f"V{i} key={vc.key} count={vc.count}{dual}\n")
    for j, rc in enumerate(problem.rclasses):
        dual = "" if solution is None else f" dual={solution.request_duals[j]!r}"
        fh.write(f"R{j} key={rc.key} count={rc.count}{dual}\n")
    for k, cand in enumerate(problem.candidates):
        flow = "" if solution is None else f" flow={int(solution.flows[k])}"
        tgt = f" rclass={cand.rclass}" if cand.kind == "serve" else (
            f" target={cand.target}" if cand.kind == "relocate" else "")
        fh.write(f"x{k} V{cand.vclass} {cand.kind}{tgt} "
                 f"coeff={cand.coeff!r}{flow}\n")
