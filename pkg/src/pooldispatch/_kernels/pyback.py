"""Pure-Python reference implementation of the routing kernels.

Semantics shared with the compiled backend:

* Graphs are CSR adjacency (indptr, indices, weights) with integer-second
  weights >= 1 and neighbor lists sorted by node id.
* A position is (node, heading, rem): at a node when heading == -1 (rem == 0),
  otherwise committed to the arc node->heading with `rem` seconds left on it.
  Positions are canonical: rem > 0 whenever heading >= 0.
* ETA from a position to target x is dist[node, x] at a node, else
  rem + dist[heading, x] (the current arc must be finished first).
* Next hop from u toward x is the smallest-id neighbor y minimizing
  w(u, y) + dist[y, x]; this makes walks deterministic and split-invariant.
* Drop-off orderings are scored by completion time (arrival at the last stop);
  ties go to the permutation whose request-id sequence is lexicographically
  smallest, which is the first minimal one when candidate drop-offs are listed
  in ascending request-id order and permutations are enumerated
  lexicographically.
"""

from itertools import permutations

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

INF = 2**30  # unreachable sentinel, safely summable in int32
MAX_STOPS = 9  # 1 pickup + up to 8 drop-offs per feasibility query


def all_pairs(indptr, indices, weights, n):
    """All-pairs travel times and deterministic next-hop table.

    Returns (dist, next_hop) as int32 [n, n] arrays. dist[u, u] == 0 and
    next_hop[u, u] == u; unreachable pairs get dist INF and next_hop -1.
    """
    graph = csr_matrix(
        (np.asarray(weights, dtype=np.float64), indices, indptr), shape=(n, n)
    )
    dmat = dijkstra(graph, directed=True, indices=None)
    dist = np.where(np.isfinite(dmat), dmat, INF).astype(np.int32)

    next_hop = np.full((n, n), -1, dtype=np.int32)
    dist64 = dist.astype(np.int64)
    for u in range(n):
        lo, hi = indptr[u], indptr[u + 1]
        if lo == hi:
            next_hop[u, u] = u
            continue
        nbrs = indices[lo:hi]  # ascending by construction
        cand = weights[lo:hi].astype(np.int64)[:, None] + dist64[nbrs, :]
        best = np.argmin(cand, axis=0)  # first minimum = smallest neighbor id
        hop = nbrs[best].astype(np.int32)
        reachable = dist[u] < INF
        next_hop[u, reachable] = hop[reachable]
        next_hop[u, u] = u
    return dist, next_hop


def _eta(dist, node, heading, rem, target):
    if heading < 0:
        return int(dist[node, target])
    return int(rem) + int(dist[heading, target])


def best_insertion(dist, node, heading, rem, now, wait_max, pickup, drops, deads):
    """Best deadline-feasible drop-off ordering after picking up at `pickup`.

    `drops`/`deads` list candidate drop-off nodes and absolute deadlines in
    ascending request-id order. Returns (feasible, perm, times, pickup_time):
    perm indexes into `drops` in visit order and times are the projected
    arrival seconds for each visited drop-off; pickup_time is the projected
    arrival at the pickup node (valid whenever the wait check passes).
    """
    k = len(drops)
    pickup_eta = _eta(dist, node, heading, rem, pickup)
    pickup_time = int(now) + pickup_eta
    if pickup_eta > wait_max:
        return False, np.empty(0, np.int32), np.empty(0, np.int64), pickup_time

    best_perm = None
    best_times = None
    best_done = None
    for perm in permutations(range(k)):
        t = pickup_time
        prev = pickup
        times = []
        ok = True
        for i in perm:
            t += int(dist[prev, drops[i]])
            if t > deads[i]:
                ok = False
                break
            times.append(t)
            prev = drops[i]
        if ok and (best_done is None or t < best_done):
            best_done = t
            best_perm = perm
            best_times = times
    if best_perm is None:
        return False, np.empty(0, np.int32), np.empty(0, np.int64), pickup_time
    return (
        True,
        np.asarray(best_perm, dtype=np.int32),
        np.asarray(best_times, dtype=np.int64),
        pickup_time,
    )


def walk_route(indptr, indices, weights, dist, next_hop, node, heading, rem,
               stops, start_time, budget):
    """Advance along `stops` for at most `budget` seconds of motion.

    Returns (arrivals, n_reached, node, heading, rem). arrivals[i] is the
    absolute second stop i is reached, -1 if not reached within the budget.
    Zero-distance stops (already at the stop node) complete even when the
    budget is exhausted, so splitting a walk into consecutive calls yields the
    same arrivals and end position as one long call.
    """
    node = int(node)
    heading = int(heading)
    rem = int(rem)
    t = int(start_time)
    left = int(budget)
    m = len(stops)
    arrivals = np.full(m, -1, dtype=np.int64)
    i = 0
    while i < m:
        target = int(stops[i])
        if heading < 0 and node == target:
            arrivals[i] = t
            i += 1
            continue
        if left == 0:
            break
        if heading >= 0:
            # committed to the current arc: finish it before rerouting
            step = min(rem, left)
            rem -= step
            left -= step
            t += step
            if rem == 0:
                node = heading
                heading = -1
            continue
        y = int(next_hop[node, target])
        if y < 0 or y == node:
            break  # unreachable; stand still
        w = _arc_weight(indptr, indices, weights, node, y)
        if w <= left:
            t += w
            left -= w
            node = y
        else:
            heading = y
            rem = w - left
            t += left
            left = 0
    return arrivals, i, node, heading, rem


def _arc_weight(indptr, indices, weights, u, y):
    lo, hi = int(indptr[u]), int(indptr[u + 1])
    for j in range(lo, hi):
        if indices[j] == y:
            return int(weights[j])
    raise ValueError(f"no arc {u}->{y}")


def batch_serve(dist, indptr, indices, weights, next_hop,
                vnode, vheading, vrem, vpend, vpax,
                dptr, ddest, ddead, dpax, drid,
                rorig, rdest, rdead, rpax, rid,
                now, delta, wait_max, groups_max, capacity_max):
    """Screen every (vehicle, request) pair and project the post-motion state.

    Vehicle drop-off lists (ddest/ddead/dpax/drid CSR) must be sorted by
    request id within each vehicle. Returns a dict of arrays keyed:
    feas uint8 [V, R]; post_node/post_heading/post_rem int32 [V, R];
    post_ndrop int32 [V, R]; post_drop int32 [V, R, groups_max] giving the
    remaining drop-off nodes in visit order; post_pax int32 [V, R] counting
    passengers of not-yet-dropped assignments (the new request included).
    """
    V = len(vnode)
    R = len(rorig)
    g = int(groups_max)
    feas = np.zeros((V, R), dtype=np.uint8)
    post_node = np.zeros((V, R), dtype=np.int32)
    post_heading = np.full((V, R), -1, dtype=np.int32)
    post_rem = np.zeros((V, R), dtype=np.int32)
    post_ndrop = np.zeros((V, R), dtype=np.int32)
    post_drop = np.full((V, R, g), -1, dtype=np.int32)
    post_pax = np.zeros((V, R), dtype=np.int32)

    for v in range(V):
        if vpend[v]:
            continue
        lo, hi = int(dptr[v]), int(dptr[v + 1])
        k = hi - lo
        if k + 1 > groups_max:
            continue
        for r in range(R):
            if int(vpax[v]) + int(rpax[r]) > capacity_max:
                continue
            # merge the new drop-off into the id-sorted list
            ins = lo
            while ins < hi and drid[ins] < rid[r]:
                ins += 1
            pos = ins - lo
            drops = np.empty(k + 1, dtype=np.int64)
            deads = np.empty(k + 1, dtype=np.int64)
            paxs = np.empty(k + 1, dtype=np.int64)
            drops[:pos] = ddest[lo:ins]
            deads[:pos] = ddead[lo:ins]
            paxs[:pos] = dpax[lo:ins]
            drops[pos] = rdest[r]
            deads[pos] = rdead[r]
            paxs[pos] = rpax[r]
            drops[pos + 1:] = ddest[ins:hi]
            deads[pos + 1:] = ddead[ins:hi]
            paxs[pos + 1:] = dpax[ins:hi]

            ok, perm, _times, _pt = best_insertion(
                dist, vnode[v], vheading[v], vrem[v], now, wait_max,
                int(rorig[r]), drops, deads)
            if not ok:
                continue
            feas[v, r] = 1
            stops = np.empty(k + 2, dtype=np.int32)
            stops[0] = rorig[r]
            for j, p in enumerate(perm):
                stops[j + 1] = drops[p]
            _arr, nreach, n2, h2, rm2 = walk_route(
                indptr, indices, weights, dist, next_hop,
                vnode[v], vheading[v], vrem[v], stops, now, delta)
            post_node[v, r] = n2
            post_heading[v, r] = h2
            post_rem[v, r] = rm2
            pax_left = 0
            nd = 0
            for j, p in enumerate(perm):
                if j + 1 >= nreach:  # drop-off stop not reached
                    post_drop[v, r, nd] = drops[p]
                    nd += 1
                    pax_left += int(paxs[p])
            post_ndrop[v, r] = nd
            post_pax[v, r] = pax_left
    return {
        "feas": feas,
        "post_node": post_node,
        "post_heading": post_heading,
        "post_rem": post_rem,
        "post_ndrop": post_ndrop,
        "post_drop": post_drop,
        "post_pax": post_pax,
    }


def batch_walk(indptr, indices, weights, dist, next_hop,
               vnode, vheading, vrem, sptr, snode, start_time, budget):
    """Walk each vehicle along its own stop list (CSR) for `budget` seconds.

    Returns (n_reached, node, heading, rem) arrays; no event times.
    """
    V = len(vnode)
    n_reached = np.zeros(V, dtype=np.int32)
    node2 = np.zeros(V, dtype=np.int32)
    heading2 = np.full(V, -1, dtype=np.int32)
    rem2 = np.zeros(V, dtype=np.int32)
    for v in range(V):
        stops = snode[int(sptr[v]):int(sptr[v + 1])]
        _arr, nr, n2, h2, rm2 = walk_route(
            indptr, indices, weights, dist, next_hop,
            vnode[v], vheading[v], vrem[v], stops, start_time, budget)
        n_reached[v] = nr
        node2[v] = n2
        heading2[v] = h2
        rem2[v] = rm2
    return n_reached, node2, heading2, rem2
