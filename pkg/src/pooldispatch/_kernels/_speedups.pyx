# cython: language_level=3
"""Compiled routing kernels. Semantics must match pyback.py exactly:
same tie-breaking (smallest-id next hops, lexicographically first minimal
drop-off order), same walk budget rules, same output array layouts. The
parity tests compare the two backends on randomized instances.
"""

import numpy as np

cimport numpy as cnp
from libc.stdlib cimport free, malloc

cnp.import_array()

INF = 1 << 30
MAX_STOPS = 9

cdef enum:
    KMAX = 9
    C_INF = 1073741824


# ---------------------------------------------------------------------------
# all-pairs shortest paths: binary-heap Dijkstra per source

cdef struct HeapItem:
    long long key
    int node


cdef inline void _heap_push(HeapItem* heap, int* size, long long key,
                            int node) nogil:
    cdef int i = size[0]
    cdef int parent
    cdef HeapItem tmp
    heap[i].key = key
    heap[i].node = node
    size[0] += 1
    while i > 0:
        parent = (i - 1) >> 1
        if heap[parent].key <= heap[i].key:
            break
        tmp = heap[parent]
        heap[parent] = heap[i]
        heap[i] = tmp
        i = parent


cdef inline HeapItem _heap_pop(HeapItem* heap, int* size) nogil:
    cdef HeapItem top = heap[0]
    cdef HeapItem tmp
    cdef int i = 0
    cdef int child
    size[0] -= 1
    heap[0] = heap[size[0]]
    while True:
        child = 2 * i + 1
        if child >= size[0]:
            break
        if child + 1 < size[0] and heap[child + 1].key < heap[child].key:
            child += 1
        if heap[i].key <= heap[child].key:
            break
        tmp = heap[i]
        heap[i] = heap[child]
        heap[child] = tmp
        i = child
    return top


def all_pairs(indptr, indices, weights, int n):
    """All-pairs travel times and deterministic next-hop table (int32)."""
    cdef const int[:] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef const int[:] idx = np.ascontiguousarray(indices, dtype=np.int32)
    cdef const int[:] w = np.ascontiguousarray(weights, dtype=np.int32)
    dist_arr = np.full((n, n), C_INF, dtype=np.int32)
    hop_arr = np.full((n, n), -1, dtype=np.int32)
    cdef int[:, :] dist = dist_arr
    cdef int[:, :] hop = hop_arr
    cdef int m = idx.shape[0]
    cdef HeapItem* heap = <HeapItem*> malloc((m + n + 1) * sizeof(HeapItem))
    if heap == NULL:
        raise MemoryError()
    cdef int heap_size
    cdef int src, u, v, j, x, y, best_hop
    cdef long long du, cand, best
    cdef HeapItem item
    try:
        with nogil:
            for src in range(n):
                heap_size = 0
                dist[src, src] = 0
                _heap_push(heap, &heap_size, 0, src)
                while heap_size > 0:
                    item = _heap_pop(heap, &heap_size)
                    u = item.node
                    du = item.key
                    if du > dist[src, u]:
                        continue
                    for j in range(ip[u], ip[u + 1]):
                        v = idx[j]
                        cand = du + w[j]
                        if cand < dist[src, v]:
                            dist[src, v] = <int> cand
                            _heap_push(heap, &heap_size, cand, v)
            # deterministic next hops: smallest neighbor id wins ties
            for u in range(n):
                for x in range(n):
                    if dist[u, x] >= C_INF:
                        continue
                    best = 2 * <long long> C_INF
                    best_hop = -1
                    for j in range(ip[u], ip[u + 1]):
                        y = idx[j]
                        cand = <long long> w[j] + dist[y, x]
                        if cand < best:
                            best = cand
                            best_hop = y
                    hop[u, x] = best_hop
                hop[u, u] = u
    finally:
        free(heap)
    return dist_arr, hop_arr


# ---------------------------------------------------------------------------
# drop-off ordering

cdef inline bint _next_permutation(int* a, int k) nogil:
    """Advance to the next lexicographic permutation; False after the last."""
    cdef int i = k - 2
    cdef int j, tmp, lo, hi
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        return False
    j = k - 1
    while a[j] <= a[i]:
        j -= 1
    tmp = a[i]; a[i] = a[j]; a[j] = tmp
    lo = i + 1
    hi = k - 1
    while lo < hi:
        tmp = a[lo]; a[lo] = a[hi]; a[hi] = tmp
        lo += 1
        hi -= 1
    return True


cdef inline long long _eta(const int[:, :] dist, int node, int heading,
                           int rem, int target) nogil:
    if heading < 0:
        return dist[node, target]
    return rem + dist[heading, target]


cdef bint _best_order(const int[:, :] dist, int node, int heading, int rem,
                      long long now, long long wait_max, int pickup,
                      const long long* drops, const long long* deads, int k,
                      int* out_perm, long long* out_times,
                      long long* out_pickup, long long* out_done) nogil:
    """First lexicographically-minimal completion-optimal feasible ordering."""
    cdef long long pickup_eta = _eta(dist, node, heading, rem, pickup)
    cdef long long pickup_time = now + pickup_eta
    cdef int perm[KMAX]
    cdef long long times[KMAX]
    cdef int i, p, prev
    cdef long long t
    cdef bint ok, have_any
    cdef long long best_done = 0
    out_pickup[0] = pickup_time
    if pickup_eta > wait_max:
        return False
    for i in range(k):
        perm[i] = i
    have_any = False
    while True:
        t = pickup_time
        prev = pickup
        ok = True
        for i in range(k):
            p = perm[i]
            t += dist[prev, <int> drops[p]]
            if t > deads[p]:
                ok = False
                break
            times[i] = t
            prev = <int> drops[p]
        if ok and (not have_any or t < best_done):
            best_done = t
            for i in range(k):
                out_perm[i] = perm[i]
                out_times[i] = times[i]
            have_any = True
        if not _next_permutation(perm, k):
            break
    out_done[0] = best_done
    return have_any


def best_insertion(dist, int node, int heading, int rem, now, wait_max,
                   int pickup, drops, deads):
    """See pyback.best_insertion; identical contract."""
    cdef const int[:, :] d = np.ascontiguousarray(dist, dtype=np.int32)
    cdef const long long[:] dr = np.ascontiguousarray(drops, dtype=np.int64)
    cdef const long long[:] dd = np.ascontiguousarray(deads, dtype=np.int64)
    cdef int k = dr.shape[0]
    if k >= KMAX:
        raise ValueError(f"too many drop-offs ({k})")
    cdef const long long* drp = NULL
    cdef const long long* ddp = NULL
    if k > 0:
        drp = &dr[0]
        ddp = &dd[0]
    cdef int out_perm[KMAX]
    cdef long long out_times[KMAX]
    cdef long long pickup_time = 0
    cdef long long done = 0
    cdef bint ok = _best_order(d, node, heading, rem, <long long> now,
                               <long long> wait_max, pickup, drp, ddp, k,
                               out_perm, out_times, &pickup_time, &done)
    if not ok:
        return (False, np.empty(0, np.int32), np.empty(0, np.int64),
                int(pickup_time))
    perm = np.empty(k, dtype=np.int32)
    times = np.empty(k, dtype=np.int64)
    cdef int[:] pv = perm
    cdef long long[:] tmv = times
    cdef int i
    for i in range(k):
        pv[i] = out_perm[i]
        tmv[i] = out_times[i]
    return True, perm, times, int(pickup_time)


# ---------------------------------------------------------------------------
# route walking

cdef inline int _arc_w(const int[:] ip, const int[:] idx, const int[:] w,
                       int u, int y) nogil:
    cdef int j
    for j in range(ip[u], ip[u + 1]):
        if idx[j] == y:
            return w[j]
    return -1


cdef int _walk(const int[:] ip, const int[:] idx, const int[:] w,
               const int[:, :] dist, const int[:, :] hop,
               int* node, int* heading, int* rem,
               const int* stops, int m, long long t0, long long budget,
               long long* arrivals) nogil:
    """Shared walk core; returns stops reached, updates position in place."""
    cdef long long t = t0
    cdef long long left = budget
    cdef int i = 0
    cdef int target, y, wt, step
    while i < m:
        target = stops[i]
        if heading[0] < 0 and node[0] == target:
            if arrivals != NULL:
                arrivals[i] = t
            i += 1
            continue
        if left == 0:
            break
        if heading[0] >= 0:
            # committed to the current arc: finish it before rerouting
            step = rem[0]
            if step > left:
                step = <int> left
            rem[0] -= step
            left -= step
            t += step
            if rem[0] == 0:
                node[0] = heading[0]
                heading[0] = -1
            continue
        y = hop[node[0], target]
        if y < 0 or y == node[0]:
            break  # unreachable; stand still
        wt = _arc_w(ip, idx, w, node[0], y)
        if wt < 0:
            break
        if wt <= left:
            t += wt
            left -= wt
            node[0] = y
        else:
            heading[0] = y
            rem[0] = wt - <int> left
            t += left
            left = 0
    return i


def walk_route(indptr, indices, weights, dist, next_hop, int node, int heading,
               int rem, stops, start_time, budget):
    """See pyback.walk_route; identical contract."""
    cdef const int[:] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef const int[:] idx = np.ascontiguousarray(indices, dtype=np.int32)
    cdef const int[:] w = np.ascontiguousarray(weights, dtype=np.int32)
    cdef const int[:, :] d = np.ascontiguousarray(dist, dtype=np.int32)
    cdef const int[:, :] h = np.ascontiguousarray(next_hop, dtype=np.int32)
    cdef const int[:] st = np.ascontiguousarray(stops, dtype=np.int32)
    cdef int m = st.shape[0]
    arr = np.full(m, -1, dtype=np.int64)
    cdef long long[:] av = arr
    cdef long long* ap = NULL
    cdef const int* stp = NULL
    if m > 0:
        ap = &av[0]
        stp = &st[0]
    cdef int n2 = node
    cdef int h2 = heading
    cdef int r2 = rem
    cdef int nreach = _walk(ip, idx, w, d, h, &n2, &h2, &r2, stp, m,
                            <long long> start_time, <long long> budget, ap)
    return arr, nreach, n2, h2, r2


def batch_walk(indptr, indices, weights, dist, next_hop,
               vnode, vheading, vrem, sptr, snode, start_time, budget):
    """See pyback.batch_walk; identical contract."""
    cdef const int[:] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef const int[:] idx = np.ascontiguousarray(indices, dtype=np.int32)
    cdef const int[:] w = np.ascontiguousarray(weights, dtype=np.int32)
    cdef const int[:, :] d = np.ascontiguousarray(dist, dtype=np.int32)
    cdef const int[:, :] h = np.ascontiguousarray(next_hop, dtype=np.int32)
    cdef const int[:] vn = np.ascontiguousarray(vnode, dtype=np.int32)
    cdef const int[:] vh = np.ascontiguousarray(vheading, dtype=np.int32)
    cdef const int[:] vr = np.ascontiguousarray(vrem, dtype=np.int32)
    cdef const int[:] sp = np.ascontiguousarray(sptr, dtype=np.int32)
    cdef const int[:] sn = np.ascontiguousarray(snode, dtype=np.int32)
    cdef int V = vn.shape[0]
    nr_arr = np.zeros(V, dtype=np.int32)
    n_arr = np.zeros(V, dtype=np.int32)
    h_arr = np.full(V, -1, dtype=np.int32)
    r_arr = np.zeros(V, dtype=np.int32)
    cdef int[:] nrv = nr_arr
    cdef int[:] nv = n_arr
    cdef int[:] hv = h_arr
    cdef int[:] rv = r_arr
    cdef long long t0 = <long long> start_time
    cdef long long bud = <long long> budget
    cdef const int* stp
    cdef int v, m, n2, h2, r2
    with nogil:
        for v in range(V):
            n2 = vn[v]
            h2 = vh[v]
            r2 = vr[v]
            m = sp[v + 1] - sp[v]
            stp = NULL
            if m > 0:
                stp = &sn[sp[v]]
            nrv[v] = _walk(ip, idx, w, d, h, &n2, &h2, &r2, stp, m, t0, bud,
                           NULL)
            nv[v] = n2
            hv[v] = h2
            rv[v] = r2
    return nr_arr, n_arr, h_arr, r_arr


# ---------------------------------------------------------------------------
# batched serve screening

def batch_serve(dist, indptr, indices, weights, next_hop,
                vnode, vheading, vrem, vpend, vpax,
                dptr, ddest, ddead, dpax, drid,
                rorig, rdest, rdead, rpax, rid,
                now, delta, wait_max, groups_max, capacity_max):
    """See pyback.batch_serve; identical contract and array layouts."""
    cdef const int[:, :] d = np.ascontiguousarray(dist, dtype=np.int32)
    cdef const int[:] ip = np.ascontiguousarray(indptr, dtype=np.int32)
    cdef const int[:] idx = np.ascontiguousarray(indices, dtype=np.int32)
    cdef const int[:] w = np.ascontiguousarray(weights, dtype=np.int32)
    cdef const int[:, :] h = np.ascontiguousarray(next_hop, dtype=np.int32)
    cdef const int[:] vn = np.ascontiguousarray(vnode, dtype=np.int32)
    cdef const int[:] vh = np.ascontiguousarray(vheading, dtype=np.int32)
    cdef const int[:] vr = np.ascontiguousarray(vrem, dtype=np.int32)
    cdef const unsigned char[:] vp = np.ascontiguousarray(vpend, dtype=np.uint8)
    cdef const int[:] vx = np.ascontiguousarray(vpax, dtype=np.int32)
    cdef const int[:] dp = np.ascontiguousarray(dptr, dtype=np.int32)
    cdef const int[:] dde = np.ascontiguousarray(ddest, dtype=np.int32)
    cdef const long long[:] dda = np.ascontiguousarray(ddead, dtype=np.int64)
    cdef const int[:] dpx = np.ascontiguousarray(dpax, dtype=np.int32)
    cdef const long long[:] dri = np.ascontiguousarray(drid, dtype=np.int64)
    cdef const int[:] ro = np.ascontiguousarray(rorig, dtype=np.int32)
    cdef const int[:] rd = np.ascontiguousarray(rdest, dtype=np.int32)
    cdef const long long[:] rde = np.ascontiguousarray(rdead, dtype=np.int64)
    cdef const int[:] rp = np.ascontiguousarray(rpax, dtype=np.int32)
    cdef const long long[:] ri = np.ascontiguousarray(rid, dtype=np.int64)
    cdef int V = vn.shape[0]
    cdef int R = ro.shape[0]
    cdef int g = <int> groups_max
    cdef long long t_now = <long long> now
    cdef long long t_delta = <long long> delta
    cdef long long t_wait = <long long> wait_max
    cdef int cap = <int> capacity_max

    feas_arr = np.zeros((V, R), dtype=np.uint8)
    pn_arr = np.zeros((V, R), dtype=np.int32)
    ph_arr = np.full((V, R), -1, dtype=np.int32)
    pr_arr = np.zeros((V, R), dtype=np.int32)
    pnd_arr = np.zeros((V, R), dtype=np.int32)
    pd_arr = np.full((V, R, g), -1, dtype=np.int32)
    pp_arr = np.zeros((V, R), dtype=np.int32)
    cdef unsigned char[:, :] feas = feas_arr
    cdef int[:, :] pn = pn_arr
    cdef int[:, :] ph = ph_arr
    cdef int[:, :] pr = pr_arr
    cdef int[:, :] pnd = pnd_arr
    cdef int[:, :, :] pd = pd_arr
    cdef int[:, :] pp = pp_arr

    cdef long long merged_dest[KMAX]
    cdef long long merged_dead[KMAX]
    cdef long long merged_pax[KMAX]
    cdef int stops[KMAX + 1]
    cdef int perm[KMAX]
    cdef long long times[KMAX]
    cdef long long pickup_time, done
    cdef int v, r, k, lo, hi, ins, pos, i, j, p, nd, pax_left
    cdef int n2, h2, r2, nreach
    with nogil:
        for v in range(V):
            if vp[v]:
                continue
            lo = dp[v]
            hi = dp[v + 1]
            k = hi - lo
            if k + 1 > g:
                continue
            for r in range(R):
                if vx[v] + rp[r] > cap:
                    continue
                # merge the new drop-off into the id-sorted list
                ins = lo
                while ins < hi and dri[ins] < ri[r]:
                    ins += 1
                pos = ins - lo
                for i in range(pos):
                    merged_dest[i] = dde[lo + i]
                    merged_dead[i] = dda[lo + i]
                    merged_pax[i] = dpx[lo + i]
                merged_dest[pos] = rd[r]
                merged_dead[pos] = rde[r]
                merged_pax[pos] = rp[r]
                for i in range(ins, hi):
                    merged_dest[i - lo + 1] = dde[i]
                    merged_dead[i - lo + 1] = dda[i]
                    merged_pax[i - lo + 1] = dpx[i]
                if not _best_order(d, vn[v], vh[v], vr[v], t_now, t_wait,
                                   ro[r], merged_dest, merged_dead, k + 1,
                                   perm, times, &pickup_time, &done):
                    continue
                feas[v, r] = 1
                stops[0] = ro[r]
                for j in range(k + 1):
                    stops[j + 1] = <int> merged_dest[perm[j]]
                n2 = vn[v]
                h2 = vh[v]
                r2 = vr[v]
                nreach = _walk(ip, idx, w, d, h, &n2, &h2, &r2, stops, k + 2,
                               t_now, t_delta, NULL)
                pn[v, r] = n2
                ph[v, r] = h2
                pr[v, r] = r2
                pax_left = 0
                nd = 0
                for j in range(k + 1):
                    if j + 1 >= nreach:  # drop-off stop not reached
                        p = perm[j]
                        pd[v, r, nd] = <int> merged_dest[p]
                        nd += 1
                        pax_left += <int> merged_pax[p]
                pnd[v, r] = nd
                pp[v, r] = pax_left
    return {
        "feas": feas_arr,
        "post_node": pn_arr,
        "post_heading": ph_arr,
        "post_rem": pr_arr,
        "post_ndrop": pnd_arr,
        "post_drop": pd_arr,
        "post_pax": pp_arr,
    }
