"""Road network model: integer-second arcs, travel-time oracle, aggregation.

Networks are directed multigraph-free arc lists over nodes 0..n-1. Undirected
networks store every edge as two symmetric arcs. All weights are integer
seconds >= 1; fractional input is rejected rather than rounded. Every network
must be strongly connected (any intersection reachable from any other).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._kernels import INF


class NetworkError(ValueError):
    """Malformed network input or an operation that would break validity."""


def _as_int(text, what):
    try:
        return int(text)
    except ValueError:
        raise NetworkError(f"{what} must be an integer, got {text!r}") from None


@dataclass
class RoadNetwork:
    """Arc-list road network with cached CSR adjacency and travel-time oracle."""

    n_nodes: int
    arc_from: np.ndarray
    arc_to: np.ndarray
    arc_weight: np.ndarray
    directed: bool
    grid_shape: tuple[int, int] | None = None
    _csr: tuple | None = field(default=None, repr=False, compare=False)
    _oracle: "TravelTimeOracle | None" = field(default=None, repr=False, compare=False)

    @property
    def n_arcs(self) -> int:
        return len(self.arc_from)

    def csr(self):
        """(indptr, indices, weights) with neighbor ids ascending per row."""
        if self._csr is None:
            order = np.lexsort((self.arc_to, self.arc_from))
            frm = self.arc_from[order]
            to = self.arc_to[order]
            w = self.arc_weight[order]
            indptr = np.zeros(self.n_nodes + 1, dtype=np.int32)
            np.add.at(indptr, frm + 1, 1)
            np.cumsum(indptr, out=indptr)
            self._csr = (indptr, to.astype(np.int32), w.astype(np.int32))
        return self._csr

    def oracle(self) -> "TravelTimeOracle":
        if self._oracle is None:
            indptr, indices, weights = self.csr()
            dist, next_hop = _kernels.all_pairs(indptr, indices, weights, self.n_nodes)
            self._oracle = TravelTimeOracle(self.n_nodes, dist, next_hop,
                                            indptr, indices, weights)
        return self._oracle

    def edges(self):
        """Canonical (u, v, w) list; undirected edges appear once with u < v."""
        if self.directed:
            return list(zip(self.arc_from.tolist(), self.arc_to.tolist(),
                            self.arc_weight.tolist()))
        seen = {}
        for u, v, w in zip(self.arc_from.tolist(), self.arc_to.tolist(),
                           self.arc_weight.tolist()):
            key = (min(u, v), max(u, v))
            seen[key] = w
        return [(u, v, w) for (u, v), w in sorted(seen.items())]


class TravelTimeOracle:
    """Precomputed all-pairs travel times with a deterministic next-hop table."""

    def __init__(self, n, dist, next_hop, indptr, indices, weights):
        self.n = n
        self.dist = dist
        self.next_hop = next_hop
        self.indptr = indptr
        self.indices = indices
        self.weights = weights

    def time(self, u: int, v: int) -> int:
        """Shortest travel time in seconds from node u to node v."""
        return int(self.dist[u, v])

    def eta(self, node: int, heading: int, rem: int, target: int) -> int:
        """Travel time from an exact position; a committed arc is finished first."""
        if heading < 0:
            return int(self.dist[node, target])
        return int(rem) + int(self.dist[heading, target])

    def path(self, u: int, v: int) -> list[int]:
        """Node sequence of the canonical shortest path from u to v."""
        out = [u]
        node = u
        while node != v:
            nxt = int(self.next_hop[node, v])
            if nxt < 0 or nxt == node:
                raise NetworkError(f"no path {u}->{v}")
            out.append(nxt)
            node = nxt
        return out

    def arc_weight(self, u: int, y: int) -> int:
        lo, hi = int(self.indptr[u]), int(self.indptr[u + 1])
        for j in range(lo, hi):
            if self.indices[j] == y:
                return int(self.weights[j])
        raise NetworkError(f"no arc {u}->{y}")


def _validate(net: RoadNetwork) -> RoadNetwork:
    n = net.n_nodes
    if n <= 0:
        raise NetworkError("network needs at least one node")
    frm, to, w = net.arc_from, net.arc_to, net.arc_weight
    if len(frm) == 0:
        if n > 1:
            raise NetworkError("no arcs in a multi-node network")
        return net
    if frm.min() < 0 or frm.max() >= n or to.min() < 0 or to.max() >= n:
        raise NetworkError("arc endpoint outside node range")
    if (frm == to).any():
        raise NetworkError("self-loop arcs are not allowed")
    if (w < 1).any():
        raise NetworkError("arc weights must be >= 1 second")
    pairs = set(zip(frm.tolist(), to.tolist()))
    if len(pairs) != len(frm):
        raise NetworkError("duplicate arcs")
    if not net.directed:
        for u, v in pairs:
            if (v, u) not in pairs:
                raise NetworkError(f"undirected network missing twin arc {v}->{u}")
        wmap = {(u, v): int(x) for u, v, x in zip(frm.tolist(), to.tolist(), w.tolist())}
        for (u, v), x in wmap.items():
            if wmap[(v, u)] != x:
                raise NetworkError(f"asymmetric weights on undirected edge {u}<->{v}")
    if not _strongly_connected(n, frm, to):
        raise NetworkError("network is not strongly connected")
    return net


def _reach_count(n, adj, start):
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    q = deque([start])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if not seen[v]:
                seen[v] = True
                q.append(v)
    return int(seen.sum())


def _strongly_connected(n, frm, to) -> bool:
    fwd = [[] for _ in range(n)]
    rev = [[] for _ in range(n)]
    for u, v in zip(frm.tolist(), to.tolist()):
        fwd[u].append(v)
        rev[v].append(u)
    return _reach_count(n, fwd, 0) == n and _reach_count(n, rev, 0) == n


def make_network(n_nodes, arcs, directed, grid_shape=None) -> RoadNetwork:
    """Build and validate a network from an iterable of (from, to, weight)."""
    arcs = list(arcs)
    frm = np.asarray([a[0] for a in arcs], dtype=np.int32)
    to = np.asarray([a[1] for a in arcs], dtype=np.int32)
    w = np.asarray([a[2] for a in arcs], dtype=np.int32)
    return _validate(RoadNetwork(n_nodes, frm, to, w, directed, grid_shape))


def generate_grid(rows: int, cols: int, weight_range=(20, 40), seed=0,
                  directed: bool = False) -> RoadNetwork:
    """4-neighbor lattice with integer weights drawn uniformly from weight_range.

    Node ids are row-major (node = r * cols + c). In undirected mode each edge
    gets one weight shared by both arcs; directed mode draws per-arc weights
    independently.
    """
    lo, hi = int(weight_range[0]), int(weight_range[1])
    if rows < 1 or cols < 1 or rows * cols < 2:
        raise NetworkError("grid needs at least two nodes")
    if lo < 1 or hi < lo:
        raise NetworkError("weight range must satisfy 1 <= lo <= hi")
    rng = np.random.default_rng(seed)
    arcs = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                v = u + 1
                if directed:
                    arcs.append((u, v, int(rng.integers(lo, hi + 1))))
                    arcs.append((v, u, int(rng.integers(lo, hi + 1))))
                else:
                    w = int(rng.integers(lo, hi + 1))
                    arcs.append((u, v, w))
                    arcs.append((v, u, w))
            if r + 1 < rows:
                v = u + cols
                if directed:
                    arcs.append((u, v, int(rng.integers(lo, hi + 1))))
                    arcs.append((v, u, int(rng.integers(lo, hi + 1))))
                else:
                    w = int(rng.integers(lo, hi + 1))
                    arcs.append((u, v, w))
                    arcs.append((v, u, w))
    return make_network(rows * cols, arcs, directed, grid_shape=(rows, cols))


def remove_edges(net: RoadNetwork, fraction: float, seed=0) -> RoadNetwork:
    """Remove floor(fraction * edges) uniformly chosen edges, keeping the
    network strongly connected.

    Undirected networks drop whole edges (both arcs); directed networks drop
    single arcs. A draw whose removal would disconnect the network is
    resampled; after 100 failed draws for one slot the removal aborts with an
    error stating the achieved fraction.
    """
    if not 0.0 <= fraction < 1.0:
        raise NetworkError("removal fraction must be in [0, 1)")
    if net.directed:
        units = list(zip(net.arc_from.tolist(), net.arc_to.tolist(),
                         net.arc_weight.tolist()))
    else:
        units = net.edges()
    total = len(units)
    k = int(np.floor(fraction * total))
    if k == 0:
        return make_network(net.n_nodes, list(zip(net.arc_from.tolist(),
                                                  net.arc_to.tolist(),
                                                  net.arc_weight.tolist())),
                            net.directed, net.grid_shape)
    rng = np.random.default_rng(seed)
    pool = list(range(total))
    alive = [True] * total

    def arcs_alive():
        out = []
        for i, (u, v, w) in enumerate(units):
            if alive[i]:
                out.append((u, v, w))
                if not net.directed:
                    out.append((v, u, w))
        return out

    removed = 0
    for _ in range(k):
        placed = False
        for _attempt in range(100):
            if not pool:
                break
            j = int(rng.integers(len(pool)))
            cand = pool.pop(j)
            alive[cand] = False
            cur = arcs_alive()
            frm = np.asarray([a[0] for a in cur], dtype=np.int32)
            to = np.asarray([a[1] for a in cur], dtype=np.int32)
            if len(cur) > 0 and _strongly_connected(net.n_nodes, frm, to):
                removed += 1
                placed = True
                break
            alive[cand] = True  # disconnects: permanently off the pool
        if not placed:
            raise NetworkError(
                f"could not remove requested fraction {fraction}: removed "
                f"{removed}/{total} edges ({removed / total:.3f}) before "
                "every remaining candidate broke connectivity")
    return make_network(net.n_nodes, arcs_alive(), net.directed, net.grid_shape)


# ---------------------------------------------------------------------------
# file formats

_HEADER_RE = re.compile(r"^nodes=(\d+)\s+directed=([01])\s*$")


def save_network(net: RoadNetwork, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"nodes={net.n_nodes} directed={1 if net.directed else 0}\n")
        order = np.lexsort((net.arc_to, net.arc_from))
        for i in order:
            fh.write(f"{net.arc_from[i]},{net.arc_to[i]},{net.arc_weight[i]}\n")


def load_network(path) -> RoadNetwork:
    """Parse the `nodes=N directed=D` header plus from,to,weight lines.

    Extra trailing comma-separated fields on arc lines are ignored. Blank
    lines and lines starting with '#' are skipped.
    """
    with open(path) as fh:
        lines = [ln.strip() for ln in fh]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise NetworkError("empty network file")
    m = _HEADER_RE.match(lines[0])
    if not m:
        raise NetworkError(f"bad header line {lines[0]!r}")
    n = int(m.group(1))
    directed = m.group(2) == "1"
    arcs = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) < 3:
            raise NetworkError(f"arc line needs from,to,weight: {ln!r}")
        u = _as_int(parts[0], "arc endpoint")
        v = _as_int(parts[1], "arc endpoint")
        w = _as_int(parts[2], "arc weight")
        arcs.append((u, v, w))
    return make_network(n, arcs, directed)


def save_pickup_counts(counts, path) -> None:
    """Write `location_id,count` lines sorted by location id."""
    with open(path, "w") as fh:
        fh.write("location_id,count\n")
        for loc in sorted(counts):
            fh.write(f"{loc},{counts[loc]}\n")


def load_pickup_counts(path) -> dict[int, int]:
    counts: dict[int, int] = {}
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#") or ln.startswith("location_id"):
                continue
            loc_s, cnt_s = ln.split(",")[:2]
            loc = _as_int(loc_s, "location id")
            if loc in counts:
                raise NetworkError(f"duplicate location id {loc}")
            counts[loc] = _as_int(cnt_s, "pickup count")
    return counts


# ---------------------------------------------------------------------------
# spatial aggregation

@dataclass
class AggregationHierarchy:
    """Nested zone partitions; level 0 is the identity over locations."""

    zone_of: list[np.ndarray]  # per level: int32[n_nodes] node -> zone id
    zone_counts: list[int]

    @property
    def n_levels(self) -> int:
        return len(self.zone_of)

    def zone(self, level: int, node: int) -> int:
        return int(self.zone_of[level][node])

    def members(self, level: int, zone: int) -> np.ndarray:
        return np.flatnonzero(self.zone_of[level] == zone)


def _grid_blocks(rows, cols, n_zones):
    """Squarest factor-pair blocking of a rows x cols grid into n_zones."""
    best = None
    for br in range(1, n_zones + 1):
        if n_zones % br:
            continue
        bc = n_zones // br
        if br > rows or bc > cols:
            continue
        cost = abs(rows / br - cols / bc)
        if best is None or cost < best[0]:
            best = (cost, br, bc)
    if best is None:
        raise NetworkError(f"cannot block {rows}x{cols} grid into {n_zones} zones")
    _, br, bc = best
    row_edges = np.linspace(0, rows, br + 1).round().astype(int)
    col_edges = np.linspace(0, cols, bc + 1).round().astype(int)
    zone = np.empty(rows * cols, dtype=np.int32)
    for r in range(rows):
        rg = int(np.searchsorted(row_edges, r, side="right") - 1)
        for c in range(cols):
            cg = int(np.searchsorted(col_edges, c, side="right") - 1)
            zone[r * cols + c] = rg * bc + cg
    return zone


def _kmedoids(dist_sym, n_zones, seed):
    """Seeded k-medoids over symmetrized travel times; deterministic ties."""
    n = dist_sym.shape[0]
    rng = np.random.default_rng(seed)
    medoids = [int(rng.integers(n))]
    while len(medoids) < n_zones:
        d = dist_sym[:, medoids].min(axis=1).astype(np.float64)
        d[medoids] = 0.0
        total = d.sum()
        if total <= 0:
            for cand in range(n):
                if cand not in medoids:
                    medoids.append(cand)
                    break
            continue
        medoids.append(int(rng.choice(n, p=d / total)))
    medoids = sorted(medoids)
    for _ in range(100):
        assign = np.argmin(dist_sym[:, medoids], axis=1)  # first min: low rank
        new_medoids = []
        for z in range(n_zones):
            members = np.flatnonzero(assign == z)
            if len(members) == 0:
                new_medoids.append(medoids[z])
                continue
            within = dist_sym[np.ix_(members, members)].sum(axis=1)
            new_medoids.append(int(members[int(np.argmin(within))]))
        new_medoids = sorted(new_medoids)
        if new_medoids == medoids:
            break
        medoids = new_medoids
    assign = np.argmin(dist_sym[:, medoids], axis=1)
    return assign.astype(np.int32)


def build_aggregation(net: RoadNetwork, zone_counts, seed=0) -> AggregationHierarchy:
    """Partition locations into nested zones, one partition per level.

    zone_counts[0] must equal the node count (level 0 is exact locations).
    Generated grids use contiguous coordinate blocks; loaded networks are
    clustered by travel-time k-medoids with a fixed seed.
    """
    zone_counts = [int(z) for z in zone_counts]
    n = net.n_nodes
    if not zone_counts or zone_counts[0] != n:
        raise NetworkError("zone_counts[0] must equal the number of locations")
    if any(a <= b for a, b in zip(zone_counts, zone_counts[1:])):
        raise NetworkError("zone_counts must be strictly decreasing")
    levels = [np.arange(n, dtype=np.int32)]
    for zc in zone_counts[1:]:
        if zc < 1 or zc > n:
            raise NetworkError(f"bad zone count {zc}")
        if net.grid_shape is not None:
            levels.append(_grid_blocks(net.grid_shape[0], net.grid_shape[1], zc))
        else:
            dist = net.oracle().dist.astype(np.float64)
            dist[dist >= INF] = np.nan
            sym = (dist + dist.T) / 2.0
            levels.append(_kmedoids(np.nan_to_num(sym, nan=1e9), zc, seed))
    return AggregationHierarchy(levels, zone_counts)


def select_rebalance_points(net: RoadNetwork, hierarchy: AggregationHierarchy,
                            level: int, pickup_counts) -> list[int]:
    """One relocation anchor per zone of `level`: the zone's location with the
    highest historical pickup count, ties to the smallest location id."""
    if not 0 <= level < hierarchy.n_levels:
        raise NetworkError(f"no aggregation level {level}")
    points = []
    for z in range(hierarchy.zone_counts[level]):
        members = hierarchy.members(level, z)
        if len(members) == 0:
            continue
        best_loc = -1
        best_cnt = -1
        for loc in members.tolist():
            cnt = int(pickup_counts.get(loc, 0))
            if cnt > best_cnt:
                best_cnt = cnt
                best_loc = loc
        points.append(best_loc)
    return points
