"""Benchmark the compiled kernels against the pure-Python fallback.

Run from a checkout with the package installed:

    python3 benchmarks/bench_kernels.py [--rows 15 --cols 15]

Workloads mirror what one training iteration actually spends time on: the
one-off all-pairs closure, the per-epoch vehicle x request screening
(batch_serve), single insertion queries, and budgeted route walks.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from pooldispatch._kernels import get_backend
from pooldispatch.network import generate_grid


def _timeit(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_instances(rows: int, cols: int, seed: int):
    net = generate_grid(rows, cols, (20, 40), seed=seed)
    indptr, indices, weights = net.csr()
    n = net.n_nodes
    ref = get_backend("python")
    dist, next_hop = ref.all_pairs(indptr, indices, weights, n)
    rng = np.random.default_rng(seed)

    V, R = 100, 25
    vnode = rng.integers(0, n, V).astype(np.int32)
    vheading = np.full(V, -1, dtype=np.int32)
    vrem = np.zeros(V, dtype=np.int32)
    vpend = np.zeros(V, dtype=np.uint8)
    vpax = np.zeros(V, dtype=np.int32)
    # half the fleet already carries one drop-off
    loaded = rng.choice(V, V // 2, replace=False)
    dptr = np.zeros(V + 1, dtype=np.int32)
    dptr[1:] = np.cumsum(np.isin(np.arange(V), loaded).astype(np.int32))
    nd = int(dptr[-1])
    ddest = rng.integers(0, n, nd).astype(np.int32)
    ddead = rng.integers(300, 900, nd).astype(np.int64)
    dpax = rng.integers(1, 3, nd).astype(np.int32)
    drid = np.arange(nd, dtype=np.int64)
    vpax[loaded] = 1

    rorig = rng.integers(0, n, R).astype(np.int32)
    rdest = rng.integers(0, n, R).astype(np.int32)
    rdead = rng.integers(400, 1000, R).astype(np.int64)
    rpax = rng.integers(1, 5, R).astype(np.int32)
    rid = np.arange(1000, 1000 + R, dtype=np.int64)

    serve_args = (dist, indptr, indices, weights, next_hop,
                  vnode, vheading, vrem, vpend, vpax,
                  dptr, ddest, ddead, dpax, drid,
                  rorig, rdest, rdead, rpax, rid,
                  0, 60, 90, 3, 6)

    queries = []
    for _ in range(200):
        k = int(rng.integers(0, 3))
        queries.append((int(rng.integers(n)), int(rng.integers(n)),
                        rng.integers(0, n, k).astype(np.int64),
                        rng.integers(200, 800, k).astype(np.int64)))

    walks = []
    for _ in range(200):
        m = int(rng.integers(1, 5))
        walks.append((int(rng.integers(n)),
                      rng.integers(0, n, m).astype(np.int32)))

    return (net, indptr, indices, weights, dist, next_hop, serve_args,
            queries, walks)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=15)
    ap.add_argument("--cols", type=int, default=15)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    (net, indptr, indices, weights, dist, next_hop, serve_args,
     queries, walks) = build_instances(args.rows, args.cols, args.seed)
    n = net.n_nodes
    print(f"network: {args.rows}x{args.cols} grid, {n} nodes, "
          f"{net.n_arcs} arcs")

    backends = {}
    for name in ("python", "compiled"):
        try:
            backends[name] = get_backend(name)
        except Exception as exc:  # compiled build may be absent
            print(f"backend {name} unavailable: {exc}")
    if "compiled" not in backends:
        return

    def workloads(k):
        return {
            "all_pairs": lambda: k.all_pairs(indptr, indices, weights, n),
            "batch_serve 100x25": lambda: k.batch_serve(*serve_args),
            "best_insertion x200": lambda: [
                k.best_insertion(dist, node, -1, 0, 0, 90, pick, dr, dd)
                for node, pick, dr, dd in queries],
            "walk_route x200": lambda: [
                k.walk_route(indptr, indices, weights, dist, next_hop,
                             node, -1, 0, stops, 0, 60)
                for node, stops in walks],
        }

    results: dict[str, dict[str, float]] = {}
    for name, backend in backends.items():
        for label, fn in workloads(backend).items():
            results.setdefault(label, {})[name] = _timeit(fn, args.repeat)

    print(f"{'workload':<22}{'python':>12}{'compiled':>12}{'speedup':>10}")
    for label, times in results.items():
        py = times.get("python")
        cy = times.get("compiled")
        ratio = py / cy if py and cy else float("nan")
        print(f"{label:<22}{py * 1e3:>10.2f}ms{cy * 1e3:>10.2f}ms"
              f"{ratio:>9.1f}x")


if __name__ == "__main__":
    main()
