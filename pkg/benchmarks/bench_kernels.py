"""Benchmark the graph kernels: numba @njit vs the pure-numpy fallback.

Run:  python3 benchmarks/bench_kernels.py
The numpy path can also be forced package-wide with TXTOPO_NO_NUMBA=1.
"""
import time

from txtopo import kernels
from txtopo.topology import gen_ba

REPEATS = 3


def bench(fn, *args):
    fn(*args)  # warm-up (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(REPEATS):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    topo = gen_ba(1000, 9, seed=1)
    indptr, indices = topo.csr
    print(f"graph: BA(n={topo.node_count}, m=9), {topo.edge_count} edges")
    print(f"available backends: {sorted(kernels.IMPLEMENTATIONS)} (active: {kernels.BACKEND})")
    print(f"{'kernel':<22}{'backend':<10}{'best of ' + str(REPEATS):>12}")
    baselines = {}
    for name in ("all_pairs_stats", "component_labels"):
        for backend, impl in sorted(kernels.IMPLEMENTATIONS.items()):
            elapsed = bench(impl[name], indptr, indices)
            print(f"{name:<22}{backend:<10}{elapsed * 1e3:>10.2f}ms")
            baselines.setdefault(name, {})[backend] = elapsed
    if "numba" in kernels.IMPLEMENTATIONS:
        for name, times in baselines.items():
            speedup = times["numpy"] / times["numba"]
            print(f"{name}: numba is {speedup:.1f}x the numpy path")


if __name__ == "__main__":
    main()
