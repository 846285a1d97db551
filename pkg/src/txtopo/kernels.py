"""BFS kernels behind the graph metrics: numba-jitted with a numpy fallback.

The active backend is picked at import time. Set TXTOPO_NO_NUMBA=1 to force
the pure-numpy path (also used automatically when numba is unavailable).
Both implementations are importable for parity tests and benchmarks via
IMPLEMENTATIONS.
"""
from __future__ import annotations

import os

import numpy as np


def build_csr(node_count: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric adjacency in CSR form (indptr, indices) from (E, 2) edge rows."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if e.shape[0] == 0:
        return np.zeros(node_count + 1, dtype=np.int64), np.empty(0, dtype=np.int64)
    both = np.concatenate([e, e[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    counts = np.bincount(both[:, 0], minlength=node_count)
    indptr = np.zeros(node_count + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, np.ascontiguousarray(both[:, 1])


# ---------------------------------------------------------------------------
# pure-numpy backend: level-synchronous BFS on vectorized frontier gathers

def _group_ranges(lens: np.ndarray, total: int) -> np.ndarray:
    # concatenation of arange(l) for each l in lens
    r = np.arange(total, dtype=np.int64)
    ends = np.cumsum(lens)
    r -= np.repeat(ends - lens, lens)
    return r


def _np_bfs_distances(indptr: np.ndarray, indices: np.ndarray, source: int) -> np.ndarray:
    n = indptr.shape[0] - 1
    dist = np.full(n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = np.array([source], dtype=np.int64)
    level = 0
    while frontier.size:
        starts = indptr[frontier]
        lens = indptr[frontier + 1] - starts
        total = int(lens.sum())
        if total == 0:
            break
        flat = np.repeat(starts, lens) + _group_ranges(lens, total)
        nbrs = indices[flat]
        new = np.unique(nbrs[dist[nbrs] < 0])
        if new.size == 0:
            break
        level += 1
        dist[new] = level
        frontier = new
    return dist


def _np_all_pairs_stats(indptr: np.ndarray, indices: np.ndarray) -> tuple[int, int, int]:
    n = indptr.shape[0] - 1
    total = 0
    pairs = 0
    diameter = 0
    for s in range(n):
        d = _np_bfs_distances(indptr, indices, s)
        reach = d > 0
        if reach.any():
            total += int(d[reach].sum())
            pairs += int(reach.sum())
            diameter = max(diameter, int(d[reach].max()))
    return total, pairs, diameter


def _np_component_labels(indptr: np.ndarray, indices: np.ndarray) -> np.ndarray:
    n = indptr.shape[0] - 1
    labels = np.full(n, -1, dtype=np.int64)
    next_label = 0
    for s in range(n):
        if labels[s] >= 0:
            continue
        d = _np_bfs_distances(indptr, indices, s)
        labels[d >= 0] = next_label
        next_label += 1
    return labels


# ---------------------------------------------------------------------------
# numba backend

def _disabled_by_env() -> bool:
    return os.environ.get("TXTOPO_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


_HAVE_NUMBA = False
if not _disabled_by_env():
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:
        _HAVE_NUMBA = False

if _HAVE_NUMBA:

    @njit(cache=True)
    def _nb_bfs_fill(indptr, indices, source, dist, queue):
        dist[:] = -1
        dist[source] = 0
        queue[0] = source
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            du = dist[u]
            for j in range(indptr[u], indptr[u + 1]):
                v = indices[j]
                if dist[v] < 0:
                    dist[v] = du + 1
                    queue[tail] = v
                    tail += 1

    @njit(cache=True)
    def _nb_bfs_distances(indptr, indices, source):
        n = indptr.shape[0] - 1
        dist = np.empty(n, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        _nb_bfs_fill(indptr, indices, source, dist, queue)
        return dist

    @njit(cache=True)
    def _nb_all_pairs_stats(indptr, indices):
        n = indptr.shape[0] - 1
        dist = np.empty(n, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        total = 0
        pairs = 0
        diameter = 0
        for s in range(n):
            _nb_bfs_fill(indptr, indices, s, dist, queue)
            for v in range(n):
                d = dist[v]
                if d > 0:
                    total += d
                    pairs += 1
                    if d > diameter:
                        diameter = d
        return total, pairs, diameter

    @njit(cache=True)
    def _nb_component_labels(indptr, indices):
        n = indptr.shape[0] - 1
        labels = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        next_label = 0
        for s in range(n):
            if labels[s] >= 0:
                continue
            labels[s] = next_label
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                for j in range(indptr[u], indptr[u + 1]):
                    v = indices[j]
                    if labels[v] < 0:
                        labels[v] = next_label
                        queue[tail] = v
                        tail += 1
            next_label += 1
        return labels


IMPLEMENTATIONS: dict[str, dict] = {
    "numpy": {
        "bfs_distances": _np_bfs_distances,
        "all_pairs_stats": _np_all_pairs_stats,
        "component_labels": _np_component_labels,
    }
}
if _HAVE_NUMBA:
    IMPLEMENTATIONS["numba"] = {
        "bfs_distances": _nb_bfs_distances,
        "all_pairs_stats": _nb_all_pairs_stats,
        "component_labels": _nb_component_labels,
    }

BACKEND = "numba" if _HAVE_NUMBA else "numpy"

bfs_distances = IMPLEMENTATIONS[BACKEND]["bfs_distances"]
all_pairs_stats = IMPLEMENTATIONS[BACKEND]["all_pairs_stats"]
component_labels = IMPLEMENTATIONS[BACKEND]["component_labels"]
