"""Independent brute-force oracles the tests check the library against.

Everything here is written the slow, obvious way on purpose: exhaustive
pairwise distances, Kruskal over the full edge list, all 3-subsets for plane
fitting. None of it shares code with the library paths it validates.
"""

from __future__ import annotations

import itertools

import numpy as np


def brute_knn(points: np.ndarray, query: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """k nearest stored points to the query, ordered by (distance, index)."""
    d = np.linalg.norm(points - query, axis=1)
    order = np.lexsort((np.arange(len(points)), d))[:k]
    return d[order], order


def brute_radius(points: np.ndarray, query: np.ndarray, r: float) -> np.ndarray:
    d = np.linalg.norm(points - query, axis=1)
    return np.flatnonzero(d <= r)


def brute_core_distances(points: np.ndarray, k: int) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    d_sorted = np.sort(d, axis=1)
    return d_sorted[:, k]  # column 0 is the self distance


def mutual_reachability_matrix(points: np.ndarray, k: int) -> np.ndarray:
    core = brute_core_distances(points, k)
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    return np.maximum(d, np.maximum(core[:, None], core[None, :]))


def kruskal_mst_weights(weight_matrix: np.ndarray) -> np.ndarray:
    """Sorted edge weights of an MST over a dense symmetric weight matrix."""
    n = len(weight_matrix)
    edges = [(weight_matrix[i, j], i, j)
             for i in range(n) for j in range(i + 1, n)]
    edges.sort()
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    picked = []
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[rj] = ri
            picked.append(w)
            if len(picked) == n - 1:
                break
    return np.sort(np.array(picked))


def components_under_cut(weight_matrix: np.ndarray, cut: float) -> list[set[int]]:
    """Connected components of the graph keeping edges with weight < cut
    (single-linkage clusters at that level)."""
    n = len(weight_matrix)
    seen = np.zeros(n, dtype=bool)
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        comp = {start}
        seen[start] = True
        stack = [start]
        while stack:
            v = stack.pop()
            for u in range(n):
                if not seen[u] and weight_matrix[v, u] < cut:
                    seen[u] = True
                    comp.add(u)
                    stack.append(u)
        comps.append(comp)
    return comps


def plane_from_three(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray):
    n = np.cross(p1 - p0, p2 - p0)
    mag = np.linalg.norm(n)
    if mag < 1e-12:
        return None
    n = n / mag
    return n, -float(n @ p0)


def best_plane_inliers_exhaustive(points: np.ndarray, subsample: np.ndarray,
                                  thresh: float) -> int:
    """Max inlier count over all 3-subsets of the subsample, measured on all points."""
    best = 0
    for i, j, k in itertools.combinations(range(len(subsample)), 3):
        model = plane_from_three(subsample[i], subsample[j], subsample[k])
        if model is None:
            continue
        n, d = model
        count = int((np.abs(points @ n + d) <= thresh).sum())
        best = max(best, count)
    return best


def lsq_plane(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares plane via the covariance eigenproblem; (unit normal, d)."""
    c = points.mean(0)
    rel = points - c
    w, v = np.linalg.eigh(rel.T @ rel)
    n = v[:, 0]
    return n, -float(n @ c)


def weighted_poly2_height_fit(rel_uvh: np.ndarray, weights: np.ndarray,
                              eval_uv: np.ndarray) -> float:
    """Weighted order-2 polynomial height fit evaluated at one (u, v)."""
    u, v, h = rel_uvh[:, 0], rel_uvh[:, 1], rel_uvh[:, 2]
    a = np.stack([np.ones_like(u), u, v, u * u, u * v, v * v], axis=1)
    sw = np.sqrt(weights)
    coeff, *_ = np.linalg.lstsq(a * sw[:, None], h * sw, rcond=None)
    ue, ve = eval_uv
    terms = np.array([1.0, ue, ve, ue * ue, ue * ve, ve * ve])
    return float(terms @ coeff)


def flat_kernel_density_argmax(points: np.ndarray, bandwidth: float,
                               grid_step: float) -> np.ndarray:
    """Argmax of the flat-kernel point count over a regular grid spanning the data."""
    lo = points.min(0)
    hi = points.max(0)
    axes = [np.arange(lo[i], hi[i] + grid_step, grid_step) for i in range(3)]
    best_count = -1
    best = None
    for x in axes[0]:
        for y in axes[1]:
            for z in axes[2]:
                q = np.array([x, y, z])
                count = int((np.linalg.norm(points - q, axis=1) <= bandwidth).sum())
                if count > best_count:
                    best_count = count
                    best = q
    return best
