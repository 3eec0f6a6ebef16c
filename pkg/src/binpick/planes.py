"""Per-cluster iterative RANSAC plane segmentation and merging of coplanar fragments.

Each cluster is mined repeatedly for its best consensus plane; accepted planes
have their inliers removed before the next round, so multi-face clusters split
into one plane per face. Fragments of one physical surface that arrive from
different clusters are then grouped by normal agreement plus an overlap check
and refit as a single plane, leaving one unique plane per surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import PlaneModel, normalize_plane, plane_signed_distances

DEFAULT_RANSAC_ITERATIONS = 200
DEFAULT_RANSAC_DIST_THRESH = 0.005
DEFAULT_MIN_OBJECT_SIZE = 30
DEFAULT_MERGE_ANGLE_TOL_DEG = 5.0
DEFAULT_CENTROID_THRESH = 0.05
DEFAULT_PERP_THRESH = 0.005

# Convergence guard: refinding the previously accepted model means no progress.
_SAME_MODEL_ANGLE_DEG = 0.5
# Hard caps so a cluster that keeps rejecting fits cannot loop forever.
MAX_PLANES_PER_CLUSTER = 10
_MAX_FIT_ATTEMPTS = 25


@dataclass
class SegmentedPlane:
    """A fitted plane with its inlier points and the cluster it came from."""

    points: np.ndarray
    model: PlaneModel
    source_cluster: int = 0
    inlier_indices: np.ndarray | None = None

    @property
    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)


@dataclass
class PlaneGroup:
    """Indices of planes judged to belong to one surface, plus their joint refit."""

    member_indices: list[int]
    merged: SegmentedPlane


def fit_plane_pca(points: np.ndarray) -> PlaneModel:
    """Least-squares plane through a point set (smallest covariance eigenvector)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise ValueError("plane fit needs at least 3 points")
    centroid = pts.mean(0)
    rel = pts - centroid
    cov = rel.T @ rel
    _, evecs = np.linalg.eigh(cov)
    normal = evecs[:, 0]
    return normalize_plane([normal[0], normal[1], normal[2], -normal @ centroid])


def ransac_plane(points: np.ndarray, dist_thresh: float = DEFAULT_RANSAC_DIST_THRESH,
                 max_iter: int = DEFAULT_RANSAC_ITERATIONS,
                 seed=0) -> tuple[np.ndarray, PlaneModel]:
    """Best consensus plane over random 3-point hypotheses, then a least-squares
    refit on the winning inliers and re-selection against the refit model.

    Deterministic for a given seed (an int or a numpy Generator). Raises
    ValueError when the points are collinear (no plane is defined).
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    n = len(pts)
    if n < 3 or dist_thresh <= 0:
        raise ValueError("need >= 3 points and a positive distance threshold")
    s = np.linalg.svd(pts - pts.mean(0), compute_uv=False)
    if s[1] <= 1e-12 * max(s[0], 1e-300):
        raise ValueError("degenerate input: points are collinear")

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    best_count = 0
    best_inliers = None
    for _ in range(max_iter):
        i, j, k = rng.choice(n, size=3, replace=False)
        v1 = pts[j] - pts[i]
        v2 = pts[k] - pts[i]
        nrm = np.cross(v1, v2)
        mag = np.linalg.norm(nrm)
        if mag < 1e-12 * max(np.linalg.norm(v1) * np.linalg.norm(v2), 1e-300):
            continue
        nrm = nrm / mag
        dist = np.abs(pts @ nrm - nrm @ pts[i])
        count = int((dist <= dist_thresh).sum())
        if count > best_count:
            best_count = count
            best_inliers = dist <= dist_thresh

    if best_inliers is None:  # every sampled triple was collinear; fall back
        best_inliers = np.ones(n, dtype=bool)

    model = fit_plane_pca(pts[best_inliers])
    final = np.abs(plane_signed_distances(model, pts)) <= dist_thresh
    return np.flatnonzero(final), model


def _same_model(a: PlaneModel, b: PlaneModel, dist_thresh: float) -> bool:
    cos_angle = abs(float(a.normal @ b.normal))
    angle_ok = cos_angle >= np.cos(np.radians(_SAME_MODEL_ANGLE_DEG))
    return angle_ok and abs(a.d - b.d) < dist_thresh


def extract_planes_iterative(points: np.ndarray, *,
                             min_cluster_size: int,
                             min_object_size: int = DEFAULT_MIN_OBJECT_SIZE,
                             dist_thresh: float = DEFAULT_RANSAC_DIST_THRESH,
                             max_iter: int = DEFAULT_RANSAC_ITERATIONS,
                             seed=0,
                             source_cluster: int = 0) -> list[SegmentedPlane]:
    """Repeatedly fit and remove planes from one cluster.

    A fit is accepted when its inlier count reaches min_object_size; accepted
    inliers leave the working set. The loop ends when fewer than
    min_cluster_size points remain, when a new fit reproduces the previously
    accepted model (no progress), or at the plane/attempt caps.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    active = np.arange(len(pts))
    planes: list[SegmentedPlane] = []
    prev_model: PlaneModel | None = None

    attempts = 0
    while (len(active) >= min_cluster_size and len(planes) < MAX_PLANES_PER_CLUSTER
           and attempts < _MAX_FIT_ATTEMPTS):
        attempts += 1
        try:
            inliers, model = ransac_plane(pts[active], dist_thresh, max_iter, rng)
        except ValueError:
            break
        if prev_model is not None and _same_model(model, prev_model, dist_thresh):
            break
        if len(inliers) >= min_object_size:
            chosen = active[inliers]
            planes.append(SegmentedPlane(points=pts[chosen], model=model,
                                         source_cluster=source_cluster,
                                         inlier_indices=chosen))
            active = np.delete(active, inliers)
            prev_model = model
    return planes


def check_overlapping(p1: SegmentedPlane, p2: SegmentedPlane,
                      centroid_thresh: float = DEFAULT_CENTROID_THRESH,
                      perp_thresh: float = DEFAULT_PERP_THRESH) -> bool:
    """True when two planes plausibly cover the same surface patch.

    Requires both a small centroid separation (tied to the smallest pickable
    object) and a small perpendicular distance from the second centroid to the
    first plane (tied to depth-sensor measurement noise).
    """
    c1 = p1.centroid
    c2 = p2.centroid
    if np.linalg.norm(c1 - c2) >= centroid_thresh:
        return False
    perp = abs(float(c2 @ p1.model.normal + p1.model.d))
    return perp < perp_thresh


def group_planes(planes: list[SegmentedPlane],
                 angle_tol_deg: float = DEFAULT_MERGE_ANGLE_TOL_DEG,
                 centroid_thresh: float = DEFAULT_CENTROID_THRESH,
                 perp_thresh: float = DEFAULT_PERP_THRESH) -> list[PlaneGroup]:
    """Greedy grouping in input order: each unvisited plane seeds a group and
    absorbs every later plane that is near-parallel (absolute dot within the
    angle tolerance, so sign-flipped duplicates still match) and overlapping
    with the seed. Each group is refit over the union of member points."""
    cos_tol = np.cos(np.radians(angle_tol_deg))
    visited = [False] * len(planes)
    groups: list[PlaneGroup] = []
    for m, seed_plane in enumerate(planes):
        if visited[m]:
            continue
        visited[m] = True
        members = [m]
        for n in range(m + 1, len(planes)):
            if visited[n]:
                continue
            dot = abs(float(seed_plane.model.normal @ planes[n].model.normal))
            if dot >= cos_tol and check_overlapping(seed_plane, planes[n],
                                                    centroid_thresh, perp_thresh):
                visited[n] = True
                members.append(n)
        if len(members) == 1:
            merged = SegmentedPlane(points=seed_plane.points, model=seed_plane.model,
                                    source_cluster=seed_plane.source_cluster)
        else:
            union = np.vstack([planes[i].points for i in members])
            merged = SegmentedPlane(points=union, model=fit_plane_pca(union),
                                    source_cluster=seed_plane.source_cluster)
        groups.append(PlaneGroup(member_indices=members, merged=merged))
    return groups


def group_and_merge_planes(planes: list[SegmentedPlane],
                           angle_tol_deg: float = DEFAULT_MERGE_ANGLE_TOL_DEG,
                           centroid_thresh: float = DEFAULT_CENTROID_THRESH,
                           perp_thresh: float = DEFAULT_PERP_THRESH) -> list[SegmentedPlane]:
    """Unique planes after grouping overlapping coplanar fragments, seed order."""
    return [g.merged for g in group_planes(planes, angle_tol_deg,
                                           centroid_thresh, perp_thresh)]
