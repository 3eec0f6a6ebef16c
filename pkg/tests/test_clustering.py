import numpy as np
import pytest

from binpick.clustering import (
    ClusterLabels,
    condensed_tree,
    core_distances,
    hdbscan,
    mutual_reachability_mst,
)

from .oracles import (
    components_under_cut,
    kruskal_mst_weights,
    mutual_reachability_matrix,
)


def two_blobs(rng, n_each=50, separation=1.0, sigma=0.005):
    a = rng.normal(0, sigma, size=(n_each, 3))
    b = rng.normal(0, sigma, size=(n_each, 3)) + np.array([separation, 0, 0])
    return np.vstack([a, b])


class TestCoreDistances:
    def test_collinear_nearest(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
        assert core_distances(pts, 1) == pytest.approx([1, 1, 1])

    def test_collinear_second_nearest(self):
        pts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0.0]])
        assert core_distances(pts, 2) == pytest.approx([2, 1, 2])

    def test_k_too_large(self):
        with pytest.raises(ValueError):
            core_distances(np.zeros((3, 3)), 3)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(size=(60, 3))
        for k in (1, 5, 20):
            brute = np.sort(
                np.linalg.norm(pts[:, None] - pts[None, :], axis=2), axis=1)[:, k]
            assert core_distances(pts, k) == pytest.approx(brute)


class TestMutualReachabilityMst:
    def test_weights_match_kruskal_oracle_exactly(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(10, 120))
            pts = rng.uniform(size=(n, 3))
            k = int(rng.integers(1, min(10, n - 1) + 1))
            _, weights = mutual_reachability_mst(pts, k)
            oracle = kruskal_mst_weights(mutual_reachability_matrix(pts, k))
            assert np.array_equal(np.sort(weights), oracle)

    def test_mreach_dominates_distance_and_is_symmetric(self):
        rng = np.random.default_rng(2)
        pts = rng.uniform(size=(40, 3))
        m = mutual_reachability_matrix(pts, 5)
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        assert (m >= d - 1e-12).all()
        assert np.allclose(m, m.T)

    def test_edges_span_all_points(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(size=(30, 3))
        edges, _ = mutual_reachability_mst(pts, 3)
        assert len(edges) == 29
        assert set(edges.ravel().tolist()) == set(range(30))


class TestHdbscan:
    def test_two_blobs_two_clusters_no_noise(self):
        rng = np.random.default_rng(4)
        pts = two_blobs(rng)
        labels = hdbscan(pts, min_cluster_size=30)
        assert labels.n_clusters == 2
        assert (labels.labels >= 0).all()
        # agree with single-linkage over mutual reachability, cut at the gap
        m = mutual_reachability_matrix(pts, 30)
        comps = components_under_cut(m, 0.5)
        assert len(comps) == 2
        for comp in comps:
            assert len({labels.labels[i] for i in comp}) == 1

    def test_below_min_cluster_size_all_noise(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(20, 3))
        labels = hdbscan(pts, min_cluster_size=30)
        assert (labels.labels == -1).all()
        assert labels.n_clusters == 0

    def test_single_blob_single_cluster(self):
        rng = np.random.default_rng(6)
        pts = rng.normal(0, 0.005, size=(100, 3))
        labels = hdbscan(pts, min_cluster_size=30)
        assert labels.n_clusters == 1
        assert (labels.labels == 0).all()

    def test_cluster_sizes_respect_minimum(self):
        rng = np.random.default_rng(7)
        pts = np.vstack([two_blobs(rng), rng.uniform(2, 3, size=(7, 3))])
        labels = hdbscan(pts, min_cluster_size=30)
        for cid in range(labels.n_clusters):
            assert (labels.labels == cid).sum() >= 30

    def test_determinism_and_permutation_equivariance(self):
        rng = np.random.default_rng(8)
        pts = two_blobs(rng, n_each=40)
        a = hdbscan(pts, min_cluster_size=20).labels
        b = hdbscan(pts, min_cluster_size=20).labels
        assert np.array_equal(a, b)

        perm = rng.permutation(len(pts))
        c = hdbscan(pts[perm], min_cluster_size=20).labels
        mapping = {}
        for orig, new in zip(a[perm], c):
            if orig == -1 or new == -1:
                assert orig == new
                continue
            assert mapping.setdefault(orig, new) == new

    def test_parallel_planes_separated(self):
        # two box tops 50 mm apart in height must never share a cluster
        rng = np.random.default_rng(9)
        xs = np.arange(10) * 0.005
        xx, yy = np.meshgrid(xs, xs)
        patch = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
        upper = patch + np.array([0, 0, 0.05])
        pts = np.vstack([patch, upper])
        labels = hdbscan(pts, min_cluster_size=30)
        assert labels.n_clusters == 2
        low = {labels.labels[i] for i in range(len(patch))}
        high = {labels.labels[i] for i in range(len(patch), len(pts))}
        assert low.isdisjoint(high)

    def test_min_cluster_size_validation(self):
        with pytest.raises(ValueError):
            hdbscan(np.zeros((10, 3)), min_cluster_size=1)

    def test_labels_contiguity_enforced(self):
        with pytest.raises(ValueError):
            ClusterLabels(np.array([0, 2, 2]))


class TestCondensedTree:
    def test_lambda_monotone_and_stability_nonnegative(self):
        rng = np.random.default_rng(10)
        pts = two_blobs(rng, n_each=40, separation=0.4)
        tree = condensed_tree(pts, min_cluster_size=20)
        for node in tree.nodes.values():
            assert node.stability >= -1e-12
            if node.parent_id is not None:
                assert node.lambda_birth >= tree.nodes[node.parent_id].lambda_birth

    def test_selected_clusters_are_antichain(self):
        rng = np.random.default_rng(11)
        pts = np.vstack([two_blobs(rng, n_each=40, separation=0.5),
                         two_blobs(rng, n_each=40, separation=0.5) + 5.0])
        tree = condensed_tree(pts, min_cluster_size=25)
        selected = set(tree.selected)
        for cid in selected:
            parent = tree.nodes[cid].parent_id
            while parent is not None:
                assert parent not in selected
                parent = tree.nodes[parent].parent_id

    def test_member_counts(self):
        rng = np.random.default_rng(12)
        pts = two_blobs(rng, n_each=35, separation=0.8)
        tree = condensed_tree(pts, min_cluster_size=20)
        root = tree.nodes[0]
        assert root.size == 70
        child_sizes = sorted(tree.nodes[c].size for c in root.children)
        assert child_sizes == [35, 35]
