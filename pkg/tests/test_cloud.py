from __future__ import annotations

import numpy as np
import pytest

from chamferlab import (
    InvalidInputError,
    PointCloud,
    TriangleMesh,
    build_index,
    nearest,
    nearest_hit_counts,
    subsample,
)
from chamferlab.cloud import nearest_neighbors

from conftest import brute_force_nearest, random_cloud


class TestPointCloud:
    def test_basic_properties(self):
        cloud = PointCloud([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
        assert len(cloud) == 2
        assert cloud.dim == 3

    def test_rejects_empty(self):
        with pytest.raises(InvalidInputError):
            PointCloud(np.empty((0, 3)))

    def test_rejects_nan_and_inf(self):
        with pytest.raises(InvalidInputError):
            PointCloud([[0.0, np.nan, 0.0]])
        with pytest.raises(InvalidInputError):
            PointCloud([[np.inf, 0.0, 0.0]])

    def test_rejects_bad_dim(self):
        with pytest.raises(InvalidInputError):
            PointCloud([[1.0]])
        with pytest.raises(InvalidInputError):
            PointCloud([[1.0, 2.0, 3.0, 4.0]])

    def test_points_are_immutable(self):
        cloud = PointCloud([[0.0, 0.0]])
        with pytest.raises(ValueError):
            cloud.points[0, 0] = 1.0

    def test_order_preserved(self):
        pts = [[2.0, 0.0], [1.0, 0.0], [3.0, 0.0]]
        cloud = PointCloud(pts)
        assert (cloud.points == np.asarray(pts)).all()


class TestNearest:
    def test_single_candidate(self):
        idx = build_index(PointCloud([[0.0, 0.0, 0.0]]))
        i, d = nearest(idx, [5.0, 5.0, 5.0])
        assert i == 0
        assert d == pytest.approx(np.sqrt(75.0))

    def test_strict_nearest(self):
        idx = build_index(PointCloud([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]))
        i, d = nearest(idx, [0.4, 0.0, 0.0])
        assert (i, d) == (0, pytest.approx(0.4))

    def test_tie_breaks_to_lowest_index(self):
        idx = build_index(PointCloud([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
        q = np.array([1.0, 0.0, 0.0])
        assert nearest(idx, q) == brute_force_nearest(idx.source.points, q) == (0, 1.0)

    def test_query_on_source_point_is_zero(self, rng):
        cloud = random_cloud(rng, 40)
        idx = build_index(cloud)
        i, d = nearest(idx, cloud.points[17])
        assert i == 17
        assert d == 0.0

    def test_dimension_mismatch(self):
        idx = build_index(PointCloud([[0.0, 0.0, 0.0]]))
        with pytest.raises(InvalidInputError):
            nearest(idx, [0.0, 0.0])

    def test_matches_brute_force_on_random_clouds(self, rng):
        # the exact-NN contract: index and distance equal the scan, bit for bit
        for _ in range(20):
            n = int(rng.integers(1, 240))
            cloud = random_cloud(rng, n)
            idx = build_index(cloud)
            for q in rng.random((50, 3)):
                assert idx.query(q) == brute_force_nearest(cloud.points, q)

    def test_matches_brute_force_with_duplicates_and_grid_ties(self):
        pts = np.array(
            [[float(i), float(j)] for i in range(5) for j in range(5)]
            + [[2.0, 2.0], [2.0, 2.0]]
        )
        idx = build_index(PointCloud(pts))
        queries = np.array([[2.5, 2.5], [2.0, 2.0], [2.5, 2.0], [0.5, 0.5], [4.5, 4.5]])
        for q in queries:
            assert idx.query(q) == brute_force_nearest(pts, q)

    def test_query_many_matches_single_queries(self, rng):
        cloud = random_cloud(rng, 150)
        idx = build_index(cloud)
        queries = rng.random((30, 3))
        indices, dists = idx.query_many(queries)
        for k, q in enumerate(queries):
            assert (indices[k], dists[k]) == idx.query(q)

    def test_helper_brute_and_tree_paths_agree(self, rng):
        queries = rng.random((25, 3))
        small = random_cloud(rng, 30)  # scan path
        big = random_cloud(rng, 300)  # tree path
        for target in (small, big):
            idx, dist = nearest_neighbors(queries, target)
            for k, q in enumerate(queries):
                assert (idx[k], dist[k]) == brute_force_nearest(target.points, q)


class TestHitCounts:
    def test_self_hits_are_all_one(self, rng):
        cloud = random_cloud(rng, 60)
        counts = nearest_hit_counts(cloud, build_index(cloud))
        assert (counts == 1).all()

    def test_clustered_queries(self):
        queries = PointCloud([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
        idx = build_index(PointCloud([[0.0, 0.0, 0.0], [9.0, 9.0, 9.0]]))
        assert nearest_hit_counts(queries, idx).tolist() == [2, 0]

    def test_counts_sum_to_query_count(self, rng):
        queries = random_cloud(rng, 77)
        idx = build_index(random_cloud(rng, 13))
        counts = nearest_hit_counts(queries, idx)
        assert counts.sum() == 77
        assert (counts >= 0).all()

    def test_single_query(self, rng):
        queries = random_cloud(rng, 1)
        idx = build_index(random_cloud(rng, 2))
        assert nearest_hit_counts(queries, idx).sum() == 1


class TestSubsample:
    def test_full_size_is_identity(self, rng):
        cloud = random_cloud(rng, 12)
        for method in ("random", "farthest-point"):
            out = subsample(cloud, 12, method, seed=3)
            assert out == cloud

    def test_farthest_point_starts_at_index_zero(self, rng):
        cloud = random_cloud(rng, 9)
        out = subsample(cloud, 1, "farthest-point", seed=0)
        assert (out.points[0] == cloud.points[0]).all()

    def test_farthest_point_square_picks_diagonal(self):
        square = PointCloud([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
        out = subsample(square, 2, "farthest-point", seed=0)
        # starting corner plus the diagonally opposite one
        assert out.points.tolist() == [[0.0, 0.0], [1.0, 1.0]]

    def test_random_is_deterministic_per_seed(self, rng):
        cloud = random_cloud(rng, 50)
        a = subsample(cloud, 20, "random", seed=11)
        b = subsample(cloud, 20, "random", seed=11)
        c = subsample(cloud, 20, "random", seed=12)
        assert a == b
        assert a != c

    def test_out_of_range_n(self, rng):
        cloud = random_cloud(rng, 5)
        with pytest.raises(InvalidInputError):
            subsample(cloud, 0, "random", seed=0)
        with pytest.raises(InvalidInputError):
            subsample(cloud, 6, "random", seed=0)

    def test_unknown_method(self, rng):
        with pytest.raises(InvalidInputError):
            subsample(random_cloud(rng, 5), 2, "stratified", seed=0)

    def test_output_points_come_from_input(self, rng):
        cloud = random_cloud(rng, 30)
        out = subsample(cloud, 10, "farthest-point", seed=0)
        rows = {tuple(p) for p in cloud.points}
        assert all(tuple(p) in rows for p in out.points)


class TestTriangleMesh:
    def test_valid_mesh(self):
        mesh = TriangleMesh([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])
        assert len(mesh) == 1

    def test_rejects_out_of_range_indices(self):
        with pytest.raises(InvalidInputError):
            TriangleMesh([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 3]])

    def test_rejects_degenerate_triangle(self):
        with pytest.raises(InvalidInputError):
            TriangleMesh([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]], [[0, 1, 2]])
