import numpy as np
import pytest

from mcloc import MapCloud
from mcloc.index import (
    EmptyMapError,
    InsufficientPointsError,
    VoxelIndex,
    angle_between,
    build_index,
    estimate_normals,
    knn,
    query_linf,
)


def brute_linf(pts, p, eps):
    return set(np.nonzero(np.max(np.abs(pts - p), axis=1) <= eps)[0].tolist())


class TestVoxelIndex:
    def test_single_point(self):
        idx = build_index(np.array([[1.0, 2.0, 3.0]]), 0.06)
        assert idx.buckets == {(0, 0, 0): [0]}

    def test_conservation(self, rng):
        pts = rng.uniform(-5, 5, (1000, 3))
        idx = build_index(pts, 0.3)
        b = idx.buckets
        assert sum(len(v) for v in b.values()) == 1000
        assert sorted(i for v in b.values() for i in v) == list(range(1000))
        for key, members in b.items():
            for m in members:
                assert idx.voxel_of(pts[m]) == key

    def test_empty(self):
        with pytest.raises(EmptyMapError):
            build_index(np.zeros((0, 3)), 0.1)

    def test_map_cloud_carries_normals(self, rng):
        pts = rng.normal(size=(50, 3))
        n = np.tile([0.0, 0.0, 1.0], (50, 1))
        idx = build_index(MapCloud(pts, n), 0.5)
        np.testing.assert_array_equal(idx.sorted_points, pts[idx.order])
        np.testing.assert_array_equal(idx.sorted_normals, n[idx.order])

    def test_anisotropic_voxels(self, rng):
        pts = rng.uniform(-2, 2, (300, 3))
        idx = VoxelIndex(pts, (0.5, 0.5, 0.06))
        lo, hi = np.array([-0.3, -0.2, 0.1]), np.array([0.4, 0.9, 0.2])
        got = set(idx.candidates(lo, hi).tolist())
        inside = set(np.nonzero(np.all((pts >= lo) & (pts <= hi), axis=1))[0].tolist())
        assert inside <= got


class TestQueryLinf:
    def test_far_point(self, rng):
        idx = build_index(rng.uniform(0, 1, (100, 3)), 0.06)
        assert len(query_linf(idx, [10.0, 10.0, 10.0], 0.06)) == 0

    def test_boundary_inclusive(self):
        pts = np.array([[0.0, 0.0, 0.0], [0.06, 0.0, 0.0], [0.0, 0.0625, 0.0]])
        idx = build_index(pts, 0.06)
        assert set(query_linf(idx, [0.0, 0.0, 0.0], 0.06).tolist()) == {0, 1}

    @pytest.mark.parametrize("voxel", [0.06, 0.02, 0.5])
    def test_matches_brute_force(self, rng, voxel):
        pts = rng.uniform(0, 0.5, (200, 3))
        idx = build_index(pts, voxel)
        for p in rng.uniform(-0.05, 0.55, (100, 3)):
            assert set(query_linf(idx, p, 0.06).tolist()) == brute_linf(pts, p, 0.06)


class TestKnn:
    def test_self(self, rng):
        pts = rng.normal(size=(100, 3))
        assert knn(pts, pts[37], 1)[0] == 37

    def test_collinear(self):
        pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]])
        np.testing.assert_array_equal(knn(pts, [0.0, 0, 0], 2), [0, 1])

    def test_brute_force(self, rng):
        pts = rng.normal(size=(500, 3))
        for p in rng.normal(size=(20, 3)):
            d = np.linalg.norm(pts - p, axis=1)
            np.testing.assert_array_equal(knn(pts, p, 10), np.argsort(d, kind="stable")[:10])

    def test_ties_lower_index(self):
        pts = np.array([[1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0], [0, -1.0, 0]])
        np.testing.assert_array_equal(knn(pts, [0.0, 0, 0], 2), [0, 1])

    def test_insufficient(self):
        with pytest.raises(InsufficientPointsError):
            knn(np.zeros((2, 3)), [0, 0, 0], 3)


class TestNormals:
    def test_plane_z0(self, rng):
        pts = np.column_stack([rng.uniform(0, 1, 400), rng.uniform(0, 1, 400), np.zeros(400)])
        n = estimate_normals(pts, k=12)
        np.testing.assert_allclose(np.abs(n[:, 2]), 1.0, atol=1e-6)

    def test_plane_x5(self, rng):
        pts = np.column_stack([np.full(400, 5.0), rng.uniform(0, 1, 400), rng.uniform(0, 1, 400)])
        n = estimate_normals(pts, k=12)
        np.testing.assert_allclose(np.abs(n[:, 0]), 1.0, atol=1e-6)

    def test_noisy_facade(self, rng):
        pts = np.column_stack([rng.uniform(0, 10, 3000), 6.0 + rng.normal(0, 0.01, 3000),
                               rng.uniform(0, 8, 3000)])
        n = estimate_normals(pts, k=12, viewpoint=[5.0, 0.0, 1.8])
        ang = np.degrees(angle_between(n, np.array([[0.0, -1.0, 0.0]])))
        assert np.mean(ang < 5.0) >= 0.95
        # oriented toward the viewpoint
        assert np.all(n[:, 1] < 0)

    def test_degenerate_line(self):
        pts = np.column_stack([np.linspace(0, 1, 20), np.zeros(20), np.zeros(20)])
        n = estimate_normals(pts, k=5)
        assert np.all(np.isnan(n))

    def test_too_few(self):
        with pytest.raises(InsufficientPointsError):
            estimate_normals(np.zeros((4, 3)), k=8)
