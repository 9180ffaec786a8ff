"""Spatial indexing over map clouds and PCA normal estimation.

:class:`VoxelIndex` is a hashed voxel grid stored in compressed form: points
are sorted by a packed integer voxel key so that a run of voxels along y is a
contiguous slice, found with a binary search.  The same structure serves the
cubic l-infinity queries below and the anisotropic column layout that the
consensus kernels scan.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import MapCloud

__all__ = [
    "VoxelIndex",
    "build_index",
    "query_linf",
    "knn",
    "estimate_normals",
    "EmptyMapError",
    "InsufficientPointsError",
]


class EmptyMapError(ValueError):
    pass


class InsufficientPointsError(ValueError):
    pass


class VoxelIndex:
    """Immutable voxel hash over a point set.

    Parameters
    ----------
    points : (N, 3) array
        Indexed coordinates.  Indices returned by queries refer to rows of
        this array.
    voxel_size : float or 3-sequence
        Edge length(s) of a voxel along x, y, z.
    normals : (N, 3) array, optional
        Carried along in sorted order for the consensus kernels.
    """

    def __init__(self, points: np.ndarray, voxel_size: Union[float, tuple], normals=None):
        pts = np.ascontiguousarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"expected (N, 3) points, got {pts.shape}")
        if len(pts) == 0:
            raise EmptyMapError("cannot index an empty map")
        size = np.broadcast_to(np.asarray(voxel_size, dtype=float), (3,)).copy()
        if np.any(size <= 0):
            raise ValueError("voxel_size must be positive")
        self.points = pts
        self.voxel_size = size
        self.origin = pts.min(axis=0)
        vox = np.floor((pts - self.origin) / size).astype(np.int64)
        self.dims = vox.max(axis=0) + 1
        keys = self._pack(vox[:, 0], vox[:, 1], vox[:, 2])
        self.order = np.argsort(keys, kind="stable")
        self.keys = keys[self.order]
        self.sorted_points = np.ascontiguousarray(pts[self.order])
        self.sorted_normals = None
        if normals is not None:
            self.sorted_normals = np.ascontiguousarray(np.asarray(normals, dtype=float)[self.order])

    def _pack(self, kx, ky, kz):
        nx, ny, _ = (int(d) for d in self.dims)
        return (np.asarray(kz, dtype=np.int64) * nx + kx) * ny + ky

    def voxel_of(self, p) -> tuple[int, int, int]:
        v = np.floor((np.asarray(p, dtype=float) - self.origin) / self.voxel_size)
        return tuple(int(c) for c in v)

    @property
    def buckets(self) -> dict[tuple[int, int, int], list[int]]:
        """Voxel key ``(kx, ky, kz)`` to the original point indices it holds."""
        nx, ny, _ = (int(d) for d in self.dims)
        out: dict[tuple[int, int, int], list[int]] = {}
        uniq, starts = np.unique(self.keys, return_index=True)
        ends = np.append(starts[1:], len(self.keys))
        for key, s, e in zip(uniq.tolist(), starts.tolist(), ends.tolist()):
            ky = key % ny
            kx = (key // ny) % nx
            kz = key // (nx * ny)
            out[(kx, ky, kz)] = self.order[s:e].tolist()
        return out

    def candidates(self, lo, hi) -> np.ndarray:
        """Original indices of all points in voxels overlapping box ``[lo, hi]``.

        A superset of the points inside the box; callers filter exactly.
        """
        lo_v = np.floor((np.asarray(lo, dtype=float) - self.origin) / self.voxel_size)
        hi_v = np.floor((np.asarray(hi, dtype=float) - self.origin) / self.voxel_size)
        lo_v = np.maximum(lo_v, 0).astype(np.int64)
        hi_v = np.minimum(hi_v, self.dims - 1).astype(np.int64)
        if np.any(hi_v < lo_v):
            return np.zeros(0, dtype=np.int64)
        kz = np.arange(lo_v[2], hi_v[2] + 1)
        kx = np.arange(lo_v[0], hi_v[0] + 1)
        zz, xx = np.meshgrid(kz, kx, indexing="ij")
        first = self._pack(xx.ravel(), lo_v[1], zz.ravel())
        last = self._pack(xx.ravel(), hi_v[1], zz.ravel())
        starts = np.searchsorted(self.keys, first, side="left")
        stops = np.searchsorted(self.keys, last, side="right")
        runs = [self.order[s:e] for s, e in zip(starts, stops) if e > s]
        if not runs:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(runs)


def build_index(map_cloud: Union[MapCloud, np.ndarray], voxel_size: float) -> VoxelIndex:
    if isinstance(map_cloud, MapCloud):
        return VoxelIndex(map_cloud.points, voxel_size, map_cloud.normals)
    return VoxelIndex(map_cloud, voxel_size)


def query_linf(index: VoxelIndex, p, eps: float) -> np.ndarray:
    """Indices ``j`` with ``max(|p - q_j|) <= eps`` (boundary inclusive)."""
    p = np.asarray(p, dtype=float)
    cand = index.candidates(p - eps, p + eps)
    if len(cand) == 0:
        return cand
    d = np.max(np.abs(index.points[cand] - p), axis=1)
    return cand[d <= eps]


def knn(cloud: Union[VoxelIndex, MapCloud, np.ndarray], p, k: int) -> np.ndarray:
    """The ``k`` nearest points to ``p`` by Euclidean distance.

    Sorted by distance; equal distances are ordered by lower index.
    """
    if isinstance(cloud, VoxelIndex):
        pts = cloud.points
    elif isinstance(cloud, MapCloud):
        pts = cloud.points
    else:
        pts = np.asarray(cloud, dtype=float)
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(pts) < k:
        raise InsufficientPointsError(f"cloud has {len(pts)} points, need {k}")
    p = np.asarray(p, dtype=float)
    tree = cKDTree(pts)
    dist, _ = tree.query(p, k=k)
    radius = float(np.atleast_1d(dist)[-1])
    # widen slightly so every tie at the k-th distance is collected
    cand = np.asarray(tree.query_ball_point(p, radius * (1 + 1e-9) + 1e-12), dtype=np.int64)
    d2 = np.sum((pts[cand] - p) ** 2, axis=1)
    order = np.lexsort((cand, d2))
    return cand[order[:k]]


def estimate_normals(
    points: np.ndarray,
    k: int = 12,
    viewpoint: Optional[np.ndarray] = None,
    degenerate_tol: float = 1e-8,
    chunk: int = 65536,
) -> np.ndarray:
    """PCA normals from the ``k`` nearest neighbours of every point.

    Returns an ``(N, 3)`` array.  Each normal is the eigenvector of the
    neighbourhood covariance with the smallest eigenvalue.  When
    ``viewpoint`` is given normals are flipped to face it; otherwise the
    largest-magnitude component is made positive.  Neighbourhoods whose
    covariance has numerical rank below 2 (middle eigenvalue at most
    ``degenerate_tol`` times the largest) get a NaN row.
    """
    pts = np.asarray(points, dtype=float)
    if k < 3:
        raise ValueError("k must be at least 3")
    if len(pts) < k:
        raise InsufficientPointsError(f"cloud has {len(pts)} points, need {k}")
    tree = cKDTree(pts)
    normals = np.empty_like(pts)
    for start in range(0, len(pts), chunk):
        block = pts[start:start + chunk]
        _, nbr = tree.query(block, k=k)
        hood = pts[nbr]
        hood = hood - hood.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", hood, hood) / k
        evals, evecs = np.linalg.eigh(cov)
        n = evecs[:, :, 0]
        bad = evals[:, 1] <= degenerate_tol * evals[:, 2]
        if viewpoint is not None:
            to_view = np.asarray(viewpoint, dtype=float) - block
            flip = np.einsum("ij,ij->i", n, to_view) < 0
        else:
            big = np.argmax(np.abs(n), axis=1)
            flip = n[np.arange(len(n)), big] < 0
        n[flip] *= -1.0
        n[bad] = np.nan
        normals[start:start + chunk] = n
    return normals


def angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unsigned angle between rows of ``a`` and ``b``, ignoring orientation."""
    cos = np.abs(np.einsum("ij,ij->i", a, b))
    return np.arccos(np.clip(cos, -1.0, 1.0))

