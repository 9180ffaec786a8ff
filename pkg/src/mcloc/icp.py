"""Point-to-plane ICP over (tx, ty, theta) and the grid-initialisation study."""
from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .core import MapCloud, Pose2, ScanCloud

GRID_OFFSETS = (-2.0, -1.0, 0.0, 1.0, 2.0)


@dataclass(frozen=True)
class IcpParams:
    """ICP settings.

    ``max_points`` caps the scan by a fixed stride (``None`` keeps all).
    ``truth_translation`` and ``truth_heading`` define when a run counts as
    having reached the true pose.
    """

    rejection_radius: float = 2.5
    max_iterations: int = 50
    tol_translation: float = 1e-4
    tol_rotation: float = 1e-5
    degenerate_ratio: float = 1e-9
    max_points: Optional[int] = 5000
    truth_translation: float = 0.10
    truth_heading: float = math.radians(0.5)


@dataclass(frozen=True)
class IcpResult:
    final_pose: Pose2
    iterations: int
    converged: bool
    reached_truth: bool
    final_rms: float
    degenerate: bool = False


@dataclass(frozen=True)
class IcpMap:
    """Map points, normals and a k-d tree for nearest-neighbour queries."""

    points: np.ndarray
    normals: np.ndarray
    tree: cKDTree

    @classmethod
    def from_cloud(cls, cloud: MapCloud) -> "IcpMap":
        if len(cloud) == 0:
            raise ValueError("map is empty")
        return cls(cloud.points, cloud.normals, cKDTree(cloud.points))


@dataclass(frozen=True)
class StudyResult:
    offsets: tuple
    runs: tuple
    epoch_failed: bool

    @property
    def n_failed(self) -> int:
        return sum(not r.reached_truth for r in self.runs)


def near_truth(pose: Pose2, truth: Pose2, params: IcpParams = IcpParams()) -> bool:
    d = math.hypot(pose.tx - truth.tx, pose.ty - truth.ty)
    dtheta = abs(Pose2(0, 0, pose.theta - truth.theta).theta)
    return d <= params.truth_translation and dtheta <= params.truth_heading


def _subsample(points: np.ndarray, max_points: Optional[int]) -> np.ndarray:
    if max_points is None or len(points) <= max_points:
        return points
    stride = int(math.ceil(len(points) / max_points))
    return points[::stride]


def icp_point_to_plane(
    scan: ScanCloud,
    map_or_icp: Union[MapCloud, IcpMap],
    init: Pose2,
    params: IcpParams = IcpParams(),
    truth: Optional[Pose2] = None,
) -> IcpResult:
    """Register ``scan`` (vehicle frame) to the map starting from ``init``.

    Each iteration pairs every transformed scan point with its nearest map
    point within ``rejection_radius`` and solves the linearised
    point-to-plane least-squares problem for ``(dtx, dty, dtheta)``.  The
    rotation increment is taken about the current translation.  A
    rank-deficient normal matrix ends the run as not converged.
    ``reached_truth`` compares the final pose with ``truth`` (False without
    one), independently of internal convergence.
    """
    if len(scan) == 0:
        raise ValueError("scan is empty")
    icp_map = map_or_icp if isinstance(map_or_icp, IcpMap) else IcpMap.from_cloud(map_or_icp)
    pts = _subsample(scan.points, params.max_points)
    pose = init
    converged = False
    degenerate = False
    rms = float("nan")
    iterations = 0

    for iterations in range(1, params.max_iterations + 1):
        s = pose.apply(pts)
        dist, nn = icp_map.tree.query(s, distance_upper_bound=params.rejection_radius)
        ok = np.isfinite(dist)
        if np.count_nonzero(ok) < 3:
            degenerate = True
            break
        s, m = s[ok], nn[ok]
        n = icp_map.normals[m]
        q = icp_map.points[m]
        rel = s[:, :2] - np.array([pose.tx, pose.ty])
        a = np.column_stack([n[:, 0], n[:, 1], n[:, 0] * -rel[:, 1] + n[:, 1] * rel[:, 0]])
        resid = np.einsum("ij,ij->i", q - s, n)
        rms = float(np.sqrt(np.mean(resid**2)))
        N = a.T @ a
        lam = np.linalg.eigvalsh(N)
        if lam[0] <= params.degenerate_ratio * max(lam[-1], 1.0):
            degenerate = True
            break
        dtx, dty, dth = np.linalg.solve(N, a.T @ resid)
        pose = Pose2(pose.tx + dtx, pose.ty + dty, pose.theta + dth)
        if math.hypot(dtx, dty) < params.tol_translation and abs(dth) < params.tol_rotation:
            converged = True
            break

    if not degenerate:
        s = pose.apply(pts)
        dist, nn = icp_map.tree.query(s, distance_upper_bound=params.rejection_radius)
        ok = np.isfinite(dist)
        if np.any(ok):
            resid = np.einsum("ij,ij->i", icp_map.points[nn[ok]] - s[ok], icp_map.normals[nn[ok]])
            rms = float(np.sqrt(np.mean(resid**2)))
    reached = truth is not None and near_truth(pose, truth, params)
    return IcpResult(pose, iterations, converged, bool(reached), rms, degenerate)


def grid_convergence_study(
    scan: ScanCloud,
    map_or_icp: Union[MapCloud, IcpMap],
    truth: Pose2,
    params: IcpParams = IcpParams(),
    workers: int = 1,
) -> StudyResult:
    """Run ICP from a 5 x 5 grid of 1 m spaced starts around ``truth``.

    Every start keeps the true heading.  The epoch fails if any run does
    not end within the truth tolerance.
    """
    icp_map = map_or_icp if isinstance(map_or_icp, IcpMap) else IcpMap.from_cloud(map_or_icp)
    offsets = tuple((dx, dy) for dy in GRID_OFFSETS for dx in GRID_OFFSETS)

    def run(off):
        init = Pose2(truth.tx + off[0], truth.ty + off[1], truth.theta)
        return icp_point_to_plane(scan, icp_map, init, params, truth)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = tuple(pool.map(run, offsets))
    else:
        runs = tuple(run(o) for o in offsets)
    return StudyResult(offsets, runs, any(not r.reached_truth for r in runs))


STUDY_HEADER = ("offset_x", "offset_y", "final_tx", "final_ty", "final_theta",
                "iterations", "converged", "reached_truth", "final_rms")


def write_study_csv(path, study: StudyResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(STUDY_HEADER)
        for (dx, dy), r in zip(study.offsets, study.runs):
            p = r.final_pose
            w.writerow([dx, dy, repr(p.tx), repr(p.ty), repr(p.theta), r.iterations,
                        int(r.converged), int(r.reached_truth), repr(r.final_rms)])
