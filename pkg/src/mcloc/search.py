"""Exhaustive maximum consensus search over the discretised pose grid."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ._backend import get_accumulator
from .core import GridIndex, MapCloud, MatchMode, Pose2, ScanCloud, SearchSpec
from .index import VoxelIndex
from .objectives import Accumulator, Objective

# xy edge of the voxel columns scanned by the kernels
COLUMN_SIZE = 0.5

ORACLE_MAX_SCAN = 500
ORACLE_MAX_MAP = 5000
ORACLE_MAX_CELLS = 21
ORACLE_MAX_HEADINGS = 3


class EmptyConsensusError(RuntimeError):
    """No cell of any heading has a non-zero objective value.

    ``accumulator`` holds the (all-zero score) grids when the search ran.
    """

    def __init__(self, message: str, accumulator: Optional[Accumulator] = None):
        super().__init__(message)
        self.accumulator = accumulator


class InstanceTooLargeError(ValueError):
    pass


@dataclass
class LocalizationResult:
    best_pose: Pose2
    best_index: GridIndex
    best_value: float
    accumulator: Accumulator
    objective: Objective
    initial_pose: Pose2
    timing: float

    @property
    def grids(self) -> np.ndarray:
        """Objective values, shape ``(n_headings, n_cells, n_cells)``."""
        return self.accumulator.scores()

    @property
    def absolute_pose(self) -> Pose2:
        p0, d = self.initial_pose, self.best_pose
        return Pose2(p0.tx + d.tx, p0.ty + d.ty, p0.theta + d.theta)

    def offset_cells(self, spec: Optional[SearchSpec] = None) -> tuple[int, int]:
        spec = spec or self.accumulator.spec
        return (self.best_index.i - spec.center, self.best_index.j - spec.center)


def build_search_index(map_cloud: MapCloud, spec: SearchSpec) -> VoxelIndex:
    """Column index over the map: ``COLUMN_SIZE`` in xy, ``epsilon`` in z."""
    return VoxelIndex(
        map_cloud.points, (COLUMN_SIZE, COLUMN_SIZE, spec.epsilon), map_cloud.normals
    )


def rotated_scan(scan: ScanCloud, initial_pose: Pose2, theta: float):
    """Scan points and normals in world coordinates for heading offset ``theta``.

    The rotation is about the initial position; the candidate translation
    offset is added later, per cell.
    """
    pose = Pose2(initial_pose.tx, initial_pose.ty, initial_pose.theta + theta)
    pts = np.ascontiguousarray(pose.apply(scan.points))
    normals = None
    if scan.normals is not None:
        normals = np.ascontiguousarray(pose.rotate(scan.normals))
    return pts, normals


def _check_inputs(scan: ScanCloud, objective: Objective):
    if objective is Objective.HELMERT and scan.normals is None:
        raise ValueError("the Helmert objective needs scan normals")


def evaluate_heading(
    scan: ScanCloud,
    index: VoxelIndex,
    theta: float,
    spec: SearchSpec,
    objective: Objective = Objective.HELMERT,
    initial_pose: Pose2 = Pose2(),
    backend: Optional[str] = None,
):
    """Grid(s) for one heading offset.

    Returns an ``(n, n)`` int64 count grid or a ``(3, n, n)`` moment array.
    """
    objective = Objective(objective)
    _check_inputs(scan, objective)
    helmert = objective is Objective.HELMERT
    if helmert and index.sorted_normals is None:
        raise ValueError("the Helmert objective needs map normals in the index")
    rot, rnorm = rotated_scan(scan, initial_pose, theta)
    accumulate = get_accumulator(backend)
    count, moments = accumulate(
        rot,
        rnorm if helmert else None,
        index,
        spec.cell_centers(),
        spec.epsilon,
        spec.cell_size,
        helmert,
        spec.match_mode is MatchMode.ONE_PER_SCAN_POINT,
    )
    return moments if helmert else count


def best_of(scores: np.ndarray) -> tuple[GridIndex, float]:
    """Global argmax; ties go to the lowest heading, then lowest j, then lowest i."""
    flat = int(np.argmax(scores))
    h, j, i = np.unravel_index(flat, scores.shape)
    return GridIndex(int(i), int(j), int(h)), float(scores.flat[flat])


def maximum_consensus(
    scan: ScanCloud,
    map_or_index: Union[MapCloud, VoxelIndex],
    spec: SearchSpec = SearchSpec(),
    objective: Objective = Objective.HELMERT,
    initial_pose: Pose2 = Pose2(),
    workers: int = 1,
    backend: Optional[str] = None,
) -> LocalizationResult:
    """Evaluate every cell of every heading and return the best pose offset.

    ``scan`` is in the vehicle frame; it is placed in the world with
    ``initial_pose`` and the grid is centred there.  Headings are evaluated
    independently, on ``workers`` threads when more than one is given; the
    compiled kernel releases the GIL.
    """
    objective = Objective(objective)
    _check_inputs(scan, objective)
    if len(scan) == 0:
        raise EmptyConsensusError("scan is empty")
    index = map_or_index
    if isinstance(map_or_index, MapCloud):
        index = build_search_index(map_or_index, spec)

    start = time.perf_counter()
    thetas = spec.headings()

    def run(h):
        return evaluate_heading(scan, index, thetas[h], spec, objective, initial_pose, backend)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grids = list(pool.map(run, range(spec.n_headings)))
    else:
        grids = [run(h) for h in range(spec.n_headings)]

    acc = Accumulator.empty(objective, spec)
    for h, g in enumerate(grids):
        if objective is Objective.COUNT:
            acc.count[h] = g
        else:
            acc.moments[:, h] = g
    elapsed = time.perf_counter() - start

    scores = acc.scores()
    best, value = best_of(scores)
    if not value > 0:
        raise EmptyConsensusError(
            "no matches anywhere in the search space; "
            "the search range may be too small or the map may not cover the scan",
            acc,
        )
    return LocalizationResult(
        best_pose=spec.offset_of(best),
        best_index=best,
        best_value=value,
        accumulator=acc,
        objective=objective,
        initial_pose=initial_pose,
        timing=elapsed,
    )


def brute_force_oracle(
    scan: ScanCloud,
    map_cloud: MapCloud,
    spec: SearchSpec,
    objective: Objective = Objective.COUNT,
    initial_pose: Pose2 = Pose2(),
) -> Accumulator:
    """Objective grids by evaluating the consensus definition cell by cell.

    For every pose the match test ``|R p + t - q|_inf <= eps`` is applied to
    every scan/map pair.  Limited to small instances.
    """
    objective = Objective(objective)
    _check_inputs(scan, objective)
    if (
        len(scan) > ORACLE_MAX_SCAN
        or len(map_cloud) > ORACLE_MAX_MAP
        or spec.n_cells > ORACLE_MAX_CELLS
        or spec.n_headings > ORACLE_MAX_HEADINGS
    ):
        raise InstanceTooLargeError(
            f"oracle limited to {ORACLE_MAX_SCAN} scan points, {ORACLE_MAX_MAP} map "
            f"points and {ORACLE_MAX_CELLS}x{ORACLE_MAX_CELLS}x{ORACLE_MAX_HEADINGS} poses"
        )
    acc = Accumulator.empty(objective, spec)
    if len(scan) == 0 or len(map_cloud) == 0:
        return acc
    eps = spec.epsilon
    centers = spec.cell_centers()
    q, mn = map_cloud.points, map_cloud.normals
    one_per_scan = spec.match_mode is MatchMode.ONE_PER_SCAN_POINT
    helmert = objective is Objective.HELMERT

    for h, theta in enumerate(spec.headings()):
        r, rn = rotated_scan(scan, initial_pose, theta)
        # the z term of the norm does not depend on the cell
        k, m = np.nonzero(~(np.abs(r[:, 2][:, None] - q[:, 2][None, :]) > eps))
        if helmert:
            w = np.sum(np.nan_to_num(rn[k], nan=0.0) * mn[m], axis=1)
            valid = np.all(np.isfinite(rn[k]), axis=1)
            w = np.where(valid, np.maximum(w, 0.0), 0.0)
        dx = [~(np.abs((r[k, 0] + c) - q[m, 0]) > eps) for c in centers]
        dy = [~(np.abs((r[k, 1] + c) - q[m, 1]) > eps) for c in centers]
        for j in range(spec.n_cells):
            for i in range(spec.n_cells):
                hit = np.nonzero(dx[i] & dy[j])[0]
                if not helmert:
                    if one_per_scan:
                        acc.count[h, j, i] = len(np.unique(k[hit]))
                    else:
                        acc.count[h, j, i] = len(hit)
                    continue
                hit = hit[w[hit] > 0]
                if one_per_scan and len(hit):
                    # per scan point keep the largest weight, lowest map index on ties
                    order = np.lexsort((m[hit], -w[hit], k[hit]))
                    ks = k[hit][order]
                    keep = np.ones(len(order), dtype=bool)
                    keep[1:] = ks[1:] != ks[:-1]
                    hit = hit[order[keep]]
                nx, ny = mn[m[hit], 0], mn[m[hit], 1]
                acc.moments[0, h, j, i] = np.sum(w[hit] * nx * nx)
                acc.moments[1, h, j, i] = np.sum(w[hit] * nx * ny)
                acc.moments[2, h, j, i] = np.sum(w[hit] * ny * ny)
    return acc
