"""Domain types: points, normals, poses, clouds and the search grid.

Clouds are stored as ``(N, 3)`` float64 arrays rather than lists of point
objects; :class:`Point3` and :class:`UnitNormal3` exist for single values at
API boundaries.  Grids are indexed ``[h, j, i]`` where ``h`` is the heading
index, ``j`` the y cell and ``i`` the x cell.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle into ``[-pi, pi)``; in-range values are returned as is."""
    if -math.pi <= theta < math.pi:
        return theta
    wrapped = (theta + math.pi) % TWO_PI - math.pi
    # the modulo can round up to exactly pi for inputs just below -pi
    if wrapped >= math.pi:
        wrapped -= TWO_PI
    return wrapped


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite point {self!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class UnitNormal3:
    nx: float
    ny: float
    nz: float

    def __post_init__(self):
        norm = math.sqrt(self.nx**2 + self.ny**2 + self.nz**2)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"normal is not unit length (|n| = {norm!r})")

    @classmethod
    def from_vector(cls, v) -> "UnitNormal3":
        v = np.asarray(v, dtype=float)
        n = v / np.linalg.norm(v)
        return cls(float(n[0]), float(n[1]), float(n[2]))

    def as_array(self) -> np.ndarray:
        return np.array([self.nx, self.ny, self.nz])


@dataclass(frozen=True)
class Pose2:
    """Planar pose: translation in meters and heading in radians.

    The heading is wrapped into ``[-pi, pi)`` on construction.  The rotation
    acts on x and y only; z passes through untouched.
    """

    tx: float = 0.0
    ty: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an ``(N, 3)`` array (or a single 3-vector)."""
        pts = np.asarray(points, dtype=float)
        out = pts.copy()
        c, s = math.cos(self.theta), math.sin(self.theta)
        x, y = pts[..., 0], pts[..., 1]
        out[..., 0] = c * x - s * y + self.tx
        out[..., 1] = s * x + c * y + self.ty
        return out

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        """Rotate direction vectors (normals); no translation."""
        v = np.asarray(vectors, dtype=float)
        out = v.copy()
        c, s = math.cos(self.theta), math.sin(self.theta)
        out[..., 0] = c * v[..., 0] - s * v[..., 1]
        out[..., 1] = s * v[..., 0] + c * v[..., 1]
        return out

    def inverse(self) -> "Pose2":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(-(c * self.tx + s * self.ty), s * self.tx - c * self.ty, -self.theta)

    def compose(self, other: "Pose2") -> "Pose2":
        """``self * other``: apply ``other`` first, then ``self``."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return Pose2(
            c * other.tx - s * other.ty + self.tx,
            s * other.tx + c * other.ty + self.ty,
            self.theta + other.theta,
        )

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.tx, self.ty, self.theta)


def se2_apply(pose: Pose2, p: Point3) -> Point3:
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Point3(c * p.x - s * p.y + pose.tx, s * p.x + c * p.y + pose.ty, p.z)


def _as_points(points) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 3))
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise ValueError(f"expected an (N, 3) array, got shape {arr.shape}")
    return arr


@dataclass
class ScanCloud:
    """Scan points in the vehicle frame, optionally with unit normals.

    Rows of ``normals`` that are NaN mark points whose normal could not be
    estimated (degenerate neighbourhood).
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None

    def __post_init__(self):
        self.points = _as_points(self.points)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("scan contains non-finite coordinates")
        if self.normals is not None:
            self.normals = _as_points(self.normals)
            if len(self.normals) != len(self.points):
                raise ValueError(
                    f"{len(self.normals)} normals for {len(self.points)} points"
                )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def valid_normals(self) -> np.ndarray:
        if self.normals is None:
            return np.zeros(len(self.points), dtype=bool)
        return np.all(np.isfinite(self.normals), axis=1)


@dataclass
class MapCloud:
    """Georeferenced reference points, each with a unit normal."""

    points: np.ndarray
    normals: np.ndarray

    def __post_init__(self):
        self.points = _as_points(self.points)
        self.normals = _as_points(self.normals)
        if len(self.points) != len(self.normals):
            raise ValueError(
                f"{len(self.normals)} normals for {len(self.points)} map points"
            )
        if not (np.all(np.isfinite(self.points)) and np.all(np.isfinite(self.normals))):
            raise ValueError("map contains non-finite values")
        if len(self.normals):
            norms = np.linalg.norm(self.normals, axis=1)
            if np.max(np.abs(norms - 1.0)) > 1e-5:
                raise ValueError("map normals must be unit length")
            self.normals = self.normals / norms[:, None]

    def __len__(self) -> int:
        return len(self.points)


class MatchMode(enum.Enum):
    ALL_PAIRS = "all_pairs"
    ONE_PER_SCAN_POINT = "one_per_scan_point"


class GridIndex(NamedTuple):
    i: int
    j: int
    h: int


@dataclass(frozen=True)
class SearchSpec:
    """Discretised pose search space centred on the initial pose.

    Cell ``i`` (x) and ``j`` (y) are centred at offsets ``(k - n // 2) *
    cell_size``; each cell covers the half-open interval of width
    ``cell_size`` around its centre.  Headings are ``(h - nh // 2) *
    heading_step`` and include both range endpoints.
    """

    half_extent_xy: float = 3.0
    cell_size: float = 0.06
    heading_half_range: float = math.radians(2.0)
    heading_step: float = math.radians(0.5)
    epsilon: Optional[float] = None
    match_mode: MatchMode = MatchMode.ALL_PAIRS
    n_cells: int = field(init=False, repr=False)
    n_headings: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", self.cell_size)
        if isinstance(self.match_mode, str):
            object.__setattr__(self, "match_mode", MatchMode(self.match_mode))
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.heading_step > 0:
            raise ValueError("heading_step must be positive")
        if not self.half_extent_xy > 0:
            raise ValueError("half_extent_xy must be positive")
        if self.heading_half_range < 0:
            raise ValueError("heading_half_range must be non-negative")
        ratio = 2.0 * self.half_extent_xy / self.cell_size
        n = round(ratio)
        if n < 1 or abs(ratio - n) > 1e-6:
            raise ValueError(
                f"2 * half_extent_xy / cell_size = {ratio!r} is not an integer"
            )
        steps = self.heading_half_range / self.heading_step
        k = round(steps)
        if abs(steps - k) > 1e-6:
            raise ValueError("heading_half_range is not a multiple of heading_step")
        object.__setattr__(self, "n_cells", int(n))
        object.__setattr__(self, "n_headings", 2 * int(k) + 1)

    @property
    def center(self) -> int:
        return self.n_cells // 2

    @property
    def center_heading(self) -> int:
        return self.n_headings // 2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_headings, self.n_cells, self.n_cells)

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) - self.center) * self.cell_size

    def headings(self) -> np.ndarray:
        return (np.arange(self.n_headings) - self.center_heading) * self.heading_step

    def offset_of(self, index: GridIndex) -> Pose2:
        c = self.cell_centers()
        return Pose2(c[index.i], c[index.j], self.headings()[index.h])


def cell_of(t, spec: SearchSpec) -> Optional[tuple[int, int]]:
    """Map a translation offset to its ``(i, j)`` cell, or ``None`` if outside.

    ``i`` indexes x and ``j`` indexes y.
    """
    tx, ty = float(t[0]), float(t[1])
    if abs(tx) > spec.half_extent_xy or abs(ty) > spec.half_extent_xy:
        return None
    i = math.floor(tx / spec.cell_size + 0.5) + spec.center
    j = math.floor(ty / spec.cell_size + 0.5) + spec.center
    if not (0 <= i < spec.n_cells and 0 <= j < spec.n_cells):
        return None
    return (i, j)
