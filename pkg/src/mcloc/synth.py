"""Synthetic street scenes, map clouds and VLP-16-like scans.

Scenes are built from axis-aligned solids (building blocks, balcony-like
protrusions, parked cars) whose exposed faces are planar rectangles.  Maps
sample the faces on a regular lattice with analytic normals pointing into
the street; scans ray-cast a 16-layer spinning sensor against the same faces
plus scan-only clutter.  Ground and roofs are never part of the map.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import MapCloud, Pose2, ScanCloud

__all__ = [
    "Layout",
    "DensityBias",
    "SceneSpec",
    "SensorSpec",
    "Face",
    "Scene",
    "SensorInsideGeometryError",
    "build_scene",
    "generate_map",
    "apply_density_bias",
    "simulate_scan",
    "scan_with_normals",
    "EpochSpec",
    "make_epoch",
]


class Layout(enum.Enum):
    CORRIDOR = "corridor"
    CROSSING = "crossing"
    CUSTOM = "custom"


class SensorInsideGeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DensityBias:
    """Resample map points inside an axis-aligned box by ``factor``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    factor: float

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("density factor must be positive")

    def contains(self, points: np.ndarray) -> np.ndarray:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.all((points >= lo) & (points <= hi), axis=1)


@dataclass(frozen=True)
class SceneSpec:
    """Parameters of a synthetic scene.

    ``facades`` is only used by the custom layout: each entry is
    ``(x0, y0, x1, y1, height)``, a vertical wall from ``(x0, y0)`` to
    ``(x1, y1)`` whose normal points to the left of that direction.
    ``protrusion_density`` counts protrusions per 10 m of facade.
    """

    layout: Layout = Layout.CORRIDOR
    facade_height: float = 8.0
    street_width: float = 12.0
    spacing: float = 0.05
    protrusion_density: float = 1.0
    length: float = 100.0
    seed: int = 0
    outliers: int = 0
    facades: tuple = ()
    biases: tuple = ()

    def __post_init__(self):
        if isinstance(self.layout, str):
            object.__setattr__(self, "layout", Layout(self.layout))
        if not self.spacing > 0:
            raise ValueError("spacing must be positive")
        if not self.street_width > 0:
            raise ValueError("street_width must be positive")
        if not self.facade_height > 0:
            raise ValueError("facade_height must be positive")
        if self.protrusion_density < 0:
            raise ValueError("protrusion_density must be non-negative")
        object.__setattr__(self, "facades", tuple(tuple(f) for f in self.facades))
        object.__setattr__(self, "biases", tuple(self.biases))


@dataclass(frozen=True)
class SensorSpec:
    n_layers: int = 16
    min_elevation_deg: float = -15.0
    max_elevation_deg: float = 15.0
    azimuth_step_deg: float = 0.2
    height: float = 1.8
    max_range: float = 100.0
    noise_sigma: float = 0.01

    def elevations(self) -> np.ndarray:
        return np.radians(
            np.linspace(self.min_elevation_deg, self.max_elevation_deg, self.n_layers)
        )

    def azimuths(self) -> np.ndarray:
        n = int(round(360.0 / self.azimuth_step_deg))
        return np.radians(np.arange(n) * self.azimuth_step_deg)


@dataclass(frozen=True)
class Face:
    """Rectangle ``origin + a * u + b * v`` for ``a, b`` in ``[0, 1]``."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    normal: np.ndarray

    def sample(self, spacing: float) -> np.ndarray:
        lu, lv = np.linalg.norm(self.u), np.linalg.norm(self.v)
        na, nb = max(1, int(round(lu / spacing))), max(1, int(round(lv / spacing)))
        a = (np.arange(na) + 0.5) / na
        b = (np.arange(nb) + 0.5) / nb
        aa, bb = np.meshgrid(a, b, indexing="ij")
        return self.origin + aa.reshape(-1, 1) * self.u + bb.reshape(-1, 1) * self.v


@dataclass(frozen=True)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def contains(self, p, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(p)
        return np.all((p > self.lo - tol) & (p < self.hi + tol), axis=1)

    def faces(self, skip: Sequence[str] = ()) -> list[Face]:
        """Outward faces named ``-x, +x, -y, +y, -z, +z``."""
        lo, hi = self.lo, self.hi
        dx, dy, dz = hi - lo
        ex, ey, ez = np.eye(3)
        spec = {
            "-x": (lo, ey * dy, ez * dz, -ex),
            "+x": (np.array([hi[0], lo[1], lo[2]]), ey * dy, ez * dz, ex),
            "-y": (lo, ex * dx, ez * dz, -ey),
            "+y": (np.array([lo[0], hi[1], lo[2]]), ex * dx, ez * dz, ey),
            "-z": (lo, ex * dx, ey * dy, -ez),
            "+z": (np.array([lo[0], lo[1], hi[2]]), ex * dx, ey * dy, ez),
        }
        return [Face(np.array(o, float), u, v, n) for k, (o, u, v, n) in spec.items() if k not in skip]


@dataclass
class Scene:
    """Resolved geometry of a :class:`SceneSpec`.

    ``facades`` and ``protrusion_faces`` are sampled into the map; clutter
    faces only appear in scans.  ``solids`` and ``walls`` define the occupied space
    for the sensor placement check.
    """

    spec: SceneSpec
    facades: list[Face] = field(default_factory=list)
    protrusion_faces: list[Face] = field(default_factory=list)
    clutter_faces: list[Face] = field(default_factory=list)
    solids: list[Box] = field(default_factory=list)
    protrusions: list[Box] = field(default_factory=list)

    @property
    def map_faces(self) -> list[Face]:
        return self.facades + self.protrusion_faces

    @property
    def scan_faces(self) -> list[Face]:
        return self.map_faces + self.clutter_faces

    def is_free(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return not any(bool(b.contains(p)[0]) for b in self.solids)


def _protrusions_along(rng, start, direction, normal, length, height, density):
    """Balcony-like boxes attached to a facade segment.

    ``start`` is the facade's ground-level start point, ``direction`` the
    unit vector along it and ``normal`` the unit vector into the street.
    """
    boxes = []
    expected = density * length / 10.0
    count = rng.poisson(expected) if expected > 0 else 0
    placed: list[tuple[float, float]] = []
    for _ in range(count):
        width = rng.uniform(1.0, 2.5)
        s0 = rng.uniform(0.0, max(length - width, 0.0))
        if any(s0 < b1 + 0.5 and s0 + width > b0 - 0.5 for b0, b1 in placed):
            continue
        placed.append((s0, s0 + width))
        depth = rng.uniform(0.3, 0.8)
        z0 = rng.uniform(0.5, 3.0)
        z1 = min(height, z0 + rng.uniform(1.0, 2.5))
        a = start + direction * s0
        b = start + direction * (s0 + width)
        c = a + normal * depth
        d = b + normal * depth
        xy = np.array([a, b, c, d])
        lo = np.array([xy[:, 0].min(), xy[:, 1].min(), z0])
        hi = np.array([xy[:, 0].max(), xy[:, 1].max(), z1])
        back = {(1, 0): "-x", (-1, 0): "+x", (0, 1): "-y", (0, -1): "+y"}[
            (int(round(normal[0])), int(round(normal[1])))
        ]
        boxes.append((Box(lo, hi), back))
    return boxes


def _wall(x0, y0, x1, y1, height) -> Face:
    a = np.array([x0, y0, 0.0])
    u = np.array([x1 - x0, y1 - y0, 0.0])
    n = np.array([-u[1], u[0], 0.0]) / np.linalg.norm(u[:2])
    return Face(a, u, np.array([0.0, 0.0, height]), n)


def build_scene(spec: SceneSpec) -> Scene:
    rng = np.random.default_rng(spec.seed)
    scene = Scene(spec)
    h, w, L = spec.facade_height, spec.street_width, spec.length
    half = w / 2.0
    depth = 20.0
    segments = []  # (start, direction, normal, length)

    if spec.layout is Layout.CORRIDOR:
        segments.append((np.array([-L / 2, half, 0.0]), np.array([1.0, 0, 0]), np.array([0, -1.0, 0]), L))
        segments.append((np.array([-L / 2, -half, 0.0]), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]), L))
        scene.solids.append(Box(np.array([-L / 2, half, 0]), np.array([L / 2, half + depth, h])))
        scene.solids.append(Box(np.array([-L / 2, -half - depth, 0]), np.array([L / 2, -half, h])))
    elif spec.layout is Layout.CROSSING:
        arm = L / 2.0
        for sx in (1.0, -1.0):
            for sy in (1.0, -1.0):
                # facade facing the y-street (normal along -sy) and the x-street
                segments.append((np.array([sx * half, sy * half, 0.0]), np.array([sx, 0, 0]),
                                 np.array([0, -sy, 0]), arm - half))
                segments.append((np.array([sx * half, sy * half, 0.0]), np.array([0, sy, 0]),
                                 np.array([-sx, 0, 0]), arm - half))
                lo = np.array([min(sx * half, sx * arm), min(sy * half, sy * arm), 0.0])
                hi = np.array([max(sx * half, sx * arm), max(sy * half, sy * arm), h])
                scene.solids.append(Box(lo, hi))
    else:
        for x0, y0, x1, y1, fh in spec.facades:
            scene.facades.append(_wall(x0, y0, x1, y1, fh))

    for start, direction, normal, length in segments:
        u = direction * length
        o = start if direction.sum() > 0 else start + u
        uu = u if direction.sum() > 0 else -u
        scene.facades.append(Face(o, uu, np.array([0.0, 0.0, h]), normal.astype(float)))
        for box, back in _protrusions_along(rng, start, direction, normal, length, h,
                                            spec.protrusion_density):
            scene.protrusions.append(box)
            scene.solids.append(box)
            scene.protrusion_faces.extend(box.faces(skip=(back,)))

    for _ in range(spec.outliers):
        # parked cars along either curb; scan only
        along = rng.uniform(-L / 4, L / 4)
        side = rng.choice([-1.0, 1.0])
        if spec.layout is Layout.CROSSING and rng.random() < 0.5:
            lo = np.array([side * (half - 0.3) - (1.8 if side > 0 else 0), along, 0.0])
            car = Box(lo, lo + np.array([1.8, 4.5, 1.5]))
        else:
            lo = np.array([along, side * (half - 0.3) - (1.8 if side > 0 else 0), 0.0])
            car = Box(lo, lo + np.array([4.5, 1.8, 1.5]))
        scene.solids.append(car)
        scene.clutter_faces.extend(car.faces(skip=("-z",)))
    return scene


def generate_map(scene_or_spec, rng_seed: Optional[int] = None) -> MapCloud:
    """Sample all map faces on a regular lattice with analytic normals.

    Facade samples hidden inside protrusions are dropped; density biases in
    the scene spec are applied last.
    """
    scene = scene_or_spec if isinstance(scene_or_spec, Scene) else build_scene(scene_or_spec)
    spec = scene.spec
    pts, nrm = [], []
    for face in scene.facades:
        p = face.sample(spec.spacing)
        keep = np.ones(len(p), dtype=bool)
        for box in scene.protrusions:
            # facade samples behind an attached box are hidden
            keep &= ~box.contains(p, tol=1e-9)
        pts.append(p[keep])
        nrm.append(np.broadcast_to(face.normal, (int(keep.sum()), 3)))
    for face in scene.protrusion_faces:
        p = face.sample(spec.spacing)
        pts.append(p)
        nrm.append(np.broadcast_to(face.normal, p.shape))
    if pts:
        cloud = MapCloud(np.concatenate(pts), np.concatenate(nrm))
    else:
        cloud = MapCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    seed = spec.seed if rng_seed is None else rng_seed
    for k, bias in enumerate(spec.biases):
        cloud = apply_density_bias(cloud, bias, seed=seed + 7919 * (k + 1))
    return cloud


def apply_density_bias(cloud: MapCloud, bias: DensityBias, seed: int = 0) -> MapCloud:
    """Thin (factor < 1) or densify (factor > 1) the map inside ``bias``.

    Densifying adds ``factor - 1`` jittered copies per point (the fractional
    part decided at random).  Copies move within the local tangent plane by
    at most 1 cm per direction and are clipped to the region.
    """
    if bias.factor == 1.0:
        return MapCloud(cloud.points.copy(), cloud.normals.copy())
    rng = np.random.default_rng(seed)
    inside = bias.contains(cloud.points)
    idx = np.nonzero(inside)[0]
    if bias.factor < 1.0:
        drop = idx[rng.random(len(idx)) >= bias.factor]
        keep = np.ones(len(cloud), dtype=bool)
        keep[drop] = False
        return MapCloud(cloud.points[keep], cloud.normals[keep])
    extra = bias.factor - 1.0
    copies = np.full(len(idx), int(math.floor(extra)))
    copies += rng.random(len(idx)) < (extra - math.floor(extra))
    src = np.repeat(idx, copies)
    n = cloud.normals[src]
    # tangent basis per copy
    helper = np.where(np.abs(n[:, 2:3]) < 0.9, np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]))
    t1 = np.cross(n, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(n, t1)
    j = rng.uniform(-0.01, 0.01, size=(len(src), 2))
    jitter = j[:, :1] * t1 + j[:, 1:] * t2
    jitter = np.clip(jitter, -0.01, 0.01)
    new = np.clip(cloud.points[src] + jitter, bias.lo, bias.hi)
    return MapCloud(np.concatenate([cloud.points, new]), np.concatenate([cloud.normals, n]))


def _cast(origins: np.ndarray, dirs: np.ndarray, faces: list[Face], max_range: float):
    """Nearest hit distance per ray against all faces (``inf`` for misses)."""
    best = np.full(len(dirs), np.inf)
    for f in faces:
        denom = dirs @ f.normal
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((f.origin - origins) @ f.normal) / denom
        ok = np.abs(denom) > 1e-12
        ok &= (t > 1e-9) & (t <= max_range) & (t < best)
        if not np.any(ok):
            continue
        idx = np.nonzero(ok)[0]
        hit = origins[idx] + t[idx, None] * dirs[idx] - f.origin
        a = hit @ f.u / (f.u @ f.u)
        b = hit @ f.v / (f.v @ f.v)
        inside = (a >= 0) & (a <= 1) & (b >= 0) & (b <= 1)
        best[idx[inside]] = t[idx[inside]]
    return best


def simulate_scan(
    scene_or_spec,
    pose: Pose2,
    sensor: SensorSpec = SensorSpec(),
    seed: Optional[int] = None,
) -> ScanCloud:
    """Ray-cast a spinning multi-layer sensor at ``pose``.

    Returns points in the vehicle frame: origin on the ground below the
    sensor, x forward, z up in the world datum (the sensor sits at
    ``(0, 0, sensor.height)``).  Misses are dropped; isotropic Gaussian
    noise of ``sensor.noise_sigma`` is added to every hit.
    """
    scene = scene_or_spec if isinstance(scene_or_spec, Scene) else build_scene(scene_or_spec)
    origin_world = np.array([pose.tx, pose.ty, sensor.height])
    if not scene.is_free(origin_world):
        raise SensorInsideGeometryError(f"sensor at {origin_world.tolist()} is inside the scene geometry")
    el = sensor.elevations()
    az = sensor.azimuths() + pose.theta
    ee, aa = np.meshgrid(el, az, indexing="ij")
    dirs = np.stack(
        [np.cos(ee) * np.cos(aa), np.cos(ee) * np.sin(aa), np.sin(ee)], axis=-1
    ).reshape(-1, 3)
    origins = np.broadcast_to(origin_world, dirs.shape)
    t = _cast(origins, dirs, scene.scan_faces, sensor.max_range)
    hit = np.isfinite(t)
    world = origins[hit] + t[hit, None] * dirs[hit]
    rng = np.random.default_rng(scene.spec.seed * 1_000_003 + 17 if seed is None else seed)
    world = world + rng.normal(0.0, sensor.noise_sigma, size=world.shape)
    return ScanCloud(pose.inverse().apply(world))


def scan_with_normals(scan: ScanCloud, k: int = 30, sensor_height: float = 1.8) -> ScanCloud:
    """Attach PCA normals oriented toward the sensor origin."""
    from .index import estimate_normals

    if len(scan) < k:
        normals = np.full((len(scan), 3), np.nan)
    else:
        normals = estimate_normals(scan.points, k=k, viewpoint=np.array([0.0, 0.0, sensor_height]))
    return ScanCloud(scan.points, normals)


@dataclass(frozen=True)
class EpochSpec:
    """Recipe for seeded random epochs: a scene plus a true vehicle pose.

    Corridor vehicles drive at ``|y|`` in ``lateral`` and ``x`` within
    ``+-longitudinal``; crossing vehicles sit anywhere within ``+-lateral[1]``
    of the intersection.  With ``bias_factor != 1`` a full-height patch of
    width ``bias_width`` is placed on the facade nearest to the vehicle,
    shifted along the street by a random ``bias_offset`` (either sign).
    ``protrusion_clearance`` keeps the nearest corridor facade free of
    protrusions within that distance of the vehicle (poses are redrawn).
    """

    layout: Layout = Layout.CORRIDOR
    street_width: float = 12.0
    facade_height: float = 8.0
    spacing: float = 0.1
    length: float = 100.0
    protrusion_density: float = 1.0
    outliers: int = 0
    lateral: tuple[float, float] = (0.0, 2.0)
    longitudinal: float = 10.0
    heading_range_deg: float = 3.0
    bias_factor: float = 1.0
    bias_width: float = 3.0
    bias_offset: tuple[float, float] = (1.5, 2.5)
    protrusion_clearance: float = 0.0

    def __post_init__(self):
        if isinstance(self.layout, str):
            object.__setattr__(self, "layout", Layout(self.layout))
        if self.layout is Layout.CUSTOM:
            raise ValueError("random epochs support the corridor and crossing layouts")
        object.__setattr__(self, "lateral", tuple(float(v) for v in self.lateral))
        object.__setattr__(self, "bias_offset", tuple(float(v) for v in self.bias_offset))
        if not 0 <= self.lateral[0] <= self.lateral[1]:
            raise ValueError("lateral must be an ordered pair of non-negative values")
        if self.lateral[1] >= self.street_width / 2.0:
            raise ValueError("lateral range reaches the facades")
        if not self.bias_factor > 0:
            raise ValueError("bias_factor must be positive")


def make_epoch(spec: EpochSpec, seed) -> tuple[SceneSpec, Pose2]:
    """Scene and true pose of one seeded epoch.

    ``seed`` is an integer or a sequence of integers (e.g. run seed and
    epoch number).
    """
    rng = np.random.default_rng([*np.atleast_1d(seed).tolist(), 0x5EED])
    heading = math.radians(rng.uniform(-spec.heading_range_deg, spec.heading_range_deg))
    lo, hi = spec.lateral
    side = 1.0 if rng.random() < 0.5 else -1.0
    bias_sign = 1.0 if rng.random() < 0.5 else -1.0
    bias_shift = rng.uniform(*spec.bias_offset)
    sensor_z = SensorSpec().height
    for _ in range(1000):
        scene = SceneSpec(
            layout=spec.layout,
            facade_height=spec.facade_height,
            street_width=spec.street_width,
            spacing=spec.spacing,
            protrusion_density=spec.protrusion_density,
            length=spec.length,
            seed=int(rng.integers(0, 2**31 - 1)),
            outliers=spec.outliers,
        )
        geometry = build_scene(scene)
        if spec.layout is Layout.CORRIDOR:
            pose = Pose2(rng.uniform(-spec.longitudinal, spec.longitudinal), side * rng.uniform(lo, hi), heading)
            near = [b for b in geometry.protrusions if np.sign(b.lo[1] + b.hi[1]) == side]
            c = spec.protrusion_clearance
            if c > 0 and any(b.lo[0] < pose.tx + c and b.hi[0] > pose.tx - c for b in near):
                continue
        else:
            pose = Pose2(rng.uniform(-hi, hi), rng.uniform(-hi, hi), heading)
        # redraw if a protrusion or parked car swallows the sensor
        if geometry.is_free([pose.tx, pose.ty, sensor_z]):
            break
    else:
        raise SensorInsideGeometryError("could not place the vehicle")
    if spec.bias_factor != 1.0:
        xc = pose.tx + bias_sign * bias_shift
        y0 = side * spec.street_width / 2.0
        # the patch reaches 1 m into the street to cover protrusion faces
        ys = sorted((y0 - side * 1.0, y0))
        bias = DensityBias((xc - spec.bias_width / 2, ys[0] - 0.01, 0.0),
                           (xc + spec.bias_width / 2, ys[1] + 0.01, spec.facade_height + 1.0),
                           spec.bias_factor)
        scene = replace(scene, biases=(bias,))
    return scene, pose
