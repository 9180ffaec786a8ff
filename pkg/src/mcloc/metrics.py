"""Distinctness measures of objective grids.

Grids are ``(n_headings, n, n)`` arrays indexed ``[h, j, i]`` or single
``(n, n)`` slices.  Peak ratio, ray, kurtosis and KL divergence are computed
on the slice of the best heading; the plateau distance looks at every
heading.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .search import best_of

KL_FLOOR = 1e-12
RAY_SUPPORT = 0.5
MIN_RAY_SAMPLES = 5


class UndefinedMetricError(ValueError):
    """The metric has no value for this grid (e.g. all cells are zero)."""


@dataclass(frozen=True)
class Ray:
    direction: tuple[float, float]
    anchor: tuple[int, int]


@dataclass(frozen=True)
class EpochMetrics:
    peak_ratio: float
    kurtosis: float
    kl_divergence: float
    plateau_distance: int
    ray_direction: tuple[float, float]

    def as_dict(self) -> dict:
        d = asdict(self)
        d["ray_direction"] = list(self.ray_direction)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EpochMetrics":
        return cls(
            float(d["peak_ratio"]),
            float(d["kurtosis"]),
            float(d["kl_divergence"]),
            int(d["plateau_distance"]),
            tuple(float(v) for v in d["ray_direction"]),
        )


def _as_stack(grids) -> np.ndarray:
    g = np.asarray(grids, dtype=float)
    if g.ndim == 2:
        g = g[None]
    if g.ndim != 3 or g.size == 0:
        raise ValueError(f"expected (n, n) or (h, n, n) grids, got shape {g.shape}")
    return g


def _check_nonzero(g: np.ndarray) -> None:
    if not np.any(g > 0):
        raise UndefinedMetricError("grid has no positive cell")


def best_slice(grids) -> np.ndarray:
    """The ``(n, n)`` slice holding the global argmax."""
    g = _as_stack(grids)
    best, _ = best_of(g)
    return g[best.h]


def peak_ratio(grids) -> float:
    """Second highest value outside the argmax's 8-neighbourhood over the highest.

    Computed on the best heading's slice.  0 means a single isolated peak,
    1 an equally high competitor.
    """
    g = best_slice(grids)
    _check_nonzero(g)
    j, i = np.unravel_index(int(np.argmax(g)), g.shape)
    top = g[j, i]
    masked = g.copy()
    masked[max(j - 1, 0):j + 2, max(i - 1, 0):i + 2] = -np.inf
    second = np.max(masked) if np.isfinite(np.max(masked)) else 0.0
    return float(max(second, 0.0) / top)


def significant_ray(grid) -> Ray:
    """Main axis of the high-consensus support of one slice.

    Cells reaching ``RAY_SUPPORT`` of the maximum are weighted by their
    value; the direction is the leading eigenvector of the weighted scatter
    of their ``(i, j)`` coordinates about the argmax.  With fewer than two
    such cells the x axis is returned.  Directions are sign-normalised so
    the first non-zero component is positive.
    """
    g = np.asarray(grid, dtype=float)
    _check_nonzero(g)
    j0, i0 = np.unravel_index(int(np.argmax(g)), g.shape)
    top = g[j0, i0]
    jj, ii = np.nonzero(g >= RAY_SUPPORT * top)
    if len(jj) < 2:
        return Ray((1.0, 0.0), (int(i0), int(j0)))
    w = g[jj, ii]
    d = np.column_stack([ii - i0, jj - j0]).astype(float)
    cov = (d * w[:, None]).T @ d
    evals, evecs = np.linalg.eigh(cov)
    v = evecs[:, -1]
    if evals[-1] <= 0:
        v = np.array([1.0, 0.0])
    if v[0] < 0 or (v[0] == 0 and v[1] < 0):
        v = -v
    return Ray((float(v[0]), float(v[1])), (int(i0), int(j0)))


def ray_profile(grid, ray: Ray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-cell samples at unit steps along the ray, across the grid.

    Returns positions ``s`` (cells from the anchor) and sampled values.
    """
    g = np.asarray(grid, dtype=float)
    nj, ni = g.shape
    dx, dy = ray.direction
    i0, j0 = ray.anchor
    reach = int(math.ceil(math.hypot(ni, nj)))
    s = np.arange(-reach, reach + 1, dtype=float)
    ii = np.floor(i0 + s * dx + 0.5).astype(int)
    jj = np.floor(j0 + s * dy + 0.5).astype(int)
    inside = (ii >= 0) & (ii < ni) & (jj >= 0) & (jj < nj)
    return s[inside], g[jj[inside], ii[inside]]


def profile_kurtosis(s: np.ndarray, values: np.ndarray) -> float:
    """Non-excess kurtosis of ``values`` read as a distribution over ``s``."""
    p = np.clip(np.asarray(values, dtype=float), 0.0, None)
    mass = p.sum()
    if not mass > 0:
        raise UndefinedMetricError("profile has zero mass")
    p = p / mass
    mu = np.sum(p * s)
    m2 = np.sum(p * (s - mu) ** 2)
    if not m2 > 0:
        raise UndefinedMetricError("profile is a single point")
    m4 = np.sum(p * (s - mu) ** 4)
    return float(m4 / m2**2)


def kurtosis_along_ray(grid, ray: Optional[Ray] = None) -> float:
    g = np.asarray(grid, dtype=float)
    ray = ray or significant_ray(g)
    s, v = ray_profile(g, ray)
    if len(s) < MIN_RAY_SAMPLES:
        raise UndefinedMetricError(f"ray crosses only {len(s)} cells")
    return profile_kurtosis(s, v)


def laplace_reference(shape, peak, b: float = 1.0) -> np.ndarray:
    """Normalised ``exp(-(|i - i*| + |j - j*|) / b)`` on a grid of ``shape``."""
    nj, ni = shape
    i0, j0 = peak
    qi = np.exp(-np.abs(np.arange(ni) - i0) / b)
    qj = np.exp(-np.abs(np.arange(nj) - j0) / b)
    q = np.outer(qj, qi)
    return q / q.sum()


def kl_vs_laplace(grid, sigma_cells: float = 1.0) -> float:
    """KL divergence (nats) of the normalised grid from a Laplace peak.

    The reference is centred on the argmax with scale ``sigma_cells``
    taken as the Laplace parameter ``b``.  Grid probabilities are floored
    at ``KL_FLOOR`` and renormalised.
    """
    g = np.asarray(grid, dtype=float)
    if g.ndim == 3:
        g = best_slice(g)
    _check_nonzero(g)
    p = np.clip(g, 0.0, None)
    p = p / p.sum()
    p = np.maximum(p, KL_FLOOR)
    p = p / p.sum()
    j0, i0 = np.unravel_index(int(np.argmax(g)), g.shape)
    q = laplace_reference(g.shape, (i0, j0), sigma_cells)
    return float(max(np.sum(p * np.log(p / q)), 0.0))


def plateau_distance(grids, fraction: float = 0.9) -> int:
    """Largest Chebyshev distance (in cells) from the argmax to a cell of any
    heading reaching ``fraction`` of the maximum."""
    g = _as_stack(grids)
    _check_nonzero(g)
    best, top = best_of(g)
    _, jj, ii = np.nonzero(g >= fraction * top)
    return int(np.max(np.maximum(np.abs(jj - best.j), np.abs(ii - best.i))))


def epoch_metrics(grids) -> EpochMetrics:
    g = _as_stack(grids)
    _check_nonzero(g)
    sl = best_slice(g)
    ray = significant_ray(sl)
    return EpochMetrics(
        peak_ratio=peak_ratio(g),
        kurtosis=kurtosis_along_ray(sl, ray),
        kl_divergence=kl_vs_laplace(sl),
        plateau_distance=plateau_distance(g),
        ray_direction=ray.direction,
    )
