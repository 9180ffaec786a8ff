"""Consensus objectives: match count and the Helmert point-error score.

The Helmert score of a consensus set is ``1 / tr(Q)`` where ``Q = N^-1`` is
the cofactor matrix of the 2-D translation estimated from point-to-plane
observations.  With ``tr(N^-1) = tr(N) / det(N)`` it reduces to
``det(N) / tr(N)``, so no inversion is needed per cell.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import SearchSpec

# Below this, N is treated as singular and the cell scores zero.
DELTA_DET = 1e-9


class Objective(enum.Enum):
    COUNT = "count"
    HELMERT = "helmert"


class SingularMatrixError(ValueError):
    pass


@dataclass
class NormalEquations2:
    """Accumulated weighted moments of the map normals of a consensus set."""

    sxx: float = 0.0
    sxy: float = 0.0
    syy: float = 0.0
    n_obs: int = 0

    def add(self, nx: float, ny: float, w: float = 1.0) -> None:
        self.sxx += w * nx * nx
        self.sxy += w * nx * ny
        self.syy += w * ny * ny
        self.n_obs += 1

    @classmethod
    def from_normals(cls, normals, weights=None) -> "NormalEquations2":
        n = np.asarray(normals, dtype=float).reshape(-1, np.shape(normals)[-1])
        w = np.ones(len(n)) if weights is None else np.asarray(weights, dtype=float)
        return cls(
            float(np.sum(w * n[:, 0] * n[:, 0])),
            float(np.sum(w * n[:, 0] * n[:, 1])),
            float(np.sum(w * n[:, 1] * n[:, 1])),
            len(n),
        )

    def matrix(self) -> np.ndarray:
        return np.array([[self.sxx, self.sxy], [self.sxy, self.syy]])

    @property
    def det(self) -> float:
        return self.sxx * self.syy - self.sxy * self.sxy

    @property
    def trace(self) -> float:
        return self.sxx + self.syy


def match_weight(n_scan, n_map) -> float:
    """``max(0, <n_scan, n_map>)``; a missing or NaN scan normal weighs 0."""
    if n_scan is None:
        return 0.0
    a = np.asarray(n_scan, dtype=float)
    if not np.all(np.isfinite(a)):
        return 0.0
    b = np.asarray(n_map, dtype=float)
    return max(0.0, float(a[0] * b[0] + a[1] * b[1] + a[2] * b[2]))


def helmert_score(ne: NormalEquations2) -> float:
    det, tr = ne.det, ne.trace
    if det <= DELTA_DET or tr <= DELTA_DET:
        return 0.0
    return det / tr


def helmert_score_grid(sxx, sxy, syy) -> np.ndarray:
    """Vectorised :func:`helmert_score` over moment grids."""
    sxx, sxy, syy = (np.asarray(a, dtype=float) for a in (sxx, sxy, syy))
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    ok = (det > DELTA_DET) & (tr > DELTA_DET)
    out = np.zeros(np.broadcast(det, tr).shape)
    np.divide(det, tr, out=out, where=ok)
    return out


def helmert_score_reference(ne: NormalEquations2) -> float:
    """Score through an explicit inverse and eigendecomposition of ``Q``."""
    if ne.det <= DELTA_DET:
        raise SingularMatrixError(f"normal matrix is singular (det = {ne.det!r})")
    q = np.linalg.inv(ne.matrix())
    lam = np.linalg.eigvalsh(q)
    return 1.0 / float(lam.sum())


@dataclass
class Accumulator:
    """Per-heading objective grids, indexed ``[h, j, i]``.

    Count accumulators hold an int64 ``count`` array; Helmert accumulators
    hold ``moments`` of shape ``(3, nh, n, n)`` with ``sxx, sxy, syy``.
    """

    objective: Objective
    spec: SearchSpec
    count: Optional[np.ndarray] = None
    moments: Optional[np.ndarray] = None

    @classmethod
    def empty(cls, objective: Objective, spec: SearchSpec) -> "Accumulator":
        objective = Objective(objective)
        if objective is Objective.COUNT:
            return cls(objective, spec, count=np.zeros(spec.shape, dtype=np.int64))
        return cls(objective, spec, moments=np.zeros((3,) + spec.shape))

    def scores(self) -> np.ndarray:
        if self.objective is Objective.COUNT:
            return self.count.astype(float)
        return helmert_score_grid(self.moments[0], self.moments[1], self.moments[2])

    def merge(self, other: "Accumulator") -> "Accumulator":
        if other.objective is not self.objective:
            raise ValueError("cannot merge accumulators of different objectives")
        if self.count is not None:
            self.count += other.count
        else:
            self.moments += other.moments
        return self

    def normal_equations(self, h: int, j: int, i: int) -> NormalEquations2:
        m = self.moments[:, h, j, i]
        return NormalEquations2(float(m[0]), float(m[1]), float(m[2]))


def linf_cells(r, q, spec: SearchSpec) -> tuple[np.ndarray, np.ndarray]:
    """Cells ``(j, i)`` whose offset ``t`` satisfies ``|r + t - q|_inf <= eps``.

    ``r`` is the rotated scan point and ``q`` the map point.  The z component
    is part of the test (translation has no z), so a pair with too large a
    height difference covers no cell.
    """
    eps = spec.epsilon
    centers = spec.cell_centers()
    if abs(r[2] - q[2]) > eps:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    ii = np.nonzero(~(np.abs((r[0] + centers) - q[0]) > eps))[0]
    jj = np.nonzero(~(np.abs((r[1] + centers) - q[1]) > eps))[0]
    jg, ig = np.meshgrid(jj, ii, indexing="ij")
    return jg.ravel(), ig.ravel()


def splat(pair, spec: SearchSpec, acc: Accumulator, h: int) -> int:
    """Rasterise one scan/map pair into heading ``h`` of ``acc``.

    ``pair`` is ``(r, q, w, n_map)``: rotated scan point, map point, match
    weight and map normal.  Count accumulators add one per covered cell and
    ignore the weight; Helmert accumulators add ``w * (nx^2, nx*ny, ny^2)``
    of the map normal.  Returns the number of covered cells.
    """
    r, q, w, n_map = pair
    jj, ii = linf_cells(np.asarray(r, float), np.asarray(q, float), spec)
    if acc.objective is Objective.COUNT:
        np.add.at(acc.count[h], (jj, ii), 1)
    elif w > 0:
        nx, ny = float(n_map[0]), float(n_map[1])
        np.add.at(acc.moments[0, h], (jj, ii), w * nx * nx)
        np.add.at(acc.moments[1, h], (jj, ii), w * nx * ny)
        np.add.at(acc.moments[2, h], (jj, ii), w * ny * ny)
    return len(jj)


def count_score(acc: Accumulator, h: int, j: int, i: int) -> int:
    if acc.objective is not Objective.COUNT:
        raise ValueError("count_score needs a Count accumulator")
    return int(acc.count[h, j, i])

