"""Kernel selection: compiled extension when importable, numpy otherwise.

Set ``MCLOC_PURE_PYTHON=1`` to force the numpy path.
"""
from __future__ import annotations

import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

try:
    if os.environ.get("MCLOC_PURE_PYTHON"):
        raise ImportError("pure python forced by MCLOC_PURE_PYTHON")
    from . import _kernels as _compiled
except ImportError as exc:  # pragma: no cover - depends on the build
    log.debug("compiled kernels unavailable: %s", exc)
    _compiled = None

BACKENDS = ("compiled", "python") if _compiled is not None else ("python",)
DEFAULT_BACKEND = BACKENDS[0]


def _compiled_accumulate(rot, rnorm, index, centers, eps, cell_size, helmert, one_per_scan):
    n = len(centers)
    count = np.zeros((n, n), dtype=np.int64)
    moments = np.zeros((3, n, n))
    if rnorm is None:
        rnorm = np.zeros((0, 3))
    normals = index.sorted_normals
    if normals is None:
        normals = np.zeros((0, 3))
    _compiled.accumulate_heading(
        np.ascontiguousarray(rot, dtype=float),
        np.ascontiguousarray(rnorm, dtype=float),
        index.sorted_points,
        normals,
        index.order,
        index.keys,
        np.ascontiguousarray(index.origin, dtype=float),
        np.ascontiguousarray(index.voxel_size, dtype=float),
        np.ascontiguousarray(index.dims, dtype=np.int64),
        np.ascontiguousarray(centers, dtype=float),
        float(eps),
        float(cell_size),
        bool(helmert),
        bool(one_per_scan),
        count,
        moments,
    )
    if helmert:
        return None, moments
    return count, None


def get_accumulator(backend: str | None = None):
    """Return the per-heading accumulation function for ``backend``."""
    backend = backend or DEFAULT_BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available in this build")
        return _compiled_accumulate
    if backend == "python":
        return _kernels_py.accumulate_heading
    raise ValueError(f"unknown backend {backend!r}")
