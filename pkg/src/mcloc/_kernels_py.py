"""Pure numpy implementation of the per-heading accumulation kernel.

Used when the compiled extension is unavailable (or forced with
``MCLOC_PURE_PYTHON=1``).  Candidate retrieval walks the same voxel columns
as the compiled kernel, vectorised over blocks of scan points.
"""
from __future__ import annotations

import numpy as np

SCAN_BLOCK = 1024
# voxel-range slack absorbing rounding differences against the index build
VOXEL_MARGIN = 1e-6


def _expand_ranges(starts: np.ndarray, stops: np.ndarray):
    """Flatten half-open ``[start, stop)`` ranges; returns (range id, position)."""
    lengths = stops - starts
    keep = lengths > 0
    ids = np.nonzero(keep)[0]
    lengths = lengths[keep]
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    owner = np.repeat(ids, lengths)
    first = np.cumsum(lengths) - lengths
    pos = np.arange(total, dtype=np.int64) - np.repeat(first, lengths)
    pos += np.repeat(starts[keep], lengths)
    return owner, pos


def _candidate_pairs(rot, index, centers, eps):
    """All (scan row, sorted map row) pairs in overlapping voxel columns."""
    ox, oy, oz = index.origin
    bx, by, bz = index.voxel_size
    nkx, nky, nkz = (int(d) for d in index.dims)
    px, py, pz = rot[:, 0], rot[:, 1], rot[:, 2]
    c_first, c_last = centers[0], centers[-1]

    kz0 = np.clip(np.floor((pz - eps - oz) / bz - VOXEL_MARGIN).astype(np.int64), 0, nkz - 1)
    kz1 = np.clip(np.floor((pz + eps - oz) / bz + VOXEL_MARGIN).astype(np.int64), 0, nkz - 1)
    kx0 = np.clip(np.floor((px + c_first - eps - ox) / bx - VOXEL_MARGIN).astype(np.int64), 0, nkx - 1)
    kx1 = np.clip(np.floor((px + c_last + eps - ox) / bx + VOXEL_MARGIN).astype(np.int64), 0, nkx - 1)
    ky0 = np.clip(np.floor((py + c_first - eps - oy) / by - VOXEL_MARGIN).astype(np.int64), 0, nky - 1)
    ky1 = np.clip(np.floor((py + c_last + eps - oy) / by + VOXEL_MARGIN).astype(np.int64), 0, nky - 1)

    nz = np.maximum(kz1 - kz0 + 1, 0)
    nx = np.maximum(kx1 - kx0 + 1, 0)
    owner, col = _expand_ranges(np.zeros(len(rot), dtype=np.int64), nz * nx)
    kz = kz0[owner] + col // nx[owner]
    kx = kx0[owner] + col % nx[owner]
    base = (kz * nkx + kx) * nky
    starts = np.searchsorted(index.keys, base + ky0[owner], side="left")
    stops = np.searchsorted(index.keys, base + ky1[owner] + 1, side="left")
    which, m = _expand_ranges(starts, stops)
    return owner[which], m


def accumulate_heading(rot, rnorm, index, centers, eps, cell_size, helmert, one_per_scan):
    """Accumulate one heading's grid(s).

    Returns ``(count, moments)`` where exactly one is not ``None``:
    ``count`` is an ``(n, n)`` int64 grid, ``moments`` a ``(3, n, n)`` array
    of ``(sxx, sxy, syy)``.
    """
    n = len(centers)
    center = n // 2
    span = int(np.floor(2.0 * eps / cell_size)) + 4
    count = np.zeros(n * n, dtype=np.int64)
    moments = np.zeros((3, n * n))
    mpts, mnrm, order = index.sorted_points, index.sorted_normals, index.order

    for start in range(0, len(rot), SCAN_BLOCK):
        block = rot[start:start + SCAN_BLOCK]
        k, m = _candidate_pairs(block, index, centers, eps)
        if len(k) == 0:
            continue
        px, py, pz = block[k, 0], block[k, 1], block[k, 2]
        qx, qy, qz = mpts[m, 0], mpts[m, 1], mpts[m, 2]
        ok = ~(np.abs(pz - qz) > eps)
        w = None
        if helmert:
            sn = rnorm[start:start + SCAN_BLOCK][k]
            ok &= np.all(sn == sn, axis=1)
            w = sn[:, 0] * mnrm[m, 0] + sn[:, 1] * mnrm[m, 1] + sn[:, 2] * mnrm[m, 2]
            ok &= w > 0.0
            w = w[ok]
        k, m = k[ok], m[ok]
        px, py, qx, qy = px[ok], py[ok], qx[ok], qy[ok]
        ilo = np.floor((qx - px - eps) / cell_size).astype(np.int64) + center - 1
        jlo = np.floor((qy - py - eps) / cell_size).astype(np.int64) + center - 1

        cells, owners = [], []
        for dj in range(span):
            j = jlo + dj
            jin = (j >= 0) & (j < n)
            jc = np.clip(j, 0, n - 1)
            jok = jin & ~(np.abs((py + centers[jc]) - qy) > eps)
            for di in range(span):
                i = ilo + di
                iin = (i >= 0) & (i < n)
                ic = np.clip(i, 0, n - 1)
                hit = jok & iin & ~(np.abs((px + centers[ic]) - qx) > eps)
                sel = np.nonzero(hit)[0]
                cells.append(jc[sel] * n + ic[sel])
                owners.append(sel)
        cell = np.concatenate(cells)
        pair = np.concatenate(owners)
        if len(cell) == 0:
            continue

        if not one_per_scan:
            if helmert:
                mx, my = mnrm[m[pair], 0], mnrm[m[pair], 1]
                wp = w[pair]
                moments[0] += np.bincount(cell, wp * mx * mx, minlength=n * n)
                moments[1] += np.bincount(cell, wp * mx * my, minlength=n * n)
                moments[2] += np.bincount(cell, wp * my * my, minlength=n * n)
            else:
                count += np.bincount(cell, minlength=n * n)
            continue

        scan_cell = (k[pair] + start) * (n * n) + cell
        if not helmert:
            uniq = np.unique(scan_cell)
            count += np.bincount(uniq % (n * n), minlength=n * n)
            continue
        # best weight per (scan point, cell); ties go to the lower map index
        orig = order[m[pair]]
        wp = w[pair]
        sel = np.lexsort((orig, -wp, scan_cell))
        first = np.ones(len(sel), dtype=bool)
        first[1:] = scan_cell[sel][1:] != scan_cell[sel][:-1]
        best = sel[first]
        bc = cell[best]
        mx, my = mnrm[m[pair[best]], 0], mnrm[m[pair[best]], 1]
        bw = wp[best]
        moments[0] += np.bincount(bc, bw * mx * mx, minlength=n * n)
        moments[1] += np.bincount(bc, bw * mx * my, minlength=n * n)
        moments[2] += np.bincount(bc, bw * my * my, minlength=n * n)

    if helmert:
        return None, moments.reshape(3, n, n)
    return count.reshape(n, n), None
