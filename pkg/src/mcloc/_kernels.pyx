# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-heading accumulation kernel.

Mirrors ``_kernels_py.accumulate_heading`` exactly: the same candidate
filter and the same per-cell l-infinity tests, evaluated with the same
floating-point expressions, so Count grids agree bit for bit.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()

ctypedef cnp.int64_t i64

# voxel-range slack absorbing rounding differences against the index build
cdef double VOXEL_MARGIN = 1e-6


cdef inline Py_ssize_t _lower_bound(const i64[::1] keys, Py_ssize_t n, i64 key) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef inline i64 _clip(i64 v, i64 lo, i64 hi) noexcept nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


def accumulate_heading(
    const double[:, ::1] rot,
    const double[:, ::1] rnorm,
    const double[:, ::1] mpts,
    const double[:, ::1] mnrm,
    const i64[::1] order,
    const i64[::1] keys,
    const double[::1] origin,
    const double[::1] vsize,
    const i64[::1] dims,
    const double[::1] centers,
    double eps,
    double cell_size,
    bint helmert,
    bint one_per_scan,
    i64[:, ::1] count_out,
    double[:, :, ::1] mom_out,
):
    cdef Py_ssize_t n_scan = rot.shape[0]
    cdef Py_ssize_t n_map = keys.shape[0]
    cdef i64 n = centers.shape[0]
    cdef i64 center = n // 2
    cdef double c_first = centers[0]
    cdef double c_last = centers[n - 1]
    cdef double ox = origin[0], oy = origin[1], oz = origin[2]
    cdef double bx = vsize[0], by = vsize[1], bz = vsize[2]
    cdef i64 nkx = dims[0], nky = dims[1], nkz = dims[2]

    stamp_arr = np.full(n * n, -1, dtype=np.int64)
    bw_arr = np.zeros(n * n)
    bj_arr = np.zeros(n * n, dtype=np.int64)
    bnx_arr = np.zeros(n * n)
    bny_arr = np.zeros(n * n)
    touched_arr = np.zeros(n * n, dtype=np.int64)
    cdef i64[::1] stamp = stamp_arr
    cdef double[::1] bw = bw_arr
    cdef i64[::1] bj = bj_arr
    cdef double[::1] bnx = bnx_arr
    cdef double[::1] bny = bny_arr
    cdef i64[::1] touched = touched_arr

    cdef Py_ssize_t k, m, s, e, t, n_touched
    cdef i64 kz, kx, kz0, kz1, kx0, kx1, ky0, ky1, base
    cdef i64 i, j, ilo, ihi, jlo, jhi, cell, orig
    cdef double px, py, pz, qx, qy, qz, snx = 0.0, sny = 0.0, snz = 0.0
    cdef double w = 1.0, mnx, mny

    with nogil:
        for k in range(n_scan):
            px = rot[k, 0]
            py = rot[k, 1]
            pz = rot[k, 2]
            if helmert:
                snx = rnorm[k, 0]
                sny = rnorm[k, 1]
                snz = rnorm[k, 2]
                if snx != snx or sny != sny or snz != snz:
                    continue
            kz0 = _clip(<i64>floor((pz - eps - oz) / bz - VOXEL_MARGIN), 0, nkz - 1)
            kz1 = _clip(<i64>floor((pz + eps - oz) / bz + VOXEL_MARGIN), 0, nkz - 1)
            kx0 = _clip(<i64>floor((px + c_first - eps - ox) / bx - VOXEL_MARGIN), 0, nkx - 1)
            kx1 = _clip(<i64>floor((px + c_last + eps - ox) / bx + VOXEL_MARGIN), 0, nkx - 1)
            ky0 = _clip(<i64>floor((py + c_first - eps - oy) / by - VOXEL_MARGIN), 0, nky - 1)
            ky1 = _clip(<i64>floor((py + c_last + eps - oy) / by + VOXEL_MARGIN), 0, nky - 1)
            n_touched = 0
            for kz in range(kz0, kz1 + 1):
                for kx in range(kx0, kx1 + 1):
                    base = (kz * nkx + kx) * nky
                    s = _lower_bound(keys, n_map, base + ky0)
                    e = _lower_bound(keys, n_map, base + ky1 + 1)
                    for m in range(s, e):
                        qz = mpts[m, 2]
                        if fabs(pz - qz) > eps:
                            continue
                        qx = mpts[m, 0]
                        qy = mpts[m, 1]
                        if helmert:
                            mnx = mnrm[m, 0]
                            mny = mnrm[m, 1]
                            w = snx * mnx + sny * mny + snz * mnrm[m, 2]
                            if not (w > 0.0):
                                continue
                        ilo = _clip(<i64>floor((qx - px - eps) / cell_size) + center - 1, 0, n - 1)
                        ihi = _clip(<i64>floor((qx - px + eps) / cell_size) + center + 1, 0, n - 1)
                        jlo = _clip(<i64>floor((qy - py - eps) / cell_size) + center - 1, 0, n - 1)
                        jhi = _clip(<i64>floor((qy - py + eps) / cell_size) + center + 1, 0, n - 1)
                        for j in range(jlo, jhi + 1):
                            if fabs((py + centers[j]) - qy) > eps:
                                continue
                            for i in range(ilo, ihi + 1):
                                if fabs((px + centers[i]) - qx) > eps:
                                    continue
                                cell = j * n + i
                                if not one_per_scan:
                                    if helmert:
                                        mom_out[0, j, i] += w * mnx * mnx
                                        mom_out[1, j, i] += w * mnx * mny
                                        mom_out[2, j, i] += w * mny * mny
                                    else:
                                        count_out[j, i] += 1
                                elif not helmert:
                                    if stamp[cell] != k:
                                        stamp[cell] = k
                                        count_out[j, i] += 1
                                else:
                                    orig = order[m]
                                    if stamp[cell] != k:
                                        stamp[cell] = k
                                        touched[n_touched] = cell
                                        n_touched += 1
                                        bw[cell] = w
                                        bj[cell] = orig
                                        bnx[cell] = mnx
                                        bny[cell] = mny
                                    elif w > bw[cell] or (w == bw[cell] and orig < bj[cell]):
                                        bw[cell] = w
                                        bj[cell] = orig
                                        bnx[cell] = mnx
                                        bny[cell] = mny
            if one_per_scan and helmert:
                for t in range(n_touched):
                    cell = touched[t]
                    j = cell // n
                    i = cell - j * n
                    mom_out[0, j, i] += bw[cell] * bnx[cell] * bnx[cell]
                    mom_out[1, j, i] += bw[cell] * bnx[cell] * bny[cell]
                    mom_out[2, j, i] += bw[cell] * bny[cell] * bny[cell]
