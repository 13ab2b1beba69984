# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: batched bilinear affine warp and one-sided Jacobi SVD.

Both functions mirror :mod:`augmentlab._kernels_py` exactly; the pure-Python
module is the reference and the fallback when this extension is not built.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, fabs

cnp.import_array()


def affine_warp(double[:, :, ::1] images, double[:, ::1] coeffs):
    """Inverse-map every output pixel through a per-image 2x3 affine map.

    ``coeffs[b] = (a, b, c, d, e, f)`` maps output (col, row) to the source
    point ``(a*col + b*row + c, d*col + e*row + f)``; samples are bilinear and
    pixels outside the source image read as zero.
    """
    cdef Py_ssize_t nb = images.shape[0]
    cdef Py_ssize_t h = images.shape[1]
    cdef Py_ssize_t w = images.shape[2]
    if coeffs.shape[0] != nb or coeffs.shape[1] != 6:
        raise ValueError("coeffs must have shape (batch, 6)")
    out_arr = np.zeros((nb, h, w), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t k, r, c
    cdef long x0, y0
    cdef double sx, sy, fx, fy, acc, a0, a1, a2, a3, a4, a5
    with nogil:
        for k in range(nb):
            a0 = coeffs[k, 0]; a1 = coeffs[k, 1]; a2 = coeffs[k, 2]
            a3 = coeffs[k, 3]; a4 = coeffs[k, 4]; a5 = coeffs[k, 5]
            for r in range(h):
                for c in range(w):
                    sx = a0 * c + a1 * r + a2
                    sy = a3 * c + a4 * r + a5
                    if sx <= -1.0 or sy <= -1.0 or sx >= w or sy >= h:
                        continue
                    x0 = <long>floor(sx)
                    y0 = <long>floor(sy)
                    fx = sx - x0
                    fy = sy - y0
                    acc = 0.0
                    if y0 >= 0:
                        if x0 >= 0:
                            acc += (1.0 - fx) * (1.0 - fy) * images[k, y0, x0]
                        if x0 + 1 < w:
                            acc += fx * (1.0 - fy) * images[k, y0, x0 + 1]
                    if y0 + 1 < h:
                        if x0 >= 0:
                            acc += (1.0 - fx) * fy * images[k, y0 + 1, x0]
                        if x0 + 1 < w:
                            acc += fx * fy * images[k, y0 + 1, x0 + 1]
                    out[k, r, c] = acc
    return out_arr


def jacobi_svd_tall(double[:, ::1] a, int max_sweeps, double tol):
    """One-sided Jacobi on the columns of a tall matrix (rows >= cols).

    Returns ``(work, v, sweeps, converged)`` where the columns of ``work`` are
    ``U * s`` (unsorted) and ``v`` accumulates the right rotations.
    """
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t n = a.shape[1]
    work_arr = np.array(a, dtype=np.float64, order="F")
    v_arr = np.eye(n, dtype=np.float64, order="F")
    cdef double[::1, :] work = work_arr
    cdef double[::1, :] v = v_arr
    cdef Py_ssize_t i, j, k
    cdef double alpha, beta, gamma, zeta, t, cs, sn, xi, xj
    cdef int sweep = 0
    cdef bint rotated = True
    with nogil:
        while rotated and sweep < max_sweeps:
            rotated = False
            sweep += 1
            for i in range(n - 1):
                for j in range(i + 1, n):
                    alpha = 0.0
                    beta = 0.0
                    gamma = 0.0
                    for k in range(m):
                        alpha += work[k, i] * work[k, i]
                        beta += work[k, j] * work[k, j]
                        gamma += work[k, i] * work[k, j]
                    if gamma == 0.0 or fabs(gamma) <= tol * sqrt(alpha * beta):
                        continue
                    rotated = True
                    zeta = (beta - alpha) / (2.0 * gamma)
                    if zeta >= 0:
                        t = 1.0 / (zeta + sqrt(1.0 + zeta * zeta))
                    else:
                        t = -1.0 / (-zeta + sqrt(1.0 + zeta * zeta))
                    cs = 1.0 / sqrt(1.0 + t * t)
                    sn = cs * t
                    for k in range(m):
                        xi = work[k, i]
                        xj = work[k, j]
                        work[k, i] = cs * xi - sn * xj
                        work[k, j] = sn * xi + cs * xj
                    for k in range(n):
                        xi = v[k, i]
                        xj = v[k, j]
                        v[k, i] = cs * xi - sn * xj
                        v[k, j] = sn * xi + cs * xj
    return work_arr, v_arr, sweep, not rotated
