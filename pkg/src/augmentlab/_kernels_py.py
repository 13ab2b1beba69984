"""Pure numpy implementations of the compiled kernels.

Same signatures and results as the Cython module; selected automatically when
the extension is unavailable or ``AUGMENTLAB_PURE_PYTHON=1`` is set.
"""

import numpy as np


def affine_warp(images, coeffs):
    images = np.ascontiguousarray(images, dtype=np.float64)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.float64)
    nb, h, w = images.shape
    if coeffs.shape != (nb, 6):
        raise ValueError("coeffs must have shape (batch, 6)")
    rows, cols = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    a = coeffs[:, :, None, None]
    sx = a[:, 0] * cols + a[:, 1] * rows + a[:, 2]
    sy = a[:, 3] * cols + a[:, 4] * rows + a[:, 5]
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    fx = sx - x0
    fy = sy - y0
    batch = np.arange(nb)[:, None, None]
    out = np.zeros_like(images)
    for dy, dx, weight in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (0, 1, fx * (1.0 - fy)),
        (1, 0, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yy = y0 + dy
        xx = x0 + dx
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        vals = images[batch, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        out += np.where(inside, weight * vals, 0.0)
    return out


def jacobi_svd_tall(a, max_sweeps, tol):
    work = np.array(a, dtype=np.float64, order="F")
    m, n = work.shape
    v = np.eye(n, dtype=np.float64, order="F")
    sweep = 0
    rotated = True
    while rotated and sweep < max_sweeps:
        rotated = False
        sweep += 1
        for i in range(n - 1):
            for j in range(i + 1, n):
                ci = work[:, i]
                cj = work[:, j]
                alpha = ci @ ci
                beta = cj @ cj
                gamma = ci @ cj
                if gamma == 0.0 or abs(gamma) <= tol * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta)) if zeta != 0 else 1.0
                cs = 1.0 / np.sqrt(1.0 + t * t)
                sn = cs * t
                wi = ci.copy()
                work[:, i] = cs * wi - sn * cj
                work[:, j] = sn * wi + cs * cj
                vi = v[:, i].copy()
                vj = v[:, j].copy()
                v[:, i] = cs * vi - sn * vj
                v[:, j] = sn * vi + cs * vj
    return work, v, sweep, not rotated
