"""Pixel-level image transformations on batches of grayscale images.

Images are float arrays with values in [0, 1], shaped ``(H, W)`` or
``(B, H, W)``. Every transform takes a magnitude that is either a scalar or
one value per image, and returns a new array clamped to [0, 1]. Geometric
transforms inverse-map each output pixel through an affine map about the
image centre with bilinear interpolation and zero fill (see
:func:`augmentlab.kernels.affine_warp`).

Coordinates: ``x`` is the column index, ``y`` the row index (downwards).
A positive rotation turns the picture counter-clockwise as displayed; a
positive translation moves it right (``translate_x``) or down
(``translate_y``).
"""

import numpy as np

from .. import kernels

# Valid argument domain of each transform.
DOMAINS = {
    "rotate": (-180.0, 180.0),
    "translate_x": (-28.0, 28.0),
    "translate_y": (-28.0, 28.0),
    "shear_x": (-1.0, 1.0),
    "shear_y": (-1.0, 1.0),
    "random_crop": (0.0, 14.0),
    "cutout": (0.0, 28.0),
    "brightness": (-1.0, 1.0),
    "solarize": (0.0, 1.0),
    "posterize": (1.0, 8.0),
    "flip_h": (0.0, 0.0),
    "flip_v": (0.0, 0.0),
    "invert": (0.0, 0.0),
}

# Frozen sampling ranges used by augmentation policies.
MAGNITUDE_TABLE = {
    "rotate": (-30.0, 30.0),
    "translate_x": (-4.0, 4.0),
    "translate_y": (-4.0, 4.0),
    "shear_x": (-0.3, 0.3),
    "shear_y": (-0.3, 0.3),
    "random_crop": (4.0, 4.0),
    "cutout": (8.0, 8.0),
    "brightness": (-0.3, 0.3),
    "solarize": (0.3, 0.9),
    "posterize": (4.0, 7.0),
    "flip_h": (0.0, 0.0),
    "flip_v": (0.0, 0.0),
    "invert": (0.0, 0.0),
}


def _batch(images):
    a = np.asarray(images, dtype=np.float64)
    if a.ndim == 2:
        return a[None], True
    if a.ndim != 3:
        raise ValueError(f"expected (H, W) or (B, H, W) images, got shape {a.shape}")
    return a, False


def _unbatch(out, single):
    np.clip(out, 0.0, 1.0, out=out)
    return out[0] if single else out


def _magnitudes(name, value, b):
    m = np.broadcast_to(np.asarray(value, dtype=np.float64), (b,)).copy()
    lo, hi = DOMAINS[name]
    if not np.all(np.isfinite(m)) or np.any(m < lo) or np.any(m > hi):
        raise ValueError(f"{name} magnitude outside [{lo}, {hi}]")
    return m


def _warp(images, a, b, c, d, e, f):
    coeffs = np.ascontiguousarray(np.stack(np.broadcast_arrays(a, b, c, d, e, f), axis=1), dtype=np.float64)
    return kernels.affine_warp(np.ascontiguousarray(images), coeffs)


def _about_centre(images, m00, m01, m10, m11, tx=0.0, ty=0.0):
    # source = M (p - centre) + centre - t, for output pixel p = (x, y)
    _, h, w = images.shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    c = cx - m00 * cx - m01 * cy - tx
    f = cy - m10 * cx - m11 * cy - ty
    return _warp(images, m00, m01, c, m10, m11, f)


def rotate(images, degrees):
    x, single = _batch(images)
    t = np.deg2rad(_magnitudes("rotate", degrees, x.shape[0]))
    cos, sin = np.cos(t), np.sin(t)
    return _unbatch(_about_centre(x, cos, -sin, sin, cos), single)


def translate_x(images, pixels):
    x, single = _batch(images)
    px = _magnitudes("translate_x", pixels, x.shape[0])
    one, zero = np.ones_like(px), np.zeros_like(px)
    return _unbatch(_about_centre(x, one, zero, zero, one, tx=px), single)


def translate_y(images, pixels):
    x, single = _batch(images)
    py = _magnitudes("translate_y", pixels, x.shape[0])
    one, zero = np.ones_like(py), np.zeros_like(py)
    return _unbatch(_about_centre(x, one, zero, zero, one, ty=py), single)


def shear_x(images, factor):
    x, single = _batch(images)
    s = _magnitudes("shear_x", factor, x.shape[0])
    one, zero = np.ones_like(s), np.zeros_like(s)
    return _unbatch(_about_centre(x, one, s, zero, one), single)


def shear_y(images, factor):
    x, single = _batch(images)
    s = _magnitudes("shear_y", factor, x.shape[0])
    one, zero = np.ones_like(s), np.zeros_like(s)
    return _unbatch(_about_centre(x, one, zero, s, one), single)


def random_crop(images, pad, seed=None, *, rng=None):
    """Zero-pad by ``pad`` pixels and crop a random window of the original
    size, i.e. an integer shift by up to ``pad`` in each direction."""
    x, single = _batch(images)
    p = np.floor(_magnitudes("random_crop", pad, x.shape[0]))
    rng = np.random.default_rng(seed) if rng is None else rng
    dx = np.floor(rng.random(x.shape[0]) * (2 * p + 1)) - p
    dy = np.floor(rng.random(x.shape[0]) * (2 * p + 1)) - p
    one, zero = np.ones_like(p), np.zeros_like(p)
    return _unbatch(_about_centre(x, one, zero, zero, one, tx=dx, ty=dy), single)


def cutout(images, size, seed=None, *, rng=None):
    """Zero a ``size`` x ``size`` square centred at a uniformly random pixel
    (clipped at the border)."""
    x, single = _batch(images)
    s = np.floor(_magnitudes("cutout", size, x.shape[0])).astype(np.int64)
    rng = np.random.default_rng(seed) if rng is None else rng
    b, h, w = x.shape
    cy = rng.integers(0, h, b)
    cx = rng.integers(0, w, b)
    rows = np.arange(h)[None, :, None]
    cols = np.arange(w)[None, None, :]
    y0 = (cy - s // 2)[:, None, None]
    x0 = (cx - s // 2)[:, None, None]
    ss = s[:, None, None]
    mask = (rows >= y0) & (rows < y0 + ss) & (cols >= x0) & (cols < x0 + ss)
    return _unbatch(np.where(mask, 0.0, x), single)


def flip_h(images, _magnitude=0.0):
    x, single = _batch(images)
    return _unbatch(x[:, :, ::-1].copy(), single)


def flip_v(images, _magnitude=0.0):
    x, single = _batch(images)
    return _unbatch(x[:, ::-1, :].copy(), single)


def invert(images, _magnitude=0.0):
    x, single = _batch(images)
    return _unbatch(1.0 - x, single)


def brightness(images, delta):
    x, single = _batch(images)
    d = _magnitudes("brightness", delta, x.shape[0])
    return _unbatch(x + d[:, None, None], single)


def solarize(images, threshold):
    """Invert every pixel at or above ``threshold``."""
    x, single = _batch(images)
    t = _magnitudes("solarize", threshold, x.shape[0])[:, None, None]
    return _unbatch(np.where(x >= t, 1.0 - x, x), single)


def posterize(images, bits):
    """Keep the top ``bits`` bits of the 8-bit pixel value."""
    x, single = _batch(images)
    bb = np.floor(_magnitudes("posterize", bits, x.shape[0])).astype(np.int64)
    q = np.round(np.clip(x, 0.0, 1.0) * 255.0).astype(np.int64)
    mask = (0xFF << (8 - bb)) & 0xFF
    return _unbatch((q & mask[:, None, None]) / 255.0, single)


TRANSFORMS = {
    "rotate": rotate,
    "translate_x": translate_x,
    "translate_y": translate_y,
    "shear_x": shear_x,
    "shear_y": shear_y,
    "random_crop": random_crop,
    "cutout": cutout,
    "flip_h": flip_h,
    "flip_v": flip_v,
    "invert": invert,
    "brightness": brightness,
    "solarize": solarize,
    "posterize": posterize,
}
_RANDOMISED = {"random_crop", "cutout"}


def apply_transform(images, transform_id, magnitudes, rng=None):
    """Apply ``transform_id`` to a batch with per-image magnitudes.

    Accepts flattened images of length 784 (reshaped to 28 x 28 and back).
    This is the transform applier used by :mod:`augmentlab.sampler`.
    """
    if transform_id not in TRANSFORMS:
        raise KeyError(f"unknown transform {transform_id!r}")
    x = np.asarray(images, dtype=np.float64)
    flat = x.ndim == 2 and x.shape[1] == 784
    if flat:
        x = x.reshape(-1, 28, 28)
    fn = TRANSFORMS[transform_id]
    if transform_id in _RANDOMISED:
        if rng is None:
            raise ValueError(f"{transform_id} needs a random generator")
        out = fn(x, magnitudes, rng=rng)
    else:
        out = fn(x, magnitudes)
    return out.reshape(-1, 784) if flat else out
