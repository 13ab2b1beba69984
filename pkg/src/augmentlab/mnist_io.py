"""IDX file reading and writing, plus a procedurally rendered stand-in for
MNIST so that everything can run offline.

IDX layout: a big-endian 32-bit magic (``0x00000803`` for images,
``0x00000801`` for labels), one big-endian 32-bit size per dimension, then
the unsigned bytes in row-major order.
"""

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}


class IdxFormatError(ValueError):
    """Malformed IDX data; ``offset`` is the byte position of the problem."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise ValueError("images and labels differ in length")

    def __len__(self):
        return len(self.labels)

    def subset(self, idx):
        return Dataset(self.images[idx], self.labels[idx], self.split)


def _header(data, magic, ndim):
    end = 4 + 4 * ndim
    if len(data) < 4:
        raise IdxFormatError("missing magic number", len(data))
    (found,) = struct.unpack(">I", data[:4])
    if found != magic:
        raise IdxFormatError(f"bad magic 0x{found:08x}, expected 0x{magic:08x}", 0)
    if len(data) < end:
        raise IdxFormatError("truncated header", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:end])
    need = end + int(np.prod(dims, dtype=np.int64))
    if len(data) < need:
        raise IdxFormatError(f"truncated payload: {len(data)} bytes, header implies {need}", len(data))
    if len(data) > need:
        raise IdxFormatError(f"{len(data) - need} trailing bytes after payload", need)
    return dims, end


def read_idx_images(data):
    """Images as float64 ``(count, rows, cols)`` scaled to [0, 1]."""
    data = bytes(data)
    (count, rows, cols), off = _header(data, IMAGE_MAGIC, 3)
    raw = np.frombuffer(data, dtype=np.uint8, offset=off)
    return raw.reshape(count, rows, cols) / 255.0


def read_idx_labels(data):
    data = bytes(data)
    (count,), off = _header(data, LABEL_MAGIC, 1)
    labels = np.frombuffer(data, dtype=np.uint8, offset=off).astype(np.int64)
    if labels.size and labels.max() > 9:
        bad = int(np.argmax(labels > 9))
        raise IdxFormatError(f"label {labels[bad]} outside 0..9", off + bad)
    return labels


def write_idx_images(images):
    """IDX bytes for images in [0, 1] (rounded to the nearest of 256 levels)."""
    a = np.asarray(images, dtype=np.float64)
    if a.ndim != 3:
        raise ValueError("expected (count, rows, cols) images")
    q = np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)
    return struct.pack(">4I", IMAGE_MAGIC, *a.shape) + q.tobytes()


def write_idx_labels(labels):
    a = np.asarray(labels)
    if a.ndim != 1 or (a.size and (a.min() < 0 or a.max() > 255)):
        raise ValueError("labels must be a 1-D array of bytes")
    return struct.pack(">2I", LABEL_MAGIC, a.size) + a.astype(np.uint8).tobytes()


def _read_file(path):
    path = Path(path)
    data = path.read_bytes()
    return gzip.decompress(data) if path.suffix == ".gz" else data


def _find(directory, stem):
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx")):
        p = Path(directory) / name
        if p.exists():
            return p
    raise FileNotFoundError(f"{stem}[.gz] not found in {directory}")


def load_mnist(directory, split="train"):
    """Load a split from the standard file names (optionally gzipped)."""
    img, lab = MNIST_FILES[split]
    images = read_idx_images(_read_file(_find(directory, img)))
    labels = read_idx_labels(_read_file(_find(directory, lab)))
    return Dataset(images, labels, split)


# -- synthetic digits ----------------------------------------------------

# Stroke skeletons on a unit square (x right, y down), one list of polylines per class.
_GLYPHS = {
    0: [[(0.5, 0.1), (0.78, 0.25), (0.82, 0.5), (0.75, 0.78), (0.5, 0.9), (0.25, 0.78), (0.18, 0.5), (0.22, 0.25),
         (0.5, 0.1)]],
    1: [[(0.35, 0.25), (0.55, 0.1), (0.55, 0.9)]],
    2: [[(0.22, 0.28), (0.4, 0.12), (0.68, 0.14), (0.78, 0.32), (0.6, 0.55), (0.22, 0.88), (0.8, 0.88)]],
    3: [[(0.22, 0.15), (0.75, 0.15), (0.48, 0.45), (0.75, 0.62), (0.7, 0.85), (0.25, 0.88)]],
    4: [[(0.65, 0.9), (0.65, 0.1), (0.18, 0.65), (0.85, 0.65)]],
    5: [[(0.78, 0.12), (0.28, 0.12), (0.24, 0.45), (0.65, 0.45), (0.78, 0.68), (0.6, 0.88), (0.22, 0.85)]],
    6: [[(0.7, 0.12), (0.38, 0.3), (0.22, 0.65), (0.4, 0.88), (0.7, 0.82), (0.75, 0.6), (0.5, 0.5), (0.25, 0.62)]],
    7: [[(0.18, 0.12), (0.82, 0.12), (0.42, 0.9)], [(0.35, 0.5), (0.7, 0.5)]],
    8: [[(0.5, 0.5), (0.25, 0.32), (0.5, 0.1), (0.75, 0.32), (0.5, 0.5), (0.22, 0.7), (0.5, 0.9), (0.78, 0.7),
         (0.5, 0.5)]],
    9: [[(0.75, 0.4), (0.5, 0.5), (0.25, 0.35), (0.45, 0.1), (0.75, 0.2), (0.75, 0.4), (0.6, 0.9)]],
}


def _segments(cls):
    segs = []
    for line in _GLYPHS[cls]:
        pts = np.asarray(line, dtype=np.float64)
        segs.extend(zip(pts[:-1], pts[1:]))
    return np.array(segs)  # (m, 2, 2)


_SEGMENTS = {c: _segments(c) for c in range(10)}
WOBBLE = 0.06


def _render(segs, size=28):
    # segs: (b, m, 2, 2) in pixel coordinates; intensity from distance to the
    # nearest segment, with a soft edge.
    ys, xs = np.mgrid[0:size, 0:size].astype(np.float64)
    p = np.stack([xs.ravel(), ys.ravel()], axis=1)  # (P, 2)
    a = segs[:, :, None, 0, :]
    d = segs[:, :, None, 1, :] - a
    ap = p[None, None] - a
    t = np.clip(np.sum(ap * d, axis=-1) / np.maximum(np.sum(d * d, axis=-1), 1e-12), 0.0, 1.0)
    dist = np.linalg.norm(ap - t[..., None] * d, axis=-1).min(axis=1)  # (b, P)
    return dist.reshape(-1, size, size)


def synthetic_digits(count, seed=0, split="train"):
    """Balanced, seeded 28 x 28 glyph images for the ten classes.

    Each image is a class skeleton with per-point wobble, a random affine
    jitter (rotation, scale, slant, shift), random stroke width and pixel
    noise. Class ``k`` gets ``count // 10`` images, plus one extra for the
    first ``count % 10`` classes; order is shuffled. The split name is part
    of the seed, so train and test sets never coincide.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng([seed, 0x5D, int.from_bytes(split.encode(), "little")])
    labels = rng.permutation(np.arange(count) % 10)
    images = np.zeros((count, 28, 28))
    for c in range(10):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        b = idx.size
        base = np.broadcast_to(_SEGMENTS[c], (b,) + _SEGMENTS[c].shape).copy()
        base += rng.normal(0.0, WOBBLE, base.shape)
        ang = rng.uniform(-0.35, 0.35, b)
        scale = rng.uniform(0.8, 1.05, b)
        slant = rng.uniform(-0.25, 0.25, b)
        shift = rng.uniform(-2.0, 2.0, (b, 2))
        cos, sin = np.cos(ang) * scale, np.sin(ang) * scale
        m = np.stack([np.stack([cos, -sin + slant], -1), np.stack([sin, cos], -1)], 1)  # (b, 2, 2)
        pts = (base - 0.5) * 20.0
        pts = np.einsum("bij,bmkj->bmki", m, pts) + 13.5 + shift[:, None, None, :]
        dist = np.concatenate([_render(pts[k:k + 512]) for k in range(0, b, 512)])
        width = rng.uniform(0.9, 1.8, b)[:, None, None]
        img = np.clip(1.0 - (dist - width) / 1.0, 0.0, 1.0) * rng.uniform(0.75, 1.0, b)[:, None, None]
        img += rng.normal(0.0, 0.05, img.shape)
        images[idx] = np.clip(img, 0.0, 1.0)
    return Dataset(images, labels, split)
