"""One-hidden-layer ReLU perceptron in float64 with soft-label cross-entropy.

Parameters are stored as ``W1 (d, h)``, ``b1 (h,)``, ``W2 (h, c)``,
``b2 (c,)``; inputs are rows of flattened images.
"""

import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"AUGMLP01"
PARAM_NAMES = ("W1", "b1", "W2", "b2")


@dataclass
class MlpModel:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, in_dim=784, hidden_dim=100, n_classes=10, seed=0):
        """Uniform fan-in initialisation ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``."""
        rng = np.random.default_rng(seed)
        a1 = 1.0 / np.sqrt(in_dim)
        a2 = 1.0 / np.sqrt(hidden_dim)
        return cls(
            W1=rng.uniform(-a1, a1, (in_dim, hidden_dim)),
            b1=rng.uniform(-a1, a1, hidden_dim),
            W2=rng.uniform(-a2, a2, (hidden_dim, n_classes)),
            b2=rng.uniform(-a2, a2, n_classes),
        )

    @classmethod
    def zeros(cls, in_dim=784, hidden_dim=100, n_classes=10):
        return cls(np.zeros((in_dim, hidden_dim)), np.zeros(hidden_dim), np.zeros((hidden_dim, n_classes)),
                   np.zeros(n_classes))

    @property
    def dims(self):
        return self.W1.shape[0], self.W1.shape[1], self.W2.shape[1]

    def params(self):
        return [self.W1, self.b1, self.W2, self.b2]

    def copy(self):
        return MlpModel(*(p.copy() for p in self.params()))

    def logits(self, x):
        h = np.maximum(x @ self.W1 + self.b1, 0.0)
        return h @ self.W2 + self.b2

    def predict_proba(self, x):
        return softmax(self.logits(_flat(x)))

    def losses(self, x, y):
        """Per-example cross-entropy; ``y`` is class indices or soft labels.

        Read-only, so a model can serve as the loss oracle of the sampler.
        """
        x = _flat(x)
        logp = log_softmax(self.logits(x))
        return -np.sum(as_soft(y, logp.shape[1]) * logp, axis=1)

    def loss_and_grads(self, x, y, weight_decay=0.0):
        """Mean soft cross-entropy plus ``weight_decay/2 * (||W1||^2 + ||W2||^2)``
        and its gradients (biases are not decayed)."""
        x = _flat(x)
        m = x.shape[0]
        pre = x @ self.W1 + self.b1
        h = np.maximum(pre, 0.0)
        z = h @ self.W2 + self.b2
        logp = log_softmax(z)
        t = as_soft(y, z.shape[1])
        loss = -np.sum(t * logp) / m
        loss += 0.5 * weight_decay * (np.sum(self.W1**2) + np.sum(self.W2**2))
        dz = (np.exp(logp) * t.sum(axis=1, keepdims=True) - t) / m
        g_w2 = h.T @ dz + weight_decay * self.W2
        g_b2 = dz.sum(axis=0)
        dh = (dz @ self.W2.T) * (pre > 0)
        g_w1 = x.T @ dh + weight_decay * self.W1
        g_b1 = dh.sum(axis=0)
        return loss, [g_w1, g_b1, g_w2, g_b2]


def _flat(x):
    x = np.asarray(x, dtype=np.float64)
    return x.reshape(x.shape[0], -1) if x.ndim > 2 else x


def log_softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


def as_soft(y, n_classes):
    y = np.asarray(y)
    if y.ndim == 2:
        return y.astype(np.float64)
    out = np.zeros((y.shape[0], n_classes))
    out[np.arange(y.shape[0]), y.astype(np.int64)] = 1.0
    return out


def gradient_check(model, x, y, weight_decay=0.0, probes=20, seed=0, eps=1e-6):
    """Largest relative error between analytic and central-difference
    directional derivatives over ``probes`` random parameter directions."""
    rng = np.random.default_rng(seed)
    _, grads = model.loss_and_grads(x, y, weight_decay)
    worst = 0.0
    for _ in range(probes):
        dirs = [rng.standard_normal(p.shape) for p in model.params()]
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, dirs))
        plus = MlpModel(*(p + eps * d for p, d in zip(model.params(), dirs)))
        minus = MlpModel(*(p - eps * d for p, d in zip(model.params(), dirs)))
        numeric = (plus.loss_and_grads(x, y, weight_decay)[0] - minus.loss_and_grads(x, y, weight_decay)[0]) / (2 * eps)
        rel = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, rel)
    return worst


def save_checkpoint(model, path):
    """Flat binary: 8-byte magic ``AUGMLP01``, three little-endian uint32
    dims (in, hidden, classes), then W1, b1, W2, b2 as little-endian float64
    in row-major order."""
    d, h, c = model.dims
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<3I", d, h, c))
        for p in model.params():
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    if len(data) < 20:
        raise ValueError("truncated checkpoint header")
    d, h, c = struct.unpack("<3I", data[8:20])
    shapes = [(d, h), (h,), (h, c), (c,)]
    need = 20 + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != need:
        raise ValueError(f"checkpoint has {len(data)} bytes, expected {need}")
    off, params = 20, []
    for s in shapes:
        k = int(np.prod(s))
        params.append(np.frombuffer(data, dtype="<f8", count=k, offset=off).reshape(s).astype(np.float64))
        off += 8 * k
    return MlpModel(*params)
