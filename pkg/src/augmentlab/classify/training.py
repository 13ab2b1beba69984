"""Minibatch SGD training of :class:`MlpModel` under augmentation policies,
evaluation, and prediction tables.

Policies transform each minibatch before the gradient step; training uses
only the augmented points. Available policies:

* :class:`NoAugment`
* :class:`FixedTransforms` - a fixed composition, magnitudes drawn per image
  from the magnitude table
* :class:`Mixup` - convex combinations with a chosen fraction of same-class
  partners
* :class:`UncertaintySampling` / :class:`UniformSampling` - the sampler
  module's highest-loss and uniform candidate selection
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .. import sampler as smp
from .mlp import MlpModel, as_soft
from .transforms import MAGNITUDE_TABLE, apply_transform


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    learning_rate: float = 0.1
    weight_decay: float = 1e-4
    schedule: str = "cosine"
    epochs: int = 100
    seed: int = 0
    momentum: float = 0.9
    hidden_dim: int = 100

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1 or self.hidden_dim < 1:
            raise ValueError("batch_size, epochs and hidden_dim must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0 or not 0 <= self.momentum < 1:
            raise ValueError("invalid optimiser settings")
        if self.schedule not in ("cosine", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def learning_rate(config, step, total_steps):
    """Cosine decay from the base rate at step 0 to zero at the last step."""
    if config.schedule == "constant" or total_steps <= 1:
        return config.learning_rate
    return config.learning_rate * 0.5 * (1.0 + np.cos(np.pi * step / (total_steps - 1)))


# -- policies ------------------------------------------------------------

@dataclass(frozen=True)
class NoAugment:
    name: str = "baseline"

    def augment(self, x, y, labels, model, rng, epoch):
        return x, y, None


@dataclass(frozen=True)
class FixedTransforms:
    transform_ids: tuple
    name: str = ""

    def augment(self, x, y, labels, model, rng, epoch):
        for tid in self.transform_ids:
            lo, hi = MAGNITUDE_TABLE[tid]
            x = apply_transform(x, tid, rng.uniform(lo, hi, x.shape[0]), rng)
        return x, y, None


@dataclass(frozen=True)
class Mixup:
    """Mix each example with a partner; with probability
    ``same_class_fraction`` the partner has the same label."""

    same_class_fraction: float = 0.0
    beta_params: tuple = (1.0, 1.0)
    name: str = ""

    def augment(self, x, y, labels, model, rng, epoch):
        b = x.shape[0]
        same = rng.random(b) < self.same_class_fraction
        partner = np.empty(b, dtype=np.int64)
        order = rng.permutation(b)
        for k in order:
            pool = np.flatnonzero((labels == labels[k]) == same[k])
            pool = pool[pool != k]
            if pool.size == 0:
                pool = np.array([k])
            partner[k] = pool[rng.integers(pool.size)]
        alpha = rng.beta(*self.beta_params, b)
        xa = alpha[:, None] * x + (1 - alpha)[:, None] * x[partner]
        ya = alpha[:, None] * y + (1 - alpha)[:, None] * y[partner]
        return xa, ya, None


@dataclass(frozen=True)
class UncertaintySampling:
    config: smp.PolicyConfig
    name: str = "uncertainty"

    def augment(self, x, y, labels, model, rng, epoch):
        sel = smp.sample_batch(x, y, self.config, model, apply_transform, int(rng.integers(2**63)))
        return sel.x, sel.y, sel.pipelines


@dataclass(frozen=True)
class UniformSampling:
    config: smp.PolicyConfig
    name: str = "uniform"

    def augment(self, x, y, labels, model, rng, epoch):
        sel = smp.sample_batch_uniform(x, y, self.config, apply_transform, int(rng.integers(2**63)))
        return sel.x, sel.y, sel.pipelines


DEFAULT_SAMPLER_TRANSFORMS = ("rotate", "translate_x", "translate_y", "shear_x", "shear_y", "random_crop",
                              "cutout", "brightness", "solarize", "posterize", "invert", "flip_h", "flip_v")


def default_policy_config(transform_ids=DEFAULT_SAMPLER_TRANSFORMS, L=2, C=4, S=1):
    return smp.PolicyConfig(transform_ids=tuple(transform_ids), magnitude_ranges=dict(MAGNITUDE_TABLE), L=L, C=C, S=S)


# -- training ------------------------------------------------------------

@dataclass
class TrainResult:
    model: MlpModel
    epoch_losses: list
    frequencies: smp.FrequencyRecorder = field(default_factory=smp.FrequencyRecorder)


def _flatten(images):
    x = np.asarray(images, dtype=np.float64)
    return x.reshape(x.shape[0], -1)


def train(images, labels, config=TrainConfig(), policy=NoAugment(), *, n_classes=10, frequency_window=10):
    """Train from scratch; deterministic given ``config.seed``.

    Each epoch reshuffles with a stream keyed by ``(seed, epoch)``; the
    policy draws from a sibling stream. Pipelines chosen by sampling policies
    are counted per window of ``frequency_window`` epochs.
    """
    x_all = _flatten(images)
    labels = np.asarray(labels, dtype=np.int64)
    if x_all.shape[0] == 0:
        raise ValueError("empty dataset")
    y_all = as_soft(labels, n_classes)
    model = MlpModel.init(x_all.shape[1], config.hidden_dim, n_classes, seed=[config.seed, 0])
    vel = [np.zeros_like(p) for p in model.params()]
    n = x_all.shape[0]
    steps_per_epoch = -(-n // config.batch_size)
    total = steps_per_epoch * config.epochs
    step = 0
    result = TrainResult(model=model, epoch_losses=[])
    for epoch in range(config.epochs):
        shuffle_rng = np.random.default_rng([config.seed, 1, epoch])
        aug_rng = np.random.default_rng([config.seed, 2, epoch])
        order = shuffle_rng.permutation(n)
        running, count = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb, pipes = policy.augment(x_all[idx], y_all[idx], labels[idx], model, aug_rng, epoch)
            if pipes is not None:
                result.frequencies.add(epoch // frequency_window, pipes)
            loss, grads = model.loss_and_grads(xb, yb, config.weight_decay)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, step {step}")
            lr = learning_rate(config, step, total)
            for p, v, g in zip(model.params(), vel, grads):
                v *= config.momentum
                v -= lr * g
                p += v
            running += loss * len(idx)
            count += len(idx)
            step += 1
        result.epoch_losses.append(running / count)
    return result


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    predictions: np.ndarray
    probabilities: np.ndarray


def evaluate(model, images, labels):
    probs = model.predict_proba(_flatten(images))
    pred = np.argmax(probs, axis=1)
    labels = np.asarray(labels)
    return EvalResult(accuracy=float(np.mean(pred == labels)), predictions=pred, probabilities=probs)


def write_predictions_csv(path, labels, result, header_comment=None):
    """Columns ``example_id, true_label, predicted, p_0 .. p_{c-1}``."""
    c = result.probabilities.shape[1]
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["example_id", "true_label", "predicted"] + [f"p_{k}" for k in range(c)])
        for i, (t, p, pr) in enumerate(zip(labels, result.predictions, result.probabilities)):
            w.writerow([i, int(t), int(p)] + [repr(float(v)) for v in pr])
