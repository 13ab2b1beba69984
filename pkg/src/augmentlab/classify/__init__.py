"""MNIST-scale classification: image transforms, mixup, a one-hidden-layer
perceptron, and training under augmentation policies."""

import numpy as np

from .mlp import MlpModel, as_soft, gradient_check, load_checkpoint, save_checkpoint
from .training import (
    DEFAULT_SAMPLER_TRANSFORMS,
    EvalResult,
    FixedTransforms,
    Mixup,
    NoAugment,
    TrainConfig,
    TrainingError,
    TrainResult,
    UncertaintySampling,
    UniformSampling,
    default_policy_config,
    evaluate,
    learning_rate,
    train,
    write_predictions_csv,
)
from .transforms import DOMAINS, MAGNITUDE_TABLE, TRANSFORMS, apply_transform


def mixup_images(a, b, alpha):
    """Convex combination of two labelled examples.

    ``a`` and ``b`` are ``(image, label)`` pairs where the label is a class
    index or a probability vector over 10 classes. Returns
    ``(alpha * image_a + (1 - alpha) * image_b, soft_label)``.
    """
    (xa, ya), (xb, yb) = a, b
    xa = np.asarray(xa, dtype=np.float64)
    xb = np.asarray(xb, dtype=np.float64)
    if xa.shape != xb.shape:
        raise ValueError(f"image shapes differ: {xa.shape} vs {xb.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")

    def soft(y):
        y = np.asarray(y)
        return as_soft(y[None], 10)[0] if y.ndim == 0 else y.astype(np.float64)

    return alpha * xa + (1 - alpha) * xb, alpha * soft(ya) + (1 - alpha) * soft(yb)


__all__ = [
    "DEFAULT_SAMPLER_TRANSFORMS", "DOMAINS", "MAGNITUDE_TABLE", "TRANSFORMS", "EvalResult", "FixedTransforms", "Mixup", "MlpModel", "NoAugment",
    "TrainConfig", "TrainResult", "TrainingError", "UncertaintySampling", "UniformSampling", "apply_transform",
    "default_policy_config", "evaluate", "gradient_check", "learning_rate", "load_checkpoint", "mixup_images",
    "save_checkpoint", "train", "write_predictions_csv",
]
