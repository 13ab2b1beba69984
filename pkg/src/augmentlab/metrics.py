"""Ensemble metrics over ``k`` independently trained classifiers: majority
label, intrinsic error score, instability score, average accuracy, and
prediction margins.

With ``M(x)`` the majority prediction over the ``k`` models,

* intrinsic error = fraction of test points with ``M(x) != y``
* instability = mean over test points of the fraction of models that
  disagree with ``M(x)``

Majority ties are broken uniformly at random with a generator keyed by
``(tie_seed, example_id)``, so scores are reproducible and do not depend on
the order of the seeds or of the test examples.
"""

import csv
from dataclasses import dataclass

import numpy as np

N_MARGIN_BINS = 20
RESULT_FIELDS = ("experiment_id", "policy", "k", "avg_acc", "error_score", "instability")


@dataclass(frozen=True)
class EnsemblePredictions:
    """``predictions`` has shape (k, n); ``probabilities`` (k, n, c) is optional."""

    predictions: np.ndarray
    labels: np.ndarray
    probabilities: np.ndarray | None = None
    example_ids: np.ndarray | None = None

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.predictions, dtype=np.int64))
        y = np.asarray(self.labels, dtype=np.int64)
        if p.shape[0] < 1 or p.shape[1] != y.shape[0]:
            raise ValueError(f"predictions {p.shape} do not match {y.shape[0]} labels")
        object.__setattr__(self, "predictions", p)
        object.__setattr__(self, "labels", y)
        ids = np.arange(y.shape[0]) if self.example_ids is None else np.asarray(self.example_ids, dtype=np.int64)
        object.__setattr__(self, "example_ids", ids)

    @property
    def k(self):
        return self.predictions.shape[0]

    def first(self, k_sub):
        probs = None if self.probabilities is None else self.probabilities[:k_sub]
        return EnsemblePredictions(self.predictions[:k_sub], self.labels, probs, self.example_ids)


@dataclass(frozen=True)
class ScoreReport:
    avg_accuracy: float
    intrinsic_error: float
    instability: float
    k: int


def majority_label(preds, tie_seed=0, n_classes=None):
    """Modal prediction for one example; ties broken by a seeded uniform draw."""
    preds = np.asarray(preds, dtype=np.int64)
    counts = np.bincount(preds, minlength=n_classes or 0)
    tied = np.flatnonzero(counts == counts.max())
    if tied.size == 1:
        return int(tied[0])
    return int(tied[np.random.default_rng(tie_seed).integers(tied.size)])


def majority_labels(ensemble, tie_seed=0):
    p = ensemble.predictions
    c = int(max(p.max(), ensemble.labels.max())) + 1
    counts = np.zeros((p.shape[1], c), dtype=np.int64)
    for row in p:
        counts[np.arange(p.shape[1]), row] += 1
    top = counts.max(axis=1, keepdims=True)
    is_top = counts == top
    out = np.argmax(counts, axis=1)
    for i in np.flatnonzero(is_top.sum(axis=1) > 1):
        tied = np.flatnonzero(is_top[i])
        out[i] = tied[np.random.default_rng([tie_seed, int(ensemble.example_ids[i])]).integers(tied.size)]
    return out


def intrinsic_error_score(ensemble, tie_seed=0):
    return float(np.mean(majority_labels(ensemble, tie_seed) != ensemble.labels))


def instability_score(ensemble, tie_seed=0):
    m = majority_labels(ensemble, tie_seed)
    return float(np.mean(ensemble.predictions != m[None, :]))


def average_accuracy(ensemble):
    return float(np.mean(ensemble.predictions == ensemble.labels[None, :]))


def score(ensemble, tie_seed=0):
    m = majority_labels(ensemble, tie_seed)
    return ScoreReport(
        avg_accuracy=average_accuracy(ensemble),
        intrinsic_error=float(np.mean(m != ensemble.labels)),
        instability=float(np.mean(ensemble.predictions != m[None, :])),
        k=ensemble.k,
    )


def seed_subsample_estimate(ensemble, k_sub=3, tie_seed=0):
    """Scores recomputed from the first ``k_sub`` models only."""
    if not 1 <= k_sub <= ensemble.k:
        raise ValueError(f"need 1 <= k_sub <= {ensemble.k}")
    return score(ensemble.first(k_sub), tie_seed)


def margin(probabilities):
    """Largest minus second-largest probability (along the last axis)."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.shape[-1] < 2:
        return np.ones(p.shape[:-1]) if p.ndim > 1 else 1.0
    top2 = np.partition(p, -2, axis=-1)[..., -2:]
    m = top2[..., 1] - top2[..., 0]
    return float(m) if m.ndim == 0 else m


def margin_histogram(margins, bins=N_MARGIN_BINS):
    """Counts of margins in ``bins`` equal bins over [0, 1]."""
    m = np.asarray(margins, dtype=np.float64).ravel()
    counts, _ = np.histogram(m, bins=bins, range=(0.0, 1.0))
    return counts


def margin_partitions(baseline_probs, labels, augmented_preds=None, bins=N_MARGIN_BINS):
    """Margin histograms of the baseline model over the correct, incorrect
    and (when ``augmented_preds`` is given) corrected test points; corrected
    means wrong for the baseline and right for the augmented model."""
    probs = np.asarray(baseline_probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.shape[0] != labels.shape[0]:
        raise ValueError("baseline probabilities and labels cover different test sets")
    pred = np.argmax(probs, axis=1)
    m = margin(probs)
    parts = {"correct": pred == labels, "incorrect": pred != labels}
    if augmented_preds is not None:
        aug = np.asarray(augmented_preds)
        if aug.shape != labels.shape:
            raise ValueError("augmented predictions cover a different test set")
        parts["corrected"] = (pred != labels) & (aug == labels)
    return {name: margin_histogram(m[mask], bins) for name, mask in parts.items()}


def corrected_set_accuracy(baseline, augmented, tie_seed=0):
    """Average baseline accuracy on points the augmented ensemble's majority
    gets right and the baseline majority gets wrong."""
    if baseline.labels.shape != augmented.labels.shape or not np.array_equal(baseline.labels, augmented.labels):
        raise ValueError("ensembles cover different test sets")
    mb = majority_labels(baseline, tie_seed)
    ma = majority_labels(augmented, tie_seed)
    mask = (mb != baseline.labels) & (ma == augmented.labels)
    if not mask.any():
        return float("nan"), 0
    return float(np.mean(baseline.predictions[:, mask] == baseline.labels[mask])), int(mask.sum())


def write_results_csv(path, rows, header_comment=None):
    """``rows`` are ``(experiment_id, policy, ScoreReport)`` tuples."""
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for exp, policy, rep in rows:
            w.writerow([exp, policy, rep.k, repr(rep.avg_accuracy), repr(rep.intrinsic_error), repr(rep.instability)])
