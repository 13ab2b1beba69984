"""Uncertainty-based sampling of transformation compositions, and the uniform
random baseline.

For every input, ``C`` candidate pipelines are drawn; each pipeline is ``L``
distinct transforms (sampled without replacement from the ``K`` available),
each applied with its own probability and magnitude, followed by the ``H``
default transforms. :func:`sample_batch` keeps the ``S`` candidates with the
highest loss under a frozen model; :func:`sample_batch_uniform` keeps ``S``
chosen at random.

A *transform applier* is any callable
``apply(images, transform_id, magnitudes, rng) -> images`` acting on a batch
with one magnitude per image; :func:`augmentlab.classify.apply_transform`
is the one used for images.
"""

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np


class ConfigError(ValueError):
    """Inconsistent sampling configuration."""


class LossModel(Protocol):
    def losses(self, x, y):
        """Per-example nonnegative losses for a batch; must not mutate the model."""


@dataclass(frozen=True)
class PolicyConfig:
    transform_ids: tuple
    magnitude_ranges: dict
    L: int = 2
    C: int = 4
    S: int = 1
    apply_probability_range: tuple = (0.2, 0.8)
    default_transform_ids: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "transform_ids", tuple(self.transform_ids))
        object.__setattr__(self, "default_transform_ids", tuple(self.default_transform_ids))
        k = len(self.transform_ids)
        if k == 0:
            raise ConfigError("need at least one transform")
        if len(set(self.transform_ids)) != k:
            raise ConfigError("transform ids must be distinct")
        if not 1 <= self.L <= k:
            raise ConfigError(f"need 1 <= L <= K, got L={self.L}, K={k}")
        if not 1 <= self.S <= self.C:
            raise ConfigError(f"need 1 <= S <= C, got S={self.S}, C={self.C}")
        lo, hi = self.apply_probability_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ConfigError(f"apply probability range {self.apply_probability_range} not inside [0, 1]")
        for tid in self.transform_ids + self.default_transform_ids:
            if tid not in self.magnitude_ranges:
                raise ConfigError(f"no magnitude range for transform {tid!r}")
            mlo, mhi = self.magnitude_ranges[tid]
            if mlo > mhi:
                raise ConfigError(f"empty magnitude range for {tid!r}")

    @property
    def K(self):
        return len(self.transform_ids)


@dataclass(frozen=True)
class Pipelines:
    """Parameters of ``rows`` candidate pipelines.

    ``ids`` holds indices into ``config.transform_ids`` with shape (rows, L);
    ``applied`` and ``magnitudes`` have the same shape. ``default_magnitudes``
    has shape (rows, H).
    """

    ids: np.ndarray
    applied: np.ndarray
    magnitudes: np.ndarray
    default_magnitudes: np.ndarray

    def names(self, config, row):
        return tuple(config.transform_ids[k] for k in self.ids[row])


@dataclass(frozen=True)
class Selection:
    x: np.ndarray
    y: np.ndarray
    pipelines: list
    losses: np.ndarray | None
    source_index: np.ndarray


def draw_pipelines(config, rows, rng):
    """Draw ``rows`` independent pipelines."""
    k, L = config.K, config.L
    ids = np.argsort(rng.random((rows, k)), axis=1)[:, :L]
    lo, hi = config.apply_probability_range
    prob = rng.uniform(lo, hi, (rows, L))
    applied = rng.random((rows, L)) < prob
    ranges = np.array([config.magnitude_ranges[t] for t in config.transform_ids], dtype=np.float64)
    u = rng.random((rows, L))
    mags = ranges[ids, 0] + u * (ranges[ids, 1] - ranges[ids, 0])
    h = len(config.default_transform_ids)
    if h:
        dr = np.array([config.magnitude_ranges[t] for t in config.default_transform_ids], dtype=np.float64)
        dm = dr[:, 0] + rng.random((rows, h)) * (dr[:, 1] - dr[:, 0])
    else:
        dm = np.zeros((rows, 0))
    return Pipelines(ids=ids, applied=applied, magnitudes=mags, default_magnitudes=dm)


def apply_pipelines(x, pipelines, config, transform_apply, rng):
    """Run each row of ``x`` through its pipeline, grouping rows per transform."""
    out = np.array(x, dtype=np.float64, copy=True)
    for step in range(config.L):
        for k, tid in enumerate(config.transform_ids):
            rows = np.flatnonzero((pipelines.ids[:, step] == k) & pipelines.applied[:, step])
            if rows.size:
                out[rows] = transform_apply(out[rows], tid, pipelines.magnitudes[rows, step], rng)
    for h, tid in enumerate(config.default_transform_ids):
        out = transform_apply(out, tid, pipelines.default_magnitudes[:, h], rng)
    return out


def _subset(p, rows):
    return Pipelines(ids=p.ids[rows], applied=p.applied[rows], magnitudes=p.magnitudes[rows],
                     default_magnitudes=p.default_magnitudes[rows])


def _candidates(x, config, seed):
    x = np.asarray(x, dtype=np.float64)
    b = x.shape[0]
    rng_param, rng_apply = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    pipes = draw_pipelines(config, b * config.C, rng_param)
    return x, b, pipes, rng_apply


def top_s_indices(losses, s):
    """Indices of the ``s`` largest entries per row, ties to the lowest index."""
    losses = np.asarray(losses, dtype=np.float64)
    order = np.argsort(-losses, axis=1, kind="stable")
    return np.sort(order[:, :s], axis=1)


def sample_batch(x, y, config, model, transform_apply, seed):
    """Keep, for each input, the ``S`` highest-loss candidates of ``C``.

    The model is only queried through ``model.losses``; the snapshot at call
    time scores every candidate. Returns a :class:`Selection` of ``B * S``
    examples ordered by input, then by candidate index.
    """
    x, b, pipes, rng_apply = _candidates(x, config, seed)
    y = np.asarray(y)
    rep = np.repeat(np.arange(b), config.C)
    cand = apply_pipelines(x[rep], pipes, config, transform_apply, rng_apply)
    losses = np.asarray(model.losses(cand, y[rep]), dtype=np.float64).reshape(b, config.C)
    keep = top_s_indices(losses, config.S)
    rows = (np.arange(b)[:, None] * config.C + keep).ravel()
    return Selection(x=cand[rows], y=y[rep[rows]], pipelines=[pipes.names(config, r) for r in rows],
                     losses=losses.ravel()[rows], source_index=rep[rows])


def sample_batch_uniform(x, y, config, transform_apply, seed):
    """Same candidate generation as :func:`sample_batch`, ``S`` of ``C`` kept
    uniformly at random (only the kept candidates are rendered)."""
    x, b, pipes, rng_apply = _candidates(x, config, seed)
    y = np.asarray(y)
    rng_pick = np.random.default_rng(np.random.SeedSequence(seed).spawn(3)[2])
    keep = np.sort(np.argsort(rng_pick.random((b, config.C)), axis=1)[:, : config.S], axis=1)
    rows = (np.arange(b)[:, None] * config.C + keep).ravel()
    src = rows // config.C
    out = apply_pipelines(x[src], _subset(pipes, rows), config, transform_apply, rng_apply)
    return Selection(x=out, y=y[src], pipelines=[pipes.names(config, r) for r in rows], losses=None,
                     source_index=src)


def pipeline_id(names):
    return "+".join(names)


@dataclass
class FrequencyRecorder:
    """Counts of selected pipelines (ordered id tuples) per window."""

    counts: dict = field(default_factory=lambda: defaultdict(Counter))

    def add(self, window, pipelines):
        c = self.counts[int(window)]
        for p in pipelines:
            c[tuple(p)] += 1

    def merge(self, other):
        """Add the counts of another recorder into this one."""
        for w, c in other.counts.items():
            self.counts[w].update(c)
        return self

    def windows(self):
        return sorted(self.counts)

    def rows(self):
        return [(w, pipeline_id(p), n) for w in self.windows() for p, n in sorted(self.counts[w].items())]


def record_frequencies(selections):
    """Aggregate ``(window_index, pipeline_tuple)`` pairs into a recorder."""
    rec = FrequencyRecorder()
    for window, pipe in selections:
        rec.add(window, [pipe])
    return rec


def write_frequency_csv(path, recorder, header_comment=None):
    with open(path, "w", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        w = csv.writer(fh)
        w.writerow(["window_index", "pipeline_id", "count"])
        w.writerows(recorder.rows())
