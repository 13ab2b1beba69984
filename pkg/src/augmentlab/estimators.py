"""Ridge and minimum-norm estimators with exact and Monte Carlo error
decompositions.

The closed forms are written for a general instance whose labels are
``Y = E[Y] + sigma * M @ xi`` with ``xi`` standard normal and ``M`` the
instance's noise map. For a freshly generated instance ``M = I`` and
``E[Y] = X @ beta``, which gives the textbook expressions

    bias     = ||(X^T X + n lam I)^{-1} X^T X beta - beta||^2
    variance = sigma^2 tr((X^T X + n lam I)^{-2} X^T X)

Augmented instances carry extra rows of ``M`` so that correlated label noise
of derived samples is accounted for exactly.
"""

from dataclasses import dataclass

import numpy as np

from . import linalg

DEFAULT_MC_TRIALS = 20_000
MC_CHUNK = 1_000
MIN_NORM_RESIDUAL_ATOL = 1e-6
KINDS = ("ridge", "min_norm")


class InfeasibleError(ValueError):
    """Labels are not in the range of the design."""


@dataclass(frozen=True)
class ErrorDecomposition:
    bias: float
    variance: float
    total: float

    @classmethod
    def from_parts(cls, bias, variance):
        bias = max(float(bias), 0.0)
        variance = max(float(variance), 0.0)
        return cls(bias=bias, variance=variance, total=bias + variance)


def ridge_estimate(instance):
    return linalg.ridge_solve(instance.X, instance.Y, instance.lam)


def min_norm_estimate(x, y, *, check=True):
    """``(X^T X)^+ X^T Y``, the smallest-norm interpolant.

    With ``check=True`` an :class:`InfeasibleError` is raised when
    ``||X b - Y|| > 1e-6``; pass ``check=False`` to get the least-squares
    minimum-norm solution regardless.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b = linalg.pseudoinverse(x) @ y
    if check:
        resid = float(np.linalg.norm(x @ b - y))
        if resid > MIN_NORM_RESIDUAL_ATOL:
            raise InfeasibleError(f"labels not in range of X (residual {resid:.3e})")
    return b


def _ridge_operator_parts(instance):
    # Dual form: H = X^T G^{-1} with G = X X^T + n lam I (n x n, SPD).
    x = instance.X
    n = x.shape[0]
    k = x @ x.T
    g = k.copy()
    g[np.diag_indices_from(g)] += n * instance.lam
    chol = np.linalg.cholesky(g)
    return k, chol


def _chol_solve(chol, b):
    return np.linalg.solve(chol.T, np.linalg.solve(chol, b))


def ridge_bias_closed(instance):
    _, chol = _ridge_operator_parts(instance)
    fitted = instance.X.T @ _chol_solve(chol, instance.label_mean)
    return float(np.sum((fitted - instance.beta) ** 2))


def ridge_variance_closed(instance):
    if instance.sigma == 0.0:
        return 0.0
    k, chol = _ridge_operator_parts(instance)
    a = _chol_solve(chol, instance.noise_map)
    # ||X^T A||_F^2 = tr(A^T K A)
    return float(instance.sigma**2 * np.sum(a * (k @ a)))


def min_norm_bias_closed(instance):
    fitted = linalg.pseudoinverse(instance.X) @ instance.label_mean
    return float(np.sum((fitted - instance.beta) ** 2))


def min_norm_variance_closed(instance):
    if instance.sigma == 0.0:
        return 0.0
    h = linalg.pseudoinverse(instance.X) @ instance.noise_map
    return float(instance.sigma**2 * np.sum(h * h))


def estimation_error(instance, estimator_kind="ridge"):
    """Exact ``E_xi ||b_hat - beta||^2`` split into bias and variance."""
    if estimator_kind == "ridge":
        return ErrorDecomposition.from_parts(ridge_bias_closed(instance), ridge_variance_closed(instance))
    if estimator_kind == "min_norm":
        return ErrorDecomposition.from_parts(min_norm_bias_closed(instance), min_norm_variance_closed(instance))
    raise ValueError(f"unknown estimator {estimator_kind!r}; expected one of {KINDS}")


def _chunk_rng(seed, chunk):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chunk)])))


def mc_estimation_error(instance, estimator_kind="ridge", trials=DEFAULT_MC_TRIALS, seed=0):
    """Monte Carlo estimate of the estimation error.

    Each trial redraws the standard-normal noise ``xi``, rebuilds
    ``Y = E[Y] + sigma M xi`` and refits. Trials are generated in fixed-size
    chunks, chunk ``c`` drawing from a Philox stream keyed by
    ``(seed, c)``, so results do not depend on how chunks are scheduled.

    Returns ``(mean, std_error)`` of ``||b_hat - beta||^2``.
    """
    if trials < 100:
        raise ValueError("need at least 100 trials")
    if estimator_kind not in KINDS:
        raise ValueError(f"unknown estimator {estimator_kind!r}")
    m = instance.noise_map.shape[1]
    pinv = linalg.pseudoinverse(instance.X) if estimator_kind == "min_norm" else None
    errors = []
    for chunk, start in enumerate(range(0, trials, MC_CHUNK)):
        size = min(MC_CHUNK, trials - start)
        xi = _chunk_rng(seed, chunk).standard_normal((m, size))
        y = instance.label_mean[:, None] + instance.sigma * (instance.noise_map @ xi)
        if pinv is None:
            b = linalg.ridge_solve(instance.X, y, instance.lam)
        else:
            b = pinv @ y
        errors.append(np.sum((b - instance.beta[:, None]) ** 2, axis=0))
    errors = np.concatenate(errors)
    mean = float(errors.mean())
    se = 0.0 if instance.sigma == 0.0 else float(errors.std(ddof=1) / np.sqrt(trials))
    return mean, se
