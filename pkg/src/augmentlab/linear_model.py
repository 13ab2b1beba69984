"""Over-parametrized linear regression instances, certified label-invariant
transformations, and the two augmentation recipes (orthogonal projection and
mixup) that append one sample to an instance.

An instance keeps the realised standard-normal noise ``xi`` and a noise map
``M`` with ``Y = E[Y] + sigma * M @ xi``. Appending a derived sample appends a
row to ``M``, so correlated label noise of augmented points is tracked exactly
and closed-form variances stay exact after augmentation.
"""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import linalg

CERTIFICATE_ATOL = 1e-9


class NotLabelInvariantError(ValueError):
    """A transform changes labels of points in the data subspace."""


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DesignInstance:
    """Training design ``X`` (rows supported on the first ``support_dim``
    coordinates), labels ``Y`` and the ground truth that generated them.

    ``label_mean`` is ``E[Y]`` over the noise; for generated instances it is
    ``X @ beta``.
    """

    X: np.ndarray
    Y: np.ndarray
    beta: np.ndarray
    sigma: float
    lam: float
    support_dim: int
    gamma: float
    xi: np.ndarray
    noise_map: np.ndarray
    label_mean: np.ndarray
    seed: int | None = None

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    def regenerate_labels(self, beta):
        """Same design and noise realisation, labels recomputed for ``beta``.

        Only valid for instances whose labels are all of the form x^T beta +
        noise, i.e. freshly generated ones.
        """
        beta = _frozen(beta)
        mean = self.X @ beta
        return replace(
            self,
            beta=beta,
            label_mean=_frozen(mean),
            Y=_frozen(mean + self.sigma * (self.noise_map @ self.xi)),
        )


@dataclass(frozen=True)
class LinearTransform:
    matrix: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    certificate_residual: float = 0.0

    def __call__(self, x):
        return self.matrix @ x


@dataclass(frozen=True)
class AugmentedSample:
    """Sample ``(z, y_aug)`` with ``z`` orthogonal to the row space.

    ``noise_row`` gives the label noise in terms of the instance's ``xi``:
    ``y_aug = <z, beta> + sigma * noise_row @ xi``.
    """

    z: np.ndarray
    y_aug: float
    noise_row: np.ndarray
    label_mean: float


@dataclass(frozen=True)
class MixupSample:
    x_aug: np.ndarray
    y_aug: float
    alpha: float
    source_indices: tuple
    noise_row: np.ndarray
    label_mean: float


def instance_from_arrays(x, beta, sigma, lam, *, support_dim=None, xi=None):
    """Wrap a given design and ground truth as an instance.

    Labels are ``X beta + sigma * xi`` with ``xi = 0`` unless given. Unlike
    :func:`generate_instance` nothing is centred and ``p > n`` is not
    required, which makes small hand-checked cases possible.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    beta = np.asarray(beta, dtype=np.float64).ravel()
    n, p = x.shape
    if beta.shape != (p,):
        raise ValueError(f"beta has length {beta.size}, X has {p} columns")
    if sigma < 0 or lam <= 0:
        raise ValueError("need sigma >= 0 and lam > 0")
    d = p if support_dim is None else int(support_dim)
    if not 1 <= d <= p or np.any(x[:, d:] != 0):
        raise ValueError("rows must vanish outside the first support_dim coordinates")
    xi = np.zeros(n) if xi is None else np.asarray(xi, dtype=np.float64).ravel()
    if xi.shape != (n,):
        raise ValueError("xi must have one entry per row")
    mean = x @ beta
    return DesignInstance(X=_frozen(x), Y=_frozen(mean + sigma * xi), beta=_frozen(beta), sigma=float(sigma),
                          lam=float(lam), support_dim=d, gamma=float(np.linalg.norm(x, axis=1).max()),
                          xi=_frozen(xi), noise_map=_frozen(np.eye(n)), label_mean=_frozen(mean))


def generate_instance(n, p, d, sigma, lam, seed, *, row_scale=1.0, beta_norm=1.0):
    """Draw a centred over-parametrized instance.

    Rows are i.i.d. ``row_scale * N(0, I_d)`` on the first ``d`` coordinates
    and then mean-centred so the rows sum to zero. ``beta`` is a uniformly
    random direction scaled to norm ``beta_norm``.
    """
    if not (p > n >= 1):
        raise ValueError(f"need p > n >= 1, got n={n}, p={p}")
    if not (1 <= d <= p):
        raise ValueError(f"need 1 <= d <= p, got d={d}")
    if sigma < 0 or lam <= 0:
        raise ValueError("need sigma >= 0 and lam > 0")
    rng = np.random.default_rng(seed)
    x = np.zeros((n, p))
    x[:, :d] = row_scale * rng.standard_normal((n, d))
    x -= x.mean(axis=0)
    beta = rng.standard_normal(p)
    beta *= beta_norm / np.linalg.norm(beta)
    xi = rng.standard_normal(n)
    mean = x @ beta
    return DesignInstance(
        X=_frozen(x),
        Y=_frozen(mean + sigma * xi),
        beta=_frozen(beta),
        sigma=float(sigma),
        lam=float(lam),
        support_dim=int(d),
        gamma=float(np.linalg.norm(x, axis=1).max()),
        xi=_frozen(xi),
        noise_map=_frozen(np.eye(n)),
        label_mean=_frozen(mean),
        seed=seed,
    )


def certificate_residual(matrix, beta, support_dim):
    """max over basis vectors e_k of the data subspace of |e_k^T beta - (F e_k)^T beta|."""
    d = support_dim
    return float(np.abs(beta[:d] - (matrix[:, :d].T @ beta)).max())


def certify(matrix, instance, kind, params=None):
    residual = certificate_residual(matrix, instance.beta, instance.support_dim)
    scale = max(1.0, float(np.abs(instance.beta).max()))
    if residual > CERTIFICATE_ATOL * scale:
        raise NotLabelInvariantError(f"{kind} transform changes labels on the data subspace (residual {residual:.3e})")
    return LinearTransform(matrix=_frozen(matrix), kind=kind, params=dict(params or {}), certificate_residual=residual)


def givens_matrix(p, i, j, theta):
    f = np.eye(p)
    c, s = np.cos(theta), np.sin(theta)
    f[i, i] = c
    f[i, j] = s
    f[j, i] = -s
    f[j, j] = c
    return f


def make_rotation_transform(instance, plane_i, plane_j, theta):
    """Givens rotation in plane (i, j) with i inside and j outside the data
    support, plus the instance relabelled for the coupled ``beta``.

    ``beta_j`` is set to ``beta_i (cos theta - 1) / sin theta`` which makes the
    rotation label-invariant on the data subspace. Indices are 0-based.

    Returns ``(transform, adjusted_instance)``.
    """
    d = instance.support_dim
    if not (0 <= plane_i < d <= plane_j < instance.p):
        raise ValueError(f"need plane_i < support_dim <= plane_j < p, got ({plane_i}, {plane_j}) with d={d}")
    if not (0.0 < theta < np.pi):
        raise ValueError("theta must lie in (0, pi)")
    s = np.sin(theta)
    if abs(s) < 1e-12:
        raise ValueError("degenerate rotation angle")
    beta = np.array(instance.beta)
    beta[plane_j] = beta[plane_i] * (np.cos(theta) - 1.0) / s
    adjusted = instance.regenerate_labels(beta)
    f = givens_matrix(instance.p, plane_i, plane_j, theta)
    params = {"plane": (plane_i, plane_j), "theta": float(theta)}
    return certify(f, adjusted, "givens_rotation", params), adjusted


def flip_matrix(p, start, stop):
    """Permutation reversing coordinates ``start..stop-1``."""
    if not (0 <= start < stop <= p):
        raise ValueError(f"flip range [{start}, {stop}) outside 0..{p}")
    f = np.eye(p)
    idx = np.arange(start, stop)
    f[idx] = 0.0
    f[idx, idx[::-1]] = 1.0
    return f


def make_flip_transform(p, start, stop, *, instance=None):
    """Coordinate flip over ``start..stop-1`` (0-based, ``stop`` exclusive).

    When ``instance`` is given the flip is certified against its ``beta``,
    which requires ``beta`` to be palindromic wherever the flip touches the
    data subspace; otherwise the transform is returned uncertified
    (``certificate_residual`` is NaN).
    """
    f = flip_matrix(p, start, stop)
    params = {"range": (start, stop)}
    if instance is None:
        return LinearTransform(matrix=_frozen(f), kind="coordinate_flip", params=params,
                               certificate_residual=float("nan"))
    if instance.p != p:
        raise ValueError(f"instance has p={instance.p}, flip built for p={p}")
    return certify(f, instance, "coordinate_flip", params)


def compose_additive(f1, f2, instance):
    return certify(f1.matrix + f2.matrix, instance, "additive_composition", {"parts": (f1.kind, f2.kind)})


def compose_multiplicative(f1, f2, instance):
    """``F1 @ F2``. Auto-certified when F2 keeps the data subspace inside
    itself; otherwise rechecked numerically."""
    m = f1.matrix @ f2.matrix
    d = instance.support_dim
    params = {"parts": (f1.kind, f2.kind)}
    if not np.any(f2.matrix[d:, :d]):
        residual = certificate_residual(m, instance.beta, d)
        return LinearTransform(matrix=_frozen(m), kind="multiplicative_composition", params=params, certificate_residual=residual)
    return certify(m, instance, "multiplicative_composition", params)


def make_augmented_sample(instance, data_index, f, *, factors=None):
    """Project ``F x`` onto the orthogonal complement of the row space and
    remove the in-span part from the label.

    ``z = P_X^perp F x`` and ``y_aug = y - <(X^T)^+ F x, Y>``. ``factors`` may
    supply a precomputed ``linalg.svd(instance.X)``.
    """
    if not (0 <= data_index < instance.n):
        raise IndexError(f"data_index {data_index} out of range")
    x = instance.X[data_index]
    fx = f.matrix @ x if isinstance(f, LinearTransform) else np.asarray(f) @ x
    return _orthogonal_sample(instance, fx, instance.Y[data_index], instance.label_mean[data_index],
                              instance.noise_map[data_index], factors)


def _orthogonal_sample(instance, v, y, y_mean, y_noise_row, factors=None):
    u, s, vt = linalg.svd(instance.X) if factors is None else factors
    r = linalg.numerical_rank(s)
    coef = vt[:r] @ v
    z = v - vt[:r].T @ coef
    w = u[:, :r] @ (coef / s[:r])  # (X^T)^+ v
    y_aug = float(y - w @ instance.Y)
    mean = float(y_mean - w @ instance.label_mean)
    noise_row = np.asarray(y_noise_row) - w @ instance.noise_map
    return AugmentedSample(z=_frozen(z), y_aug=y_aug, noise_row=_frozen(noise_row), label_mean=mean)


def reproject_sample(instance, sample):
    """Re-orthogonalise an already-built sample against ``instance``.

    Used when samples are appended one after another: ``sample.z`` keeps its
    label ``sample.y_aug`` and its component in the running row space is
    removed, label included.
    """
    m = instance.noise_map.shape[1]
    return _orthogonal_sample(instance, sample.z, sample.y_aug, sample.label_mean, _pad(sample.noise_row, m))


def _pad(row, m):
    row = np.asarray(row, dtype=np.float64)
    if row.size == m:
        return row
    out = np.zeros(m)
    out[: row.size] = row
    return out


def make_mixup_sample(instance, i, j, alpha_params=(1.0, 1.0), seed=None, *, alpha=None):
    """Convex combination of rows ``i`` and ``j`` and of their labels with
    ``alpha ~ Beta(a, b)`` (or the given ``alpha``)."""
    if i == j or not (0 <= i < instance.n and 0 <= j < instance.n):
        raise ValueError(f"need distinct in-range indices, got ({i}, {j})")
    a, b = alpha_params
    if a <= 0 or b <= 0:
        raise ValueError("Beta parameters must be positive")
    if alpha is None:
        alpha = float(np.random.default_rng(seed).beta(a, b))
    c = 1.0 - alpha
    x_aug = alpha * instance.X[i] + c * instance.X[j]
    y_aug = alpha * instance.Y[i] + c * instance.Y[j]
    noise_row = alpha * instance.noise_map[i] + c * instance.noise_map[j]
    mean = alpha * instance.label_mean[i] + c * instance.label_mean[j]
    return MixupSample(x_aug=_frozen(x_aug), y_aug=float(y_aug), alpha=float(alpha), source_indices=(i, j),
                       noise_row=_frozen(noise_row), label_mean=float(mean))


def append_sample(instance, z, y_aug, noise_row=None, label_mean=None):
    """New instance with one extra row ``z`` and label ``y_aug``.

    ``noise_row`` (over the instance's ``xi``) describes the label noise; the
    default treats the label as noise-free. ``label_mean`` defaults to
    ``y_aug - sigma * noise_row @ xi``.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (instance.p,):
        raise ValueError(f"expected a row of length {instance.p}, got shape {z.shape}")
    m = instance.noise_map.shape[1]
    noise_row = np.zeros(m) if noise_row is None else _pad(noise_row, m)
    if label_mean is None:
        label_mean = float(y_aug) - instance.sigma * float(noise_row @ instance.xi)
    return replace(
        instance,
        X=_frozen(np.vstack([instance.X, z])),
        Y=_frozen(np.append(instance.Y, float(y_aug))),
        noise_map=_frozen(np.vstack([instance.noise_map, noise_row])),
        label_mean=_frozen(np.append(instance.label_mean, float(label_mean))),
        gamma=max(instance.gamma, float(np.linalg.norm(z))),
    )


def append(instance, sample):
    """Append an :class:`AugmentedSample` or :class:`MixupSample`."""
    row = sample.z if isinstance(sample, AugmentedSample) else sample.x_aug
    return append_sample(instance, row, sample.y_aug, sample.noise_row, sample.label_mean)


# -- CSV bundle -------------------------------------------------------------

def save_instance(instance, directory):
    """Write ``X.csv``, ``Y.csv``, ``beta.csv``, ``xi.csv``, ``noise_map.csv``,
    ``label_mean.csv`` and ``meta.txt`` (``key=value`` lines)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    fmt = "%.17g"
    np.savetxt(directory / "X.csv", instance.X, delimiter=",", fmt=fmt)
    for name in ("Y", "beta", "xi", "label_mean"):
        np.savetxt(directory / f"{name}.csv", getattr(instance, name), delimiter=",", fmt=fmt)
    np.savetxt(directory / "noise_map.csv", instance.noise_map, delimiter=",", fmt=fmt)
    meta = {"n": instance.n, "p": instance.p, "support_dim": instance.support_dim, "sigma": repr(instance.sigma),
            "lam": repr(instance.lam), "gamma": repr(instance.gamma), "seed": json.dumps(instance.seed)}
    (directory / "meta.txt").write_text("".join(f"{k}={v}\n" for k, v in meta.items()))


def load_instance(directory):
    directory = Path(directory)
    meta = dict(line.split("=", 1) for line in (directory / "meta.txt").read_text().splitlines() if line)
    n, p = int(meta["n"]), int(meta["p"])

    def vec(name):
        return np.atleast_1d(np.loadtxt(directory / f"{name}.csv", delimiter=","))

    x = np.loadtxt(directory / "X.csv", delimiter=",", ndmin=2).reshape(n, p)
    noise_map = np.loadtxt(directory / "noise_map.csv", delimiter=",", ndmin=2)
    return DesignInstance(
        X=_frozen(x), Y=_frozen(vec("Y")), beta=_frozen(vec("beta")), sigma=float(meta["sigma"]),
        lam=float(meta["lam"]), support_dim=int(meta["support_dim"]), gamma=float(meta["gamma"]),
        xi=_frozen(vec("xi")), noise_map=_frozen(noise_map.reshape(n, -1)), label_mean=_frozen(vec("label_mean")),
        seed=json.loads(meta["seed"]),
    )
