"""Dense linear algebra: decompositions, projections, pseudoinverses and the
rank-one update identities used by the augmentation analysis.

Matrices are plain 2-D ``float64`` numpy arrays and vectors 1-D arrays. All
functions are pure.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels

# Singular values below RANK_RTOL * max singular value count as zero.
RANK_RTOL = 1e-10
# Two projections are complementary/idempotent to within this tolerance.
PROJECTION_ATOL = 1e-9
# |1 + v^T A^{-1} u| must exceed this for a Sherman-Morrison update.
SINGULAR_UPDATE_ATOL = 1e-12
# ||P_X^perp u|| below this selects the in-span pseudoinverse update.
IN_SPAN_ATOL = 1e-9
# Sweep cap for one-sided Jacobi is JACOBI_SWEEP_FACTOR * max(rows, cols).
JACOBI_SWEEP_FACTOR = 100
# Columns count as orthogonal when |<a_i,a_j>| <= JACOBI_TOL_FACTOR * rows * eps * ||a_i|| ||a_j||.
JACOBI_TOL_FACTOR = 4.0


class DecompositionError(ArithmeticError):
    """An iterative decomposition did not converge."""


class SingularUpdateError(ArithmeticError):
    """A rank-one update would produce a singular matrix."""


@dataclass(frozen=True)
class ProjectionPair:
    onto_rowspace: np.ndarray
    orthogonal: np.ndarray
    rank: int


def _as_matrix(m):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def jacobi_svd(m):
    """Thin SVD by one-sided Jacobi rotations (compiled kernel when built).

    Deterministic given the input. Raises :class:`DecompositionError` when the
    sweep cap is hit before the columns are mutually orthogonal.
    """
    m = _as_matrix(m)
    rows, cols = m.shape
    transpose = rows < cols
    a = np.ascontiguousarray(m.T if transpose else m)
    max_sweeps = JACOBI_SWEEP_FACTOR * max(rows, cols)
    tol = JACOBI_TOL_FACTOR * a.shape[0] * np.finfo(np.float64).eps
    work, v, _, converged = kernels.jacobi_svd_tall(a, max_sweeps, tol)
    if not converged:
        raise DecompositionError(f"Jacobi SVD did not converge in {max_sweeps} sweeps")
    s = np.linalg.norm(work, axis=0)
    order = np.argsort(-s, kind="stable")
    s = s[order]
    work = work[:, order]
    v = v[:, order]
    u = np.zeros_like(work)
    cutoff = RANK_RTOL * (s[0] if s.size else 0.0)
    nz = s > cutoff
    u[:, nz] = work[:, nz] / s[nz]
    u = _complete_columns(u, nz)
    if transpose:
        return np.ascontiguousarray(v), s, np.ascontiguousarray(u.T)
    return u, s, np.ascontiguousarray(v.T)


def _complete_columns(u, filled):
    # Replace columns of zero singular values by an orthonormal completion.
    if filled.all():
        return u
    basis = u[:, filled]
    rng_cols = []
    for k in range(u.shape[0]):
        e = np.zeros(u.shape[0])
        e[k] = 1.0
        r = e - basis @ (basis.T @ e)
        for c in rng_cols:
            r -= c * (c @ r)
        nrm = np.linalg.norm(r)
        if nrm > 1e-8:
            rng_cols.append(r / nrm)
        if len(rng_cols) == (~filled).sum():
            break
    u = u.copy()
    u[:, ~filled] = np.column_stack(rng_cols)
    return u


def svd(m, method="lapack"):
    """Thin singular value decomposition ``m = U @ diag(s) @ Vt``.

    ``method="lapack"`` uses the divide-and-conquer LAPACK driver and is the
    default for the large designs; ``method="jacobi"`` runs the one-sided
    Jacobi kernel. Singular values are nonincreasing in both cases.
    """
    m = _as_matrix(m)
    if method == "jacobi":
        return jacobi_svd(m)
    if method != "lapack":
        raise ValueError(f"unknown SVD method {method!r}")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(str(exc)) from exc
    return u, s, vt


def numerical_rank(s):
    s = np.asarray(s)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > RANK_RTOL * s[0]))


def pseudoinverse(m, method="lapack"):
    """Moore-Penrose pseudoinverse with the relative rank cutoff."""
    u, s, vt = svd(m, method=method)
    r = numerical_rank(s)
    return (vt[:r].T / s[:r]) @ u[:, :r].T


def rowspace_basis(x):
    """Orthonormal basis (as rows) of the row space of ``x``."""
    _, s, vt = svd(x)
    return vt[: numerical_rank(s)]


def projections(x):
    x = _as_matrix(x)
    basis = rowspace_basis(x)
    onto = basis.T @ basis
    orth = np.eye(x.shape[1]) - onto
    return ProjectionPair(onto_rowspace=onto, orthogonal=orth, rank=basis.shape[0])


def sherman_morrison_update(a_inv, u, v):
    """Return ``(A + u v^T)^{-1}`` given ``A^{-1}``."""
    a_inv = _as_matrix(a_inv)
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    au = a_inv @ u
    va = v @ a_inv
    denom = 1.0 + v @ au
    if abs(denom) <= SINGULAR_UPDATE_ATOL:
        raise SingularUpdateError(f"1 + v^T A^-1 u = {denom:.3e}")
    return a_inv - np.outer(au, va) / denom


def pinv_rank1_update(x_pinv, x, u):
    """Pseudoinverse of ``X + u u^T`` for a symmetric ``X`` from ``X^+``.

    When ``u`` lies in the range of ``X`` the Sherman-Morrison form applies;
    otherwise the four-term expression in ``s = P_X^perp u`` is used.
    """
    x_pinv = _as_matrix(x_pinv)
    x = _as_matrix(x)
    u = np.asarray(u, dtype=np.float64)
    if x.shape[0] != x.shape[1] or not np.allclose(x, x.T, atol=1e-12 * max(1.0, np.abs(x).max())):
        raise ValueError("pinv_rank1_update requires a symmetric X")
    xu = x_pinv @ u
    s = u - x @ xu  # P_X^perp u, since X X^+ projects onto range(X)
    snorm2 = s @ s
    k = 1.0 + u @ xu
    if np.sqrt(snorm2) <= IN_SPAN_ATOL * max(1.0, np.linalg.norm(u)):
        if abs(k) <= SINGULAR_UPDATE_ATOL:
            raise SingularUpdateError(f"1 + u^T X^+ u = {k:.3e}")
        return x_pinv - np.outer(xu, xu) / k
    s_pinv = s / snorm2
    return x_pinv - np.outer(xu, s_pinv) - np.outer(s_pinv, xu) + k * np.outer(s_pinv, s_pinv)


def ridge_solve(x, y, lam):
    """Minimiser of ``(1/2n)||X w - Y||^2 + (lam/2)||w||^2``.

    ``y`` may be a vector or a matrix of right-hand sides (one per column).
    Uses the dual system ``(X X^T + n lam I)`` when ``p > n``.
    """
    x = _as_matrix(x)
    y = np.asarray(y, dtype=np.float64)
    if lam <= 0:
        raise ValueError("ridge parameter must be positive")
    n, p = x.shape
    if n < 1:
        raise ValueError("need at least one row")
    if p > n:
        gram = x @ x.T
        gram[np.diag_indices_from(gram)] += n * lam
        return x.T @ np.linalg.solve(gram, y)
    a = x.T @ x
    a[np.diag_indices_from(a)] += n * lam
    return np.linalg.solve(a, x.T @ y)
