import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from augmentlab import linalg


def random_matrix(seed, rows, cols, rank=None):
    g = np.random.default_rng(seed)
    if rank is None:
        return g.standard_normal((rows, cols))
    return g.standard_normal((rows, rank)) @ g.standard_normal((rank, cols))


shapes = st.tuples(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**31))


# -- svd ---------------------------------------------------------------------

@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_svd_of_diagonal(method):
    u, s, vt = linalg.svd(np.diag([3.0, 1.0]), method=method)
    np.testing.assert_allclose(s, [3.0, 1.0])
    np.testing.assert_allclose(np.abs(u), np.eye(2), atol=1e-14)
    np.testing.assert_allclose(u @ np.diag(s) @ vt, np.diag([3.0, 1.0]), atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_svd_of_swap_has_unit_values(method):
    _, s, _ = linalg.svd(np.array([[0.0, 1.0], [1.0, 0.0]]), method=method)
    np.testing.assert_allclose(s, [1.0, 1.0])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_svd_reconstructs_5x8(method):
    m = random_matrix(0, 5, 8)
    u, s, vt = linalg.svd(m, method=method)
    assert np.max(np.abs(u @ np.diag(s) @ vt - m)) < 1e-8
    assert np.all(np.diff(s) <= 0)


@given(shapes)
def test_jacobi_matches_lapack(shape):
    rows, cols, seed = shape
    m = random_matrix(seed, rows, cols)
    u, s, vt = linalg.svd(m, method="jacobi")
    np.testing.assert_allclose(s, np.linalg.svd(m, compute_uv=False), rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(u @ np.diag(s) @ vt, m, atol=1e-10)
    np.testing.assert_allclose(u.T @ u, np.eye(u.shape[1]), atol=1e-10)
    np.testing.assert_allclose(vt @ vt.T, np.eye(vt.shape[0]), atol=1e-10)


def test_jacobi_handles_rank_deficiency():
    m = random_matrix(3, 6, 4, rank=2)
    u, s, vt = linalg.svd(m, method="jacobi")
    assert linalg.numerical_rank(s) == 2
    np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-10)
    np.testing.assert_allclose(u @ np.diag(s) @ vt, m, atol=1e-10)


def test_jacobi_is_deterministic():
    m = random_matrix(4, 7, 5)
    a = linalg.svd(m, method="jacobi")
    b = linalg.svd(m, method="jacobi")
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_svd_rejects_bad_input():
    with pytest.raises(ValueError):
        linalg.svd(np.ones(3))
    with pytest.raises(ValueError):
        linalg.svd(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        linalg.svd(np.eye(2), method="qr")


def test_numerical_rank_cutoff():
    assert linalg.numerical_rank([1.0, 1e-9, 1e-11]) == 2
    assert linalg.numerical_rank([]) == 0
    assert linalg.numerical_rank([0.0, 0.0]) == 0


# -- pseudoinverse -----------------------------------------------------------

def test_pseudoinverse_of_singular_diagonal():
    np.testing.assert_allclose(linalg.pseudoinverse(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pseudoinverse_of_unit_row():
    np.testing.assert_allclose(linalg.pseudoinverse(np.array([[1.0, 0.0, 0.0]])), [[1.0], [0.0], [0.0]])


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_penrose_conditions_rank2(method):
    m = random_matrix(5, 4, 4, rank=2)
    mp = linalg.pseudoinverse(m, method=method)
    np.testing.assert_allclose(m @ mp @ m, m, atol=1e-10)
    np.testing.assert_allclose(mp @ m @ mp, mp, atol=1e-10)
    np.testing.assert_allclose((m @ mp).T, m @ mp, atol=1e-10)
    np.testing.assert_allclose((mp @ m).T, mp @ m, atol=1e-10)


# -- projections -------------------------------------------------------------

def test_projection_of_axis_row():
    pp = linalg.projections(np.array([[1.0, 0.0, 0.0]]))
    np.testing.assert_allclose(pp.onto_rowspace, np.diag([1.0, 0.0, 0.0]))
    np.testing.assert_allclose(pp.orthogonal, np.diag([0.0, 1.0, 1.0]))
    assert pp.rank == 1


def test_duplicate_rows_have_rank_one():
    assert linalg.projections(np.array([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])).rank == 1


def test_projection_residuals_3x6(rng):
    x = rng.standard_normal((3, 6))
    pp = linalg.projections(x)
    v = rng.standard_normal(6)
    # P_X v lies in the row space: it is reproduced by least squares on X^T
    coef = np.linalg.lstsq(x.T, pp.onto_rowspace @ v, rcond=None)[0]
    assert np.linalg.norm(x.T @ coef - pp.onto_rowspace @ v) < 1e-9
    assert np.max(np.abs(pp.orthogonal @ x.T)) < 1e-9


@pytest.mark.parametrize("seed", range(100))
def test_projection_idempotent_and_complementary(seed):
    g = np.random.default_rng(seed)
    n, p = g.integers(1, 8), g.integers(2, 12)
    x = random_matrix(seed, n, p, rank=min(n, p, int(g.integers(1, 6))))
    pp = linalg.projections(x)
    p1, p2 = pp.onto_rowspace, pp.orthogonal
    np.testing.assert_allclose(p1 @ p1, p1, atol=1e-9)
    np.testing.assert_allclose(p2 @ p2, p2, atol=1e-9)
    np.testing.assert_allclose(p1 + p2, np.eye(p), atol=1e-12)
    np.testing.assert_allclose(p1 @ p2, 0, atol=1e-9)


# -- rank-one updates ----------------------------------------------------------

def test_sherman_morrison_diagonal_bump():
    np.testing.assert_allclose(linalg.sherman_morrison_update(np.eye(2), [1.0, 0.0], [1.0, 0.0]),
                               np.diag([0.5, 1.0]))


def test_sherman_morrison_zero_update():
    a = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_array_equal(linalg.sherman_morrison_update(a, np.zeros(2), np.ones(2)), a)


def test_sherman_morrison_singular():
    with pytest.raises(linalg.SingularUpdateError):
        linalg.sherman_morrison_update(np.eye(2), [1.0, 0.0], [-1.0, 0.0])


@given(st.integers(0, 2**31))
def test_sherman_morrison_matches_direct_inverse(seed):
    g = np.random.default_rng(seed)
    b = g.standard_normal((6, 6))
    a = b @ b.T + 6 * np.eye(6)
    u, v = g.standard_normal(6), g.standard_normal(6)
    if abs(1 + v @ np.linalg.solve(a, u)) < 1e-3:
        return
    np.testing.assert_allclose(linalg.sherman_morrison_update(np.linalg.inv(a), u, v),
                               np.linalg.inv(a + np.outer(u, v)), atol=1e-8)


def test_pinv_update_in_span_branch():
    x = np.diag([1.0, 0.0])
    out = linalg.pinv_rank1_update(linalg.pseudoinverse(x), x, [1.0, 0.0])
    np.testing.assert_allclose(out, np.diag([0.5, 0.0]), atol=1e-15)


def test_pinv_update_out_of_span_branch():
    x = np.diag([1.0, 0.0])
    out = linalg.pinv_rank1_update(linalg.pseudoinverse(x), x, [0.0, 1.0])
    np.testing.assert_allclose(out, np.eye(2), atol=1e-15)


def test_pinv_update_requires_symmetry():
    with pytest.raises(ValueError):
        linalg.pinv_rank1_update(np.eye(2), np.array([[1.0, 2.0], [0.0, 1.0]]), [1.0, 0.0])


def test_pinv_update_singular_in_span():
    x = -np.diag([1.0, 0.0])
    with pytest.raises(linalg.SingularUpdateError):
        linalg.pinv_rank1_update(linalg.pseudoinverse(x), x, [1.0, 0.0])


@pytest.mark.parametrize("in_span", [True, False])
def test_pinv_update_psd_rank3(rng, in_span):
    a = rng.standard_normal((5, 3))
    x = a @ a.T
    u = a @ rng.standard_normal(3) if in_span else rng.standard_normal(5)
    out = linalg.pinv_rank1_update(linalg.pseudoinverse(x), x, u)
    np.testing.assert_allclose(out, np.linalg.pinv(x + np.outer(u, u)), atol=1e-7)


# -- ridge ---------------------------------------------------------------------

def test_ridge_scalar():
    np.testing.assert_allclose(linalg.ridge_solve(np.array([[2.0]]), np.array([2.0]), 1.0), [0.8])


def test_ridge_zero_labels(rng):
    np.testing.assert_array_equal(linalg.ridge_solve(rng.standard_normal((4, 7)), np.zeros(4), 0.3), 0.0)


@pytest.mark.parametrize("shape", [(10, 40), (40, 10)])
def test_ridge_gradient_vanishes(rng, shape):
    n, p = shape
    x, y, lam = rng.standard_normal((n, p)), rng.standard_normal(n), 0.2
    w = linalg.ridge_solve(x, y, lam)
    objective = lambda v: 0.5 / n * np.sum((x @ v - y) ** 2) + 0.5 * lam * v @ v  # noqa: E731
    eps = 1e-6
    fd = np.array([(objective(w + eps * e) - objective(w - eps * e)) / (2 * eps) for e in np.eye(p)])
    assert np.linalg.norm(fd) < 1e-8
    assert np.linalg.norm(x.T @ (x @ w - y) / n + lam * w) < 1e-12


@given(st.integers(0, 2**31))
def test_ridge_row_permutation_invariance(seed):
    g = np.random.default_rng(seed)
    x, y = g.standard_normal((8, 12)), g.standard_normal(8)
    perm = g.permutation(8)
    np.testing.assert_allclose(linalg.ridge_solve(x[perm], y[perm], 0.1), linalg.ridge_solve(x, y, 0.1),
                               atol=1e-12)


def test_ridge_rejects_nonpositive_lambda():
    with pytest.raises(ValueError):
        linalg.ridge_solve(np.eye(2), np.ones(2), 0.0)
