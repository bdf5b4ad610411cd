"""Sparse kernels and iterative solvers against dense oracles."""

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import TIGHT, random_csr
from crossling.linop import (
    CenteredGramOperator,
    CsrMatrix,
    NumericalBreakdownError,
    SolverTolerances,
    block_solve,
    centered_apply,
    conjugate_gradient,
    eigensolve_topk,
    matvec,
    matvec_t,
)


def dense_centered_gram(xd, ridge):
    xc = xd - xd.mean(axis=0)
    return xc.T @ xc + ridge * np.eye(xd.shape[1])


# --- CsrMatrix -------------------------------------------------------------


def test_csr_identity_matvec():
    a = CsrMatrix.from_dense(np.eye(3))
    np.testing.assert_array_equal(matvec(a, np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_csr_zero_matrix():
    a = CsrMatrix.from_rows([(np.array([], dtype=np.int64), np.array([]))] * 3, 4)
    assert a.nnz == 0
    np.testing.assert_array_equal(matvec(a, np.ones(4)), np.zeros(3))


def test_csr_random_vs_dense():
    rng = np.random.default_rng(0)
    a = random_csr(rng, 20, 15)
    d = a.toarray()
    u = rng.standard_normal(15)
    np.testing.assert_allclose(matvec(a, u), d @ u, atol=1e-12)


def test_csr_transpose_identity():
    a = CsrMatrix.from_dense(np.eye(4))
    u = np.array([4.0, 3.0, 2.0, 1.0])
    np.testing.assert_array_equal(matvec_t(a, u), u)


def test_csr_transpose_hand_case():
    a = CsrMatrix.from_dense(np.array([[2.0, 3.0]]))
    np.testing.assert_array_equal(matvec_t(a, np.array([5.0])), [10.0, 15.0])


def test_csr_transpose_random_vs_dense():
    rng = np.random.default_rng(1)
    a = random_csr(rng, 20, 15)
    u = rng.standard_normal(20)
    np.testing.assert_allclose(matvec_t(a, u), a.toarray().T @ u, atol=1e-12)


def test_csr_rejects_unsorted_columns():
    with pytest.raises(ValueError):
        CsrMatrix(
            n_rows=1,
            n_cols=3,
            row_offsets=np.array([0, 2]),
            col_indices=np.array([2, 0]),
            values=np.array([1.0, 1.0]),
        )


def test_csr_rejects_duplicate_columns():
    with pytest.raises(ValueError):
        CsrMatrix.from_rows([(np.array([1, 1]), np.array([1.0, 2.0]))], 3)


def test_csr_rejects_bad_offsets():
    with pytest.raises(ValueError):
        CsrMatrix(
            n_rows=2,
            n_cols=2,
            row_offsets=np.array([0, 1]),
            col_indices=np.array([0]),
            values=np.array([1.0]),
        )


def test_csr_rejects_nonfinite_values():
    with pytest.raises(ValueError):
        CsrMatrix.from_rows([(np.array([0]), np.array([np.nan]))], 2)


def test_csr_rejects_out_of_range_column():
    with pytest.raises(ValueError):
        CsrMatrix.from_rows([(np.array([5]), np.array([1.0]))], 3)


@given(st.integers(0, 2**31 - 1), st.integers(1, 12), st.integers(1, 12))
def test_csr_dense_round_trip(seed, n, p):
    rng = np.random.default_rng(seed)
    d = np.where(rng.random((n, p)) < 0.4, rng.standard_normal((n, p)), 0.0)
    np.testing.assert_array_equal(CsrMatrix.from_dense(d).toarray(), d)


@given(st.integers(0, 2**31 - 1))
def test_csr_matvec_matches_dense(seed):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(1, 25)), int(rng.integers(1, 25))
    a = random_csr(rng, n, p, density=float(rng.uniform(0.1, 0.9)))
    u = rng.standard_normal(p)
    w = rng.standard_normal(n)
    d = a.toarray()
    np.testing.assert_allclose(matvec(a, u), d @ u, atol=1e-12)
    np.testing.assert_allclose(matvec_t(a, w), d.T @ w, atol=1e-12)


# --- centered Gram operator --------------------------------------------------


def test_centered_single_row_is_pure_ridge():
    x = CsrMatrix.from_rows([(np.array([0, 2]), np.array([0.6, 0.8]))], 3)
    op = CenteredGramOperator(x, ridge=2.5)
    u = np.array([1.0, -1.0, 2.0])
    np.testing.assert_allclose(centered_apply(op, u), 2.5 * u, atol=1e-12)


def test_centered_zero_matrix_is_pure_ridge():
    x = CsrMatrix.from_rows([(np.array([], dtype=np.int64), np.array([]))] * 2, 3)
    op = CenteredGramOperator(x, ridge=0.5)
    u = np.array([3.0, 1.0, -2.0])
    np.testing.assert_allclose(centered_apply(op, u), 0.5 * u, atol=1e-12)


def test_centered_apply_vs_dense():
    rng = np.random.default_rng(2)
    x = random_csr(rng, 30, 12)
    op = CenteredGramOperator(x, ridge=0.7)
    a = dense_centered_gram(x.toarray(), 0.7)
    for _ in range(20):
        u = rng.standard_normal(12)
        np.testing.assert_allclose(centered_apply(op, u), a @ u, atol=1e-10)


@given(st.integers(0, 2**31 - 1))
def test_centered_operator_symmetric_positive_definite(seed):
    rng = np.random.default_rng(seed)
    n, p = int(rng.integers(2, 20)), int(rng.integers(2, 15))
    ridge = float(rng.uniform(0.05, 5.0))
    op = CenteredGramOperator(random_csr(rng, n, p), ridge)
    u = rng.standard_normal(p)
    v = rng.standard_normal(p)
    assert abs(u @ op(v) - v @ op(u)) <= 1e-9 * (1 + abs(u @ op(v)))
    quad = u @ op(u)
    assert quad >= ridge * (u @ u) - 1e-9


# --- conjugate gradient ------------------------------------------------------


def test_cg_diagonal_solve():
    res = conjugate_gradient(lambda v: 2.0 * v, np.array([4.0, 6.0]), TIGHT)
    np.testing.assert_allclose(res.x, [2.0, 3.0], atol=1e-12)
    assert res.converged


def test_cg_zero_rhs_short_circuits():
    res = conjugate_gradient(lambda v: 2.0 * v, np.zeros(3), TIGHT)
    np.testing.assert_array_equal(res.x, np.zeros(3))
    assert res.iterations == 0
    assert res.converged


def test_cg_random_spd_vs_dense():
    rng = np.random.default_rng(3)
    m = rng.standard_normal((25, 25))
    a = m @ m.T + 25 * np.eye(25)
    b = rng.standard_normal(25)
    tol = SolverTolerances(cg_eps=1e-8, cg_max_iter=500, eig_eps=0.1, eig_max_iter=10)
    res = conjugate_gradient(lambda v: a @ v, b, tol)
    exact = np.linalg.solve(a, b)
    assert np.linalg.norm(res.x - exact) <= 1e-6 * np.linalg.norm(exact)
    assert res.converged
    assert res.residual <= 1e-8


def test_cg_truncation_returns_best_iterate():
    rng = np.random.default_rng(4)
    m = rng.standard_normal((40, 40))
    a = m @ m.T + 1e-6 * np.eye(40)  # ill conditioned on purpose
    b = rng.standard_normal(40)
    tol = SolverTolerances(cg_eps=1e-14, cg_max_iter=3, eig_eps=0.1, eig_max_iter=10)
    res = conjugate_gradient(lambda v: a @ v, b, tol)
    assert not res.converged
    assert np.isfinite(res.residual)


def test_cg_nonfinite_apply_raises():
    def bad(v):
        return np.full_like(v, np.nan)

    with pytest.raises(NumericalBreakdownError):
        conjugate_gradient(bad, np.array([1.0, 2.0]), TIGHT)


def test_cg_indefinite_operator_raises():
    with pytest.raises(NumericalBreakdownError):
        conjugate_gradient(lambda v: -v, np.array([1.0, 1.0]), TIGHT)


@given(st.integers(0, 2**31 - 1))
def test_cg_solves_random_spd(seed):
    rng = np.random.default_rng(seed)
    p = int(rng.integers(1, 20))
    m = rng.standard_normal((p, p))
    a = m @ m.T + p * np.eye(p)
    b = rng.standard_normal(p)
    res = conjugate_gradient(lambda v: a @ v, b, TIGHT)
    assert np.linalg.norm(a @ res.x - b) <= 1e-7 * max(1.0, np.linalg.norm(b))


# --- Woodbury block solve ----------------------------------------------------


def blocked_csr(rng, n, blocks, p):
    rows = []
    for i in range(n):
        lo, hi = blocks[i % len(blocks)]
        width = hi - lo
        nnz = max(1, int(rng.binomial(width, 0.5)))
        idx = lo + np.sort(rng.choice(width, size=nnz, replace=False)).astype(np.int64)
        vals = rng.random(nnz) + 0.1
        rows.append((idx, vals / np.linalg.norm(vals)))
    return CsrMatrix.from_rows(rows, p)


def test_block_solve_single_block_matches_cg():
    rng = np.random.default_rng(5)
    x = random_csr(rng, 25, 10)
    op = CenteredGramOperator(x, ridge=0.3)
    rhs = rng.standard_normal(10)
    via_blocks = block_solve(op, [(0, 10)], rhs, TIGHT)
    via_cg = conjugate_gradient(op, rhs, TIGHT).x
    np.testing.assert_allclose(via_blocks, via_cg, atol=1e-8)


def test_block_solve_two_blocks_vs_dense_inverse():
    rng = np.random.default_rng(6)
    blocks = [(0, 7), (7, 16)]
    x = blocked_csr(rng, 30, blocks, 16)
    op = CenteredGramOperator(x, ridge=0.8)
    a = dense_centered_gram(x.toarray(), 0.8)
    for _ in range(5):
        rhs = rng.standard_normal(16)
        exact = np.linalg.solve(a, rhs)
        got = block_solve(op, blocks, rhs, TIGHT)
        assert np.linalg.norm(got - exact) <= 1e-8 * np.linalg.norm(exact)


def test_block_solve_zero_rhs():
    rng = np.random.default_rng(7)
    x = random_csr(rng, 10, 6)
    op = CenteredGramOperator(x, ridge=1.0)
    np.testing.assert_array_equal(block_solve(op, [(0, 6)], np.zeros(6), TIGHT), np.zeros(6))


def test_block_solve_rejects_row_spanning_blocks():
    x = CsrMatrix.from_rows([(np.array([0, 3]), np.array([1.0, 1.0]))], 4)
    op = CenteredGramOperator(x, ridge=1.0)
    with pytest.raises(ValueError):
        block_solve(op, [(0, 2), (2, 4)], np.ones(4), TIGHT)


def test_block_solve_rejects_gapped_blocks():
    rng = np.random.default_rng(8)
    x = random_csr(rng, 5, 6)
    op = CenteredGramOperator(x, ridge=1.0)
    with pytest.raises(ValueError):
        block_solve(op, [(0, 2), (3, 6)], np.ones(6), TIGHT)


@given(st.integers(0, 2**31 - 1))
def test_block_solve_matches_dense(seed):
    rng = np.random.default_rng(seed)
    p1, p2 = int(rng.integers(2, 8)), int(rng.integers(2, 8))
    blocks = [(0, p1), (p1, p1 + p2)]
    n = int(rng.integers(4, 25))
    x = blocked_csr(rng, n, blocks, p1 + p2)
    ridge = float(rng.uniform(0.1, 3.0))
    op = CenteredGramOperator(x, ridge)
    rhs = rng.standard_normal(p1 + p2)
    exact = np.linalg.solve(dense_centered_gram(x.toarray(), ridge), rhs)
    got = block_solve(op, blocks, rhs, TIGHT)
    assert np.linalg.norm(got - exact) <= 1e-7 * max(1.0, np.linalg.norm(exact))


# --- eigensolver -------------------------------------------------------------


def test_eigensolve_diagonal():
    d = np.array([3.0, 2.0, 1.0])
    res = eigensolve_topk(lambda v: d * v, dim=3, rank=2, tol=TIGHT, seed=0)
    np.testing.assert_allclose(res.values, [3.0, 2.0], atol=1e-9)
    # eigenvectors defined up to sign
    assert abs(res.vectors[0, 0]) == pytest.approx(1.0, abs=1e-6)
    assert abs(res.vectors[1, 1]) == pytest.approx(1.0, abs=1e-6)


def test_eigensolve_identity_degenerate_spectrum():
    res = eigensolve_topk(lambda v: v.copy(), dim=4, rank=2, tol=TIGHT, seed=1)
    np.testing.assert_allclose(res.values, [1.0, 1.0], atol=1e-9)
    gram = res.vectors.T @ res.vectors
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-9)


def test_eigensolve_repeated_leading_eigenvalue_subspace():
    d = np.array([5.0, 5.0, 1.0, 0.5, 0.2])
    res = eigensolve_topk(lambda v: d * v, dim=5, rank=2, tol=TIGHT, seed=2)
    np.testing.assert_allclose(res.values, [5.0, 5.0], atol=1e-8)
    target = np.eye(5)[:, :2]
    angles = scipy.linalg.subspace_angles(res.vectors, target)
    assert angles.max() <= 1e-6


def test_eigensolve_random_psd_vs_dense():
    rng = np.random.default_rng(9)
    q, _ = np.linalg.qr(rng.standard_normal((40, 40)))
    vals = np.concatenate([np.linspace(10.0, 6.0, 5), np.linspace(1.0, 0.01, 35)])
    a = (q * vals) @ q.T
    res = eigensolve_topk(lambda v: a @ v, dim=40, rank=5, tol=TIGHT, seed=3)
    dense_vals = np.linalg.eigvalsh(a)[::-1][:5]
    np.testing.assert_allclose(res.values, dense_vals, rtol=1e-6)
    angles = scipy.linalg.subspace_angles(res.vectors, q[:, :5])
    assert angles.max() <= 1e-5


def test_eigensolve_values_nonincreasing_and_orthonormal():
    rng = np.random.default_rng(10)
    m = rng.standard_normal((30, 30))
    a = m @ m.T
    res = eigensolve_topk(lambda v: a @ v, dim=30, rank=6, tol=TIGHT, seed=4)
    assert np.all(np.diff(res.values) <= 1e-9)
    np.testing.assert_allclose(res.vectors.T @ res.vectors, np.eye(6), atol=1e-8)


def test_eigensolve_rank_exceeds_dim():
    with pytest.raises(ValueError):
        eigensolve_topk(lambda v: v, dim=3, rank=4, tol=TIGHT, seed=0)


def test_eigensolve_deterministic():
    rng = np.random.default_rng(11)
    m = rng.standard_normal((20, 20))
    a = m @ m.T
    r1 = eigensolve_topk(lambda v: a @ v, dim=20, rank=3, tol=TIGHT, seed=7)
    r2 = eigensolve_topk(lambda v: a @ v, dim=20, rank=3, tol=TIGHT, seed=7)
    np.testing.assert_array_equal(r1.vectors, r2.vectors)
    np.testing.assert_array_equal(r1.values, r2.values)


@given(st.integers(0, 2**31 - 1))
def test_eigensolve_matches_dense_spectrum(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(3, 20))
    rank = int(rng.integers(1, dim))
    m = rng.standard_normal((dim, dim))
    a = m @ m.T + 0.1 * np.eye(dim)
    res = eigensolve_topk(lambda v: a @ v, dim=dim, rank=rank, tol=TIGHT, seed=0)
    dense_vals = np.linalg.eigvalsh(a)[::-1][:rank]
    np.testing.assert_allclose(res.values, dense_vals, rtol=1e-6, atol=1e-8)
