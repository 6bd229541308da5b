import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from sar_despeckler.exceptions import DimensionMismatchError, InvalidParameterError
from sar_despeckler.sparse import (
    SparseMatrix,
    assemble_rhs,
    assemble_system,
    build_gradient_ops,
    dump_matrix_market,
    signs_from_gradient,
    spmv,
    spmv_transpose,
    weights_from_gradient,
)


def random_sparse(rng, rows, cols, density=0.4):
    return SparseMatrix.from_scipy(sp.random(rows, cols, density=density, random_state=rng, format="csr"))


# ===================================================================
# CSR container and products
# ===================================================================

def test_csr_rejects_unsorted_columns():
    with pytest.raises(DimensionMismatchError):
        SparseMatrix(rows=1, cols=3, row_offsets=[0, 2], col_indices=[2, 0], values=[1.0, 2.0])
    with pytest.raises(DimensionMismatchError):
        SparseMatrix(rows=1, cols=2, row_offsets=[0, 1], col_indices=[5], values=[1.0])


def test_spmv_matches_dense(rng):
    m = random_sparse(rng, 7, 5)
    v = rng.normal(size=5)
    np.testing.assert_allclose(spmv(m, v), m.to_dense() @ v, rtol=1e-14, atol=1e-14)


def test_spmv_rejects_wrong_length(rng):
    m = random_sparse(rng, 4, 4)
    with pytest.raises(DimensionMismatchError):
        spmv(m, np.ones(3))
    with pytest.raises(DimensionMismatchError):
        spmv_transpose(m, np.ones(5))


@pytest.mark.parametrize("seed", range(5))
def test_spmv_transpose_equals_explicit_transpose(seed):
    rng = np.random.default_rng(seed)
    m = random_sparse(rng, 5, 5, density=0.6)
    v = rng.normal(size=5)
    assert np.array_equal(spmv_transpose(m, v), spmv(m.transpose(), v))


def test_rectangular_transpose_product(rng):
    m = random_sparse(rng, 6, 3)
    v = rng.normal(size=6)
    np.testing.assert_allclose(spmv_transpose(m, v), m.to_dense().T @ v, rtol=1e-14, atol=1e-14)


# ===================================================================
# Gradient operators
# ===================================================================

def test_gradient_ops_on_3x2():
    ops = build_gradient_ops(3, 2)
    v = np.array([1.0, 4.0, 9.0, 2.0, 2.0, 7.0])
    assert spmv(ops.cx, v).tolist() == [3.0, 5.0, 0.0, 0.0, 5.0, 0.0]
    assert spmv(ops.cy, v).tolist() == [1.0, -2.0, -2.0, 0.0, 0.0, 0.0]


def test_gradient_boundary_rows_are_empty():
    ops = build_gradient_ops(4, 3)
    assert ops.cx.row_nnz().tolist() == [2, 2, 2, 0] * 3
    assert ops.cy.row_nnz().tolist() == [2] * 8 + [0] * 4
    assert ops.cx.shape == ops.cy.shape == (12, 12)


def test_gradient_of_constant_is_zero():
    ops = build_gradient_ops(5, 4)
    assert not np.any(spmv(ops.cx, np.full(20, 3.7)))
    assert not np.any(spmv(ops.cy, np.full(20, 3.7)))


def test_gradient_ops_single_pixel():
    ops = build_gradient_ops(1, 1)
    assert ops.cx.nnz == 0 and ops.cy.nnz == 0


def test_gradient_ops_reject_empty_grid():
    with pytest.raises(InvalidParameterError):
        build_gradient_ops(0, 3)


def test_weights_and_signs():
    d = np.array([-2.0, 0.0, 0.5])
    np.testing.assert_allclose(weights_from_gradient(d, 0.5), [0.4, 2.0, 1.0])
    assert signs_from_gradient(d).tolist() == [-1.0, 0.0, 1.0]
    with pytest.raises(InvalidParameterError):
        weights_from_gradient(d, 0.0)


# ===================================================================
# System assembly
# ===================================================================

def reference_system(ops, wx, wy, lam, alpha):
    cx = ops.cx.to_scipy()
    cy = ops.cy.to_scipy()
    smooth = cx.T @ sp.diags(wx) @ cx + cy.T @ sp.diags(wy) @ cy
    return 2.0 * np.eye(ops.size) + lam * (1.0 - alpha) * smooth.toarray()


@pytest.mark.parametrize("seed", range(50))
def test_assembled_system_is_symmetric_and_dominates_2i(seed):
    rng = np.random.default_rng(seed)
    width, height = rng.integers(1, 7, size=2)
    ops = build_gradient_ops(int(width), int(height))
    wx = rng.uniform(0.01, 100.0, ops.size)
    wy = rng.uniform(0.01, 100.0, ops.size)
    lam, alpha = rng.uniform(0.1, 50.0), rng.uniform(0.0, 0.99)

    a = assemble_system(ops, wx, wy, lam, alpha)
    assert a.is_symmetric()
    np.testing.assert_allclose(a.to_dense(), reference_system(ops, wx, wy, lam, alpha), rtol=1e-12, atol=1e-12)
    for _ in range(100):
        x = rng.normal(size=ops.size)
        assert x @ spmv(a, x) >= 2.0 * (x @ x) * (1 - 1e-12)


def test_system_is_twice_identity_at_alpha_one(rng):
    ops = build_gradient_ops(6, 5)
    a = assemble_system(ops, rng.uniform(1, 2, 30), rng.uniform(1, 2, 30), lam=10.0, alpha=1.0)
    assert a.nnz == 30
    assert np.array_equal(a.col_indices, np.arange(30))
    assert np.all(a.values == 2.0)


def test_system_on_random_4x4_equals_transpose(rng):
    ops = build_gradient_ops(4, 4)
    d = rng.normal(size=16)
    w = weights_from_gradient(d, 1e-3)
    a = assemble_system(ops, w, w[::-1].copy(), lam=3.0, alpha=0.5)
    t = a.transpose()
    assert np.array_equal(a.to_dense(), t.to_dense())


def transposed_order(width, height):
    # entry q holds the original row-major index of pixel q in the transposed grid
    return np.arange(width * height).reshape(height, width).T.ravel()


@pytest.mark.parametrize("width, height", [(5, 7), (6, 6), (1, 4)])
def test_system_and_spmv_commute_with_transposition(width, height):
    rng = np.random.default_rng(10 * width + height)
    n = width * height
    perm = transposed_order(width, height)
    wx, wy = rng.uniform(0.1, 10.0, n), rng.uniform(0.1, 10.0, n)

    a = assemble_system(build_gradient_ops(width, height), wx, wy, lam=3.0, alpha=0.4)
    a_t = assemble_system(build_gradient_ops(height, width), wy[perm], wx[perm], lam=3.0, alpha=0.4)
    assert np.array_equal(a_t.to_dense(), a.to_dense()[np.ix_(perm, perm)])

    v = rng.normal(size=n)
    assert np.array_equal(spmv(a_t, v[perm]), spmv(a, v)[perm])


def test_system_is_five_point():
    ops = build_gradient_ops(5, 5)
    a = assemble_system(ops, np.ones(25), np.ones(25), lam=1.0, alpha=0.0)
    assert a.row_nnz().max() == 5
    assert a.row_nnz()[12] == 5
    assert a.row_nnz()[0] == 3


@pytest.mark.parametrize(
    "kwargs",
    [{"lam": 0.0, "alpha": 0.5}, {"lam": 1.0, "alpha": 1.5}, {"lam": 1.0, "alpha": -0.1}],
)
def test_assemble_rejects_bad_parameters(kwargs):
    ops = build_gradient_ops(3, 3)
    with pytest.raises(InvalidParameterError):
        assemble_system(ops, np.ones(9), np.ones(9), **kwargs)


def test_assemble_rejects_nonpositive_weights_and_bad_lengths():
    ops = build_gradient_ops(3, 3)
    w = np.ones(9)
    w[4] = 0.0
    with pytest.raises(InvalidParameterError):
        assemble_system(ops, w, np.ones(9), lam=1.0, alpha=0.5)
    with pytest.raises(DimensionMismatchError):
        assemble_system(ops, np.ones(8), np.ones(9), lam=1.0, alpha=0.5)


def test_rhs_matches_formula(rng):
    ops = build_gradient_ops(4, 3)
    v_g, v_fhat = rng.normal(size=12), rng.normal(size=12)
    sx = signs_from_gradient(spmv(ops.cx, v_fhat))
    sy = signs_from_gradient(spmv(ops.cy, v_fhat))
    b = assemble_rhs(v_g, v_fhat, ops, sx, sy, lam=4.0, alpha=0.25)
    expected = v_g + v_fhat - 4.0 * 0.125 * (ops.cx.to_dense().T @ sx + ops.cy.to_dense().T @ sy)
    np.testing.assert_allclose(b, expected, rtol=1e-14, atol=1e-14)
    assert np.array_equal(assemble_rhs(v_g, v_fhat, ops, sx, sy, lam=4.0, alpha=0.0), v_g + v_fhat)


def test_dump_matrix_market(tmp_path):
    ops = build_gradient_ops(3, 3)
    a = assemble_system(ops, np.full(9, 0.3), np.full(9, 1.7), lam=2.0, alpha=0.5)
    path = dump_matrix_market(a, tmp_path / "system", comment="test system")
    assert path.suffix == ".mtx"
    back = scipy.io.mmread(str(path))
    assert np.array_equal(back.toarray(), a.to_dense())
