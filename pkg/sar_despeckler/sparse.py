"""
CSR sparse matrices, forward-difference gradient operators and the
per-iteration linear system of the QL despeckling scheme.

Pixel vectors are row-major flattenings of the image, so the x-derivative
couples p and p+1 and the y-derivative couples p and p+width. Rows of the
gradient operators that would reach past the right (resp. bottom) border
are all-zero, which keeps every operator N x N.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Union

import numpy as np
import scipy.io
import scipy.sparse as sp
from numba import njit

from sar_despeckler.exceptions import DimensionMismatchError, InvalidParameterError

logger = logging.getLogger(__name__)


_FAR = 1 << 62


@njit(cache=True, nogil=True)
def _csr_matvec(row_offsets, col_indices, values, v):
    # Off-diagonal terms at columns i - d and i + d are summed as a pair, pairs
    # are accumulated nearest first and the diagonal term is added last. On a
    # 5-point stencil each row is then two commutative pair sums, so swapping
    # the x and y axes of the grid gives bit-identical rows.
    n_rows = row_offsets.shape[0] - 1
    out = np.zeros(n_rows)
    for i in range(n_rows):
        start = row_offsets[i]
        end = row_offsets[i + 1]
        mid = start
        while mid < end and col_indices[mid] < i:
            mid += 1
        hi = mid
        diag_term = 0.0
        if hi < end and col_indices[hi] == i:
            diag_term = values[hi] * v[i]
            hi += 1
        lo = mid - 1

        acc = 0.0
        while lo >= start or hi < end:
            dl = i - col_indices[lo] if lo >= start else _FAR
            du = col_indices[hi] - i if hi < end else _FAR
            if dl == du:
                pair = values[lo] * v[col_indices[lo]] + values[hi] * v[col_indices[hi]]
                lo -= 1
                hi += 1
            elif dl < du:
                pair = values[lo] * v[col_indices[lo]]
                lo -= 1
            else:
                pair = values[hi] * v[col_indices[hi]]
                hi += 1
            acc += pair
        out[i] = diag_term + acc
    return out


@dataclass(frozen=True)
class SparseMatrix:
    """Immutable compressed-sparse-row matrix with sorted, unique column indices."""

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        row_offsets = np.ascontiguousarray(self.row_offsets, dtype=np.int64)
        col_indices = np.ascontiguousarray(self.col_indices, dtype=np.int64)
        values = np.ascontiguousarray(self.values, dtype=np.float64)

        if row_offsets.shape != (self.rows + 1,) or row_offsets[0] != 0:
            raise DimensionMismatchError("row_offsets must have length rows+1 and start at 0")
        if np.any(np.diff(row_offsets) < 0) or row_offsets[-1] != col_indices.size:
            raise DimensionMismatchError("row_offsets must be nondecreasing and end at nnz")
        if col_indices.size != values.size:
            raise DimensionMismatchError("col_indices and values differ in length")
        if col_indices.size:
            if col_indices.min() < 0 or col_indices.max() >= self.cols:
                raise DimensionMismatchError("column index out of range")
            # strictly increasing within each row
            row_of = np.repeat(np.arange(self.rows), np.diff(row_offsets))
            same_row = row_of[1:] == row_of[:-1]
            if np.any(np.diff(col_indices)[same_row] <= 0):
                raise DimensionMismatchError("column indices must be strictly increasing within a row")
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("sparse matrix holds non-finite values")

        for name, arr in (("row_offsets", row_offsets), ("col_indices", col_indices), ("values", values)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_scipy(cls, matrix: sp.spmatrix) -> "SparseMatrix":
        csr = sp.csr_matrix(matrix, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(
            rows=csr.shape[0],
            cols=csr.shape[1],
            row_offsets=csr.indptr,
            col_indices=csr.indices,
            values=csr.data,
        )

    @classmethod
    def from_dense(cls, dense: np.ndarray) -> "SparseMatrix":
        return cls.from_scipy(sp.csr_matrix(np.asarray(dense, dtype=np.float64)))

    @classmethod
    def identity(cls, n: int, scale: float = 1.0) -> "SparseMatrix":
        return cls.from_scipy(sp.identity(n, format="csr") * scale)

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix(
            (self.values.copy(), self.col_indices.copy(), self.row_offsets.copy()),
            shape=self.shape,
        )

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def transpose(self) -> "SparseMatrix":
        """Explicit transpose (a new CSR matrix)."""
        return SparseMatrix.from_scipy(self.to_scipy().T)

    @cached_property
    def _cached_transpose(self) -> "SparseMatrix":
        return self.transpose()

    def diagonal(self) -> np.ndarray:
        return self.to_scipy().diagonal()

    def lower_triangle(self) -> "SparseMatrix":
        """Lower triangle including the diagonal, same stored values."""
        return SparseMatrix.from_scipy(sp.tril(self.to_scipy(), format="csr"))

    def row_nnz(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    def is_symmetric(self) -> bool:
        """Exact pattern and value match with the explicit transpose."""
        if self.rows != self.cols:
            return False
        t = self.transpose()
        return (
            np.array_equal(self.row_offsets, t.row_offsets)
            and np.array_equal(self.col_indices, t.col_indices)
            and np.array_equal(self.values, t.values)
        )


def spmv(m: SparseMatrix, v: np.ndarray) -> np.ndarray:
    """Sparse matrix-vector product m @ v, each row summed symmetrically around its diagonal."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (m.cols,):
        raise DimensionMismatchError(f"spmv: vector length {v.shape} does not match {m.cols} columns")
    return _csr_matvec(m.row_offsets, m.col_indices, m.values, v)


def spmv_transpose(m: SparseMatrix, v: np.ndarray) -> np.ndarray:
    """m.T @ v through the transpose cached on m, bit-identical to spmv(m.transpose(), v)."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    if v.shape != (m.rows,):
        raise DimensionMismatchError(f"spmv_transpose: vector length {v.shape} does not match {m.rows} rows")
    t = m._cached_transpose
    return _csr_matvec(t.row_offsets, t.col_indices, t.values, v)


@dataclass(frozen=True)
class GradientOperators:
    """Forward-difference operators C_x, C_y for a width x height grid."""

    cx: SparseMatrix
    cy: SparseMatrix
    width: int
    height: int
    # True where the pixel has a right (x) / lower (y) neighbour
    x_mask: np.ndarray
    y_mask: np.ndarray

    @property
    def size(self) -> int:
        return self.width * self.height


def build_gradient_ops(width: int, height: int) -> GradientOperators:
    """
    Build C_x and C_y for a row-major image.

    Row p of C_x is {-1 at p, +1 at p+1} unless p sits in the last column;
    row p of C_y is {-1 at p, +1 at p+width} unless p sits in the last row.
    """
    if width < 1 or height < 1:
        raise InvalidParameterError(f"gradient operators need positive dimensions, got {width}x{height}")

    n = width * height
    p = np.arange(n)
    x_mask = (p % width) < width - 1
    y_mask = (p // width) < height - 1

    def forward_difference(mask: np.ndarray, offset: int) -> SparseMatrix:
        rows = p[mask]
        coo = sp.coo_matrix(
            (
                np.concatenate([-np.ones(rows.size), np.ones(rows.size)]),
                (np.concatenate([rows, rows]), np.concatenate([rows, rows + offset])),
            ),
            shape=(n, n),
        )
        return SparseMatrix.from_scipy(coo)

    x_mask.setflags(write=False)
    y_mask.setflags(write=False)
    return GradientOperators(
        cx=forward_difference(x_mask, 1),
        cy=forward_difference(y_mask, width),
        width=width,
        height=height,
        x_mask=x_mask,
        y_mask=y_mask,
    )


def weights_from_gradient(d: np.ndarray, epsilon: float) -> np.ndarray:
    """Elementwise 1 / (|d| + epsilon)."""
    if not epsilon > 0:
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon}")
    d = np.asarray(d, dtype=np.float64)
    return 1.0 / (np.abs(d) + epsilon)


def signs_from_gradient(d: np.ndarray) -> np.ndarray:
    """Elementwise signum with sgn(0) = 0."""
    return np.sign(np.asarray(d, dtype=np.float64))


def _check_length(n: int, **arrays: np.ndarray) -> None:
    for name, arr in arrays.items():
        if np.shape(arr) != (n,):
            raise DimensionMismatchError(f"{name} has shape {np.shape(arr)}, expected ({n},)")


def assemble_system(
    ops: GradientOperators,
    wx: np.ndarray,
    wy: np.ndarray,
    lam: float,
    alpha: float,
) -> SparseMatrix:
    """
    A = 2I + lam (1 - alpha) (C_x^T W_x C_x + C_y^T W_y C_y).

    The 5-point stencil is written directly from the edge weights: an x-edge
    (p, p+1) of weight w adds w to both diagonal entries and -w to both
    couplings, and likewise for y-edges (p, p+width). Entries that end up
    exactly zero (boundary edges, or every coupling when alpha == 1) are not
    stored.
    """
    n = ops.size
    _check_length(n, wx=wx, wy=wy)
    if not lam > 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"alpha must lie in [0, 1], got {alpha}")
    wx = np.asarray(wx, dtype=np.float64)
    wy = np.asarray(wy, dtype=np.float64)
    if np.any(wx <= 0) or np.any(wy <= 0):
        raise InvalidParameterError("weights must be strictly positive")

    scale = lam * (1.0 - alpha)
    ex = np.where(ops.x_mask, scale * wx, 0.0)
    ey = np.where(ops.y_mask, scale * wy, 0.0)
    w = ops.width

    # 2 + ((right + left) + (down + up)) so an x/y swap only commutes the sums
    ex_left = np.zeros(n)
    ex_left[1:] = ex[:-1]
    ey_up = np.zeros(n)
    ey_up[w:] = ey[:n - w]
    diag = 2.0 + ((ex + ex_left) + (ey + ey_up))

    p = np.arange(n)
    px = p[:-1]
    py = p[:n - w]
    rows = np.concatenate([p, px, px + 1, py, py + w])
    cols = np.concatenate([p, px + 1, px, py + w, py])
    vals = np.concatenate([diag, -ex[:-1], -ex[:-1], -ey[:n - w], -ey[:n - w]])

    a = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    a.eliminate_zeros()
    return SparseMatrix.from_scipy(a)


def assemble_rhs(
    v_g: np.ndarray,
    v_fhat: np.ndarray,
    ops: GradientOperators,
    sx: np.ndarray,
    sy: np.ndarray,
    lam: float,
    alpha: float,
) -> np.ndarray:
    """b = v_g + v_fhat - lam (alpha / 2) (C_x^T s_x + C_y^T s_y)."""
    n = ops.size
    _check_length(n, v_g=v_g, v_fhat=v_fhat, sx=sx, sy=sy)
    b = np.asarray(v_g, dtype=np.float64) + np.asarray(v_fhat, dtype=np.float64)
    if alpha == 0.0:
        return b
    linear = spmv_transpose(ops.cx, sx) + spmv_transpose(ops.cy, sy)
    return b - lam * (alpha / 2.0) * linear


def dump_matrix_market(m: SparseMatrix, path: Union[str, Path], comment: str = "") -> Path:
    """Write m in Matrix Market coordinate format for offline solver triage."""
    path = Path(path)
    if path.suffix != ".mtx":
        path = path.with_name(path.name + ".mtx")
    scipy.io.mmwrite(str(path), m.to_scipy(), comment=comment, field="real", precision=17)
    logger.debug("Wrote %dx%d matrix (%d nnz) to %s", m.rows, m.cols, m.nnz, path)
    return path
