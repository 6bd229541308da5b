"""
Linear solvers for the symmetric positive definite systems A v = b.

- ``incomplete_cholesky``: zero-fill IC(0) with a diagonal-shift fallback
- ``pcg_solve``: preconditioned conjugate gradient (IC(0) or none)
- ``dense_solve``: dense Cholesky, used as a correctness oracle on small systems
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Literal, Optional

import numpy as np
import scipy.linalg
from numba import njit
from pydantic import BaseModel, ConfigDict, Field

from sar_despeckler.config import settings
from sar_despeckler.exceptions import (
    DenseSolveCapError,
    DimensionMismatchError,
    FactorizationError,
    NotSymmetricError,
    SolverBreakdownError,
)
from sar_despeckler.sparse import SparseMatrix, spmv

logger = logging.getLogger(__name__)


class SolverConfig(BaseModel):
    """PCG settings. Defaults: 100 iterations, relative tolerance 1e-2."""

    model_config = ConfigDict(frozen=True)

    tol: float = Field(default=1e-2, gt=0, lt=1, description="relative residual ||b - Ax|| / ||b||")
    max_iters: int = Field(default=100, ge=1)
    preconditioner: Literal["ic0", "none"] = "ic0"
    ic_shift_initial: float = Field(default=1e-3, ge=0)
    ic_shift_growth: float = Field(default=2.0, gt=1)
    ic_max_retries: int = Field(default=settings.IC_MAX_RETRIES, ge=0)
    residual_replacement_interval: int = Field(default=settings.RESIDUAL_REPLACEMENT_INTERVAL, ge=1)


@dataclass(frozen=True)
class SolveOutcome:
    x: np.ndarray
    iterations: int
    final_relative_residual: float
    converged: bool
    ic_shift_used: float = 0.0


@njit(cache=True, nogil=True)
def _ic0_factor(row_offsets, col_indices, values, shift):
    # values is the lower triangle of A in CSR with the diagonal last in each row.
    # Returns the factor values and -1, or the index of the row whose pivot failed.
    # Updates are accumulated first and subtracted as one term: on a 5-point
    # stencil that is a sum of at most two products, unchanged by an x/y swap.
    n = row_offsets.shape[0] - 1
    lv = values.copy()
    for i in range(n):
        start = row_offsets[i]
        diag = row_offsets[i + 1] - 1
        for k in range(start, diag):
            j = col_indices[k]
            acc = 0.0
            a = start
            b = row_offsets[j]
            b_end = row_offsets[j + 1] - 1
            while a < k and b < b_end:
                ca = col_indices[a]
                cb = col_indices[b]
                if ca == cb:
                    acc += lv[a] * lv[b]
                    a += 1
                    b += 1
                elif ca < cb:
                    a += 1
                else:
                    b += 1
            lv[k] = (lv[k] - acc) / lv[b_end]
        acc = 0.0
        for k in range(start, diag):
            acc += lv[k] * lv[k]
        s = values[diag] * (1.0 + shift) - acc
        if not s > 0.0:
            return lv, i
        lv[diag] = np.sqrt(s)
    return lv, -1


@njit(cache=True, nogil=True)
def _ic0_apply(row_offsets, col_indices, lv, r):
    # z = (L L^T)^{-1} r: forward solve with L, then backward solve with L^T.
    # Both sweeps subtract one accumulated update per unknown.
    n = row_offsets.shape[0] - 1
    y = np.empty(n)
    for i in range(n):
        diag = row_offsets[i + 1] - 1
        acc = 0.0
        for k in range(row_offsets[i], diag):
            acc += lv[k] * y[col_indices[k]]
        y[i] = (r[i] - acc) / lv[diag]
    pending = np.zeros(n)
    for i in range(n - 1, -1, -1):
        diag = row_offsets[i + 1] - 1
        y[i] = (y[i] - pending[i]) / lv[diag]
        yi = y[i]
        for k in range(row_offsets[i], diag):
            pending[col_indices[k]] += lv[k] * yi
    return y


@njit(cache=True, nogil=True)
def _exact_dot(x, y):
    # Correctly rounded sum of the products x[i] * y[i] (the msum/fsum
    # expansion), so the result does not depend on the element order.
    partials = np.empty(64)
    count = 0
    for idx in range(x.shape[0]):
        t = x[idx] * y[idx]
        if not np.isfinite(t):
            return t
        i = 0
        for j in range(count):
            u = partials[j]
            if abs(t) < abs(u):
                t, u = u, t
            hi = t + u
            lo = u - (hi - t)
            if lo != 0.0:
                partials[i] = lo
                i += 1
            t = hi
        if not np.isfinite(t):
            return t
        if t != 0.0:
            partials[i] = t
            i += 1
        count = i

    if count == 0:
        return 0.0
    count -= 1
    hi = partials[count]
    lo = 0.0
    while count > 0:
        t = hi
        count -= 1
        u = partials[count]
        hi = t + u
        lo = u - (hi - t)
        if lo != 0.0:
            break
    # round half-way cases the way the remaining partials point
    if count > 0 and ((lo < 0.0 and partials[count - 1] < 0.0) or (lo > 0.0 and partials[count - 1] > 0.0)):
        u = lo * 2.0
        t = hi + u
        if u == t - hi:
            hi = t
    return hi


def exact_dot(x: np.ndarray, y: np.ndarray) -> float:
    """Dot product rounded once from the exact sum of the elementwise products."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DimensionMismatchError(f"exact_dot: shapes {x.shape} and {y.shape} differ")
    return float(_exact_dot(x, y))


def exact_norm(x: np.ndarray) -> float:
    """Euclidean norm from exact_dot(x, x); invariant under any permutation of x."""
    return float(np.sqrt(exact_dot(x, x)))


@dataclass(frozen=True)
class IncompleteCholesky:
    """Lower-triangular IC(0) factor L (pattern of tril(A)) and the shift it needed."""

    factor: SparseMatrix
    shift: float

    def apply(self, r: np.ndarray) -> np.ndarray:
        """Preconditioner application z = (L L^T)^{-1} r."""
        f = self.factor
        return _ic0_apply(f.row_offsets, f.col_indices, f.values, np.ascontiguousarray(r, dtype=np.float64))


def incomplete_cholesky(
    a: SparseMatrix,
    cfg: Optional[SolverConfig] = None,
    assume_symmetric: bool = False,
) -> IncompleteCholesky:
    """
    Zero-fill incomplete Cholesky factorization.

    If a pivot becomes non-positive the factorization is retried on
    A + beta * diag(A), beta starting at ``ic_shift_initial`` and multiplied by
    ``ic_shift_growth`` after each failure.

    Args:
        a: Symmetric matrix with strictly positive diagonal
        cfg: Solver settings (shift schedule)
        assume_symmetric: Skip the explicit-transpose symmetry check

    Returns:
        IncompleteCholesky holding L and the shift beta that succeeded
    """
    cfg = cfg or SolverConfig()
    if not assume_symmetric and not a.is_symmetric():
        raise NotSymmetricError("incomplete Cholesky needs a symmetric matrix")
    diag = a.diagonal()
    if np.any(diag <= 0):
        raise FactorizationError("incomplete Cholesky needs a strictly positive diagonal")

    lower = a.lower_triangle()
    shift = 0.0
    for attempt in range(cfg.ic_max_retries + 1):
        values, failed_row = _ic0_factor(lower.row_offsets, lower.col_indices, lower.values, shift)
        if failed_row < 0:
            if shift > 0:
                logger.warning("IC(0) needed diagonal shift %.3g after %d retries", shift, attempt)
            factor = SparseMatrix(
                rows=lower.rows,
                cols=lower.cols,
                row_offsets=lower.row_offsets,
                col_indices=lower.col_indices,
                values=values,
            )
            return IncompleteCholesky(factor=factor, shift=shift)
        logger.debug("IC(0) pivot failed at row %d with shift %.3g", failed_row, shift)
        last_shift = shift
        shift = cfg.ic_shift_initial if shift == 0.0 else shift * cfg.ic_shift_growth
        if shift == last_shift:
            # a zero ic_shift_initial never grows
            break

    raise FactorizationError(
        f"IC(0) failed after {attempt} shift retries (last shift {last_shift:.3g}); "
        "input looks pathological"
    )


def pcg_solve(
    a: SparseMatrix,
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    precond: Optional[IncompleteCholesky] = None,
    cfg: Optional[SolverConfig] = None,
    callback: Optional[Callable[[np.ndarray], None]] = None,
) -> SolveOutcome:
    """
    Preconditioned conjugate gradient for SPD ``a``.

    Convergence is ||b - A x|| / ||b|| <= cfg.tol, checked against the true
    residual. The recursive residual is replaced by the true one every
    ``residual_replacement_interval`` iterations.

    Args:
        a: SPD system matrix
        b: Right-hand side
        x0: Starting guess (zeros when None)
        precond: IC(0) factor; plain CG when None
        cfg: Tolerance and iteration budget
        callback: Called with the current iterate after every iteration

    Returns:
        SolveOutcome; hitting max_iters is reported, not raised
    """
    cfg = cfg or SolverConfig()
    n = a.rows
    if a.cols != n:
        raise DimensionMismatchError(f"PCG needs a square matrix, got {a.shape}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n,):
        raise DimensionMismatchError(f"right-hand side has shape {b.shape}, expected ({n},)")
    if x0 is None:
        x = np.zeros(n)
    else:
        x = np.array(x0, dtype=np.float64)
        if x.shape != (n,):
            raise DimensionMismatchError(f"x0 has shape {x.shape}, expected ({n},)")

    shift = precond.shift if precond is not None else 0.0
    b_norm = exact_norm(b)
    if b_norm == 0.0:
        return SolveOutcome(x=np.zeros(n), iterations=0, final_relative_residual=0.0, converged=True,
                            ic_shift_used=shift)
    if not np.isfinite(b_norm) or not np.all(np.isfinite(x)):
        raise SolverBreakdownError("PCG input contains NaN or infinity")

    def apply_precond(res: np.ndarray) -> np.ndarray:
        return precond.apply(res) if precond is not None else res.copy()

    r = b - spmv(a, x)
    rel = exact_norm(r) / b_norm
    iterations = 0
    if rel > cfg.tol:
        z = apply_precond(r)
        p = z.copy()
        rz = exact_dot(r, z)
        while iterations < cfg.max_iters:
            q = spmv(a, p)
            pq = exact_dot(p, q)
            if not np.isfinite(pq) or pq <= 0.0:
                raise SolverBreakdownError(f"PCG breakdown at iteration {iterations + 1}: p^T A p = {pq}")
            step = rz / pq
            x += step * p
            iterations += 1

            if iterations % cfg.residual_replacement_interval == 0:
                r = b - spmv(a, x)
            else:
                r -= step * q
            rel = exact_norm(r) / b_norm
            if not np.isfinite(rel):
                raise SolverBreakdownError(f"PCG produced NaN at iteration {iterations}")
            if callback is not None:
                callback(x)

            if rel <= cfg.tol:
                # confirm with the true residual before stopping
                r = b - spmv(a, x)
                rel = exact_norm(r) / b_norm
                if rel <= cfg.tol:
                    break

            z = apply_precond(r)
            rz_next = exact_dot(r, z)
            p = z + (rz_next / rz) * p
            rz = rz_next

        rel = exact_norm(b - spmv(a, x)) / b_norm

    converged = bool(rel <= cfg.tol)
    if not converged:
        logger.debug("PCG stopped after %d iterations at relative residual %.3e", iterations, rel)
    return SolveOutcome(
        x=x,
        iterations=iterations,
        final_relative_residual=float(rel),
        converged=converged,
        ic_shift_used=shift,
    )


def dense_solve(a: SparseMatrix, b: np.ndarray, cap: Optional[int] = None) -> np.ndarray:
    """
    Direct Cholesky solve of a small SPD system.

    Args:
        a: SPD matrix, at most ``cap`` rows
        b: Right-hand side
        cap: Size limit (settings.DENSE_SOLVE_CAP when None)

    Returns:
        Solution vector
    """
    cap = settings.DENSE_SOLVE_CAP if cap is None else cap
    n = a.rows
    if n > cap:
        raise DenseSolveCapError(f"dense solve limited to {cap} unknowns, got {n}")
    b = np.asarray(b, dtype=np.float64)
    if a.cols != n or b.shape != (n,):
        raise DimensionMismatchError(f"dense solve: matrix {a.shape} and right-hand side {b.shape} disagree")
    try:
        factor = scipy.linalg.cho_factor(a.to_dense(), lower=True, check_finite=True)
    except np.linalg.LinAlgError as e:
        raise FactorizationError(f"dense Cholesky failed, matrix is not SPD: {e}") from e
    return scipy.linalg.cho_solve(factor, b)
