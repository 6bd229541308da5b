import logging
import math

import numpy as np
import pytest
from pydantic import ValidationError

from sar_despeckler.despeckle import DespeckleParams, build_iteration_system, gradient_ops_for
from sar_despeckler.exceptions import (
    DenseSolveCapError,
    FactorizationError,
    NotSymmetricError,
    SolverBreakdownError,
)
from sar_despeckler.solver import SolverConfig, dense_solve, exact_dot, exact_norm, incomplete_cholesky, pcg_solve
from sar_despeckler.sparse import SparseMatrix, assemble_system, build_gradient_ops, spmv


def tridiagonal(n=5):
    return SparseMatrix.from_dense(4.0 * np.eye(n) - np.eye(n, k=1) - np.eye(n, k=-1))


def despeckle_system(image, epsilon=1e-2, alpha=0.5, lam=100.0):
    params = DespeckleParams(lam=lam, epsilon=epsilon, alpha=alpha)
    ops = gradient_ops_for(image.width, image.height)
    return build_iteration_system(ops, image.pixels, image.pixels.copy(), params)


def test_solver_config_defaults_and_bounds():
    cfg = SolverConfig()
    assert (cfg.tol, cfg.max_iters, cfg.preconditioner) == (1e-2, 100, "ic0")
    with pytest.raises(ValidationError):
        SolverConfig(tol=1.0)
    with pytest.raises(ValidationError):
        SolverConfig(max_iters=0)


# ===================================================================
# IC(0)
# ===================================================================

def test_ic0_is_exact_on_tridiagonal():
    a = tridiagonal()
    ic = incomplete_cholesky(a)
    lower = ic.factor.to_dense()
    assert ic.shift == 0.0
    np.testing.assert_allclose(lower @ lower.T, a.to_dense(), rtol=1e-14, atol=1e-14)


def test_ic0_keeps_the_lower_pattern(small_speckled):
    a = despeckle_system(small_speckled).a
    ic = incomplete_cholesky(a)
    lower = a.lower_triangle()
    assert np.array_equal(ic.factor.row_offsets, lower.row_offsets)
    assert np.array_equal(ic.factor.col_indices, lower.col_indices)


def test_ic0_apply_inverts_exact_factor(rng):
    a = tridiagonal(8)
    r = rng.normal(size=8)
    np.testing.assert_allclose(spmv(a, incomplete_cholesky(a).apply(r)), r, rtol=1e-12, atol=1e-12)


def test_ic0_rejects_nonsymmetric():
    with pytest.raises(NotSymmetricError):
        incomplete_cholesky(SparseMatrix.from_dense(np.array([[2.0, 1.0], [0.0, 2.0]])))


def test_ic0_rejects_nonpositive_diagonal():
    with pytest.raises(FactorizationError):
        incomplete_cholesky(SparseMatrix.from_dense(np.array([[0.0, 1.0], [1.0, 2.0]])))


def test_ic0_shift_fallback(caplog):
    # pivot 1 - 4 < 0 until (1 + beta)^2 > 4
    a = SparseMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with caplog.at_level(logging.WARNING):
        ic = incomplete_cholesky(a)
    assert ic.shift == pytest.approx(1e-3 * 2 ** 10)
    assert "diagonal shift" in caplog.text


def test_ic0_gives_up_after_retries():
    a = SparseMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(FactorizationError, match="2 shift retries"):
        incomplete_cholesky(a, SolverConfig(ic_max_retries=2))


def test_ic0_zero_initial_shift_fails_without_repeating(caplog):
    a = SparseMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with caplog.at_level(logging.DEBUG, logger="sar_despeckler.solver"):
        with pytest.raises(FactorizationError, match="0 shift retries"):
            incomplete_cholesky(a, SolverConfig(ic_shift_initial=0.0))
    assert caplog.text.count("pivot failed") == 1


@pytest.mark.parametrize("width, height", [(5, 7), (6, 6)])
def test_ic0_commutes_with_transposition(width, height):
    rng = np.random.default_rng(width + height)
    n = width * height
    perm = np.arange(n).reshape(height, width).T.ravel()
    wx, wy = rng.uniform(0.1, 10.0, n), rng.uniform(0.1, 10.0, n)
    a = assemble_system(build_gradient_ops(width, height), wx, wy, lam=5.0, alpha=0.3)
    a_t = assemble_system(build_gradient_ops(height, width), wy[perm], wx[perm], lam=5.0, alpha=0.3)
    r = rng.normal(size=n)
    assert np.array_equal(incomplete_cholesky(a_t).apply(r[perm]), incomplete_cholesky(a).apply(r)[perm])


def test_ic0_of_scaled_identity():
    ic = incomplete_cholesky(SparseMatrix.identity(6, scale=4.0))
    assert np.array_equal(ic.factor.to_dense(), 2.0 * np.eye(6))


def test_ic0_two_by_two_factor():
    ic = incomplete_cholesky(SparseMatrix.from_dense(np.array([[3.0, -1.0], [-1.0, 3.0]])))
    expected = np.array([[math.sqrt(3.0), 0.0], [-1.0 / math.sqrt(3.0), math.sqrt(8.0 / 3.0)]])
    np.testing.assert_allclose(ic.factor.to_dense(), expected, rtol=1e-14, atol=0)


# ===================================================================
# Order-independent reductions
# ===================================================================

@pytest.mark.parametrize("seed", range(5))
def test_exact_dot_ignores_element_order(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=1000) * 10.0 ** rng.integers(-8, 8, 1000)
    y = rng.normal(size=1000)
    perm = rng.permutation(1000)
    value = exact_dot(x, y)
    assert value == math.fsum(x * y)
    assert exact_dot(x[perm], y[perm]) == value
    assert exact_dot(x[::-1], y[::-1]) == value


def test_exact_dot_survives_cancellation():
    x = np.array([1e16, 1.0, -1e16, 1e-3])
    assert exact_dot(x, np.ones(4)) == 1.0 + 1e-3
    assert exact_dot(np.zeros(3), np.ones(3)) == 0.0
    assert exact_norm(np.array([3.0, 4.0])) == 5.0


# ===================================================================
# PCG
# ===================================================================

def test_pcg_two_by_two():
    a = SparseMatrix.from_dense(np.array([[3.0, -1.0], [-1.0, 3.0]]))
    outcome = pcg_solve(a, np.array([2.0, 2.0]), cfg=SolverConfig(tol=1e-12))
    assert outcome.converged
    np.testing.assert_allclose(outcome.x, [1.0, 1.0], rtol=1e-12)


def test_pcg_zero_rhs_returns_zero():
    outcome = pcg_solve(tridiagonal(), np.zeros(5), x0=np.ones(5))
    assert outcome.converged and outcome.iterations == 0
    assert not np.any(outcome.x)


def test_pcg_exact_start_takes_no_iterations():
    a = tridiagonal()
    x = np.arange(5.0)
    outcome = pcg_solve(a, spmv(a, x), x0=x)
    assert outcome.iterations == 0 and outcome.converged


def test_pcg_reports_budget_exhaustion(small_speckled):
    system = despeckle_system(small_speckled, epsilon=1e-5)
    outcome = pcg_solve(system.a, system.b, cfg=SolverConfig(tol=1e-12, max_iters=2, preconditioner="none"))
    assert outcome.iterations == 2
    assert not outcome.converged
    assert outcome.final_relative_residual > 1e-12


@pytest.mark.parametrize("preconditioner", ["ic0", "none"])
def test_pcg_converged_means_true_residual_below_tol(small_speckled, preconditioner):
    system = despeckle_system(small_speckled)
    cfg = SolverConfig(tol=1e-6, max_iters=500, preconditioner=preconditioner)
    precond = incomplete_cholesky(system.a) if preconditioner == "ic0" else None
    outcome = pcg_solve(system.a, system.b, precond=precond, cfg=cfg)
    true_rel = np.linalg.norm(system.b - spmv(system.a, outcome.x)) / np.linalg.norm(system.b)
    assert outcome.converged
    assert true_rel <= cfg.tol
    assert outcome.iterations <= cfg.max_iters


def test_pcg_callback_sees_every_iteration():
    seen = []
    outcome = pcg_solve(tridiagonal(6), np.ones(6), cfg=SolverConfig(tol=1e-10), callback=seen.append)
    assert len(seen) == outcome.iterations > 0


@pytest.mark.parametrize("preconditioner", ["ic0", "none"])
def test_pcg_error_shrinks_in_the_energy_norm(make_speckled, preconditioner):
    system = despeckle_system(make_speckled(16, seed=2), epsilon=1e-3)
    exact = dense_solve(system.a, system.b)
    iterates = []
    precond = incomplete_cholesky(system.a) if preconditioner == "ic0" else None
    pcg_solve(system.a, system.b, precond=precond, callback=lambda x: iterates.append(x.copy()),
              cfg=SolverConfig(tol=1e-8, max_iters=1000, preconditioner=preconditioner))

    def energy(x):
        e = x - exact
        return math.sqrt(e @ spmv(system.a, e))

    errors = [energy(np.zeros(system.b.size))] + [energy(x) for x in iterates]
    assert len(errors) > 2
    for before, after in zip(errors, errors[1:]):
        assert after <= before * (1 + 1e-9) + 1e-12 * errors[0]


def test_pcg_detects_indefinite_matrix():
    a = SparseMatrix.from_dense(np.array([[1.0, 0.0], [0.0, -1.0]]))
    with pytest.raises(SolverBreakdownError):
        pcg_solve(a, np.array([1.0, 1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_pcg_matches_dense_oracle(make_speckled, seed):
    system = despeckle_system(make_speckled(16, seed=seed))
    cfg = SolverConfig(tol=1e-11, max_iters=2000)
    outcome = pcg_solve(system.a, system.b, precond=incomplete_cholesky(system.a), cfg=cfg)
    reference = dense_solve(system.a, system.b)
    assert np.linalg.norm(outcome.x - reference) <= 1e-6 * np.linalg.norm(reference)


def test_preconditioning_never_needs_more_iterations(make_speckled):
    for seed in range(5):
        system = despeckle_system(make_speckled(32, seed=seed), epsilon=1e-5)
        cfg = SolverConfig(tol=1e-2, max_iters=5000)
        with_ic = pcg_solve(system.a, system.b, precond=incomplete_cholesky(system.a), cfg=cfg)
        plain = pcg_solve(system.a, system.b, cfg=cfg)
        assert with_ic.iterations <= plain.iterations


# ===================================================================
# Dense oracle
# ===================================================================

def test_dense_solve_random_spd(rng):
    m = rng.normal(size=(20, 20))
    a = SparseMatrix.from_dense(m.T @ m + np.eye(20))
    b = rng.normal(size=20)
    x = dense_solve(a, b)
    assert np.linalg.norm(b - spmv(a, x)) / np.linalg.norm(b) <= 1e-10


def test_dense_solve_cap_and_non_spd():
    with pytest.raises(DenseSolveCapError):
        dense_solve(SparseMatrix.identity(10), np.ones(10), cap=9)
    with pytest.raises(FactorizationError):
        dense_solve(SparseMatrix.from_dense(np.array([[1.0, 2.0], [2.0, 1.0]])), np.ones(2))
