"""Desk-scale quality, conditioning and timing checks; run with -m slow."""
import time

import numpy as np
import pytest

from sar_despeckler.despeckle import DespeckleParams, run_despeckle
from sar_despeckler.image_core import Image
from sar_despeckler.simulation import PhantomSpec, SpeckleSpec, apply_speckle, generate_phantom, snr_db, ssim
from sar_despeckler.solver import SolverConfig

pytestmark = pytest.mark.slow


def best_scores(clean, speckled, alpha, lambdas, epsilon):
    best_snr, best_ssim = -np.inf, -np.inf
    for lam in lambdas:
        result, _ = run_despeckle(speckled, DespeckleParams(lam=lam, epsilon=epsilon, alpha=alpha))
        best_snr = max(best_snr, snr_db(clean, result))
        best_ssim = max(best_ssim, ssim(clean, result))
    return best_snr, best_ssim


def test_quality_sweep_on_shapes_phantom():
    clean = generate_phantom(PhantomSpec(kind="shapes", size=256, seed=42))
    speckled = apply_speckle(clean, SpeckleSpec(looks=1, seed=42))
    lambdas = np.linspace(10, 400, 20)

    ql_snr, ql_ssim = best_scores(clean, speckled, 0.5, lambdas, 1e-4)
    _, sdd_ssim = best_scores(clean, speckled, 0.0, lambdas, 1e-4)

    assert ql_snr >= snr_db(clean, speckled) + 6.0
    assert ql_ssim >= ssim(clean, speckled) + 0.15
    assert ql_ssim >= sdd_ssim - 0.005


def test_ql_needs_no_more_pcg_work_at_small_epsilon():
    wins = 0
    for seed in range(5):
        clean = generate_phantom(PhantomSpec(kind="shapes", size=128, seed=seed))
        speckled = apply_speckle(clean, SpeckleSpec(looks=1, seed=seed))
        _, ql = run_despeckle(speckled, DespeckleParams(epsilon=1e-5, alpha=0.5))
        _, sdd = run_despeckle(speckled, DespeckleParams(epsilon=1e-5, alpha=0.0))
        wins += ql.total_pcg_iterations <= sdd.total_pcg_iterations
    assert wins >= 4


def test_512_despeckle_within_two_seconds():
    speckled = apply_speckle(generate_phantom(PhantomSpec(size=512, seed=1)), SpeckleSpec(looks=1, seed=1))
    # compile kernels first
    run_despeckle(Image.from_array(np.arange(16.0).reshape(4, 4)), DespeckleParams(n_max=1))

    start = time.perf_counter()
    run_despeckle(speckled, DespeckleParams(epsilon=1e-1))
    assert time.perf_counter() - start <= 2.0


def test_transposed_input_gives_the_transposed_result():
    clean = generate_phantom(PhantomSpec(size=32, seed=4))
    g = apply_speckle(clean, SpeckleSpec(looks=1, seed=4))
    params = DespeckleParams(solver=SolverConfig(tol=1e-11, max_iters=3000))
    f, _ = run_despeckle(g, params)
    f_t, _ = run_despeckle(g.transpose(), params)
    assert np.array_equal(f_t.transpose().pixels, f.pixels)


def test_transpose_is_bit_exact_on_a_256_phantom_at_defaults():
    g = apply_speckle(generate_phantom(PhantomSpec(size=256, seed=9)), SpeckleSpec(looks=1, seed=9))
    f, _ = run_despeckle(g)
    f_t, _ = run_despeckle(g.transpose())
    assert np.array_equal(f_t.transpose().pixels, f.pixels)
