import math

import numpy as np
import pytest

from conftest import random_spd
from g3m.kron_linalg import NearSingularError, kron
from g3m.simulate import (GeneratorSpec, SimConfig, dataset_rng, gen_ar1_precision,
                          gen_random_precision, gen_wishart_precision, heritability, make_dataset,
                          make_family_R, n_random_edges, normalize_variance, sample_dataset,
                          scale_snr, simulate, wishart_raw)


# -- relatedness -------------------------------------------------------------------

def test_family_R_two_by_two():
    R = make_family_R(2, 2, 0.5)
    block = np.array([[4 / 3, -2 / 3], [-2 / 3, 4 / 3]])
    np.testing.assert_allclose(R[:2, :2], block, atol=1e-14)
    np.testing.assert_allclose(R[2:, 2:], block, atol=1e-14)
    np.testing.assert_array_equal(R[:2, 2:], 0.0)
    K = make_family_R(2, 2, 0.5, structure_on="precision")
    np.testing.assert_allclose(K[:2, :2], [[1, 0.5], [0.5, 1]])


def test_family_R_zero_corr_is_identity():
    np.testing.assert_array_equal(make_family_R(3, 4, 0.0), np.eye(12))


def test_family_R_full_scale_inverse():
    R = make_family_R(80, 5, 0.5)
    K = make_family_R(80, 5, 0.5, structure_on="precision")
    np.testing.assert_allclose(R @ K, np.eye(400), atol=1e-10)
    # identical blocks, exact zeros off the blocks
    for f in range(1, 80):
        s = slice(5 * f, 5 * f + 5)
        np.testing.assert_array_equal(R[s, s], R[:5, :5])
    mask = np.kron(np.eye(80), np.ones((5, 5))) == 0
    assert np.all(R[mask] == 0.0)


def test_family_R_singular_and_bad_input():
    with pytest.raises(NearSingularError):
        make_family_R(2, 2, 1.0)
    with pytest.raises(ValueError):
        make_family_R(2, 2, -0.1)
    with pytest.raises(ValueError):
        make_family_R(2, 2, 0.5, structure_on="kinship")


# -- generators ----------------------------------------------------------------------

def test_ar1_examples():
    expect = np.array([[1, -0.8, 0], [-0.8, 1.64, -0.8], [0, -0.8, 1]])
    np.testing.assert_allclose(gen_ar1_precision(3, 0.8), expect, atol=1e-15)
    np.testing.assert_array_equal(gen_ar1_precision(4, 0.0), np.eye(4))


def test_ar1_inverse_is_stationary_covariance():
    rho, P = 0.6, 5
    cov = np.linalg.inv(gen_ar1_precision(P, rho))
    idx = np.arange(P)
    expect = rho ** np.abs(idx[:, None] - idx[None, :]) / (1 - rho**2)
    np.testing.assert_allclose(cov, expect, atol=1e-12)
    np.testing.assert_allclose(gen_ar1_precision(P, rho, "toeplitz"), expect * (1 - rho**2))


def test_random_precision_condition_number():
    for P in (10, 50):
        for seed in range(50):
            C = gen_random_precision(P, 0.1, np.random.default_rng(seed))
            ev = np.linalg.eigvalsh(C)
            assert ev[0] > 0
            assert abs(ev[-1] / ev[0] - P) <= 1e-8 * P


def test_random_precision_edge_count():
    assert n_random_edges(50, 0.01) == 13 == math.ceil(12.25)
    C = gen_random_precision(50, 0.01, np.random.default_rng(0))
    iu = np.triu_indices(50, 1)
    assert np.count_nonzero(C[iu]) == 13
    vals = C[iu][C[iu] != 0]
    np.testing.assert_array_equal(vals, 1.0)


def test_random_precision_without_spread_warns():
    with pytest.warns(UserWarning):
        C = gen_random_precision(1, 1.0, np.random.default_rng(0))
    np.testing.assert_array_equal(C, np.eye(1))


def test_wishart_mean_and_rank():
    P = 10
    rng = np.random.default_rng(5)
    draws = [wishart_raw(P, rng) for _ in range(500)]
    np.testing.assert_allclose(np.mean(draws, axis=0), np.eye(P), atol=0.1)
    assert np.linalg.matrix_rank(draws[0]) == P - 3
    W = gen_wishart_precision(P, rng)
    assert np.linalg.eigvalsh(W)[0] > 0
    with pytest.raises(ValueError):
        gen_wishart_precision(4, rng)


def test_generator_spec_validation():
    with pytest.raises(ValueError):
        GeneratorSpec("banded")
    with pytest.raises(ValueError):
        GeneratorSpec("ar1", rho=1.0)
    with pytest.raises(ValueError):
        GeneratorSpec("random", density=0.0)
    with pytest.raises(ValueError):
        GeneratorSpec("wishart", dof=0)


def test_sim_config_validation():
    with pytest.raises(ValueError):
        SimConfig(N=12, family_size=5)
    with pytest.raises(ValueError):
        SimConfig(snr=0)
    with pytest.raises(ValueError):
        SimConfig(seed=-1)
    assert SimConfig().to_dict()["C_gen"]["density"] == 0.01


# -- scaling and heritability ------------------------------------------------------

def test_scale_snr_examples(rng):
    C, D = scale_snr(np.eye(4), np.eye(4), 0.2)
    np.testing.assert_allclose(C, 5 * np.eye(4))
    np.testing.assert_array_equal(D, np.eye(4))
    A = random_spd(rng, 4)
    C, D = scale_snr(A, A, 1.0)
    np.testing.assert_allclose(C, A, rtol=1e-14)
    C, D = scale_snr(random_spd(rng, 6), random_spd(rng, 6), 0.37)
    assert abs(heritability(C, D)[1] - 0.37) < 1e-10
    with pytest.raises(ValueError):
        scale_snr(A, A, 0.0)


def test_heritability_examples(rng):
    h2, snr = heritability(np.eye(3), np.eye(3))
    np.testing.assert_allclose(h2, 0.5)
    C, D = random_spd(rng, 5), random_spd(rng, 5)
    _, snr = heritability(C, D)
    ratio = np.trace(np.linalg.inv(C)) / np.trace(np.linalg.inv(D))
    assert abs(snr - ratio) <= 1e-12 * ratio
    C, D = scale_snr(C, D, 0.2)
    snr = heritability(C, D)[1]
    assert abs(snr / (1 + snr) - 1 / 6) < 1e-10


def test_normalize_variance_keeps_ratios(rng):
    C, D = random_spd(rng, 5), random_spd(rng, 5)
    h_before, snr_before = heritability(C, D)
    C2, D2 = normalize_variance(C, D)
    h_after, snr_after = heritability(C2, D2)
    np.testing.assert_allclose(h_after, h_before, rtol=1e-12)
    mean_var = (np.trace(np.linalg.inv(C2)) + np.trace(np.linalg.inv(D2))) / 5
    assert abs(mean_var - 1) < 1e-12


# -- sampling ------------------------------------------------------------------------

def test_sample_identity_covariance():
    rng = np.random.default_rng(0)
    draws = np.array([sample_dataset(np.eye(2), np.eye(2), np.eye(2), rng).Y.ravel(order="F")
                      for _ in range(10_000)])
    np.testing.assert_allclose(np.cov(draws.T, bias=True), 2 * np.eye(4), atol=0.1)


def test_sample_genetic_covariance():
    rng = np.random.default_rng(1)
    N, P = 4, 2
    R = make_family_R(2, 2, 0.5)
    C = np.array([[2.0, 0.6], [0.6, 1.0]])
    tiny = 1e12 * np.eye(P)
    Z = np.array([sample_dataset(R, C, tiny, rng).Y.ravel(order="F") for _ in range(10_000)])
    expect = np.linalg.inv(kron(C, R))
    big = np.abs(expect) > 0.05
    np.testing.assert_allclose(np.cov(Z.T, bias=True)[big], expect[big], rtol=0.1)


def test_zero_noise_limit():
    N, P = 4, 3
    R, C = np.eye(N), np.eye(P)
    Y = sample_dataset(R, C, 1e12 * np.eye(P), np.random.default_rng(2)).Y
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((N, P))
    np.testing.assert_allclose(Y, Z, atol=1e-5)


def test_dataset_meta_matches_recomputation():
    cfg = SimConfig(N=50, P=10, n_datasets=2, C_gen=GeneratorSpec("random", density=0.1), seed=3)
    ds = make_dataset(cfg, 1)
    h2, snr = heritability(ds.C_true, ds.D_true)
    assert ds.meta["h2"] == h2.tolist()
    assert ds.meta["snr"] == snr
    assert abs(ds.meta["h2_global"] - 1 / 6) < 1e-10
    assert ds.meta["index"] == 1 and ds.meta["seed"] == 3
    assert ds.meta["wishart_ridge"] > 0


def test_reproducible_and_order_independent():
    cfg = SimConfig(N=20, P=6, n_datasets=3, C_gen=GeneratorSpec("random", density=0.2), seed=9)
    a, b = simulate(cfg), simulate(cfg)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.Y, y.Y)
    np.testing.assert_array_equal(make_dataset(cfg, 2).Y, a[2].Y)
    assert not np.array_equal(a[0].Y, a[1].Y)
    assert dataset_rng(9, 0).random() == dataset_rng(9, 0).random()
