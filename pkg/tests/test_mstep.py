import numpy as np
import pytest
from scipy import optimize

from conftest import random_spd
from g3m.kron_linalg import NearSingularError
from g3m.mstep import (GlassoConvergenceError, GlassoSettings, NoiseModel, glasso,
                       glasso_kkt_residual, glasso_objective, update_dense_D, update_iid_tau,
                       update_sparse_D)
from oracles import prox_grad_glasso


# -- settings ----------------------------------------------------------------

def test_settings_validation():
    with pytest.raises(ValueError):
        GlassoSettings(lam=-1)
    with pytest.raises(ValueError):
        GlassoSettings(kkt_tol=0)
    with pytest.raises(ValueError):
        GlassoSettings(max_sweeps=0)
    assert GlassoSettings().with_lam(2).lam == 2.0


def test_noise_model_validation():
    with pytest.raises(ValueError):
        NoiseModel("gauss")
    with pytest.raises(ValueError):
        NoiseModel("sparse", -0.1)
    with pytest.raises(ValueError):
        NoiseModel("dense", 0.5)
    assert NoiseModel("sparse", 0.1).gamma == 0.1


# -- closed forms ----------------------------------------------------------------

def test_dense_D_examples(rng):
    np.testing.assert_allclose(update_dense_D(np.eye(4)), np.eye(4), atol=1e-14)
    np.testing.assert_allclose(update_dense_D(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=1e-14)
    O = random_spd(rng, 5)
    D = update_dense_D(O)
    assert np.abs(-np.linalg.inv(D) + O).max() < 1e-8


def test_dense_D_singular_suggests_alternatives():
    with pytest.raises(NearSingularError, match="iid or sparse"):
        update_dense_D(np.diag([1.0, 1e-16]))


def test_iid_tau_examples():
    assert update_iid_tau(np.eye(7), 7) == 1.0
    assert update_iid_tau(2 * np.eye(5), 5) == 0.5
    with pytest.raises(ValueError):
        update_iid_tau(np.zeros((3, 3)), 3)


def test_iid_tau_matches_golden_section(rng):
    for _ in range(10):
        P = int(rng.integers(2, 8))
        O = random_spd(rng, P)

        def f(tau):
            return -P * np.log(tau) + tau * np.trace(O)

        res = optimize.minimize_scalar(f, bracket=(1e-3, 1.0, 1e3), method="golden",
                                       options={"xtol": 1e-12})
        tau = update_iid_tau(O, P)
        assert abs(tau - res.x) <= 1e-6 * tau


# -- glasso ----------------------------------------------------------------------

def test_glasso_identity():
    np.testing.assert_allclose(glasso(np.eye(4)), np.eye(4), atol=1e-12)


def test_glasso_unpenalised_is_inverse(rng):
    for P in (3, 8, 20):
        S = random_spd(rng, P)
        C = glasso(S, GlassoSettings(kkt_tol=1e-10))
        np.testing.assert_allclose(C, np.linalg.inv(S), atol=1e-6)


def test_glasso_large_lambda_is_diagonal(rng):
    S = random_spd(rng, 5)
    off = np.abs(S - np.diag(np.diag(S))).max()
    lam = off * 1.01
    C = glasso(S, GlassoSettings(lam=lam))
    np.testing.assert_allclose(C, np.diag(1 / (np.diag(S) + lam)), atol=1e-10)
    assert glasso_kkt_residual(np.diag(1 / (np.diag(S) + lam)), S, lam) <= 1e-8


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("pd", [True, False])
def test_glasso_matches_reference_p3(seed, pd):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, 3, jitter=0.2)
    lam = float(rng.uniform(0.02, 0.4))
    ref = prox_grad_glasso(S, lam, penalize_diagonal=pd)
    C = glasso(S, GlassoSettings(lam=lam, penalize_diagonal=pd, kkt_tol=1e-9))
    assert np.linalg.norm(C - ref) < 1e-4


def test_glasso_objective_monotone_and_certified(rng):
    S = random_spd(rng, 15)
    C, info = glasso(S, GlassoSettings(lam=0.1, kkt_tol=1e-8), return_info=True)
    tr = info.objective_trace
    assert np.all(np.diff(tr) <= 1e-10 * np.abs(tr[:-1]))
    assert info.kkt_residual <= 1e-8 * max(1, np.diag(S).max())
    assert np.all(np.linalg.eigvalsh(C) > 0)
    np.testing.assert_array_equal(C, C.T)


def test_glasso_warm_start_same_answer(rng):
    S = random_spd(rng, 10)
    st = GlassoSettings(lam=0.05, kkt_tol=1e-9)
    cold = glasso(S, st)
    warm = glasso(S, st, init=glasso(S, st.with_lam(0.1)))
    np.testing.assert_allclose(warm, cold, atol=1e-6)


def test_glasso_rejects_bad_input(rng):
    with pytest.raises(ValueError):
        glasso(np.ones((2, 3)))
    S = random_spd(rng, 3)
    S[0, 1] += 1
    with pytest.raises(ValueError):
        glasso(S)
    with pytest.raises(ValueError):
        glasso(np.diag([1.0, 0.0]))


def test_glasso_non_convergence_carries_iterate(rng):
    S = random_spd(rng, 12)
    with pytest.raises(GlassoConvergenceError) as err:
        glasso(S, GlassoSettings(lam=0.01, max_sweeps=1, kkt_tol=1e-14))
    assert err.value.kkt_residual > 1e-14
    it = err.value.last_iterate
    assert np.all(np.linalg.eigvalsh(it) > 0)


def test_kkt_residual_examples(rng):
    S = random_spd(rng, 4)
    assert glasso_kkt_residual(np.linalg.inv(S), S, 0.0) < 1e-10
    C = glasso(S, GlassoSettings(lam=0.05, kkt_tol=1e-10))
    # perturb within the support so the sign pattern is unchanged
    E = rng.standard_normal((4, 4))
    E = (E + E.T) * (C != 0)
    res = [glasso_kkt_residual(C + eps * E, S, 0.05) for eps in (1e-4, 1e-3, 1e-2)]
    assert res[0] < res[1] < res[2]


def test_objective_outside_cone_is_inf():
    assert glasso_objective(-np.eye(2), np.eye(2), 0.1) == np.inf


# -- sparse D ----------------------------------------------------------------------

def test_sparse_D_gamma_zero_is_dense(rng):
    O = random_spd(rng, 5)
    D = update_sparse_D(O, 0.0, GlassoSettings(kkt_tol=1e-10))
    np.testing.assert_allclose(D, update_dense_D(O), atol=1e-6)


def test_sparse_D_large_gamma_diagonal(rng):
    O = random_spd(rng, 5)
    D = update_sparse_D(O, 10.0)
    np.testing.assert_array_equal(D - np.diag(np.diag(D)), 0.0)


def test_sparse_D_certified(rng):
    O = random_spd(rng, 6)
    D = update_sparse_D(O, 0.1)
    assert glasso_kkt_residual(D, O, 0.1) <= 1e-4 * max(1, np.diag(O).max())
