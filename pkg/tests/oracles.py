"""Slow, independent reference solvers used only by the tests."""

import numpy as np


def _objective(C, S, lam, mask):
    sign, logdet = np.linalg.slogdet(C)
    if sign <= 0:
        return np.inf
    return -logdet + np.sum(C * S) + lam * np.abs(C * mask).sum()


def prox_grad_glasso(S, lam, penalize_diagonal=True, iters=20000, tol=1e-13):
    """Proximal gradient with backtracking for the l1-penalised log-det problem.

    Each step soft-thresholds ``C - t (S - C^{-1})``; the step halves until the
    iterate stays positive definite and the usual quadratic upper bound holds.
    """
    P = S.shape[0]
    mask = np.ones((P, P))
    if not penalize_diagonal:
        np.fill_diagonal(mask, 0.0)
    C = np.diag(1.0 / (np.diag(S) + lam * mask.diagonal()))
    f = _objective(C, S, lam, mask)
    t = 1.0
    for _ in range(iters):
        Cinv = np.linalg.inv(C)
        grad = S - Cinv
        smooth = -np.linalg.slogdet(C)[1] + np.sum(C * S)
        while True:
            Z = C - t * grad
            thr = t * lam * mask
            C_new = np.sign(Z) * np.maximum(np.abs(Z) - thr, 0.0)
            C_new = 0.5 * (C_new + C_new.T)
            if np.linalg.eigvalsh(C_new)[0] > 0:
                diff = C_new - C
                smooth_new = -np.linalg.slogdet(C_new)[1] + np.sum(C_new * S)
                if smooth_new <= smooth + np.sum(grad * diff) + np.sum(diff**2) / (2 * t) + 1e-15:
                    break
            t *= 0.5
        f_new = _objective(C_new, S, lam, mask)
        step = np.abs(C_new - C).max()
        C, f = C_new, f_new
        t = min(t * 2.0, 1e3)
        if step < tol:
            break
    return C
