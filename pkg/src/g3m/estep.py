"""Posterior moments of the latent genetic component and the marginal likelihood.

The model is ``Y = Z + eps`` with ``vec(Z) ~ N(0, (C kron R)^{-1})`` and
``vec(eps) ~ N(0, (D kron I)^{-1})``.  Given ``R = U diag(r) U^T`` the
efficient routines below never form an ``NP x NP`` matrix: every quantity is
expressed through two ``P x P`` eigensystems and elementwise resolvents on an
``N x P`` grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kron_linalg import (
    NearSingularError,
    SpectralDecomp,
    block_trace_P,
    check_spd,
    kron,
    resolvent_scores,
    spectral_decomp,
    unvec,
    vec,
    whiten_pair,
)

__all__ = [
    "ConditionalMoments",
    "ModelParams",
    "OmegaPair",
    "NAIVE_MAX_SIZE",
    "observed_loglik",
    "posterior_moments",
    "posterior_moments_naive",
    "rotate",
]

NAIVE_MAX_SIZE = 400


@dataclass(frozen=True)
class ModelParams:
    """Trait precision ``C``, noise precision ``D`` and the eigensystem of ``R``."""

    C: np.ndarray
    D: np.ndarray
    R_eig: SpectralDecomp

    @classmethod
    def from_matrices(cls, C, D, R) -> "ModelParams":
        R = check_spd(R, "R")
        return cls(np.asarray(C, dtype=float), np.asarray(D, dtype=float), spectral_decomp(R, "R"))

    @property
    def P(self) -> int:
        return self.C.shape[0]

    @property
    def N(self) -> int:
        return self.R_eig.dim

    def with_precisions(self, C, D) -> "ModelParams":
        return ModelParams(np.asarray(C, dtype=float), np.asarray(D, dtype=float), self.R_eig)


@dataclass(frozen=True)
class OmegaPair:
    omega1: np.ndarray
    omega2: np.ndarray


@dataclass(frozen=True)
class ConditionalMoments:
    """Posterior mean of ``Z`` and the two block traces of its covariance.

    The mean is stored rotated into the eigenbasis of ``R`` (``M_rot = U^T M``);
    :attr:`M` rotates it back on demand, which costs ``O(N^2 P)``.
    """

    M_rot: np.ndarray
    sigma_trace_P: np.ndarray
    sigma_R_trace_P: np.ndarray
    U: np.ndarray = field(repr=False)
    r_values: np.ndarray = field(repr=False)

    @property
    def M(self) -> np.ndarray:
        return self.U @ self.M_rot

    def mean_gram_R(self) -> np.ndarray:
        """``M^T R M``."""
        G = self.M_rot
        return (G.T * self.r_values) @ G


def _sym(X):
    return 0.5 * (X + X.T)


def rotate(Y, R_eig: SpectralDecomp) -> np.ndarray:
    """``U^T Y`` for the eigenvectors ``U`` of ``R``; cache this across iterations."""
    return R_eig.vectors.T @ np.asarray(Y, dtype=float)


def _check_shapes(Y, params):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-d array")
    N, P = Y.shape
    if params.N != N:
        raise ValueError(f"R is {params.N}x{params.N} but Y has {N} rows")
    if params.C.shape != (P, P) or params.D.shape != (P, P):
        raise ValueError(f"C and D must be {P}x{P}")
    return Y


def posterior_moments(Y, params: ModelParams, Y_rot=None):
    """Exact E-step: ``(OmegaPair, ConditionalMoments)`` in ``O(NP^2 + P^3)``.

    ``Y_rot`` may carry a cached ``U^T Y``; without it the rotation adds an
    ``O(N^2 P)`` product.
    """
    Y = _check_shapes(Y, params)
    N = Y.shape[0]
    if Y_rot is None:
        Y_rot = rotate(Y, params.R_eig)
    r = params.R_eig.values

    try:
        w1 = whiten_pair(params.D, params.C, names=("D", "C"))
    except NearSingularError as exc:
        raise NearSingularError(f"E-step: {exc}") from exc
    try:
        w2 = whiten_pair(params.C, params.D, names=("C", "D"))
    except NearSingularError as exc:
        raise NearSingularError(f"E-step: {exc}") from exc

    S1, lam1 = resolvent_scores(w1, r, Y_rot)
    S2, lam2 = resolvent_scores(w2, 1.0 / r, Y_rot)

    T1 = w1.inv_sqrt @ w1.Q
    T2 = w2.inv_sqrt @ w2.Q
    sigma_tr = _sym((T1 * lam1.sum(axis=0)) @ T1.T)
    sigma_R_tr = _sym((T2 * lam2.sum(axis=0)) @ T2.T)

    G2 = T2 @ S2.T
    G1 = T1 @ S1.T
    resid_gram = G2 @ G2.T
    mean_gram = (G1 * r) @ G1.T

    omegas = OmegaPair(
        omega1=_sym(resid_gram + sigma_tr) / N,
        omega2=_sym(mean_gram + sigma_R_tr) / N,
    )
    moments = ConditionalMoments(
        M_rot=G1.T,
        sigma_trace_P=sigma_tr,
        sigma_R_trace_P=sigma_R_tr,
        U=params.R_eig.vectors,
        r_values=r,
    )
    return omegas, moments


@dataclass(frozen=True)
class NaiveMoments:
    """Dense E-step output, including the full posterior covariance."""

    M: np.ndarray
    sigma: np.ndarray
    sigma_trace_P: np.ndarray
    sigma_R_trace_P: np.ndarray


def posterior_moments_naive(Y, C, D, R):
    """Dense reference E-step built from ``Sigma = (D kron I + C kron R)^{-1}``.

    Refuses problems with ``N * P > 400``.
    """
    Y = np.asarray(Y, dtype=float)
    N, P = Y.shape
    if N * P > NAIVE_MAX_SIZE:
        raise ValueError(f"naive E-step limited to N*P <= {NAIVE_MAX_SIZE}, got {N * P}")
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    R = np.asarray(R, dtype=float)
    I_N = np.eye(N)
    DI = kron(D, I_N)
    sigma = np.linalg.inv(DI + kron(C, R))
    sigma = _sym(sigma)
    mu = sigma @ DI @ vec(Y)
    M = unvec(mu, N, P)
    tr_sigma = block_trace_P(sigma, N, P)
    tr_sigma_R = block_trace_P(kron(np.eye(P), R) @ sigma, N, P)
    omegas = OmegaPair(
        omega1=_sym((Y - M).T @ (Y - M) + tr_sigma) / N,
        omega2=_sym(M.T @ R @ M + tr_sigma_R) / N,
    )
    return omegas, NaiveMoments(M, sigma, tr_sigma, tr_sigma_R)


def observed_loglik(Y, params: ModelParams, Y_rot=None) -> float:
    """Marginal log-density of ``vec(Y)`` under ``C^{-1} kron R^{-1} + D^{-1} kron I``.

    After rotating by the eigenvectors of ``R`` the rows are independent with
    covariance ``C^{-1} / r_i + D^{-1}``.  Both terms are diagonalised at once
    through ``D^{-1/2} C D^{-1/2} = Q diag(l) Q^T``, so the whole sum costs
    ``O(NP^2 + P^3)``.
    """
    Y = _check_shapes(Y, params)
    N, P = Y.shape
    if Y_rot is None:
        Y_rot = rotate(Y, params.R_eig)
    w = whiten_pair(params.D, params.C, names=("D", "C"))
    x = np.outer(params.R_eig.values, w.values)  # l_a * r_i
    assert np.all(x > 0), "per-row covariance lost positive definiteness"
    W = Y_rot @ (w.sqrt @ w.Q)
    # logdet of each row covariance: -logdet D + sum_a log(1 + 1/(l_a r_i))
    logdet_D = np.linalg.slogdet(params.D)[1]
    logdet = -N * logdet_D + np.log1p(1.0 / x).sum()
    quad = (W**2 * (x / (1.0 + x))).sum()
    return float(-0.5 * (N * P * np.log(2 * np.pi) + logdet + quad))
