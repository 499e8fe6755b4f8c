"""Penalised EM for the two-component matrix-normal model."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .estep import ModelParams, observed_loglik, posterior_moments, rotate
from .kron_linalg import SpectralDecomp, check_spd, spectral_decomp
from .mstep import (
    GlassoSettings,
    NoiseModel,
    glasso,
    update_dense_D,
    update_iid_tau,
    update_sparse_D,
)

__all__ = [
    "FitConfig",
    "FitError",
    "FitResult",
    "MonotonicityError",
    "edge_count",
    "fit_g3m",
    "l1_norm",
    "penalized_objective",
    "prepare_data",
    "select_model",
    "warn_if_unidentifiable",
]

logger = logging.getLogger(__name__)

MONOTONE_SLACK = 1e-7


class FitError(RuntimeError):
    """A failure inside an EM iteration; ``iteration`` is 1-based."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class MonotonicityError(FitError):
    pass


@dataclass(frozen=True)
class FitConfig:
    lam: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)
    max_iters: int = 200
    rel_tol: float = 1e-6
    init: str = "diagonal-moment"
    glasso: GlassoSettings = field(default_factory=GlassoSettings)

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.init not in ("identity", "diagonal-moment"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class FitResult:
    C_hat: np.ndarray
    D_hat: np.ndarray
    tau: float | None
    objective_trace: np.ndarray
    iters: int
    converged: bool
    lam: float = 0.0
    noise: NoiseModel = field(default_factory=NoiseModel)

    @property
    def n_edges(self) -> int:
        return edge_count(self.C_hat)


def edge_count(C, zero_tol: float = 0.0) -> int:
    C = np.asarray(C)
    return int((np.abs(C[np.triu_indices(C.shape[0], 1)]) > zero_tol).sum())


def l1_norm(A, penalize_diagonal: bool = True) -> float:
    A = np.asarray(A)
    total = np.abs(A).sum()
    if not penalize_diagonal:
        total -= np.abs(np.diag(A)).sum()
    return float(total)


def prepare_data(Y, center: bool = True) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ValueError("Y must be a 2-d array")
    if not np.all(np.isfinite(Y)):
        raise ValueError("Y has non-finite entries")
    if center:
        Y = Y - Y.mean(axis=0)
    return Y


def warn_if_unidentifiable(R_eig: SpectralDecomp, lam: float) -> None:
    v = R_eig.values
    if lam == 0 and v[0] / v[-1] < 1 + 1e-6:
        warnings.warn(
            "R has no eigenvalue spread; C and D are not separately identifiable without a penalty",
            stacklevel=3,
        )


def penalized_objective(Y, R, C, D, lam: float, noise: NoiseModel | None = None,
                        penalize_diagonal: bool = True, Y_rot=None) -> float:
    """Observed log-likelihood minus the l1 penalties, on the EM's own scale.

    The M-step minimises ``-log|C| + tr(C Omega2) + lam ||C||_1`` and the
    expected complete-data log-likelihood carries a factor ``N/2`` on the
    first two terms, so the quantity EM ascends is
    ``loglik - (N/2) (lam ||C||_1 + gamma ||D||_1)``.

    ``R`` is either the ``N x N`` matrix or its :class:`SpectralDecomp`.
    """
    noise = noise or NoiseModel()
    R_eig = R if isinstance(R, SpectralDecomp) else spectral_decomp(check_spd(R, "R"), "R")
    Y = np.asarray(Y, dtype=float)
    N = Y.shape[0]
    ll = observed_loglik(Y, ModelParams(np.asarray(C, float), np.asarray(D, float), R_eig), Y_rot)
    pen = lam * l1_norm(C, penalize_diagonal)
    if noise.kind == "sparse":
        pen += noise.gamma * l1_norm(D, penalize_diagonal)
    return ll - 0.5 * N * pen


def _initial(Y, init):
    P = Y.shape[1]
    if init == "identity":
        return np.eye(P), np.eye(P)
    var = np.einsum("ij,ij->j", Y, Y) / Y.shape[0]
    if not np.all(var > 0):
        raise ValueError("every column of Y needs positive variance")
    C0 = np.diag(2.0 / var)
    return C0, C0.copy()


def fit_g3m(Y, R, config: FitConfig | None = None, *, center: bool = True,
            init=None, R_eig: SpectralDecomp | None = None) -> FitResult:
    """Fit ``C`` (and ``D`` or ``tau``) by penalised EM.

    Parameters
    ----------
    Y : (N, P) array
        Observations, one row per individual.
    R : (N, N) array
        Known row precision.  May be ``None`` when ``R_eig`` is given.
    config : FitConfig
        Penalty, noise model, and loop controls.
    center : bool
        Subtract column means from ``Y`` first.
    init : tuple (C0, D0), optional
        Warm start, e.g. the fit at a neighbouring penalty.
    R_eig : SpectralDecomp, optional
        Precomputed eigensystem of ``R``, reused across fits.
    """
    config = config or FitConfig()
    Y = prepare_data(Y, center)
    N, P = Y.shape
    if R_eig is None:
        R = check_spd(R, "R")
        if R.shape != (N, N):
            raise ValueError(f"R must be {N}x{N}, got {R.shape}")
        R_eig = spectral_decomp(R, "R")
    elif R_eig.dim != N:
        raise ValueError(f"R must be {N}x{N}, got {R_eig.dim}")
    warn_if_unidentifiable(R_eig, config.lam)

    noise = config.noise
    gl = config.glasso.with_lam(config.lam)
    gl_D = config.glasso.with_lam(noise.gamma)
    pd = gl.penalize_diagonal
    Y_rot = rotate(Y, R_eig)

    if init is not None:
        C, D = (np.array(a, dtype=float) for a in init)
    else:
        C, D = _initial(Y, config.init)
    if noise.kind == "iid":
        D = np.eye(P) * float(np.mean(np.diag(D)))

    def objective(C, D):
        return penalized_objective(Y, R_eig, C, D, config.lam, noise, pd, Y_rot)

    trace = [objective(C, D)]
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        try:
            omegas, _ = posterior_moments(Y, ModelParams(C, D, R_eig), Y_rot)
            C_new = glasso(omegas.omega2, gl, init=C)
            if noise.kind == "dense":
                D_new = update_dense_D(omegas.omega1)
            elif noise.kind == "iid":
                D_new = np.eye(P) * update_iid_tau(omegas.omega1, P)
            else:
                D_new = update_sparse_D(omegas.omega1, noise.gamma, gl_D, init=D)
            obj = objective(C_new, D_new)
        except Exception as exc:
            raise FitError(f"EM iteration {it}: {exc}", it) from exc
        prev = trace[-1]
        trace.append(obj)
        C, D = C_new, D_new
        if obj < prev - MONOTONE_SLACK:
            raise MonotonicityError(
                f"EM iteration {it}: penalised objective decreased by {prev - obj:.3g}", it
            )
        if abs(obj - prev) <= config.rel_tol * abs(prev):
            converged = True
            break

    logger.debug("fit_g3m lam=%g noise=%s: %d iterations, converged=%s", config.lam, noise.kind, it, converged)
    return FitResult(
        C_hat=C,
        D_hat=D,
        tau=float(D[0, 0]) if noise.kind == "iid" else None,
        objective_trace=np.array(trace),
        iters=it,
        converged=converged,
        lam=config.lam,
        noise=noise,
    )


def select_model(fits, Y_holdout, R_holdout, center: bool = True) -> int:
    """Index of the fit with the largest held-out log-likelihood.

    Ties go to the sparser ``C``, then the earlier index.
    """
    fits = list(fits)
    if not fits:
        raise ValueError("select_model needs at least one fit")
    Y = prepare_data(Y_holdout, center)
    R_eig = spectral_decomp(check_spd(R_holdout, "R_holdout"), "R_holdout")
    Y_rot = rotate(Y, R_eig)
    scores = [observed_loglik(Y, ModelParams(f.C_hat, f.D_hat, R_eig), Y_rot) for f in fits]
    best = max(scores)
    tied = [i for i, s in enumerate(scores) if np.isclose(s, best, rtol=1e-12, atol=0.0)]
    return min(tied, key=lambda i: (fits[i].n_edges, i))
