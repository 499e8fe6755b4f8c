"""Comparison methods: graphical lasso on the sample covariance, and the
plug-in (approximate EM) Kronecker glasso with a known row precision."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .em import prepare_data, warn_if_unidentifiable
from .estep import ModelParams, observed_loglik, posterior_moments, rotate
from .kron_linalg import SpectralDecomp, check_spd, spectral_decomp
from .mstep import GlassoConvergenceError, GlassoSettings, glasso

__all__ = [
    "BaselineResult",
    "TauSearchError",
    "kron_glasso_known_R",
    "maximize_tau",
    "sample_covariance",
    "vanilla_glasso",
]

logger = logging.getLogger(__name__)

TAU_SPAN = 1e10
# sweep budget multiplier for retrying a glasso solve on a near-singular Omega2
RETRY_SWEEPS = 20


class TauSearchError(RuntimeError):
    def __init__(self, message, bracket):
        super().__init__(message)
        self.bracket = bracket


@dataclass
class BaselineResult:
    method: str
    C_hat: np.ndarray
    tau: float | None = None
    iters: int = 0
    converged: bool = True
    lam: float = 0.0
    uncertified_solves: int = 0

    @property
    def D_hat(self):
        if self.tau is None:
            return None
        return self.tau * np.eye(self.C_hat.shape[0])


def sample_covariance(Y, center: bool = True) -> np.ndarray:
    """``Y^T Y / N`` after optional column centering."""
    Y = prepare_data(Y, center)
    return Y.T @ Y / Y.shape[0]


def vanilla_glasso(Y, lam: float, settings: GlassoSettings | None = None, *,
                   center: bool = True, init=None) -> BaselineResult:
    """Glasso on the sample covariance, ignoring relatedness and noise."""
    settings = (settings or GlassoSettings()).with_lam(lam)
    C = glasso(sample_covariance(Y, center), settings, init=init)
    return BaselineResult("vanilla", C, None, 1, True, float(lam))


def maximize_tau(Y, C, R_eig: SpectralDecomp, tau0: float, Y_rot=None,
                 xtol: float = 1e-8, max_expand: int = 60,
                 bounds=None) -> float:
    """Maximise the marginal likelihood over ``D = tau I`` with ``C`` fixed.

    Works on ``log tau``: expands a bracket around ``log tau0`` until the
    middle point is no worse than either end, then runs bounded Brent
    minimisation on that bracket to absolute precision ``xtol`` in
    ``log tau`` (relative precision in ``tau``).  The search is confined to
    ``bounds`` (default ``[tau0 / 1e10, tau0 * 1e10]``); when the likelihood is still improving at
    that boundary (the genetic term absorbs all variance) the boundary is
    returned.
    """
    Y = np.asarray(Y, dtype=float)
    P = Y.shape[1]
    eye = np.eye(P)
    if Y_rot is None:
        Y_rot = rotate(Y, R_eig)
    if not tau0 > 0:
        raise ValueError("tau0 must be positive")

    def neg(s):
        return -observed_loglik(Y, ModelParams(C, np.exp(s) * eye, R_eig), Y_rot)

    if bounds is None:
        bounds = (tau0 / TAU_SPAN, tau0 * TAU_SPAN)
    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    if not lo < hi:
        raise ValueError("tau bounds must satisfy 0 < lower < upper")
    mid = float(np.clip(np.log(tau0), lo, hi))
    step = 0.5
    a, b = max(mid - step, lo), min(mid + step, hi)
    fa, fm, fb = neg(a), neg(mid), neg(b)
    for _ in range(max_expand):
        if fm <= fa and fm <= fb:
            break
        if fa < fm:
            if a <= lo:
                return float(np.exp(a))
            b, fb = mid, fm
            mid, fm = a, fa
            step *= 2
            a = max(mid - step, lo)
            fa = neg(a)
        else:
            if b >= hi:
                return float(np.exp(b))
            a, fa = mid, fm
            mid, fm = b, fb
            step *= 2
            b = min(mid + step, hi)
            fb = neg(b)
    else:
        raise TauSearchError(
            f"could not bracket the tau maximum; last bracket tau in [{np.exp(a):.3g}, {np.exp(b):.3g}]",
            (float(np.exp(a)), float(np.exp(b))),
        )
    res = optimize.minimize_scalar(neg, bounds=(a, b), method="bounded",
                                   options={"xatol": xtol, "maxiter": 500})
    best = min(((res.fun, res.x), (fm, mid)))
    return float(np.exp(best[1]))


def kron_glasso_known_R(Y, R, lam: float, settings: GlassoSettings | None = None, *,
                        max_iters: int = 200, rel_tol: float = 1e-6, center: bool = True,
                        init=None, R_eig: SpectralDecomp | None = None,
                        max_uncertified: int = 3) -> BaselineResult:
    """Plug-in Kronecker glasso with ``R`` known and iid noise ``D = tau I``.

    Each iteration takes the posterior mean ``M`` of the genetic component
    under the current ``(C, tau)``, sets ``Omega2 = M^T R M / N`` (no
    posterior-covariance correction), updates ``C = glasso(Omega2, lam)``,
    then maximises the marginal likelihood over ``tau``.  ``Omega2`` can
    become nearly singular, which slows glasso down; a solve that misses its
    KKT tolerance is retried from its last iterate with ``RETRY_SWEEPS``
    times the sweep budget.  If that also fails the fit is not aborted: the
    last iterate is used and counted in ``uncertified_solves``.  After ``max_uncertified`` such solves the
    iteration is treated as diverging and stops with ``converged=False``.
    Otherwise it stops when both ``C`` (relative Frobenius change) and
    ``tau`` change by less than ``rel_tol``.

    ``init`` is an optional ``(C0, tau0)`` warm start; the default is
    ``C0 = 2 diag(S)^{-1}`` and ``tau0 = P / tr(S)`` for the sample
    covariance ``S``.
    """
    settings = (settings or GlassoSettings()).with_lam(lam)
    retry = dataclasses.replace(settings, max_sweeps=RETRY_SWEEPS * settings.max_sweeps)
    Y = prepare_data(Y, center)
    N, P = Y.shape
    if R_eig is None:
        R_eig = spectral_decomp(check_spd(R, "R"), "R")
    if R_eig.dim != N:
        raise ValueError(f"R must be {N}x{N}")
    warn_if_unidentifiable(R_eig, lam)
    Y_rot = rotate(Y, R_eig)

    if init is None:
        var = np.einsum("ij,ij->j", Y, Y) / N
        C = np.diag(2.0 / var)
        tau = P / var.sum()
    else:
        C, tau = np.array(init[0], dtype=float), float(init[1])

    tau_ref = P / (np.einsum("ij,ij->", Y, Y) / N)
    tau_bounds = (tau_ref / TAU_SPAN, tau_ref * TAU_SPAN)
    converged = False
    uncertified = 0
    it = 0
    for it in range(1, max_iters + 1):
        _, moments = posterior_moments(Y, ModelParams(C, tau * np.eye(P), R_eig), Y_rot)
        omega2 = moments.mean_gram_R() / N
        omega2 = 0.5 * (omega2 + omega2.T)
        try:
            C_new = glasso(omega2, settings, init=C)
        except GlassoConvergenceError as exc:
            try:
                C_new = glasso(omega2, retry, init=exc.last_iterate)
            except GlassoConvergenceError as exc:
                # Omega2 lacks the posterior covariance term and can become
                # nearly singular; keep going from the best available iterate.
                logger.debug("kronglasso iteration %d: %s", it, exc)
                C_new = exc.last_iterate
                uncertified += 1
                if uncertified >= max_uncertified:
                    C = C_new
                    break
        tau_new = maximize_tau(Y, C_new, R_eig, tau, Y_rot, bounds=tau_bounds)
        dC = np.linalg.norm(C_new - C) / max(np.linalg.norm(C), 1e-300)
        dtau = abs(tau_new - tau) / tau
        C, tau = C_new, tau_new
        if dC < rel_tol and dtau < rel_tol:
            converged = True
            break
    return BaselineResult("kronglasso", C, tau, it, converged, float(lam), uncertified)
