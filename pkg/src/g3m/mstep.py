"""M-step solvers: closed-form noise updates and an l1-penalised log-det solver.

The graphical lasso here works on the primal precision matrix.  Each sweep
visits every row/column and minimises the objective exactly over it, holding
the rest fixed.  The row/column subproblem is solved through its
box-constrained dual::

    min_u  u^T Theta_11 u   subject to  |u - s_12| <= lam  (elementwise)

after which ``theta_12 = -Theta_11 u / w_22`` and
``theta_22 = (1 - u^T theta_12) / w_22`` with ``w_22 = s_22 + lam``.  Every
iterate stays positive definite and the objective never increases, so a
warm-started call can only improve on its starting point.  That property is
what keeps the outer EM loop monotone.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kron_linalg import NearSingularError, spd_power

try:
    from numba import njit
except ImportError:  # pragma: no cover

    def njit(func=None, **kwargs):
        if func is not None:
            return func
        return lambda f: f


__all__ = [
    "GlassoConvergenceError",
    "GlassoSettings",
    "NoiseModel",
    "glasso",
    "glasso_kkt_residual",
    "glasso_objective",
    "update_dense_D",
    "update_iid_tau",
    "update_sparse_D",
]


KKT_CHECK_EVERY = 10


class GlassoConvergenceError(RuntimeError):
    """Raised when the KKT residual stays above tolerance; ``last_iterate``
    holds the final (positive definite) sweep result."""

    def __init__(self, message, kkt_residual, last_iterate=None):
        super().__init__(message)
        self.kkt_residual = kkt_residual
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class NoiseModel:
    """Noise precision family: ``dense`` (unpenalised), ``iid`` (``tau I``) or
    ``sparse`` (l1 penalty ``gamma``)."""

    kind: str = "dense"
    gamma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("dense", "iid", "sparse"):
            raise ValueError(f"unknown noise model {self.kind!r}")
        if not self.gamma >= 0:
            raise ValueError("gamma must be nonnegative")
        if self.kind != "sparse" and self.gamma != 0:
            raise ValueError("gamma only applies to the sparse noise model")


@dataclass(frozen=True)
class GlassoSettings:
    lam: float = 0.0
    penalize_diagonal: bool = True
    max_sweeps: int = 500
    kkt_tol: float = 1e-4
    zero_tol: float = 1e-8
    rel_tol: float = 1e-10

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lam must be nonnegative")
        for name in ("kkt_tol", "zero_tol", "rel_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")

    def with_lam(self, lam: float) -> "GlassoSettings":
        return dataclasses.replace(self, lam=float(lam))


class GlassoInfo(NamedTuple):
    objective_trace: np.ndarray
    sweeps: int
    kkt_residual: float


def update_dense_D(omega1) -> np.ndarray:
    """Unpenalised noise update: the minimiser of ``-log|D| + tr(D omega1)``."""
    try:
        return spd_power(omega1, -1.0, name="omega1")
    except NearSingularError as exc:
        raise NearSingularError(
            f"{exc}; the dense noise update needs an invertible omega1, "
            "try the iid or sparse (ridge-like) noise model"
        ) from exc


def update_iid_tau(omega1, P: int) -> float:
    """Noise precision ``tau = P / tr(omega1)`` for ``D = tau I``."""
    t = float(np.trace(omega1))
    if not t > 0:
        raise ValueError(f"tr(omega1) must be positive, got {t}")
    return P / t


def update_sparse_D(omega1, gamma: float, settings: GlassoSettings | None = None, init=None) -> np.ndarray:
    """Noise update with an l1 penalty ``gamma`` on ``D``: the same solver as ``C``."""
    settings = settings or GlassoSettings()
    return glasso(omega1, settings.with_lam(gamma), init=init)


def _penalty_mask(P, penalize_diagonal):
    mask = np.ones((P, P))
    if not penalize_diagonal:
        np.fill_diagonal(mask, 0.0)
    return mask


def glasso_objective(C, S, lam: float, penalize_diagonal: bool = True) -> float:
    """``-log|C| + tr(C S) + lam * ||C||_1``; ``+inf`` outside the PD cone."""
    C = np.asarray(C, dtype=float)
    try:
        L = np.linalg.cholesky(C)
    except np.linalg.LinAlgError:
        return np.inf
    logdet = 2.0 * np.log(np.diag(L)).sum()
    pen = np.abs(C * _penalty_mask(C.shape[0], penalize_diagonal)).sum()
    return float(-logdet + np.sum(C * S) + lam * pen)


def glasso_kkt_residual(C, S, lam: float, penalize_diagonal: bool = True) -> float:
    """Largest violation of the subgradient optimality conditions.

    With ``G = S - C^{-1}``: ``|G_ij + lam sign(C_ij)|`` on the support and
    ``max(0, |G_ij| - lam)`` off it.  An unpenalised diagonal must have
    ``G_ii = 0``.
    """
    C = np.asarray(C, dtype=float)
    G = np.asarray(S, dtype=float) - np.linalg.inv(C)
    lam_mat = lam * _penalty_mask(C.shape[0], penalize_diagonal)
    nz = C != 0
    res = np.where(nz, np.abs(G + lam_mat * np.sign(C)), np.maximum(0.0, np.abs(G) - lam_mat))
    return float(res.max())


@njit(cache=True)
def _box_qp(Theta, j, u, lo, hi, tol, max_iter):
    """Coordinate descent on ``u^T Theta_11 u`` over a box; index ``j`` excluded."""
    P = Theta.shape[0]
    g = np.zeros(P)
    for k in range(P):
        if k == j:
            continue
        acc = 0.0
        for l in range(P):
            if l != j:
                acc += Theta[k, l] * u[l]
        g[k] = acc
    for _ in range(max_iter):
        biggest = 0.0
        for k in range(P):
            if k == j:
                continue
            tkk = Theta[k, k]
            target = u[k] - g[k] / tkk
            if target < lo[k]:
                target = lo[k]
            elif target > hi[k]:
                target = hi[k]
            delta = target - u[k]
            if delta != 0.0:
                u[k] = target
                for l in range(P):
                    if l != j:
                        g[l] += Theta[l, k] * delta
                step = abs(delta) * np.sqrt(tkk)
                if step > biggest:
                    biggest = step
        if biggest <= tol:
            break
    return g


@njit(cache=True)
def _sweep(Theta, S, U, lam, penalize_diagonal, tol, max_inner):
    P = Theta.shape[0]
    lo = np.empty(P)
    hi = np.empty(P)
    u = np.empty(P)
    for j in range(P):
        for k in range(P):
            lo[k] = S[k, j] - lam
            hi[k] = S[k, j] + lam
            u[k] = min(max(U[k, j], lo[k]), hi[k])
        u[j] = 0.0
        g = _box_qp(Theta, j, u, lo, hi, tol, max_inner)
        w22 = S[j, j] + lam if penalize_diagonal else S[j, j]
        ut = 0.0
        for k in range(P):
            if k != j:
                # entries whose box constraint is slack are zero at the optimum
                if lo[k] < u[k] < hi[k] and lam > 0.0:
                    g[k] = 0.0
                ut += u[k] * g[k]
        for k in range(P):
            if k != j:
                Theta[k, j] = -g[k] / w22
                Theta[j, k] = Theta[k, j]
                U[k, j] = u[k]
        Theta[j, j] = (1.0 + ut / w22) / w22


@njit(cache=True)
def _run_sweeps(Theta, S, U, lam, penalize_diagonal, tol, rel_tol, max_sweeps):
    """Sweep until the largest entry change relative to ``max |Theta|`` drops
    to ``rel_tol``.  Returns the sweep count and the last relative change."""
    prev = np.empty_like(Theta)
    change = np.inf
    n = 0
    while n < max_sweeps:
        prev[:, :] = Theta
        _sweep(Theta, S, U, lam, penalize_diagonal, tol, 100000)
        n += 1
        change = np.abs(Theta - prev).max() / max(np.abs(Theta).max(), 1e-300)
        if change <= rel_tol:
            break
    return n, change


def _validate_S(S):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ValueError(f"S must be square, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("S has non-finite entries")
    if np.abs(S - S.T).max() > 1e-10 * max(np.abs(S).max(), 1e-300):
        raise ValueError("S must be symmetric")
    if not np.all(np.diag(S) > 0):
        raise ValueError("S must have a positive diagonal")
    return 0.5 * (S + S.T)


def glasso(S, settings: GlassoSettings | None = None, init=None, return_info: bool = False):
    """Minimise ``-log|C| + tr(C S) + lam ||C||_1`` over positive-definite ``C``.

    Parameters
    ----------
    S : (P, P) array
        Symmetric matrix with a positive diagonal; must be positive definite
        when ``lam == 0``.
    settings : GlassoSettings
        Penalty ``lam`` plus tolerances.  Sweeps stop once the KKT residual
        is at most ``kkt_tol``, checked every 10 sweeps
        and whenever the largest relative entry change in a sweep falls below
        ``rel_tol``.
    init : (P, P) array, optional
        Positive-definite warm start.  Defaults to ``diag(S) + lam`` inverted.
    return_info : bool
        Also return a :class:`GlassoInfo` with the per-sweep objective.

    Returns
    -------
    C : (P, P) array
        The estimate, symmetric, with entries below ``zero_tol`` in magnitude
        set to exactly zero.
    """
    settings = settings or GlassoSettings()
    S = _validate_S(S)
    P = S.shape[0]
    lam = float(settings.lam)
    pd = bool(settings.penalize_diagonal)
    diag_lam = lam if pd else 0.0

    if init is None:
        Theta = np.diag(1.0 / (np.diag(S) + diag_lam))
        W = np.diag(np.diag(S) + diag_lam)
    else:
        Theta = np.array(init, dtype=float)
        Theta = 0.5 * (Theta + Theta.T)
        try:
            W = spd_power(Theta, -1.0, floor=0.0, name="glasso warm start")
        except NearSingularError:
            Theta = np.diag(1.0 / (np.diag(S) + diag_lam))
            W = np.diag(np.diag(S) + diag_lam)
    U = np.ascontiguousarray(W)
    Theta = np.ascontiguousarray(Theta)

    scale = float(np.abs(S).max())
    root = np.sqrt(scale)
    kkt_tol = settings.kkt_tol
    trace = [glasso_objective(Theta, S, lam, pd)] if return_info else []
    # KKT is checked every few sweeps (one P x P inverse); with a trace
    # requested, every sweep so each objective is recorded
    batch = 1 if return_info else KKT_CHECK_EVERY
    kkt = np.inf
    sweeps = 0
    while sweeps < settings.max_sweeps:
        # box subproblems are solved only as accurately as the outer
        # residual warrants, from 1e-6 down to 1e-12 (relative to sqrt(scale))
        inner_tol = root * min(1e-6, max(1e-12, 1e-2 * kkt / max(scale, 1e-300)))
        n, _ = _run_sweeps(Theta, S, U, lam, pd, inner_tol, settings.rel_tol,
                           min(batch, settings.max_sweeps - sweeps))
        sweeps += n
        if return_info:
            trace.append(glasso_objective(Theta, S, lam, pd))
        kkt = glasso_kkt_residual(Theta, S, lam, pd)
        if kkt <= kkt_tol:
            break
    if kkt > kkt_tol:
        raise GlassoConvergenceError(
            f"glasso did not converge in {settings.max_sweeps} sweeps "
            f"(KKT residual {kkt:.3g} > {kkt_tol:g})",
            kkt,
            0.5 * (Theta + Theta.T),
        )

    Theta[np.abs(Theta) <= settings.zero_tol] = 0.0
    Theta = 0.5 * (Theta + Theta.T)
    if return_info:
        kkt = glasso_kkt_residual(Theta, S, lam, pd)
        return Theta, GlassoInfo(np.array(trace), sweeps, kkt)
    return Theta
