"""Kronecker, vec and block-trace primitives.

Matrices acting on ``vec(Y)`` for an ``N x P`` matrix ``Y`` are laid out with
the trait index outermost: ``vec`` stacks columns, so entry ``(i, a)`` of
``Y`` sits at position ``a * N + i``.  A matrix ``A (P x P) kron B (N x N)``
acts on that ordering, and the block traces below trace over the inner
(sample) factor to give a ``P x P`` result, or over the outer factor to give
an ``N x N`` result.

Nothing here materialises an ``NP x NP`` matrix except :func:`kron` and the
block traces themselves, which only accept dense inputs handed to them.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

__all__ = [
    "NearSingularError",
    "SpectralDecomp",
    "block_trace_N",
    "block_trace_P",
    "check_spd",
    "kron",
    "kron_sum_inv_block_trace",
    "outer_block_trace",
    "quadform_block_traces",
    "spd_power",
    "spectral_decomp",
    "unvec",
    "vec",
]

EIG_FLOOR = 1e-12


class NearSingularError(np.linalg.LinAlgError):
    """Raised when a matrix that must be positive definite is not."""


class SpectralDecomp(NamedTuple):
    """Eigenvectors (columns) and eigenvalues sorted in descending order."""

    vectors: np.ndarray
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


def spectral_decomp(A, name: str = "matrix") -> SpectralDecomp:
    """Symmetric eigendecomposition with eigenvalues in descending order."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    return SpectralDecomp(V[:, ::-1].copy(), w[::-1].copy())


def _check_floor(values, name, floor):
    lmax = values.max()
    if not lmax > 0 or values.min() <= floor * lmax:
        raise NearSingularError(
            f"{name} is not positive definite (eigenvalues in "
            f"[{values.min():.3g}, {lmax:.3g}], floor {floor:g} * max)"
        )


def check_spd(A, name: str = "matrix", floor: float = EIG_FLOOR) -> np.ndarray:
    """Validate a symmetric positive-definite matrix and return it as float.

    Symmetry is required to 1e-12 relative to the largest entry; positive
    definiteness means every eigenvalue exceeds ``floor * max eigenvalue``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{name} must be square, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} has non-finite entries")
    scale = max(np.abs(A).max(), np.finfo(float).tiny)
    if np.abs(A - A.T).max() > 1e-12 * scale:
        raise ValueError(f"{name} is not symmetric")
    _check_floor(np.linalg.eigvalsh(A), name, floor)
    return A


def vec(X) -> np.ndarray:
    """Column-major stacking of a matrix into a vector."""
    return np.asarray(X).reshape(-1, order="F")


def unvec(x, N: int, P: int) -> np.ndarray:
    """Inverse of :func:`vec`: fill an ``N x P`` matrix column by column."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != N * P:
        raise ValueError(f"cannot reshape vector of length {x.size} into {N}x{P}")
    return x.reshape((N, P), order="F")


def kron(A, B) -> np.ndarray:
    """Dense Kronecker product.  Reference use only."""
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def _blocks(M, N, P):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape != (N * P, N * P):
        raise ValueError(f"expected a square matrix of size {N * P}, got {M.shape}")
    return M.reshape(P, N, P, N)


def block_trace_P(M, N: int, P: int) -> np.ndarray:
    """``P x P`` matrix of traces of the ``N x N`` blocks of ``M``.

    Satisfies ``tr((X kron I_N) M) = tr(X block_trace_P(M))`` for any ``P x P``
    matrix ``X``.
    """
    return np.einsum("aibi->ab", _blocks(M, N, P))


def block_trace_N(M, N: int, P: int) -> np.ndarray:
    """``N x N`` sum of the diagonal ``N x N`` blocks of ``M``.

    Satisfies ``tr((I_P kron X) M) = tr(X block_trace_N(M))`` for any ``N x N``
    matrix ``X``.
    """
    return np.einsum("aiaj->ij", _blocks(M, N, P))


def spd_power(A, exponent: float, floor: float = EIG_FLOOR, name: str = "matrix") -> np.ndarray:
    """Matrix power of an SPD matrix via its spectral decomposition.

    Intended for exponents 1/2, -1/2 and -1.  Raises
    :class:`NearSingularError` when the smallest eigenvalue is at or below
    ``floor`` times the largest.
    """
    eig = spectral_decomp(A, name)
    _check_floor(eig.values, name, floor)
    return _power_from_eig(eig, exponent)


def _power_from_eig(eig, exponent):
    V = eig.vectors
    out = (V * eig.values**exponent) @ V.T
    return 0.5 * (out + out.T)


class WhitenedPair(NamedTuple):
    """``A^{-1/2}``, ``A^{1/2}`` and the eigensystem of ``A^{-1/2} B A^{-1/2}``."""

    inv_sqrt: np.ndarray
    sqrt: np.ndarray
    Q: np.ndarray
    values: np.ndarray


def whiten_pair(A, B, names=("A", "B"), floor: float = EIG_FLOOR) -> WhitenedPair:
    eig_a = spectral_decomp(A, names[0])
    _check_floor(eig_a.values, names[0], floor)
    a_inv_sqrt = _power_from_eig(eig_a, -0.5)
    a_sqrt = _power_from_eig(eig_a, 0.5)
    inner = spectral_decomp(a_inv_sqrt @ np.asarray(B, dtype=float) @ a_inv_sqrt, names[1])
    _check_floor(inner.values, names[1], floor)
    return WhitenedPair(a_inv_sqrt, a_sqrt, inner.vectors, inner.values)


def kron_sum_inv_block_trace(A, B, X: SpectralDecomp) -> np.ndarray:
    """``block_trace_P((A kron I + B kron X)^{-1})`` without forming it.

    ``A`` and ``B`` are ``P x P`` SPD, ``X`` the eigensystem of an ``N x N``
    SPD matrix.  Cost is ``O(P^3 + NP)``.
    """
    w = whiten_pair(A, B)
    diag = (1.0 / (1.0 + np.outer(X.values, w.values))).sum(axis=0)
    T = w.inv_sqrt @ w.Q
    out = (T * diag) @ T.T
    return 0.5 * (out + out.T)


def outer_block_trace(U, V, X) -> np.ndarray:
    """``block_trace_P(vec(U) vec(V)^T (I_P kron X))`` computed as ``U^T X^T V``."""
    U = np.asarray(U, dtype=float)
    V = np.asarray(V, dtype=float)
    X = np.asarray(X, dtype=float)
    if U.shape != V.shape or U.ndim != 2:
        raise ValueError(f"U and V must share an N x P shape, got {U.shape} and {V.shape}")
    if X.shape != (U.shape[0], U.shape[0]):
        raise ValueError(f"X must be {U.shape[0]}x{U.shape[0]}, got {X.shape}")
    return U.T @ X.T @ V


def resolvent_scores(w: WhitenedPair, x_values, Y_rot):
    """The ``S`` matrix shared by the quadratic-form identities.

    ``S = unvec(diag([I + L kron L_X]^{-1})) * (U^T Y A^{1/2} Q)`` with ``Y_rot``
    already equal to ``U^T Y``.
    """
    resolvent = 1.0 / (1.0 + np.outer(x_values, w.values))
    return resolvent * (Y_rot @ (w.sqrt @ w.Q)), resolvent


def quadform_block_traces(A, B, X: SpectralDecomp, Y):
    """Block traces of ``T y y^T T^T`` for ``T = [I + (A^{-1}B) kron X]^{-1}``.

    Returns the pair ``(block_trace_P(T y y^T T^T (I kron X)),
    block_trace_P(T y y^T T^T))`` where ``y = vec(Y)``, at ``O(NP^2 + P^3)``
    cost after rotating ``Y`` by the eigenvectors of ``X``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != X.dim:
        raise ValueError(f"Y has {Y.shape[0]} rows but X is {X.dim}x{X.dim}")
    w = whiten_pair(A, B)
    S, _ = resolvent_scores(w, X.values, X.vectors.T @ Y)
    G = w.inv_sqrt @ w.Q @ S.T
    return (G * X.values) @ G.T, G @ G.T
