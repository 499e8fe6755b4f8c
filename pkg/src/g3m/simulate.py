"""Synthetic datasets: family-structured relatedness, precision generators, sampling."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .kron_linalg import NearSingularError, check_spd, spd_power

__all__ = [
    "Dataset",
    "GeneratorSpec",
    "SimConfig",
    "dataset_rng",
    "gen_ar1_precision",
    "gen_precision",
    "gen_random_precision",
    "gen_wishart_precision",
    "heritability",
    "make_dataset",
    "make_family_R",
    "normalize_variance",
    "sample_dataset",
    "scale_snr",
    "simulate",
]

WISHART_RIDGE = 1e-6


@dataclass(frozen=True)
class GeneratorSpec:
    """Which precision-matrix family to draw from.

    ``ar1``: tridiagonal AR(1)-process precision (``form="process"``) or the
    Toeplitz matrix ``rho^|i-j|`` used directly (``form="toeplitz"``).
    ``random``: equal-valued random edges shifted to condition number ``P``.
    ``wishart``: Wishart(dof, scale * I); ``dof=None`` means ``P - 3`` and
    ``scale=None`` means ``1 / dof``.
    ``iid``: the identity.
    """

    kind: str = "random"
    rho: float = 0.8
    density: float = 0.01
    dof: int | None = None
    scale: float | None = None
    form: str = "process"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("ar1", "random", "wishart", "iid"):
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if self.kind == "ar1" and not abs(self.rho) < 1:
            raise ValueError("ar1 needs |rho| < 1")
        if self.kind == "ar1" and self.form not in ("process", "toeplitz"):
            raise ValueError(f"unknown ar1 form {self.form!r}")
        if self.kind == "random" and not 0 < self.density <= 1:
            raise ValueError("random density must lie in (0, 1]")
        if self.kind == "wishart":
            if self.dof is not None and self.dof < 1:
                raise ValueError("wishart dof must be positive")
            if self.scale is not None and not self.scale > 0:
                raise ValueError("wishart scale must be positive")


@dataclass(frozen=True)
class SimConfig:
    N: int = 400
    P: int = 50
    n_datasets: int = 40
    C_gen: GeneratorSpec = field(default_factory=lambda: GeneratorSpec("random", density=0.01))
    D_gen: GeneratorSpec = field(default_factory=lambda: GeneratorSpec("wishart"))
    snr: float = 0.2
    family_size: int = 5
    within_family_corr: float = 0.5
    structure_on: str = "covariance"
    unit_variance: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.N < 1 or self.P < 1:
            raise ValueError("N and P must be positive")
        if self.n_datasets < 0:
            raise ValueError("n_datasets must be nonnegative")
        if self.family_size < 1 or self.N % self.family_size:
            raise ValueError("N must be divisible by family_size")
        if not self.snr > 0:
            raise ValueError("snr must be positive")
        if not 0 <= self.within_family_corr < 1:
            raise ValueError("within_family_corr must lie in [0, 1)")
        if self.structure_on not in ("covariance", "precision"):
            raise ValueError(f"unknown structure_on {self.structure_on!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Dataset:
    Y: np.ndarray
    R: np.ndarray
    C_true: np.ndarray
    D_true: np.ndarray
    meta: dict = field(default_factory=dict)


def dataset_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for dataset ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def make_family_R(n_families: int, family_size: int, r: float, structure_on: str = "covariance") -> np.ndarray:
    """Block-diagonal relatedness with ``n_families`` identical blocks.

    The kinship covariance ``K`` has unit diagonal and ``r`` within each
    family.  By default the returned row precision is ``R = K^{-1}``, inverted
    blockwise in closed form; ``structure_on="precision"`` returns ``K``
    itself as the precision.
    """
    if not r < 1:
        raise NearSingularError(f"within-family correlation {r} makes the kinship singular")
    if r < 0:
        raise ValueError("within-family correlation must be nonnegative")
    m = family_size
    ones = np.ones((m, m))
    if structure_on == "precision":
        block = (1 - r) * np.eye(m) + r * ones
    elif structure_on == "covariance":
        # ((1-r) I + r 11^T)^{-1} = (I - r / (1 - r + r m) 11^T) / (1 - r)
        block = (np.eye(m) - r / (1 - r + r * m) * ones) / (1 - r)
    else:
        raise ValueError(f"unknown structure_on {structure_on!r}")
    return np.kron(np.eye(n_families), block)


def gen_ar1_precision(P: int, rho: float = 0.8, form: str = "process") -> np.ndarray:
    """AR(1) precision with unit innovation variance.

    ``form="process"`` gives the tridiagonal inverse of the stationary AR(1)
    covariance (scaled by ``1 - rho^2``): diagonal ``(1, 1+rho^2, ..., 1)``,
    off-diagonal ``-rho``.  ``form="toeplitz"`` returns ``rho^|i-j|``.
    """
    if not abs(rho) < 1:
        raise ValueError("|rho| must be below 1")
    if form == "toeplitz":
        idx = np.arange(P)
        return rho ** np.abs(idx[:, None] - idx[None, :]).astype(float)
    if form != "process":
        raise ValueError(f"unknown form {form!r}")
    C = np.diag(np.full(P, 1.0 + rho**2))
    if P >= 1:
        C[0, 0] = C[-1, -1] = 1.0
    i = np.arange(P - 1)
    C[i, i + 1] = C[i + 1, i] = -rho
    return C


def n_random_edges(P: int, density: float) -> int:
    pairs = P * (P - 1) // 2
    return min(pairs, math.ceil(density * pairs - 1e-9))


def gen_random_precision(P: int, density: float, rng: np.random.Generator, value: float = 1.0) -> np.ndarray:
    """Random sparse precision with condition number exactly ``P``.

    ``ceil(density * P(P-1)/2)`` distinct off-diagonal pairs are set to
    ``value``, then ``c I`` is added with ``c = (l_max - P l_min) / (P - 1)``.
    """
    if not 0 < density <= 1:
        raise ValueError("density must lie in (0, 1]")
    iu, ju = np.triu_indices(P, 1)
    chosen = rng.choice(iu.size, size=n_random_edges(P, density), replace=False)
    A = np.zeros((P, P))
    A[iu[chosen], ju[chosen]] = value
    A[ju[chosen], iu[chosen]] = value
    ev = np.linalg.eigvalsh(A)
    lmin, lmax = ev[0], ev[-1]
    if P < 2 or np.isclose(lmax, lmin, rtol=0, atol=1e-12 * max(abs(lmax), 1.0)):
        warnings.warn("random precision has no edge spread; returning the identity", stacklevel=2)
        return np.eye(P)
    c = (lmax - P * lmin) / (P - 1)
    return A + c * np.eye(P)


def wishart_raw(P: int, rng: np.random.Generator, dof: int | None = None, scale: float | None = None) -> np.ndarray:
    """``X^T X`` for ``dof`` iid ``N(0, scale I_P)`` rows; singular when ``dof < P``."""
    dof = P - 3 if dof is None else dof
    scale = 1.0 / dof if scale is None else scale
    X = rng.standard_normal((dof, P)) * np.sqrt(scale)
    W = X.T @ X
    return 0.5 * (W + W.T)


def gen_wishart_precision(P: int, rng: np.random.Generator, dof: int | None = None,
                          scale: float | None = None, ridge: float = WISHART_RIDGE) -> np.ndarray:
    """Wishart(P - 3, I/(P - 3)) draw plus ``ridge * trace/P * I`` to restore rank."""
    if dof is None and P <= 4:
        raise ValueError("the default Wishart generator needs P > 4")
    W = wishart_raw(P, rng, dof, scale)
    return W + ridge * np.trace(W) / P * np.eye(P)


def gen_precision(spec: GeneratorSpec, P: int, rng: np.random.Generator) -> np.ndarray:
    if spec.kind == "ar1":
        return gen_ar1_precision(P, spec.rho, spec.form)
    if spec.kind == "random":
        return gen_random_precision(P, spec.density, rng, spec.value)
    if spec.kind == "wishart":
        return gen_wishart_precision(P, rng, spec.dof, spec.scale)
    return np.eye(P)


def scale_snr(C, D, target: float):
    """Rescale ``C`` so that ``tr(C^{-1}) / tr(D^{-1}) == target``; ``D`` is returned as is."""
    if not target > 0:
        raise ValueError("target SNR must be positive")
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    alpha = np.trace(np.linalg.inv(C)) / (target * np.trace(np.linalg.inv(D)))
    return alpha * C, D


def normalize_variance(C, D, target: float = 1.0):
    """Scale ``C`` and ``D`` by a common factor so the mean marginal variance
    ``(tr(C^{-1}) + tr(D^{-1})) / P`` equals ``target``.  SNR and every
    per-trait heritability are unchanged."""
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    kappa = (np.trace(np.linalg.inv(C)) + np.trace(np.linalg.inv(D))) / (target * C.shape[0])
    return kappa * C, kappa * D


def heritability(C, D):
    """Per-trait ``h2_i = Cinv_ii / (Cinv_ii + Dinv_ii)`` and the global SNR."""
    cv = np.diag(np.linalg.inv(C))
    dv = np.diag(np.linalg.inv(D))
    return cv / (cv + dv), float(cv.sum() / dv.sum())


def sample_dataset(R, C, D, rng: np.random.Generator) -> Dataset:
    """Draw ``Y = Z + eps`` with ``Z ~ MN(0, R^{-1}, C^{-1})`` and ``eps ~ MN(0, I, D^{-1})``."""
    R = check_spd(R, "R")
    C = check_spd(C, "C")
    D = check_spd(D, "D", floor=1e-15)
    N, P = R.shape[0], C.shape[0]
    K_half = spd_power(R, -0.5, name="R")
    C_half = spd_power(C, -0.5, name="C")
    D_half = spd_power(D, -0.5, floor=1e-15, name="D")
    Z = K_half @ rng.standard_normal((N, P)) @ C_half
    eps = rng.standard_normal((N, P)) @ D_half
    h2, snr = heritability(C, D)
    return Dataset(Z + eps, R, C, D, {"snr": snr, "h2": h2.tolist(), "h2_global": snr / (1 + snr)})


def make_dataset(config: SimConfig, index: int) -> Dataset:
    """Dataset ``index`` of a study; depends only on ``(config, index)``."""
    rng = dataset_rng(config.seed, index)
    R = make_family_R(config.N // config.family_size, config.family_size,
                      config.within_family_corr, config.structure_on)
    C0 = gen_precision(config.C_gen, config.P, rng)
    D0 = gen_precision(config.D_gen, config.P, rng)
    C, D = scale_snr(C0, D0, config.snr)
    if config.unit_variance:
        C, D = normalize_variance(C, D)
    ds = sample_dataset(R, C, D, rng)
    ds.meta.update({"seed": config.seed, "index": index})
    if config.D_gen.kind == "wishart":
        ds.meta["wishart_ridge"] = WISHART_RIDGE
    return ds


def simulate(config: SimConfig) -> list[Dataset]:
    return [make_dataset(config, i) for i in range(config.n_datasets)]
