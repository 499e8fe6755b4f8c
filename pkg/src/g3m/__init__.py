"""Sparse trait networks from related samples.

The model is ``Y = Z + eps`` with ``vec(Z) ~ N(0, (C kron R)^{-1})`` and
``vec(eps) ~ N(0, (D kron I)^{-1})``.  ``R`` is a known row precision
(relatedness), ``C`` the sparse trait network and ``D`` the noise precision.
:func:`fit_g3m` estimates ``C`` and ``D`` by exact EM with an
``O(N P^2 + P^3)`` E-step after one ``N x N`` eigendecomposition.
"""

from .baselines import BaselineResult, kron_glasso_known_R, maximize_tau, vanilla_glasso
from .em import FitConfig, FitError, FitResult, fit_g3m, penalized_objective, select_model
from .estep import ModelParams, observed_loglik, posterior_moments
from .evaluate import (EdgeSet, MethodSpec, RocPoint, SweepOptions, SweepResult, auc, edge_set,
                       export_network, lambda_grid, roc_sweep, roc_sweeps, score_recovery,
                       threshold_at_power)
from .kron_linalg import NearSingularError, SpectralDecomp, spectral_decomp
from .mstep import GlassoConvergenceError, GlassoSettings, NoiseModel, glasso
from .simulate import Dataset, GeneratorSpec, SimConfig, heritability, make_dataset, simulate

__version__ = "0.1.0"

__all__ = [
    "BaselineResult",
    "Dataset",
    "EdgeSet",
    "FitConfig",
    "FitError",
    "FitResult",
    "GeneratorSpec",
    "GlassoConvergenceError",
    "GlassoSettings",
    "MethodSpec",
    "ModelParams",
    "NearSingularError",
    "NoiseModel",
    "RocPoint",
    "SimConfig",
    "SpectralDecomp",
    "SweepOptions",
    "SweepResult",
    "auc",
    "edge_set",
    "export_network",
    "fit_g3m",
    "glasso",
    "heritability",
    "kron_glasso_known_R",
    "lambda_grid",
    "make_dataset",
    "maximize_tau",
    "observed_loglik",
    "penalized_objective",
    "posterior_moments",
    "roc_sweep",
    "roc_sweeps",
    "score_recovery",
    "select_model",
    "simulate",
    "spectral_decomp",
    "threshold_at_power",
    "vanilla_glasso",
]
