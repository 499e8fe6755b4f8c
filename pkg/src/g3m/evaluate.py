"""Edge recovery scoring, penalty sweeps and ROC summaries.

Edge indices are 0-based throughout.
"""

from __future__ import annotations

import logging
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import kron_glasso_known_R, vanilla_glasso
from .em import FitConfig, fit_g3m
from .kron_linalg import check_spd, spectral_decomp
from .mstep import GlassoSettings, NoiseModel

__all__ = [
    "METHODS",
    "EdgeSet",
    "MethodSpec",
    "RocPoint",
    "SweepResult",
    "auc",
    "edge_set",
    "export_network",
    "fit_method",
    "lambda_grid",
    "roc_sweep",
    "roc_sweeps",
    "score_recovery",
    "sweep_dataset",
    "threshold_at_power",
]

logger = logging.getLogger(__name__)

METHODS = ("g3m-dense", "g3m-iid", "g3m-sparse", "kronglasso", "vanilla")


@dataclass(frozen=True)
class EdgeSet:
    P: int
    edges: frozenset

    def __len__(self):
        return len(self.edges)


@dataclass(frozen=True)
class RocPoint:
    lam: float
    fpr: float
    tpr: float
    n_edges: int


def edge_set(C, zero_tol: float = 1e-8) -> EdgeSet:
    """Pairs ``(i, j)``, ``i < j``, with ``|C_ij| > zero_tol``."""
    if zero_tol < 0:
        raise ValueError("zero_tol must be nonnegative")
    C = np.asarray(C)
    iu, ju = np.triu_indices(C.shape[0], 1)
    keep = np.abs(C[iu, ju]) > zero_tol
    return EdgeSet(C.shape[0], frozenset(zip(iu[keep].tolist(), ju[keep].tolist())))


def score_recovery(est: EdgeSet, truth: EdgeSet):
    """``(tpr, fpr)`` of an estimated edge set against the truth."""
    if est.P != truth.P:
        raise ValueError("edge sets are over different node counts")
    pairs = truth.P * (truth.P - 1) // 2
    n_true = len(truth.edges)
    tp = len(est.edges & truth.edges)
    fp = len(est.edges - truth.edges)
    tpr = tp / n_true if n_true else 1.0
    fpr = fp / (pairs - n_true) if pairs > n_true else 0.0
    return tpr, fpr


def lambda_grid(x_min: float = -7.0, x_max: float = 3.0, n: int = 50) -> np.ndarray:
    """``5 ** x`` for ``n`` equally spaced exponents from ``x_min`` to ``x_max``."""
    if n < 2:
        raise ValueError("a grid needs at least two points")
    return 5.0 ** np.linspace(x_min, x_max, n)


def auc(points) -> float:
    """Trapezoidal area under an ROC curve closed with (0, 0) and (1, 1)."""
    pts = sorted((float(p.fpr), float(p.tpr)) for p in points)
    x = np.array([0.0] + [p[0] for p in pts] + [1.0])
    y = np.array([0.0] + [p[1] for p in pts] + [1.0])
    return float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2))


def export_network(C, zero_tol: float = 1e-8) -> dict:
    """JSON-ready edge list ``{"n_nodes": P, "edges": [{"i", "j", "weight"}]}``."""
    C = np.asarray(C)
    es = edge_set(C, zero_tol)
    edges = [{"i": i, "j": j, "weight": float(C[i, j])} for i, j in sorted(es.edges)]
    return {"n_nodes": int(C.shape[0]), "edges": edges}


def threshold_at_power(points, target_tpr: float) -> float:
    """Largest penalty whose averaged power reaches ``target_tpr``.

    Only points with at least one edge count; that is the sparsest network
    on the curve with the requested power.
    """
    if not 0 <= target_tpr <= 1:
        raise ValueError(f"target power must lie in [0, 1], got {target_tpr}")
    points = list(points)
    hits = [p.lam for p in points if p.tpr >= target_tpr and p.n_edges > 0]
    if not hits:
        best = max((p.tpr for p in points), default=float("nan"))
        raise ValueError(f"power {target_tpr} is unreachable; maximum achieved power is {best:.4g}")
    return max(hits)


@dataclass(frozen=True)
class MethodSpec:
    """A method name plus, for ``g3m-sparse``, either a fixed ``gamma`` or a
    ``gamma_grid`` searched per penalty against the true graph (oracle mode,
    simulations only)."""

    name: str
    gamma: float | None = None
    gamma_grid: tuple | None = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {', '.join(METHODS)}")
        if self.name == "g3m-sparse":
            if (self.gamma is None) == (self.gamma_grid is None):
                raise ValueError("g3m-sparse needs exactly one of gamma or gamma_grid")
        elif self.gamma is not None or self.gamma_grid is not None:
            raise ValueError(f"{self.name} takes no gamma")

    @classmethod
    def parse(cls, text: str, gamma_grid=None) -> "MethodSpec":
        """``"g3m-dense"``, ``"g3m-sparse(0.1)"`` or ``"g3m-sparse"`` (oracle grid)."""
        m = re.fullmatch(r"\s*([a-z0-9-]+)\s*(?:\(\s*([^)]*)\s*\))?\s*", text)
        if not m:
            raise ValueError(f"cannot parse method {text!r}")
        name, arg = m.groups()
        if arg is not None:
            return cls(name, gamma=float(arg))
        if name == "g3m-sparse":
            if gamma_grid is None:
                raise ValueError("g3m-sparse without a fixed gamma needs a gamma grid")
            return cls(name, gamma_grid=tuple(float(g) for g in gamma_grid))
        return cls(name)

    @property
    def label(self) -> str:
        if self.name == "g3m-sparse" and self.gamma is not None:
            return f"g3m-sparse({self.gamma:g})"
        return self.name


@dataclass(frozen=True)
class SweepOptions:
    glasso: GlassoSettings = field(default_factory=GlassoSettings)
    max_iters: int = 200
    rel_tol: float = 1e-6
    center: bool = True
    zero_tol: float = 1e-8


def fit_method(method: MethodSpec, Y, R_eig, lam: float, options: SweepOptions, gamma=None, init=None):
    """One fit; returns ``(C_hat, warm_start_state, info_dict)``."""
    if method.name == "vanilla":
        res = vanilla_glasso(Y, lam, options.glasso, center=options.center, init=init)
        return res.C_hat, res.C_hat, {"iters": 1, "converged": True}
    if method.name == "kronglasso":
        res = kron_glasso_known_R(Y, None, lam, options.glasso, max_iters=options.max_iters,
                                  rel_tol=options.rel_tol, center=options.center, init=init,
                                  R_eig=R_eig)
        return res.C_hat, (res.C_hat, res.tau), {"iters": res.iters, "converged": res.converged}
    kind = method.name.split("-", 1)[1]
    noise = NoiseModel(kind, gamma if kind == "sparse" else 0.0)
    cfg = FitConfig(lam=lam, noise=noise, max_iters=options.max_iters, rel_tol=options.rel_tol,
                    glasso=options.glasso)
    res = fit_g3m(Y, None, cfg, center=options.center, init=init, R_eig=R_eig)
    return res.C_hat, (res.C_hat, res.D_hat), {"iters": res.iters, "converged": res.converged}


def _precision(est: EdgeSet, truth: EdgeSet) -> float:
    return len(est.edges & truth.edges) / len(est.edges) if est.edges else 0.0


def sweep_dataset(method: MethodSpec, Y, R, C_true, grid, options: SweepOptions | None = None,
                  keep_estimates: bool = False):
    """Fit one dataset along the penalty grid with warm starts.

    Returns a list with one dict per penalty: ``lam``, ``tpr``, ``fpr``,
    ``n_edges``, ``iters``, ``converged``, ``gamma`` and ``error`` (``None``
    unless that fit failed, in which case the rates are ``nan``).  With
    ``keep_estimates`` each successful row also carries ``C_hat``.
    """
    options = options or SweepOptions()
    R_eig = spectral_decomp(check_spd(R, "R"), "R")
    truth = edge_set(C_true, options.zero_tol)
    gammas = [method.gamma] if method.gamma_grid is None else list(method.gamma_grid)
    warm = {g: None for g in gammas}
    rows = []
    for lam in grid:
        best = None
        for g in gammas:
            try:
                C, state, info = fit_method(method, Y, R_eig, float(lam), options, g, warm[g])
            except Exception as exc:  # noqa: BLE001 - reported per cell
                warm[g] = None
                logger.warning("%s lam=%g gamma=%s failed: %s", method.label, lam, g, exc)
                if best is None:
                    best = {"error": str(exc), "gamma": g}
                continue
            warm[g] = state
            est = edge_set(C, options.zero_tol)
            tpr, fpr = score_recovery(est, truth)
            cand = {"tpr": tpr, "fpr": fpr, "n_edges": len(est), "gamma": g,
                    "precision": _precision(est, truth), "error": None, **info}
            if keep_estimates:
                cand["C_hat"] = C
            if best is None or best.get("error") or cand["precision"] > best["precision"]:
                best = cand
        row = {"lam": float(lam), "tpr": float("nan"), "fpr": float("nan"), "n_edges": 0,
               "iters": 0, "converged": False}
        row.update(best)
        row.pop("precision", None)
        rows.append(row)
    return rows


def _sweep_job(args):
    method, ds, grid, options = args
    return sweep_dataset(method, ds.Y, ds.R, ds.C_true, grid, options)


@dataclass
class SweepResult:
    method: MethodSpec
    points: list
    details: list  # details[d][k] is the row for dataset d at grid[k]
    failures: list

    @property
    def auc(self) -> float:
        return auc(self.points)


def _aggregate(method, grid, details) -> SweepResult:
    points, failures = [], []
    for k, lam in enumerate(grid):
        ok = [d[k] for d in details if d[k]["error"] is None]
        for i, d in enumerate(details):
            if d[k]["error"] is not None:
                failures.append({"dataset": i, "lam": float(lam), "error": d[k]["error"]})
        if 2 * len(ok) < len(details):
            continue
        points.append(RocPoint(
            lam=float(lam),
            fpr=float(np.mean([r["fpr"] for r in ok])),
            tpr=float(np.mean([r["tpr"] for r in ok])),
            n_edges=int(round(np.mean([r["n_edges"] for r in ok]))),
        ))
    return SweepResult(method, points, details, failures)


def roc_sweeps(datasets, methods, grid, options: SweepOptions | None = None,
               n_jobs: int = 1) -> list[SweepResult]:
    """Average power and type I error over datasets at each penalty, for
    several methods.

    Each (method, dataset) pair is one warm-started chain along the grid and
    one job for the worker pool.  A point is emitted for a penalty only when
    at least half the datasets produced a fit there.  Results do not depend
    on ``n_jobs``.
    """
    datasets = list(datasets)
    if not datasets:
        raise ValueError("a sweep needs at least one dataset")
    methods = [MethodSpec.parse(m) if isinstance(m, str) else m for m in methods]
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty penalty grid")
    options = options or SweepOptions()
    jobs = [(m, ds, grid, options) for m in methods for ds in datasets]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(n_jobs, len(jobs))) as pool:
            details = list(pool.map(_sweep_job, jobs))
    else:
        details = [_sweep_job(j) for j in jobs]
    n = len(datasets)
    return [_aggregate(m, grid, details[i * n:(i + 1) * n]) for i, m in enumerate(methods)]


def roc_sweep(datasets, method, grid, options: SweepOptions | None = None,
              n_jobs: int = 1) -> SweepResult:
    """Single-method :func:`roc_sweeps`."""
    return roc_sweeps(datasets, [method], grid, options, n_jobs)[0]
