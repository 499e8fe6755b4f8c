"""Command-line front end: ``g3m simulate | fit | sweep | report``.

Every command reads a strict JSON config (unknown keys are rejected), writes
its fully resolved config to ``<out>/config.json`` and exits with 0 on
success, 1 on invalid input, 2 on numerical failure and 3 on I/O errors.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import re
import sys
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .baselines import TauSearchError
from .em import FitConfig, FitError, fit_g3m
from .evaluate import (METHODS, MethodSpec, SweepOptions, export_network, lambda_grid,
                       roc_sweeps, sweep_dataset, threshold_at_power)
from .io import ConfigError
from .mstep import GlassoConvergenceError, GlassoSettings, NoiseModel
from .simulate import GeneratorSpec, SimConfig, make_dataset

__all__ = ["FitRun", "GridSpec", "ReportRun", "SweepRun", "build_config", "main"]

logger = logging.getLogger("g3m")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3


@dataclass(frozen=True)
class GridSpec:
    """Penalties ``5 ** x`` for ``n`` exponents from ``x_min`` to ``x_max``."""

    x_min: float = -7.0
    x_max: float = 3.0
    n: int = 50

    def values(self) -> np.ndarray:
        return lambda_grid(self.x_min, self.x_max, self.n)


@dataclass(frozen=True)
class FitRun:
    data: str
    lam: float
    noise: str = "dense"
    max_iters: int = 200
    rel_tol: float = 1e-6
    init: str = "diagonal-moment"
    center: bool = True
    glasso: GlassoSettings = field(default_factory=GlassoSettings)


@dataclass(frozen=True)
class SweepRun:
    datasets: str
    methods: tuple = ("vanilla", "kronglasso", "g3m-dense")
    grid: GridSpec = field(default_factory=GridSpec)
    gamma_grid: tuple | None = None
    max_iters: int = 200
    rel_tol: float = 1e-6
    center: bool = True
    zero_tol: float = 1e-8
    detail: bool = False
    glasso: GlassoSettings = field(default_factory=GlassoSettings)

    def method_specs(self) -> list[MethodSpec]:
        return [MethodSpec.parse(m, self.gamma_grid) for m in self.methods]

    def options(self) -> SweepOptions:
        return SweepOptions(self.glasso, self.max_iters, self.rel_tol, self.center, self.zero_tol)


@dataclass(frozen=True)
class ReportRun:
    sweep: str
    method: str = "g3m-dense"
    target_power: float = 0.7
    dataset: int = 0


NESTED = {
    (SimConfig, "C_gen"): GeneratorSpec,
    (SimConfig, "D_gen"): GeneratorSpec,
    (FitRun, "glasso"): GlassoSettings,
    (SweepRun, "grid"): GridSpec,
    (SweepRun, "glasso"): GlassoSettings,
}
# the penalty is set per fit, never inside a glasso block
FORBIDDEN = {(GlassoSettings, "lam")}
PATH_FIELDS = {(FitRun, "data"), (SweepRun, "datasets"), (ReportRun, "sweep")}


def _coerce(value, hint, path):
    args = typing.get_args(hint)
    if typing.get_origin(hint) in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], path)
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError("expected true or false", path)
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path)
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path)
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError("expected a string", path)
        return value
    if hint is tuple:
        if not isinstance(value, list):
            raise ConfigError("expected a list", path)
        return tuple(value)
    return value


def build_config(cls, data, path: str = "config"):
    """Construct dataclass ``cls`` from a parsed JSON object, rejecting
    unknown keys and wrongly typed values with the offending field path."""
    if not isinstance(data, dict):
        raise ConfigError("expected an object", path)
    hints = typing.get_type_hints(cls)
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = sorted(set(data) - set(names))
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}; allowed: {', '.join(names)}", path)
    kwargs = {}
    for key, value in data.items():
        sub = f"{path}.{key}"
        if (cls, key) in FORBIDDEN:
            raise ConfigError("not allowed here", sub)
        nested = NESTED.get((cls, key))
        kwargs[key] = build_config(nested, value, sub) if nested else _coerce(value, hints[key], sub)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc), path) from exc
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc), path) from exc


def config_to_dict(cfg) -> dict:
    d = dataclasses.asdict(cfg)
    for k, v in list(d.items()):
        if isinstance(v, tuple):
            d[k] = list(v)
    if isinstance(cfg, (FitRun, SweepRun)):
        d["glasso"].pop("lam", None)
    return d


def _resolve_paths(cfg, base: Path):
    updates = {}
    for f in dataclasses.fields(cfg):
        if (type(cfg), f.name) in PATH_FIELDS:
            updates[f.name] = str((base / getattr(cfg, f.name)).resolve())
    return dataclasses.replace(cfg, **updates)


def load_config(cls, path):
    path = Path(path)
    cfg = build_config(cls, io.load_json_strict(path))
    return _resolve_paths(cfg, path.parent)


def parse_noise(tag: str) -> NoiseModel:
    """``"dense"``, ``"iid"`` or ``"sparse(gamma)"``."""
    m = re.fullmatch(r"\s*(dense|iid|sparse)\s*(?:\(\s*([^)]*)\s*\))?\s*", tag)
    if not m:
        raise ConfigError(f"invalid noise tag {tag!r}; use dense, iid or sparse(gamma)", "noise")
    kind, arg = m.groups()
    if kind == "sparse":
        if arg is None:
            raise ConfigError("sparse noise needs a penalty, e.g. sparse(0.1)", "noise")
        try:
            gamma = float(arg)
        except ValueError as exc:
            raise ConfigError(f"invalid sparse penalty {arg!r}", "noise") from exc
        return NoiseModel("sparse", gamma)
    if arg is not None:
        raise ConfigError(f"{kind} noise takes no argument", "noise")
    return NoiseModel(kind)


def _prepare_out(out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- commands ----------------------------------------------------------------

def cmd_simulate(config: SimConfig, out) -> int:
    out = _prepare_out(out)
    io.write_json(out / "config.json", config_to_dict(config))
    io.write_manifest(out, config.seed, config.n_datasets)
    cfg_dict = config_to_dict(config)
    for i in range(config.n_datasets):
        io.write_dataset(out / io.dataset_dirname(i), make_dataset(config, i), cfg_dict)
    logger.info("wrote %d datasets to %s", config.n_datasets, out)
    return EXIT_OK


def cmd_fit(run: FitRun, out) -> int:
    noise = parse_noise(run.noise)
    fit_cfg = FitConfig(lam=run.lam, noise=noise, max_iters=run.max_iters, rel_tol=run.rel_tol,
                        init=run.init, glasso=run.glasso)
    data = Path(run.data)
    Y = io.read_matrix(data / "Y.csv")
    R = io.read_matrix(data / "R.csv")
    out = _prepare_out(out)
    io.write_json(out / "config.json", config_to_dict(run))
    res = fit_g3m(Y, R, fit_cfg, center=run.center)
    io.write_matrix(out / "C_hat.csv", res.C_hat)
    if noise.kind != "iid":
        io.write_matrix(out / "D_hat.csv", res.D_hat)
    with open(out / "objective_trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("iteration", "objective"))
        for i, v in enumerate(res.objective_trace):
            w.writerow((i, io.format_float(v)))
    summary = {"iterations": res.iters, "converged": res.converged, "lambda": res.lam,
               "noise": run.noise.strip(), "n_edges": res.n_edges,
               "objective": float(res.objective_trace[-1])}
    if noise.kind == "iid":
        summary["tau"] = res.tau
    io.write_json(out / "summary.json", summary)
    logger.info("fit finished after %d iterations (converged=%s)", res.iters, res.converged)
    return EXIT_OK


DETAIL_HEADER = ("method", "dataset", "lambda", "tpr", "fpr", "n_edges", "iters", "converged",
                 "gamma", "error")


def cmd_sweep(run: SweepRun, out, threads: int = 1) -> int:
    methods = run.method_specs()
    if not methods:
        raise ConfigError("at least one method is required", "methods")
    labels = [m.label for m in methods]
    if len(set(labels)) != len(labels):
        raise ConfigError("duplicate methods", "methods")
    dirs = io.read_manifest(run.datasets)
    datasets = [io.read_dataset(d) for d in dirs]
    out = _prepare_out(out)
    io.write_json(out / "config.json", config_to_dict(run))
    results = roc_sweeps(datasets, methods, run.grid.values(), run.options(), n_jobs=threads)

    io.write_roc_csv(out / "roc.csv", [(r.method.label, p) for r in results for p in r.points])
    io.write_json(out / "auc.json", {r.method.label: r.auc for r in results})
    io.write_json(out / "failures.json",
                  {r.method.label: r.failures for r in results})
    if run.detail:
        with open(out / "detail.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DETAIL_HEADER)
            for r in results:
                for i, rows in enumerate(r.details):
                    for row in rows:
                        gamma = "" if row.get("gamma") is None else io.format_float(row["gamma"])
                        w.writerow((r.method.label, i, io.format_float(row["lam"]),
                                    io.format_float(row["tpr"]), io.format_float(row["fpr"]),
                                    row["n_edges"], row["iters"], row["converged"], gamma,
                                    row["error"] or ""))
    dead = [r.method.label for r in results if not r.points]
    for r in results:
        if r.failures:
            logger.warning("%s: %d failed cells", r.method.label, len(r.failures))
    if dead:
        logger.error("every penalty failed for: %s", ", ".join(dead))
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_report(run: ReportRun, out) -> int:
    sweep_dir = Path(run.sweep)
    sweep_cfg = load_config(SweepRun, sweep_dir / "config.json")
    curves = io.read_roc_csv(sweep_dir / "roc.csv")
    specs = {m.label: m for m in sweep_cfg.method_specs()}
    if run.method not in specs:
        raise ConfigError(f"method {run.method!r} is not in the sweep ({', '.join(specs)})", "method")
    lam = threshold_at_power(curves.get(run.method, []), run.target_power)

    dirs = io.read_manifest(sweep_cfg.datasets)
    if not 0 <= run.dataset < len(dirs):
        raise ConfigError(f"dataset index must lie in [0, {len(dirs)})", "dataset")
    ds = io.read_dataset(dirs[run.dataset])
    # replay the warm-started chain up to the selected penalty
    grid = sweep_cfg.grid.values()
    k = int(np.flatnonzero(np.isclose(grid, lam, rtol=1e-12, atol=0))[0])
    rows = sweep_dataset(specs[run.method], ds.Y, ds.R, ds.C_true, grid[:k + 1],
                         sweep_cfg.options(), keep_estimates=True)
    row = rows[-1]
    if row["error"] is not None:
        raise FitError(f"refit at lambda={lam:g} failed: {row['error']}", None)

    out = _prepare_out(out)
    io.write_json(out / "config.json", config_to_dict(run))
    zero_tol = sweep_cfg.zero_tol
    io.write_json(out / "network_estimated.json", export_network(row["C_hat"], zero_tol))
    io.write_json(out / "network_truth.json", export_network(ds.C_true, zero_tol))
    io.write_json(out / "report.json", {
        "method": run.method, "target_power": run.target_power, "lambda": lam,
        "dataset": run.dataset, "tpr": row["tpr"], "fpr": row["fpr"], "n_edges": row["n_edges"],
    })
    logger.info("lambda=%g reaches average power %.3f", lam, run.target_power)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _u64(text):
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text):
    try:
        v = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid thread count {text!r}") from exc
    if v < 1:
        raise argparse.ArgumentTypeError("thread count must be at least 1")
    return v


def _default_threads() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="g3m", description="Sparse trait networks from related samples.")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="more logging (repeat for debug output)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "generate synthetic datasets",
        "fit": "fit the model to one dataset",
        "sweep": "ROC sweep of several methods over a penalty grid",
        "report": "export networks at a target power",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=_positive_int, default=None,
                       help="worker processes for the sweep grid (default: available cores)")
        p.add_argument("--seed", type=_u64, default=None, help="override the config seed")
    return parser


def _run(args) -> int:
    if args.command == "simulate":
        cfg = load_config(SimConfig, args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        return cmd_simulate(cfg, args.out)
    if args.seed is not None:
        logger.warning("%s has no random component; --seed is ignored", args.command)
    if args.command == "fit":
        return cmd_fit(load_config(FitRun, args.config), args.out)
    if args.command == "sweep":
        threads = args.threads or _default_threads()
        return cmd_sweep(load_config(SweepRun, args.config), args.out, threads)
    return cmd_report(load_config(ReportRun, args.config), args.out)


NUMERICAL_ERRORS = (np.linalg.LinAlgError, FitError, GlassoConvergenceError, TauSearchError,
                    FloatingPointError)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except NUMERICAL_ERRORS as exc:
        print(f"g3m: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"g3m: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"g3m: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
