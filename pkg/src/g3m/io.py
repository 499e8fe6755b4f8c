"""On-disk formats: matrix CSVs, dataset directories, ROC tables and JSON.

Floats are written with ``repr``, the shortest decimal string that reads
back to the identical double, so files are exact and diffable.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .simulate import Dataset

__all__ = [
    "ConfigError",
    "dataset_dirname",
    "dump_json",
    "format_float",
    "load_json_strict",
    "read_dataset",
    "read_manifest",
    "read_matrix",
    "read_roc_csv",
    "to_jsonable",
    "write_dataset",
    "write_json",
    "write_manifest",
    "write_matrix",
    "write_roc_csv",
]

ROC_HEADER = ("method", "lambda", "fpr", "tpr", "n_edges")
MATRIX_FILES = ("Y", "R", "C_true", "D_true")


class ConfigError(ValueError):
    """Malformed or invalid configuration; ``path`` names the offending field."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def format_float(x) -> str:
    return repr(float(x))


def to_jsonable(obj):
    """Recursively convert numpy scalars and arrays, tuples and dataclass
    dicts into plain JSON types."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dump_json(obj) -> str:
    return json.dumps(to_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dump_json(obj), encoding="utf-8")


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ConfigError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _reject_constant(name):
    raise ConfigError(f"non-finite number {name} is not allowed")


def load_json_strict(path) -> dict:
    """Parse a JSON object, rejecting duplicate keys and NaN/Infinity."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        obj = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return obj


def write_matrix(path, A) -> None:
    """One CSV line per row, no header."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lines = [",".join(format_float(x) for x in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_matrix(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2, dtype=float)


def dataset_dirname(index: int) -> str:
    return f"dataset_{index:04d}"


def write_dataset(directory, ds: Dataset, config: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "Y.csv", ds.Y)
    write_matrix(d / "R.csv", ds.R)
    write_matrix(d / "C_true.csv", ds.C_true)
    write_matrix(d / "D_true.csv", ds.D_true)
    meta = dict(ds.meta)
    if config is not None:
        meta["config"] = config
    write_json(d / "meta.json", meta)
    return d


def read_dataset(directory) -> Dataset:
    d = Path(directory)
    mats = {name: read_matrix(d / f"{name}.csv") for name in MATRIX_FILES}
    meta_path = d / "meta.json"
    meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
    return Dataset(mats["Y"], mats["R"], mats["C_true"], mats["D_true"], meta)


def write_manifest(directory, seed: int, n_datasets: int) -> None:
    entries = [{"index": i, "dir": dataset_dirname(i), "seed": seed, "spawn_key": [i]}
               for i in range(n_datasets)]
    write_json(Path(directory) / "manifest.json",
               {"seed": seed, "n_datasets": n_datasets, "datasets": entries})


def read_manifest(directory) -> list[Path]:
    """Dataset directories listed in ``manifest.json``, in index order."""
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text(encoding="utf-8"))
    entries = sorted(manifest["datasets"], key=lambda e: e["index"])
    return [d / e["dir"] for e in entries]


def write_roc_csv(path, rows) -> None:
    """``rows`` are ``(method_label, RocPoint)`` pairs."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ROC_HEADER)
        for label, p in rows:
            w.writerow([label, format_float(p.lam), format_float(p.fpr), format_float(p.tpr),
                        int(p.n_edges)])


def read_roc_csv(path) -> dict:
    """``{method_label: [RocPoint, ...]}`` in file order."""
    from .evaluate import RocPoint

    out: dict = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != ROC_HEADER:
            raise ConfigError(f"{path} does not have the ROC header {','.join(ROC_HEADER)}")
        for row in reader:
            out.setdefault(row["method"], []).append(RocPoint(
                float(row["lambda"]), float(row["fpr"]), float(row["tpr"]), int(row["n_edges"])))
    return out
