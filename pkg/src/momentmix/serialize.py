"""On-disk formats: moment JSON, sample CSV, parameter/solution/report JSON.

All JSON is written with sorted keys and fixed separators so identical runs
produce byte-identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from momentmix.errors import InputError
from momentmix.moments import MixtureParams, MomentTable


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def save_json(obj, path):
    Path(path).write_text(canonical_dumps(obj))


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON in {path}: {exc}")


def moments_to_obj(table: MomentTable) -> dict:
    return {
        "n": table.n,
        "moments": [
            {"index": list(key), "value": value} for key, value in table.sorted_items()
        ],
    }


def moments_from_obj(obj) -> MomentTable:
    try:
        table = MomentTable(int(obj["n"]))
        for entry in obj["moments"]:
            table.set(tuple(entry["index"]), float(entry["value"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed moment JSON: {exc}")
    return table


def load_moments(path) -> MomentTable:
    return moments_from_obj(load_json(path))


def save_moments(table: MomentTable, path):
    save_json(moments_to_obj(table), path)


def params_to_obj(params: MixtureParams) -> dict:
    return {
        "k": params.k,
        "n": params.n,
        "weights": params.weights.tolist(),
        "means": params.means.tolist(),
        "covariances": params.covariances.tolist(),
    }


def params_from_obj(obj) -> MixtureParams:
    try:
        return MixtureParams(obj["weights"], obj["means"], obj["covariances"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed parameter JSON: {exc}")


def load_params(path) -> MixtureParams:
    return params_from_obj(load_json(path))


def save_params(params: MixtureParams, path):
    save_json(params_to_obj(params), path)


def load_covariance(path) -> np.ndarray:
    obj = load_json(path)
    try:
        cov = np.asarray(obj["covariance"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed covariance JSON: {exc}")
    return cov


def _value_list(arr) -> list:
    """Real floats for realified values, [re, im] pairs otherwise."""
    out = []
    for v in np.asarray(arr).tolist():
        if isinstance(v, complex):
            if v.imag == 0.0:
                out.append(v.real)
            else:
                out.append([v.real, v.imag])
        else:
            out.append(float(v))
    return out


def solutions_to_obj(model, k: int, solutions, stats=None) -> dict:
    obj = {
        "class": str(getattr(model, "value", model)),
        "k": k,
        "solutions": [
            {
                "weights": _value_list(s.weights),
                "means": _value_list(s.means),
                "vars": _value_list(s.vars),
                "residual": s.residual,
                "meaningful": s.meaningful,
            }
            for s in solutions
        ],
    }
    if stats is not None:
        obj["path_stats"] = dict(stats)
    return obj


def report_to_obj(report) -> dict:
    obj = {
        "paths_tracked": report.paths_tracked,
        "wall_time_ms": report.wall_time_s * 1e3,
        "stage_residuals": dict(report.stage_residuals),
        "path_stats": dict(report.path_stats),
        "conditions": dict(report.conditions),
        "stage_times_s": dict(report.stage_times),
    }
    if report.normalized_error is not None:
        obj["normalized_error"] = report.normalized_error
    return obj


def load_samples_csv(path) -> np.ndarray:
    """Sample matrix from CSV (comma or whitespace separated, optional
    header row); rejects NaN/Inf and empty files."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise InputError(f"no such file: {path}")
    rows = []
    for lineno, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = [f for f in line.replace(",", " ").split() if f]
        try:
            row = [float(f) for f in fields]
        except ValueError:
            if lineno == 0 or not rows:
                continue  # header row
            raise InputError(f"non-numeric value on line {lineno + 1} of {path}")
        rows.append(row)
    if not rows:
        raise InputError(f"no samples in {path}")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"ragged rows in {path}")
    data = np.array(rows, dtype=float)
    if not np.all(np.isfinite(data)):
        raise InputError(f"NaN or Inf sample value in {path}")
    return data
