"""CSV ingestion of grouped datasets and JSON serialization of fit reports.

CSV layout (UTF-8, comma separated, header row required)::

    group,target[,obs_std],f_<name>...,r_<name>...

``group`` labels are kept as strings (so "1" and "01" stay distinct) and
mapped to groups by first appearance, ``obs_std`` defaults to 1.0 and each ``f_``/``r_`` column is a
fixed/random covariate. There is no implicit intercept column.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from mixedsel.errors import ParseError, SchemaError
from mixedsel.problem import LMEProblem, Params

GROUP = "group"
TARGET = "target"
OBS_STD = "obs_std"
FIXED_PREFIX = "f_"
RANDOM_PREFIX = "r_"


def _float(text: str, row: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"row {row}, column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise ParseError(f"row {row}, column {column!r}: value {text!r} is not finite")
    return value


def read_csv(path, require_random: bool = False) -> LMEProblem:
    """Reads a grouped long-format CSV into an :class:`LMEProblem`.

    Parameters
    ----------
    path : path-like
        CSV file following the module schema.
    require_random : bool
        Raise :class:`SchemaError` when there are no ``r_`` columns.

    Raises
    ------
    SchemaError
        Missing required or unknown columns, duplicate headers, wrong field
        count in a row, no data rows or a nonpositive ``obs_std``.
    ParseError
        A cell that is not a finite number.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, a header row is required") from None
        rows = [r for r in reader if r]

    if len(set(header)) != len(header):
        dup = sorted({h for h in header if header.count(h) > 1})
        raise SchemaError(f"{path}: duplicate columns {dup}")
    for required in (GROUP, TARGET):
        if required not in header:
            raise SchemaError(f"{path}: missing required column {required!r}")
    known = {GROUP, TARGET, OBS_STD}
    unknown = [h for h in header if h not in known and not h.startswith((FIXED_PREFIX, RANDOM_PREFIX))]
    if unknown:
        raise SchemaError(f"{path}: unknown columns {unknown}; covariates need an 'f_' or 'r_' prefix")
    fixed_cols = [h for h in header if h.startswith(FIXED_PREFIX)]
    random_cols = [h for h in header if h.startswith(RANDOM_PREFIX)]
    if require_random and not random_cols:
        raise SchemaError(f"{path}: no random covariate ('r_') columns")
    if not rows:
        raise SchemaError(f"{path}: no data rows")

    index = {h: j for j, h in enumerate(header)}
    n = len(rows)
    x = np.empty((n, len(fixed_cols)))
    z = np.empty((n, len(random_cols)))
    y = np.empty(n)
    std = np.ones(n)
    labels = []
    for i, row in enumerate(rows):
        line = i + 2
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {line} has {len(row)} fields, header has {len(header)}")
        label = row[index[GROUP]].strip()
        if not label:
            raise SchemaError(f"{path}: row {line}, column 'group' is empty")
        labels.append(label)
        y[i] = _float(row[index[TARGET]], line, TARGET)
        if OBS_STD in index:
            std[i] = _float(row[index[OBS_STD]], line, OBS_STD)
            if std[i] <= 0:
                raise SchemaError(f"{path}: row {line}, column 'obs_std' must be positive, got {std[i]}")
        for j, col in enumerate(fixed_cols):
            x[i, j] = _float(row[index[col]], line, col)
        for j, col in enumerate(random_cols):
            z[i, j] = _float(row[index[col]], line, col)
    return LMEProblem.from_arrays(x, z, y, std ** 2, labels,
                                  fixed_names=[c[len(FIXED_PREFIX):] for c in fixed_cols],
                                  random_names=[c[len(RANDOM_PREFIX):] for c in random_cols])


def write_csv(problem: LMEProblem, path) -> None:
    """Writes ``problem`` in the grouped CSV schema.

    Floats are written with ``repr`` so that :func:`read_csv` recovers them
    exactly; ``obs_std`` is sqrt(obs_var).
    """
    header = ([GROUP, TARGET, OBS_STD] + [FIXED_PREFIX + n for n in problem.fixed_names]
              + [RANDOM_PREFIX + n for n in problem.random_names])
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for label, g in zip(problem.group_labels, problem.groups):
            std = np.sqrt(g.obs_var)
            for i in range(g.n):
                writer.writerow([label, repr(float(g.y[i])), repr(float(std[i]))]
                                + [repr(float(v)) for v in g.x_fixed[i]]
                                + [repr(float(v)) for v in g.z_random[i]])


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value + 0.0 if math.isfinite(value) else None
    return value


def build_report(config: dict, params: Params, support_fixed: Sequence[bool], support_random: Sequence[bool],
                 iterations: int, converged: bool, final_residual: float,
                 path: Optional[Sequence[dict]] = None, extra: Optional[dict] = None) -> dict:
    """Assembles the report dictionary written by :func:`write_report_json`.

    ``path`` entries carry ``hyper``, ``ic``, ``nnz_fixed`` and
    ``nnz_random``. Non-finite floats become ``null``.
    """
    report = {
        "config": dict(config),
        "coefficients": {"beta": params.beta, "gamma": params.gamma},
        "support": {"fixed": list(support_fixed), "random": list(support_random)},
        "path": list(path or []),
        "solver": {"iterations": iterations, "converged": converged, "final_residual": final_residual},
    }
    if extra:
        report.update(extra)
    return _jsonable(report)


def write_report_json(report: dict, path) -> None:
    """Writes a report dictionary as indented JSON, keeping insertion order."""
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(_jsonable(report), fh, indent=2)
        fh.write("\n")


def write_truth_json(truth: Params, path, names: Optional[dict] = None) -> None:
    """Writes the generating coefficients of a synthetic problem."""
    payload = {"beta": truth.beta, "gamma": truth.gamma}
    if names:
        payload.update(names)
    write_report_json(payload, path)


def read_truth_json(path) -> Params:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return Params(np.asarray(payload["beta"], dtype=float), np.asarray(payload["gamma"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"{path}: not a truth file ({exc})") from None
