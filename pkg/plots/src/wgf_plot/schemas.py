"""Parsers for the wgf CSV artifact schemas.

The experiment runner and this package share only these file formats:

* ``errors.csv``     -- experiment, N, subset, t, error
* ``trajectory.csv`` -- step, t, energy, min_bias_gap
* ``histogram.csv``  -- t, bin_left, bin_right, count
* ``mapping.csv``    -- z, f_theta, T_oracle
* ``density.csv``    -- t, x, value
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import List


class SchemaError(Exception):
    """A CSV does not match its documented schema."""


ERRORS_HEADER = ["experiment", "N", "subset", "t", "error"]
TRAJECTORY_HEADER = ["step", "t", "energy", "min_bias_gap"]
HISTOGRAM_HEADER = ["t", "bin_left", "bin_right", "count"]
MAPPING_HEADER = ["z", "f_theta", "T_oracle"]
DENSITY_HEADER = ["t", "x", "value"]


def _read(path: str, header: List[str]):
    if not os.path.exists(path):
        raise SchemaError(f"{path}: file does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            got = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header {header}")
        if got != header:
            offending = next(
                (f"column {i} is {g!r}, expected {h!r}"
                 for i, (g, h) in enumerate(zip(got, header)) if g != h),
                f"{len(got)} columns, expected {len(header)}",
            )
            raise SchemaError(f"{path}: header mismatch: {offending}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def _floats(path, rows, spec):
    out = []
    for line_no, row in enumerate(rows, 2):
        parsed = []
        for (name, cast), cell in zip(spec, row):
            try:
                parsed.append(cast(cell))
            except ValueError:
                raise SchemaError(
                    f"{path}:{line_no}: column {name!r} has non-numeric value {cell!r}"
                )
        out.append(tuple(parsed))
    return out


@dataclass
class ErrorRow:
    experiment: str
    n: int
    subset: str
    t: float
    error: float


def read_errors(path: str) -> List[ErrorRow]:
    rows = _read(path, ERRORS_HEADER)
    out = []
    for line_no, row in enumerate(rows, 2):
        try:
            out.append(ErrorRow(row[0], int(row[1]), row[2], float(row[3]), float(row[4])))
        except (ValueError, IndexError):
            raise SchemaError(f"{path}:{line_no}: malformed error row {row!r}")
    return out


def read_trajectory(path: str):
    return _floats(path, _read(path, TRAJECTORY_HEADER),
                   [("step", int), ("t", float), ("energy", float),
                    ("min_bias_gap", float)])


def read_histogram(path: str):
    return _floats(path, _read(path, HISTOGRAM_HEADER),
                   [("t", float), ("bin_left", float), ("bin_right", float),
                    ("count", int)])


def read_mapping(path: str):
    return _floats(path, _read(path, MAPPING_HEADER),
                   [("z", float), ("f_theta", float), ("T_oracle", float)])


def read_density(path: str):
    return _floats(path, _read(path, DENSITY_HEADER),
                   [("t", float), ("x", float), ("value", float)])
