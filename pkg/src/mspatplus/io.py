"""Dataset ingestion, covariate standardization and CSV/JSON output helpers.

CSV inputs share the layout ``area_id, <column>, ...`` with a header row,
UTF-8 text and ``.`` as decimal separator. Missing values are an error. The
counts file fixes the area order; the expected-counts and covariate files
are joined to it on ``area_id``, and graph indices refer to that order.
"""

import csv
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConstantVector,
    DimensionMismatch,
    InvalidCounts,
    NegativeCount,
    NonPositiveExpected,
    ParseError,
    UnknownAreaId,
)
from .graph import read_edge_list

NA_TOKENS = {"", "na", "nan", "null", "none", "n/a"}


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    graph: object
    Y: np.ndarray
    e: np.ndarray
    covariates: dict
    area_ids: tuple
    crimes: tuple
    synthetic: bool = False
    sources: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def J(self):
        return self.Y.shape[1]


def read_keyed_csv(path):
    """Read an ``area_id``-keyed numeric CSV.

    Returns
    -------
    ids : list of str
    columns : list of str
    values : (rows, columns) float array
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot open file: {exc.strerror}", path) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, header row required", path, 1) from None
        header = [h.strip() for h in header]
        if not header or header[0] != "area_id":
            raise ParseError("first column must be 'area_id'", path, 1)
        if len(header) < 2:
            raise ParseError("no data columns", path, 1)
        if len(set(header)) != len(header):
            raise ParseError("duplicate column names", path, 1)
        ids, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(rec)}", path, lineno)
            key = rec[0].strip()
            if not key:
                raise ParseError("empty area_id", path, lineno)
            vals = []
            for name, cell in zip(header[1:], rec[1:]):
                cell = cell.strip()
                if cell.lower() in NA_TOKENS:
                    raise ParseError(f"missing value in column {name!r}", path, lineno)
                try:
                    v = float(cell)
                except ValueError:
                    raise ParseError(f"non-numeric value {cell!r} in column {name!r}", path, lineno) from None
                if not math.isfinite(v):
                    raise ParseError(f"non-finite value in column {name!r}", path, lineno)
                vals.append(v)
            ids.append(key)
            rows.append(vals)
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate area_id values", path)
    if not rows:
        raise ParseError("no data rows", path)
    return ids, header[1:], np.array(rows, dtype=float)


def _join(ids, other_ids, values, path):
    pos = {a: i for i, a in enumerate(other_ids)}
    unknown = [a for a in other_ids if a not in set(ids)]
    if unknown:
        raise UnknownAreaId(f"{path}: area_id {unknown[0]!r} not in the counts file")
    missing = [a for a in ids if a not in pos]
    if missing:
        raise DimensionMismatch(f"{path}: no row for area_id {missing[0]!r}")
    return values[[pos[a] for a in ids]]


def load_dataset(counts_csv, expected_csv, covariates_csv, adjacency_file):
    """Load and validate a multivariate areal count dataset."""
    ids, crimes, Y = read_keyed_csv(counts_csv)
    e_ids, e_cols, e = read_keyed_csv(expected_csv)
    c_ids, c_cols, C = read_keyed_csv(covariates_csv)
    if e_cols != crimes:
        raise DimensionMismatch(f"expected-count columns {e_cols} differ from count columns {crimes}")
    e = _join(ids, e_ids, e, expected_csv)
    C = _join(ids, c_ids, C, covariates_csv)
    if np.any(Y < 0):
        raise NegativeCount("counts must be non-negative")
    if np.any(Y != np.round(Y)):
        raise InvalidCounts("counts must be integers")
    if np.any(e <= 0):
        raise NonPositiveExpected("expected counts must be positive")
    g = read_edge_list(adjacency_file)
    if g.n != len(ids):
        raise DimensionMismatch(f"graph has n={g.n}, counts file has {len(ids)} areas")
    covs = {name: C[:, j].copy() for j, name in enumerate(c_cols)}
    return DatasetBundle(graph=g, Y=Y.astype(np.int64), e=e, covariates=covs,
                         area_ids=tuple(ids), crimes=tuple(crimes),
                         sources={"counts": str(counts_csv), "expected": str(expected_csv),
                                  "covariates": str(covariates_csv), "graph": str(adjacency_file)})


def standardize(x):
    """Centre to mean 0 and scale to sample SD 1 (divisor n - 1)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DimensionMismatch("standardize needs a vector of length >= 2")
    c = x - x.mean()
    sd = math.sqrt(float(c @ c) / (x.size - 1))
    if sd <= 1e-12 * max(1.0, float(np.abs(x).max())):
        raise ConstantVector("cannot standardize a constant vector")
    return c / sd


def fmt(x):
    """17-significant-digit decimal text that round-trips a float exactly."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([c if isinstance(c, str) else fmt(c) for c in r])
    return path


def read_csv_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def write_keyed_csv(path, ids, columns, values):
    values = np.asarray(values)
    return write_csv(path, ["area_id", *columns], ([a, *row] for a, row in zip(ids, values.tolist())))


def environment_versions():
    import scipy

    from . import __version__
    return {"mspatplus": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def write_manifest(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
