"""Mixed-regressor functional datasets: domain types, CSV ingestion, splitting
and bootstrap resampling.

A dataset holds one discretised curve per observation (all on a shared grid),
``p`` continuous regressors, ``q`` discrete regressors coded ``0..levels-1``
and a scalar response.  Storage is columnar (numpy arrays); per-observation
views are available through :attr:`Dataset.observations`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


@dataclass(frozen=True)
class DiscreteKind:
    """Type of a discrete regressor.

    Unordered regressors use the Aitchison-Aitken kernel (bandwidth bound 0.5),
    ordered ones the Li-Racine kernel (bandwidth bound 1.0).
    """

    levels: int
    ordered: bool = False

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValueError(f"discrete regressor needs >= 2 levels, got {self.levels}")

    @property
    def bound(self) -> float:
        return 1.0 if self.ordered else 0.5

    def to_dict(self) -> dict:
        return {"kind": "ordered" if self.ordered else "unordered", "levels": self.levels}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteKind":
        kind = d.get("kind", "unordered")
        if kind not in ("ordered", "unordered"):
            raise DataError(f"unknown discrete kind {kind!r}")
        return cls(int(d["levels"]), ordered=kind == "ordered")


@dataclass(frozen=True)
class Curve:
    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        _check_grid(grid)
        if values.shape != grid.shape:
            raise ValueError("curve values and grid differ in length")
        if not np.all(np.isfinite(values)):
            raise ValueError("curve values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class MixedObservation:
    curve: Curve
    xc: np.ndarray
    xd: np.ndarray
    y: float


def _check_grid(grid: np.ndarray) -> None:
    if grid.ndim != 1 or grid.size < 4:
        raise ValueError("grid must be one-dimensional with at least 4 points")
    if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be finite and strictly increasing")


@dataclass(frozen=True)
class Dataset:
    """Columnar container for ``n`` mixed observations sharing one grid.

    ``y`` may be ``None`` for prediction-only inputs.
    """

    grid: np.ndarray
    curves: np.ndarray
    xc: np.ndarray
    xd: np.ndarray
    y: np.ndarray | None
    kinds: tuple[DiscreteKind, ...] = field(default_factory=tuple)
    continuous_names: tuple[str, ...] | None = None
    discrete_names: tuple[str, ...] | None = None

    def __post_init__(self):
        grid = np.array(self.grid, dtype=float)
        _check_grid(grid)
        curves = np.atleast_2d(np.array(self.curves, dtype=float))
        n = curves.shape[0]
        if n < 1:
            raise ValueError("dataset needs at least one observation")
        if curves.shape[1] != grid.size:
            raise ValueError("curve length does not match the grid")
        if not np.all(np.isfinite(curves)):
            raise ValueError("curve values must be finite")
        xc = np.array(self.xc, dtype=float).reshape(n, -1)
        xd = np.asarray(self.xd).reshape(n, -1)
        if xd.size and not np.issubdtype(xd.dtype, np.integer):
            if not np.all(np.equal(np.mod(xd, 1), 0)):
                raise ValueError("discrete codes must be integers")
        xd = xd.astype(np.int64)
        if not np.all(np.isfinite(xc)):
            raise ValueError("continuous regressors must be finite")
        kinds = tuple(self.kinds)
        if len(kinds) != xd.shape[1]:
            raise ValueError("one DiscreteKind is required per discrete column")
        for s, kind in enumerate(kinds):
            col = xd[:, s]
            if col.size and (col.min() < 0 or col.max() >= kind.levels):
                raise ValueError(f"discrete column {s} has codes outside 0..{kind.levels - 1}")
        y = None
        if self.y is not None:
            y = np.array(self.y, dtype=float).reshape(-1)
            if y.size != n:
                raise ValueError("response length does not match the number of curves")
            if not np.all(np.isfinite(y)):
                raise ValueError("responses must be finite")
        for arr in (grid, curves, xc, xd) + ((y,) if y is not None else ()):
            arr.setflags(write=False)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "curves", curves)
        object.__setattr__(self, "xc", xc)
        object.__setattr__(self, "xd", xd)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "kinds", kinds)
        cn = self.continuous_names or tuple(f"x{j + 1}" for j in range(xc.shape[1]))
        dn = self.discrete_names or tuple(f"d{s + 1}" for s in range(xd.shape[1]))
        if len(cn) != xc.shape[1] or len(dn) != xd.shape[1]:
            raise ValueError("regressor names do not match the column counts")
        object.__setattr__(self, "continuous_names", tuple(cn))
        object.__setattr__(self, "discrete_names", tuple(dn))

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def p(self) -> int:
        return self.xc.shape[1]

    @property
    def q(self) -> int:
        return self.xd.shape[1]

    @property
    def has_response(self) -> bool:
        return self.y is not None

    def __len__(self) -> int:
        return self.n

    @property
    def observations(self) -> Iterator[MixedObservation]:
        for i in range(self.n):
            yield MixedObservation(
                Curve(self.grid, self.curves[i]),
                self.xc[i],
                self.xd[i],
                float(self.y[i]) if self.y is not None else math.nan,
            )

    def subset(self, idx: Sequence[int] | np.ndarray) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            self.grid,
            self.curves[idx],
            self.xc[idx],
            self.xd[idx],
            None if self.y is None else self.y[idx],
            self.kinds,
            self.continuous_names,
            self.discrete_names,
        )


@dataclass(frozen=True)
class CsvSchema:
    """Column roles of a CSV file.

    ``discrete_cols`` maps column names to their :class:`DiscreteKind`.
    ``group_threshold``, when set, appends a binary regressor derived from the
    response (see :func:`derive_binary_group`).
    """

    curve_cols: tuple[str, ...]
    continuous_cols: tuple[str, ...] = ()
    discrete_cols: tuple[tuple[str, DiscreteKind], ...] = ()
    response_col: str | None = None
    grid: tuple[float, ...] | None = None
    group_threshold: float | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "CsvSchema":
        curve_cols = d.get("curve_cols")
        if isinstance(curve_cols, dict):
            prefix, count = curve_cols["prefix"], int(curve_cols["count"])
            start = int(curve_cols.get("start", 0))
            curve_cols = [f"{prefix}{k}" for k in range(start, start + count)]
        if not curve_cols:
            raise DataError("schema must name the curve columns")
        discrete = []
        for entry in d.get("discrete_cols", []):
            discrete.append((entry["name"], DiscreteKind.from_dict(entry)))
        grid = d.get("grid")
        return cls(
            tuple(curve_cols),
            tuple(d.get("continuous_cols", [])),
            tuple(discrete),
            d.get("response_col"),
            None if grid is None else tuple(float(g) for g in grid),
            d.get("group_threshold"),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CsvSchema":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"cannot read schema {path}: {exc}") from exc

    def to_dict(self) -> dict:
        out = {
            "curve_cols": list(self.curve_cols),
            "continuous_cols": list(self.continuous_cols),
            "discrete_cols": [{"name": name, **kind.to_dict()} for name, kind in self.discrete_cols],
            "response_col": self.response_col,
        }
        if self.grid is not None:
            out["grid"] = list(self.grid)
        if self.group_threshold is not None:
            out["group_threshold"] = self.group_threshold
        return out


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}, column {col!r}: not a number: {text!r}") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_csv(path: str | Path, schema: CsvSchema, grid: Sequence[float] | None = None,
             require_response: bool = False) -> Dataset:
    """Read a dataset from a comma-separated file with one header row.

    Lines starting with ``#`` (manifest lines) are skipped.  Row numbers in
    error messages count data rows from 0.  The curve grid is taken from
    ``grid``, then ``schema.grid``, and defaults to equispaced points on [0, 1].
    """
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}") from exc
    with fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        index = {name: k for k, name in enumerate(header)}
        wanted = list(schema.curve_cols) + list(schema.continuous_cols)
        wanted += [name for name, _ in schema.discrete_cols]
        has_response = schema.response_col is not None and schema.response_col in index
        if schema.response_col is not None and not has_response and require_response:
            raise DataError(f"response column {schema.response_col!r} missing from {path}")
        missing = [c for c in wanted if c not in index]
        if missing:
            raise DataError(f"columns missing from {path}: {missing}")

        curves, xc, xd, ys = [], [], [], []
        for r, row in enumerate(reader):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {r}: expected {len(header)} columns, found {len(row)}")
            curves.append([_parse_float(row[index[c]], r, c) for c in schema.curve_cols])
            xc.append([_parse_float(row[index[c]], r, c) for c in schema.continuous_cols])
            codes = []
            for name, kind in schema.discrete_cols:
                value = _parse_float(row[index[name]], r, name)
                if value != int(value) or not 0 <= value < kind.levels:
                    raise DataError(
                        f"row {r}, column {name!r}: code {row[index[name]]!r} outside 0..{kind.levels - 1}"
                    )
                codes.append(int(value))
            xd.append(codes)
            if has_response:
                ys.append(_parse_float(row[index[schema.response_col]], r, schema.response_col))

    if not curves:
        raise DataError(f"{path} has no data rows")
    m = len(schema.curve_cols)
    if grid is None:
        grid = schema.grid if schema.grid is not None else np.linspace(0.0, 1.0, m)
    grid = np.asarray(grid, dtype=float)
    if grid.size != m:
        raise DataError(f"grid has {grid.size} points but schema names {m} curve columns")
    n = len(curves)
    try:
        ds = Dataset(
            grid,
            np.array(curves, dtype=float),
            np.array(xc, dtype=float).reshape(n, len(schema.continuous_cols)),
            np.array(xd, dtype=np.int64).reshape(n, len(schema.discrete_cols)),
            np.array(ys) if has_response else None,
            tuple(kind for _, kind in schema.discrete_cols),
            tuple(schema.continuous_cols),
            tuple(name for name, _ in schema.discrete_cols),
        )
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    if schema.group_threshold is not None:
        if not ds.has_response:
            raise DataError("group_threshold needs the response column")
        ds = derive_binary_group(ds, float(schema.group_threshold))
    return ds


def save_csv(ds: Dataset, path: str | Path, curve_prefix: str = "t",
             response_col: str = "y") -> CsvSchema:
    """Write ``ds`` as CSV and return the schema that reads it back unchanged.

    Values are written with ``repr`` so the round trip is bit-exact.
    """
    curve_cols = tuple(f"{curve_prefix}{k}" for k in range(ds.grid.size))
    schema = CsvSchema(
        curve_cols,
        ds.continuous_names,
        tuple(zip(ds.discrete_names, ds.kinds)),
        response_col if ds.has_response else None,
        tuple(float(g) for g in ds.grid),
    )
    header = list(curve_cols) + list(ds.continuous_names) + list(ds.discrete_names)
    if ds.has_response:
        header.append(response_col)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.curves[i]]
            row += [repr(float(v)) for v in ds.xc[i]]
            row += [str(int(v)) for v in ds.xd[i]]
            if ds.has_response:
                row.append(repr(float(ds.y[i])))
            writer.writerow(row)
    return schema


def derive_binary_group(ds: Dataset, threshold: float, name: str = "group") -> Dataset:
    """Append an unordered binary regressor: 0 when ``y < threshold``, else 1."""
    if ds.y is None:
        raise DataError("deriving a group needs responses")
    code = (ds.y >= threshold).astype(np.int64)[:, None]
    return Dataset(
        ds.grid,
        ds.curves,
        ds.xc,
        np.hstack([ds.xd, code]),
        ds.y,
        ds.kinds + (DiscreteKind(2),),
        ds.continuous_names,
        ds.discrete_names + (name,),
    )


def split(ds: Dataset, n_train: int) -> tuple[Dataset, Dataset]:
    """First ``n_train`` observations for training, the rest for testing."""
    if not 3 <= n_train < ds.n:
        raise ValueError(f"n_train must satisfy 3 <= n_train < {ds.n}, got {n_train}")
    return ds.subset(np.arange(n_train)), ds.subset(np.arange(n_train, ds.n))


def bootstrap_indices(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, n, size=n)


def bootstrap_replicate(ds: Dataset, seed: int) -> Dataset:
    """Resample ``n`` observations uniformly with replacement."""
    return ds.subset(bootstrap_indices(ds.n, seed))
