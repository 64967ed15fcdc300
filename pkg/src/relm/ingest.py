"""Tabular data loading, feature schemas, standardization and holdout splits."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ROLES = ("continuous", "discrete", "label", "timestamp")
LABEL_NAMES = ("label", "class", "target", "y")
TIMESTAMP_NAMES = ("period",)


class DataError(ValueError):
    """Raised for malformed input data or schema violations."""


@dataclass(frozen=True)
class Column:
    name: str
    role: str
    categories: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names in schema")
        for c in self.columns:
            if c.role not in ROLES:
                raise DataError(f"column {c.name!r}: unknown role {c.role!r}")
            if c.role == "discrete":
                if not c.categories:
                    raise DataError(f"discrete column {c.name!r} has no categories")
                if len(set(c.categories)) != len(c.categories):
                    raise DataError(f"discrete column {c.name!r} has duplicate categories")
        n_label = sum(c.role == "label" for c in self.columns)
        if n_label != 1:
            raise DataError(f"schema needs exactly one label column, found {n_label}")
        if sum(c.role == "timestamp" for c in self.columns) > 1:
            raise DataError("schema allows at most one timestamp column")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def by_role(self, role: str) -> list[Column]:
        return [c for c in self.columns if c.role == role]

    @property
    def continuous(self) -> list[str]:
        return [c.name for c in self.by_role("continuous")]

    @property
    def discrete(self) -> list[Column]:
        return self.by_role("discrete")

    @property
    def label(self) -> str:
        return self.by_role("label")[0].name

    @property
    def timestamp(self) -> str | None:
        ts = self.by_role("timestamp")
        return ts[0].name if ts else None

    def to_dict(self) -> dict:
        return {"columns": [
            {"name": c.name, "role": c.role,
             "categories": list(c.categories) if c.categories is not None else None}
            for c in self.columns]}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureSchema":
        return cls(tuple(
            Column(c["name"], c["role"],
                   tuple(c["categories"]) if c.get("categories") is not None else None)
            for c in d["columns"]))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Column-oriented table. Continuous/timestamp columns are float64 arrays,
    discrete columns are object arrays of strings, the label is int64."""

    schema: FeatureSchema
    columns: dict[str, np.ndarray]
    period: np.ndarray
    row_ids: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.period)
        if set(self.columns) != set(self.schema.names):
            raise DataError("dataset columns do not match schema")
        for name, col in self.columns.items():
            if len(col) != n:
                raise DataError(f"column {name!r} has {len(col)} values, expected {n}")
        if self.row_ids is None:
            object.__setattr__(self, "row_ids", np.arange(n))
        if n and (self.period.min() < 0 or np.any(np.diff(self.period) < 0)):
            raise DataError("period tags must be non-negative and non-decreasing")
        y = self.columns[self.schema.label]
        if n and not np.isin(y, (0, 1)).all():
            raise DataError("label values must be 0 or 1")
        for col in self.columns.values():
            col.flags.writeable = False

    def __len__(self) -> int:
        return len(self.period)

    @property
    def labels(self) -> np.ndarray:
        return self.columns[self.schema.label]

    def continuous_matrix(self) -> np.ndarray:
        names = self.schema.continuous
        if not names:
            return np.zeros((len(self), 0))
        return np.column_stack([self.columns[n] for n in names]).astype(float)

    def record(self, i: int) -> dict:
        return {n: self.columns[n][i] for n in self.schema.names}

    def take(self, idx: np.ndarray, period: np.ndarray | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.schema, {k: v[idx] for k, v in self.columns.items()},
                       self.period[idx] if period is None else period,
                       self.row_ids[idx])

    def periods(self) -> list[int]:
        return sorted(set(int(p) for p in self.period))

    def by_period(self) -> list[tuple[int, "Dataset"]]:
        return [(p, self.take(np.flatnonzero(self.period == p))) for p in self.periods()]


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def infer_schema(header: Sequence[str], rows: Sequence[Sequence[str]], *,
                 label: str | None = None, timestamp: str | None = None,
                 discrete: Iterable[str] = ()) -> FeatureSchema:
    """Assign roles to columns from raw string cells.

    The label is ``label`` if given, else the first column named one of
    label/class/target/y (case-insensitive), else the last column. A column
    named ``period`` is the timestamp unless one is given explicitly. Other
    columns are continuous when every cell parses as a number and discrete
    otherwise, or when listed in ``discrete``.
    """
    lower = [h.lower() for h in header]
    if label is None:
        label = next((h for h, l in zip(header, lower) if l in LABEL_NAMES), header[-1])
    if timestamp is None:
        timestamp = next((h for h, l in zip(header, lower)
                          if l in TIMESTAMP_NAMES and h != label), None)
    for name in [label, timestamp, *discrete]:
        if name is not None and name not in header:
            raise DataError(f"column {name!r} not found in header")
    discrete = set(discrete)
    cols = []
    for j, name in enumerate(header):
        if name == label:
            cols.append(Column(name, "label"))
        elif name == timestamp:
            cols.append(Column(name, "timestamp"))
        elif name in discrete or not all(_is_number(r[j]) for r in rows):
            cats = tuple(sorted(set(r[j] for r in rows)))
            cols.append(Column(name, "discrete", cats))
        else:
            cols.append(Column(name, "continuous"))
    return FeatureSchema(tuple(cols))


def infer_schema_from_dataset(data: Dataset) -> FeatureSchema:
    """Re-derive a schema from an already-loaded dataset."""
    cols = []
    for c in data.schema.columns:
        values = data.columns[c.name]
        if c.role in ("label", "timestamp"):
            cols.append(Column(c.name, c.role))
        elif values.dtype == object:
            cols.append(Column(c.name, "discrete", tuple(sorted(set(values)))))
        else:
            cols.append(Column(c.name, "continuous"))
    return FeatureSchema(tuple(cols))


def _parse_rows(schema: FeatureSchema, header: Sequence[str],
                rows: Sequence[Sequence[str]]) -> Dataset:
    if list(header) != schema.names:
        raise DataError(f"header {list(header)} does not match schema columns {schema.names}")
    columns: dict[str, np.ndarray] = {}
    for j, col in enumerate(schema.columns):
        cells = [r[j] for r in rows]
        if col.role == "discrete":
            allowed = set(col.categories)
            for i, v in enumerate(cells):
                if v not in allowed:
                    raise DataError(f"row {i + 2}, column {col.name!r}: "
                                    f"unknown category {v!r}")
            columns[col.name] = np.array(cells, dtype=object)
            continue
        out = np.empty(len(cells))
        for i, v in enumerate(cells):
            try:
                out[i] = float(v)
            except ValueError:
                raise DataError(f"row {i + 2}, column {col.name!r}: "
                                f"cannot parse {v!r} as a number") from None
            if col.role == "label" and out[i] not in (0.0, 1.0):
                raise DataError(f"row {i + 2}, column {col.name!r}: "
                                f"label {v!r} is not 0 or 1")
        if col.role == "label":
            out = out.astype(np.int64)
        columns[col.name] = out
    n = len(rows)
    ts = schema.timestamp
    if ts is None:
        period = np.zeros(n, dtype=np.int64)
    else:
        t = columns[ts]
        if np.any(t < 0) or np.any(t != np.floor(t)):
            raise DataError(f"timestamp column {ts!r} must hold non-negative integers")
        period = t.astype(np.int64)
        bad = np.flatnonzero(np.diff(period) < 0)
        if len(bad):
            raise DataError(f"row {bad[0] + 3}, column {ts!r}: period decreases")
    return Dataset(schema, columns, period)


def load_csv(path, schema: FeatureSchema | str = "auto", **hints) -> Dataset:
    """Read a headed CSV file into a Dataset.

    ``schema`` is either a FeatureSchema to validate against or ``"auto"``;
    ``hints`` (label, timestamp, discrete) steer inference.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: missing header row") from None
        rows = []
        for i, r in enumerate(reader):
            if not r:
                continue
            if len(r) != len(header):
                raise DataError(f"{path}: row {i + 2} has {len(r)} cells, "
                                f"header has {len(header)}")
            rows.append([c.strip() for c in r])
    if isinstance(schema, str):
        if schema != "auto":
            raise DataError(f"unknown schema mode {schema!r}")
        schema = infer_schema(header, rows, **hints)
    return _parse_rows(schema, header, rows)


def write_csv(data: Dataset, path) -> None:
    from .util import atomic_write

    lines = [",".join(data.schema.names)]
    for i in range(len(data)):
        cells = []
        for c in data.schema.columns:
            v = data.columns[c.name][i]
            if c.role == "discrete":
                cells.append(str(v))
            elif c.role in ("label", "timestamp"):
                cells.append(str(int(v)))
            else:
                cells.append(repr(float(v)))
        lines.append(",".join(cells))
    atomic_write(path, "\n".join(lines) + "\n")


@dataclass(frozen=True)
class StandardizationStats:
    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool flags for columns whose deviation fell back to 1

    def to_dict(self) -> dict:
        return {"names": list(self.names), "mean": self.mean.tolist(),
                "std": self.std.tolist(), "constant": self.constant.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationStats":
        return cls(tuple(d["names"]), np.array(d["mean"], dtype=float),
                   np.array(d["std"], dtype=float), np.array(d["constant"], dtype=bool))


def fit_standardization(data: Dataset) -> StandardizationStats:
    if len(data) == 0:
        raise DataError("cannot fit standardization on an empty dataset")
    x = data.continuous_matrix()
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std == 0
    std = np.where(constant, 1.0, std)
    return StandardizationStats(tuple(data.schema.continuous), mean, std, constant)


def _check_stats(data: Dataset, stats: StandardizationStats) -> None:
    if tuple(data.schema.continuous) != stats.names:
        raise DataError(f"standardization stats cover {list(stats.names)}, "
                        f"data has continuous columns {data.schema.continuous}")


def standardize(data: Dataset, stats: StandardizationStats) -> Dataset:
    _check_stats(data, stats)
    cols = dict(data.columns)
    for j, name in enumerate(stats.names):
        cols[name] = (data.columns[name] - stats.mean[j]) / stats.std[j]
    return Dataset(data.schema, cols, data.period, data.row_ids)


def destandardize(data: Dataset, stats: StandardizationStats) -> Dataset:
    _check_stats(data, stats)
    cols = dict(data.columns)
    for j, name in enumerate(stats.names):
        cols[name] = data.columns[name] * stats.std[j] + stats.mean[j]
    return Dataset(data.schema, cols, data.period, data.row_ids)


def split_holdout(data: Dataset, holdout_count: int, seed: int) -> tuple[Dataset, Dataset]:
    """Carve ``holdout_count`` rows out of ``data`` to be replayed later as drift.

    With a timestamp column the chronologically last rows are held out,
    otherwise a seeded random subset. Holdout rows are re-tagged one period
    past the last training period.
    """
    n = len(data)
    if not 0 < holdout_count < n:
        raise DataError(f"holdout_count must be in (0, {n}), got {holdout_count}")
    if data.schema.timestamp is not None:
        train_idx = np.arange(n - holdout_count)
        hold_idx = np.arange(n - holdout_count, n)
    else:
        perm = np.random.default_rng(seed).permutation(n)
        hold_idx = np.sort(perm[:holdout_count])
        train_idx = np.sort(perm[holdout_count:])
    train = data.take(train_idx)
    next_period = int(train.period.max()) + 1
    holdout = data.take(hold_idx, period=np.full(holdout_count, next_period, dtype=np.int64))
    return train, holdout
