"""Cell-table ingestion and grouping into per-sample point clouds.

The canonical ingest format is a CSV with one row per cell: metadata columns
(sample identifiers and such) plus one numeric column per marker. A schema
names which columns are which.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """A declared column is missing or the schema is inconsistent."""


class ParseError(ValueError):
    """A marker cell failed numeric parsing."""


@dataclass(frozen=True)
class Schema:
    """Names metadata vs. marker columns of a cell CSV."""
    meta_columns: tuple
    marker_columns: tuple
    label_column: str | None = None
    replicate_column: str | None = None
    delimiter: str = ","
    # optional per-column transform applied at ingest (e.g. arcsinh); default identity
    transforms: dict = field(default_factory=dict)


@dataclass
class CellTable:
    meta: list            # one tuple of metadata values per row
    markers: np.ndarray   # rows x d, float64
    marker_names: tuple
    meta_schema: tuple

    def __post_init__(self):
        self.markers = np.asarray(self.markers, dtype=float)
        if self.markers.size and self.markers.shape[1] != len(self.marker_names):
            raise SchemaError("marker matrix width does not match marker_names")
        if self.markers.size and not np.all(np.isfinite(self.markers)):
            raise ParseError("non-finite marker values")

    @property
    def n_rows(self):
        return len(self.meta)

    @property
    def d(self):
        return len(self.marker_names)


@dataclass
class PointCloud:
    points: np.ndarray    # n x d
    weights: np.ndarray   # n, sums to 1
    group_key: tuple = ()
    label: object = None

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] < 1:
            raise ValueError("point cloud must contain at least one point")
        if self.weights.shape[0] != self.points.shape[0]:
            raise ValueError("weights length must equal point count")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("non-finite point coordinates")

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


@dataclass(frozen=True)
class LabelMap:
    mapping: dict         # raw label -> 0/1
    positive_name: str = "positive"
    negative_name: str = "negative"


def load_cells_csv(path, schema):
    """Read a cell table CSV according to ``schema``.

    Raises SchemaError if a declared column is missing, ParseError (with the
    offending row index) if a marker cell is not numeric.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header row required")
        col_index = {name: i for i, name in enumerate(header)}
        for name in tuple(schema.meta_columns) + tuple(schema.marker_columns):
            if name not in col_index:
                raise SchemaError(f"{path}: declared column {name!r} not in header")
        meta_idx = [col_index[c] for c in schema.meta_columns]
        marker_idx = [col_index[c] for c in schema.marker_columns]

        meta = []
        values = []
        for row_no, row in enumerate(reader):
            meta.append(tuple(row[i] for i in meta_idx))
            try:
                values.append([float(row[i]) for i in marker_idx])
            except ValueError as exc:
                raise ParseError(f"{path}: non-numeric marker value in data row {row_no}: {exc}")

    markers = np.asarray(values, dtype=float).reshape(len(meta), len(marker_idx))
    for col, fn in schema.transforms.items():
        if col in schema.marker_columns:
            k = schema.marker_columns.index(col)
            markers[:, k] = fn(markers[:, k])
    return CellTable(meta, markers, tuple(schema.marker_columns),
                     tuple(schema.meta_columns))


def group_point_clouds(table, keys):
    """Split a CellTable into one PointCloud per distinct key tuple.

    Weights are uniform 1/n. Clouds are returned sorted by group key so that
    downstream aggregation is order-independent.
    """
    if not keys:
        raise ValueError("at least one grouping key is required")
    for k in keys:
        if k not in table.meta_schema:
            raise SchemaError(f"grouping key {k!r} not in metadata schema")
    idx = [table.meta_schema.index(k) for k in keys]

    groups: dict = {}
    for row, meta in enumerate(table.meta):
        key = tuple(meta[i] for i in idx)
        groups.setdefault(key, []).append(row)

    clouds = []
    for key in sorted(groups):
        rows = groups[key]
        pts = table.markers[rows]
        n = len(rows)
        clouds.append(PointCloud(pts, np.full(n, 1.0 / n), group_key=key))
    return clouds


def filter_replicates(table, exclude, replicate_column):
    """Drop rows whose replicate ID is in ``exclude``; order preserved."""
    if replicate_column not in table.meta_schema:
        raise SchemaError(f"replicate column {replicate_column!r} not in metadata schema")
    if not exclude:
        return table
    excl = set(exclude)
    col = table.meta_schema.index(replicate_column)
    keep = [i for i, meta in enumerate(table.meta) if meta[col] not in excl]
    return CellTable([table.meta[i] for i in keep],
                     table.markers[keep].reshape(len(keep), table.d),
                     table.marker_names, table.meta_schema)


def assign_labels_from_key(clouds, keys, label_key):
    """Set each cloud's raw label from a component of its group key."""
    if label_key not in keys:
        raise ValueError(f"label key {label_key!r} must be one of the grouping keys")
    pos = list(keys).index(label_key)
    return [PointCloud(c.points, c.weights, c.group_key, c.group_key[pos])
            for c in clouds]


def binarize_labels(clouds, label_map):
    """Map raw labels to {0,1}; clouds with unmapped labels are dropped.

    Returns (retained clouds, dropped count).
    """
    kept = []
    dropped = 0
    for c in clouds:
        if c.label in label_map.mapping:
            kept.append(PointCloud(c.points, c.weights, c.group_key,
                                   int(label_map.mapping[c.label])))
        else:
            dropped += 1
    return kept, dropped
