"""Clustered datasets: containers, CSV ingestion, validation.

The sampling unit is the cluster.  Each observation j in cluster g carries
a response y_gj and a regressor vector x_gj whose first ``d_ind`` coordinates
vary within the cluster and whose trailing ``d_cls`` coordinates are shared
by every member of the cluster.  Cluster sizes may differ; duplicate rows
are legal and kept.  Datasets are immutable once built.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ParseError, SchemaError, ValidationError

__all__ = [
    "Cluster",
    "ClusteredDataset",
    "ClusterSizeSummary",
    "ColumnSchema",
    "from_arrays",
    "load_csv",
    "size_summary",
    "drop_cluster",
]


def _frozen(arr):
    out = np.array(arr, dtype=np.float64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Cluster:
    """One cluster: an id, responses (n_g,), and regressors (n_g, d)."""

    id: str
    y: np.ndarray
    x: np.ndarray


@dataclass(frozen=True)
class ClusteredDataset:
    """An immutable collection of clusters with a fixed coordinate split.

    Attributes
    ----------
    clusters : tuple of Cluster
        Clusters in load order.  Row order within a cluster is preserved.
    d_ind : int
        Number of individual-level regressor coordinates (>= 1).  These are
        the leading columns of each cluster's ``x``.
    d_cls : int
        Number of cluster-level coordinates (>= 0), constant within each
        cluster, stored in the trailing columns of ``x``.
    """

    clusters: tuple
    d_ind: int
    d_cls: int

    def __post_init__(self):
        if self.d_ind < 1:
            raise ValidationError("d_ind must be at least 1")
        if self.d_cls < 0:
            raise ValidationError("d_cls must be nonnegative")
        d = self.d_ind + self.d_cls
        seen = set()
        for c in self.clusters:
            if c.id in seen:
                raise ValidationError(f"duplicate cluster id {c.id!r}")
            seen.add(c.id)
            if c.y.ndim != 1 or c.x.ndim != 2:
                raise ValidationError(f"cluster {c.id!r}: y must be 1-d and x 2-d")
            n_g = c.y.shape[0]
            if n_g < 1:
                raise ValidationError(f"cluster {c.id!r} is empty")
            if c.x.shape != (n_g, d):
                raise ValidationError(
                    f"cluster {c.id!r}: x has shape {c.x.shape}, expected ({n_g}, {d})"
                )
            if not (np.all(np.isfinite(c.y)) and np.all(np.isfinite(c.x))):
                raise ValidationError(f"cluster {c.id!r} contains non-finite values")
            for q in range(self.d_ind, d):
                col = c.x[:, q]
                if not np.all(col == col[0]):
                    raise ValidationError(
                        f"cluster-level coordinate {q} varies within cluster {c.id!r}"
                    )

    @property
    def d(self):
        return self.d_ind + self.d_cls

    @property
    def g_count(self):
        return len(self.clusters)

    @property
    def is_empty(self):
        """True for the zero-cluster dataset, which is a legal result of
        dropping the only cluster but supports no estimation."""
        return len(self.clusters) == 0

    @cached_property
    def n(self):
        return int(sum(c.y.shape[0] for c in self.clusters))

    @cached_property
    def cluster_sizes(self):
        return _frozen([c.y.shape[0] for c in self.clusters]).astype(np.int64)

    @cached_property
    def y_pooled(self):
        if self.is_empty:
            return _frozen(np.empty(0))
        return _frozen(np.concatenate([c.y for c in self.clusters]))

    @cached_property
    def x_pooled(self):
        if self.is_empty:
            return _frozen(np.empty((0, self.d)))
        return _frozen(np.concatenate([c.x for c in self.clusters], axis=0))

    @cached_property
    def row_cluster(self):
        """Cluster index of each pooled row, aligned with y_pooled."""
        idx = np.concatenate(
            [np.full(c.y.shape[0], i, dtype=np.int64) for i, c in enumerate(self.clusters)]
        ) if not self.is_empty else np.empty(0, dtype=np.int64)
        idx.flags.writeable = False
        return idx


@dataclass(frozen=True)
class ClusterSizeSummary:
    """Aggregate cluster-size statistics used by variance formulas."""

    n: int
    g_count: int
    max_size: int
    sum_sq_sizes: int
    mean_size: float


@dataclass(frozen=True)
class ColumnSchema:
    """Column names binding a CSV file to a dataset.

    ``x_ind_cols`` are individual-level regressors (at least one);
    ``x_cls_cols`` are cluster-level regressors (possibly none).
    """

    cluster_col: str
    y_col: str
    x_ind_cols: tuple
    x_cls_cols: tuple = ()


def from_arrays(cluster_ids, y, x, d_cls=0):
    """Build a dataset from flat arrays.

    Parameters
    ----------
    cluster_ids : sequence
        Cluster label per row; rows are grouped by label in order of first
        appearance, preserving row order within a cluster.
    y : array_like, shape (n,)
    x : array_like, shape (n,) or (n, d)
    d_cls : int
        How many trailing columns of ``x`` are cluster-level.

    Returns
    -------
    ClusteredDataset
    """
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if y.shape[0] != x.shape[0]:
        raise ValidationError("y and x disagree on the number of rows")
    if y.shape[0] == 0:
        raise ValidationError("no observations")
    groups = {}
    for i, cid in enumerate(cluster_ids):
        groups.setdefault(str(cid), []).append(i)
    clusters = tuple(
        Cluster(id=cid, y=_frozen(y[rows]), x=_frozen(x[rows]))
        for cid, rows in groups.items()
    )
    return ClusteredDataset(clusters=clusters, d_ind=x.shape[1] - d_cls, d_cls=d_cls)


def load_csv(path, schema):
    """Load a clustered dataset from a CSV file.

    Parameters
    ----------
    path : str or pathlib.Path
    schema : ColumnSchema

    Returns
    -------
    ClusteredDataset

    Raises
    ------
    SchemaError
        If a named column is missing from the header.
    ParseError
        If a cell cannot be parsed as a finite number (row named).
    ValidationError
        If the file holds no data rows, or a cluster-level column varies
        within a cluster.
    """
    if not schema.x_ind_cols:
        raise SchemaError("schema needs at least one individual-level x column")
    wanted = (schema.cluster_col, schema.y_col) + tuple(schema.x_ind_cols) + tuple(
        schema.x_cls_cols
    )
    ids, ys, xs = [], [], []
    numeric_cols = wanted[1:]
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise ParseError(f"cannot open {path}: {exc.strerror or exc}") from None
    with fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"missing columns in {path}: {', '.join(missing)}")
        for rownum, row in enumerate(reader, start=2):
            vals = []
            for col in numeric_cols:
                cell = row[col]
                try:
                    v = float(cell)
                except (TypeError, ValueError):
                    raise ParseError(
                        f"{path} line {rownum}, column {col!r}: "
                        f"cannot parse {cell!r} as a number"
                    ) from None
                if not np.isfinite(v):
                    raise ParseError(
                        f"{path} line {rownum}, column {col!r}: non-finite value {cell!r}"
                    )
                vals.append(v)
            ids.append(row[schema.cluster_col])
            ys.append(vals[0])
            xs.append(vals[1:])
    if not ids:
        raise ValidationError(f"{path} holds no data rows")
    return from_arrays(ids, ys, np.asarray(xs), d_cls=len(schema.x_cls_cols))


def size_summary(ds):
    """Summarize cluster sizes.

    Returns
    -------
    ClusterSizeSummary
        With n = sum of sizes, the cluster count, the largest size, the sum
        of squared sizes, and the mean size.
    """
    sizes = ds.cluster_sizes
    if sizes.size == 0:
        return ClusterSizeSummary(n=0, g_count=0, max_size=0, sum_sq_sizes=0, mean_size=0.0)
    n = int(sizes.sum())
    sum_sq = int(np.sum(sizes.astype(object) ** 2))
    assert n * n >= sum_sq >= n
    return ClusterSizeSummary(
        n=n,
        g_count=int(sizes.size),
        max_size=int(sizes.max()),
        sum_sq_sizes=sum_sq,
        mean_size=n / sizes.size,
    )


def drop_cluster(ds, g):
    """Return the dataset with cluster ``g`` (an index) removed.

    Dropping the only cluster yields the empty dataset, which is legal but
    flagged via ``is_empty`` and unusable for estimation.
    """
    if not 0 <= g < ds.g_count:
        raise ValidationError(f"cluster index {g} out of range [0, {ds.g_count})")
    kept = tuple(c for i, c in enumerate(ds.clusters) if i != g)
    return ClusteredDataset(clusters=kept, d_ind=ds.d_ind, d_cls=ds.d_cls)
