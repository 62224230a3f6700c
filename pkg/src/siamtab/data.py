"""Tabular data pipeline: CSV ingestion, imputation, normalization, splits.

Missing cells are represented as NaN inside a float64 grid; the label column
is never allowed to be missing. All randomized operations take an explicit
integer seed and are deterministic for a fixed seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NOMINAL = "nominal"
CONTINUOUS = "continuous"
DISCRETE = "discrete"
_KINDS = (NOMINAL, CONTINUOUS, DISCRETE)

# Tokens that mark a missing cell in the CSV dialect we read and write.
_MISSING_TOKENS = ("", "NA")


@dataclass(frozen=True)
class ColumnSpec:
    """One typed column: name, statistical kind, and whether it is the label."""

    name: str
    kind: str
    is_label: bool = False

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown column kind {self.kind!r} for {self.name!r}")


def framingham_schema() -> list[ColumnSpec]:
    """Column schema of the Framingham CHD csv, in file order.

    7 nominal columns (label included), 8 continuous, 1 discrete.
    """
    return [
        ColumnSpec("male", NOMINAL),
        ColumnSpec("age", CONTINUOUS),
        ColumnSpec("education", DISCRETE),
        ColumnSpec("currentSmoker", NOMINAL),
        ColumnSpec("cigsPerDay", CONTINUOUS),
        ColumnSpec("BPMeds", NOMINAL),
        ColumnSpec("prevalentStroke", NOMINAL),
        ColumnSpec("prevalentHyp", NOMINAL),
        ColumnSpec("diabetes", NOMINAL),
        ColumnSpec("totChol", CONTINUOUS),
        ColumnSpec("sysBP", CONTINUOUS),
        ColumnSpec("diaBP", CONTINUOUS),
        ColumnSpec("BMI", CONTINUOUS),
        ColumnSpec("heartRate", CONTINUOUS),
        ColumnSpec("glucose", CONTINUOUS),
        ColumnSpec("TenYearCHD", NOMINAL, is_label=True),
    ]


def synthetic_schema(d: int) -> list[ColumnSpec]:
    """Generic schema for a synthetic table: d continuous features + label."""
    cols = [ColumnSpec(f"f{i:02d}", CONTINUOUS) for i in range(d)]
    cols.append(ColumnSpec("label", NOMINAL, is_label=True))
    return cols


def _label_index(schema: list[ColumnSpec]) -> int:
    idx = [i for i, c in enumerate(schema) if c.is_label]
    if len(idx) != 1:
        raise ValueError(f"schema must have exactly one label column, found {len(idx)}")
    return idx[0]


@dataclass
class RawTable:
    """Row-major numeric grid with NaN for missing cells, plus its schema."""

    schema: list[ColumnSpec]
    cells: np.ndarray  # (n_rows, n_cols) float64, NaN = missing

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.ndim != 2 or self.cells.shape[1] != len(self.schema):
            raise ValueError(
                f"cell grid shape {self.cells.shape} does not match "
                f"{len(self.schema)} schema columns"
            )

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    def missing_counts(self) -> dict[str, int]:
        miss = np.isnan(self.cells).sum(axis=0)
        return {c.name: int(miss[j]) for j, c in enumerate(self.schema)}


@dataclass
class FeatureTable:
    """Dense feature matrix plus 0/1 label vector, no missing values."""

    features: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) int64 in {0, 1}
    schema: list[ColumnSpec] = field(default_factory=list)  # non-label columns

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D matrix")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels length must equal the number of feature rows")
        if self.schema and len(self.schema) != self.features.shape[1]:
            raise ValueError("schema length must equal the feature width")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


@dataclass
class NormStats:
    """Per-column mean and population stddev (clamped below by 1e-8)."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean and std must be 1-D vectors of equal length")
        if np.any(self.std < STD_FLOOR):
            raise ValueError(f"stddev entries must be >= {STD_FLOOR}")


STD_FLOOR = 1e-8


def load_csv(path: str | Path, schema: list[ColumnSpec]) -> RawTable:
    """Read a comma-separated file into a RawTable.

    The header row must match the schema names in order. Empty strings and
    "NA" parse as missing; any other non-numeric token is an error, as is a
    missing value in the label column.
    """
    path = Path(path)
    label_j = _label_index(schema)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        names = [h.strip() for h in header]
        expected = [c.name for c in schema]
        if names != expected:
            raise ValueError(
                f"{path}: header mismatch: expected {expected}, got {names}"
            )
        rows = []
        for i, row in enumerate(reader, start=2):
            if len(row) != len(schema):
                raise ValueError(
                    f"{path}: line {i}: expected {len(schema)} cells, got {len(row)}"
                )
            vals = np.empty(len(schema), dtype=np.float64)
            for j, tok in enumerate(row):
                tok = tok.strip()
                if tok in _MISSING_TOKENS:
                    if j == label_j:
                        raise ValueError(
                            f"{path}: line {i}: missing value in label column "
                            f"{schema[j].name!r}"
                        )
                    vals[j] = np.nan
                    continue
                try:
                    vals[j] = float(tok)
                except ValueError:
                    raise ValueError(
                        f"{path}: line {i}: non-numeric value {tok!r} in column "
                        f"{schema[j].name!r}"
                    ) from None
            if vals[label_j] not in (0.0, 1.0):
                raise ValueError(
                    f"{path}: line {i}: label must be 0 or 1, got {vals[label_j]}"
                )
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: empty table (header only)")
    return RawTable(schema, np.vstack(rows))


def impute(table: RawTable) -> RawTable:
    """Fill missing cells: column median for continuous columns, column mode
    for nominal and discrete (ties broken by the smallest value)."""
    cells = table.cells.copy()
    for j, col in enumerate(table.schema):
        colvals = cells[:, j]
        miss = np.isnan(colvals)
        if not miss.any():
            continue
        observed = colvals[~miss]
        if observed.size == 0:
            raise ValueError(f"column {col.name!r} is entirely missing")
        if col.kind == CONTINUOUS:
            fill = float(np.median(observed))
        else:
            values, counts = np.unique(observed, return_counts=True)
            fill = float(values[np.argmax(counts)])  # unique() sorts: ties -> smallest
        colvals[miss] = fill
    return RawTable(table.schema, cells)


def to_features(table: RawTable) -> FeatureTable:
    """Split an imputed table into a feature matrix and a label vector."""
    if np.isnan(table.cells).any():
        raise ValueError("table still contains missing cells; impute first")
    label_j = _label_index(table.schema)
    feature_cols = [j for j in range(len(table.schema)) if j != label_j]
    features = table.cells[:, feature_cols]
    labels = table.cells[:, label_j].astype(np.int64)
    schema = [table.schema[j] for j in feature_cols]
    return FeatureTable(features, labels, schema)


def fit_norm(ft: FeatureTable) -> NormStats:
    """Per-column mean and population stddev of the feature matrix."""
    if ft.n < 2:
        raise ValueError(f"need at least 2 rows to fit normalization, got {ft.n}")
    mean = ft.features.mean(axis=0)
    std = np.maximum(ft.features.std(axis=0), STD_FLOOR)
    return NormStats(mean, std)


def apply_norm(ft: FeatureTable, stats: NormStats) -> FeatureTable:
    """Z-score every feature cell: (x - mean) / std. Labels are untouched."""
    if stats.mean.shape[0] != ft.d:
        raise ValueError(
            f"normalization stats have {stats.mean.shape[0]} columns, table has {ft.d}"
        )
    features = (ft.features - stats.mean) / stats.std
    return FeatureTable(features, ft.labels.copy(), ft.schema)


def stratified_split_indices(
    labels: np.ndarray, fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Partition row indices so the second part holds ~`fraction` per class.

    Returns (rest, held) index arrays, each sorted, disjoint, covering all rows.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    held_parts = []
    rest_parts = []
    for c in (0, 1):
        idx_c = np.flatnonzero(labels == c)
        if idx_c.size == 0:
            raise ValueError(f"class {c} has no samples")
        perm = rng.permutation(idx_c)
        k = round(fraction * idx_c.size)
        held_parts.append(perm[:k])
        rest_parts.append(perm[k:])
    held = np.sort(np.concatenate(held_parts))
    rest = np.sort(np.concatenate(rest_parts))
    return rest, held


def take_rows(ft: FeatureTable, idx: np.ndarray) -> FeatureTable:
    """Row-subset of a FeatureTable."""
    return FeatureTable(ft.features[idx], ft.labels[idx], ft.schema)


def stratified_split(
    ft: FeatureTable, fraction: float, seed: int
) -> tuple[FeatureTable, FeatureTable]:
    """Split into (rest, held) parts with per-class proportions ~= fraction
    in the held part, within one sample per class. Deterministic per seed."""
    rest, held = stratified_split_indices(ft.labels, fraction, seed)
    return take_rows(ft, rest), take_rows(ft, held)


# Cluster mean offset per coordinate; total inter-cluster separation is
# 2 * SYNTH_OFFSET_SCALE standard deviations regardless of dimension.
SYNTH_OFFSET_SCALE = 2.0


def synth_generate(n: int, d: int, imbalance: float, seed: int) -> FeatureTable:
    """Two Gaussian clusters labeled 0/1 with class-1 fraction = imbalance.

    Cluster means sit at -+ SYNTH_OFFSET_SCALE/sqrt(d) per coordinate with unit
    variance, so the clusters overlap slightly but are separable. Rows are
    shuffled; output is deterministic per seed.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if d < 1:
        raise ValueError(f"need d >= 1, got {d}")
    if not 0.0 < imbalance < 1.0:
        raise ValueError(f"imbalance must be in (0, 1), got {imbalance}")
    rng = np.random.default_rng(seed)
    n1 = round(n * imbalance)
    n0 = n - n1
    offset = SYNTH_OFFSET_SCALE / np.sqrt(d)
    x0 = rng.normal(-offset, 1.0, size=(n0, d))
    x1 = rng.normal(offset, 1.0, size=(n1, d))
    features = np.vstack([x0, x1])
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    perm = rng.permutation(n)
    feature_cols = [c for c in synthetic_schema(d) if not c.is_label]
    return FeatureTable(features[perm], labels[perm], feature_cols)


def save_table_csv(ft: FeatureTable, path: str | Path, label_name: str = "label"):
    """Persist a FeatureTable in the same CSV dialect we read (label last).

    Floats are written with repr so a round trip reproduces values exactly.
    """
    names = [c.name for c in ft.schema] if ft.schema else [f"f{i:02d}" for i in range(ft.d)]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(names + [label_name]) + "\n")
        for i in range(ft.n):
            row = [repr(float(v)) for v in ft.features[i]]
            row.append(str(int(ft.labels[i])))
            fh.write(",".join(row) + "\n")


def load_table_csv(path: str | Path, schema: list[ColumnSpec]) -> FeatureTable:
    """Read back a table written by save_table_csv (no missing cells allowed)."""
    raw = load_csv(path, schema)
    return to_features(raw)


def save_schema_csv(schema: list[ColumnSpec], path: str | Path):
    with open(path, "w", newline="\n") as fh:
        fh.write("name,kind,is_label\n")
        for c in schema:
            fh.write(f"{c.name},{c.kind},{int(c.is_label)}\n")


def load_schema_csv(path: str | Path) -> list[ColumnSpec]:
    schema = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["name", "kind", "is_label"]:
            raise ValueError(f"{path}: not a schema file")
        for row in reader:
            schema.append(ColumnSpec(row[0], row[1], bool(int(row[2]))))
    return schema


def save_norm_stats_csv(stats: NormStats, schema: list[ColumnSpec], path: str | Path):
    with open(path, "w", newline="\n") as fh:
        fh.write("column,mean,stddev\n")
        for j, c in enumerate(schema):
            fh.write(f"{c.name},{float(stats.mean[j])!r},{float(stats.std[j])!r}\n")


def load_norm_stats_csv(path: str | Path) -> NormStats:
    means, stds = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["column", "mean", "stddev"]:
            raise ValueError(f"{path}: not a norm-stats file")
        for row in reader:
            means.append(float(row[1]))
            stds.append(float(row[2]))
    return NormStats(np.array(means), np.array(stds))
