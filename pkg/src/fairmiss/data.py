"""Dataset container, CSV ingestion, scaling, stratified splitting, fair resampling.

Missing feature values are represented as NaN inside a float matrix; the
missingness mask is always derivable as ``np.isnan``. Datasets are immutable
after construction (arrays are marked read-only) so they can be shared freely.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CsvParseError, SchemaError, ValidationError

ROLES = ("feature", "sensitive", "label", "ignore")


@dataclass(frozen=True)
class Sample:
    """One row: feature vector (NaN = missing), group id, binary label."""

    features: np.ndarray
    sensitive: int
    label: int

    @property
    def mask(self) -> np.ndarray:
        return np.isnan(self.features)


@dataclass(frozen=True)
class Dataset:
    """Immutable collection of samples sharing a feature space.

    features : (n, d) float64 matrix, NaN marks a missing cell
    sensitive: (n,) integer group ids
    labels   : (n,) integers in {0, 1}
    """

    features: np.ndarray
    sensitive: np.ndarray
    labels: np.ndarray
    feature_names: tuple = ()

    def __post_init__(self):
        fx = np.asarray(self.features, dtype=np.float64)
        if fx.ndim != 2:
            raise ValidationError("features must be a 2-D matrix")
        s = np.asarray(self.sensitive, dtype=np.int64)
        y = np.asarray(self.labels, dtype=np.int64)
        if s.shape != (fx.shape[0],) or y.shape != (fx.shape[0],):
            raise ValidationError("sensitive/labels length must match feature rows")
        if fx.shape[0] and not np.isin(y, (0, 1)).all():
            raise ValidationError("labels must be binary (0/1)")
        names = tuple(self.feature_names) or tuple(
            f"x{j + 1}" for j in range(fx.shape[1])
        )
        if len(names) != fx.shape[1]:
            raise ValidationError("feature_names length must match dimension")
        for arr in (fx, s, y):
            arr.setflags(write=False)
        object.__setattr__(self, "features", fx)
        object.__setattr__(self, "sensitive", s)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def group_set(self) -> tuple:
        return tuple(np.unique(self.sensitive).tolist())

    @property
    def mask(self) -> np.ndarray:
        """(n, d) boolean matrix, True where the feature is missing."""
        return np.isnan(self.features)

    def sample(self, i: int) -> Sample:
        return Sample(self.features[i].copy(), int(self.sensitive[i]), int(self.labels[i]))

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            self.features[idx].copy(),
            self.sensitive[idx].copy(),
            self.labels[idx].copy(),
            self.feature_names,
        )

    def with_features(self, features: np.ndarray) -> "Dataset":
        """Same rows and metadata, new feature matrix."""
        return Dataset(features, self.sensitive.copy(), self.labels.copy(), self.feature_names)

    def cells(self) -> list:
        """Per-(s, y) row indices, sorted by (s, y). Includes empty cells."""
        out = []
        for s in self.group_set:
            for y in (0, 1):
                idx = np.flatnonzero((self.sensitive == s) & (self.labels == y))
                out.append(((int(s), y), idx))
        return out


def read_schema(path) -> dict:
    """Parse a plain-text schema file: one ``column = role`` per line."""
    schema = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"schema line not of the form 'column = role': {raw!r}")
        col, role = (part.strip() for part in line.split("=", 1))
        schema[col] = role
    return schema


def _check_schema(header, schema) -> None:
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in CSV header")
    for col, role in schema.items():
        if role not in ROLES:
            raise SchemaError(f"unknown role {role!r} for column {col!r}")
        if col not in header:
            raise SchemaError(f"schema column {col!r} not present in CSV header")
    for col in header:
        if col not in schema:
            raise SchemaError(f"CSV column {col!r} has no role in the schema")
    labels = [c for c, r in schema.items() if r == "label"]
    sens = [c for c, r in schema.items() if r == "sensitive"]
    feats = [c for c, r in schema.items() if r == "feature"]
    if len(labels) != 1:
        raise SchemaError("schema must name exactly one label column")
    if len(sens) != 1:
        raise SchemaError("schema must name exactly one sensitive column")
    if not feats:
        raise SchemaError("schema must name at least one feature column")


def load_csv(path, schema: dict, sensitive_values=None) -> Dataset:
    """Load a header-ed CSV into a Dataset.

    ``schema`` maps column name -> role in {feature, sensitive, label, ignore}.
    Missing feature cells are the literal ``NA`` or the empty string; any other
    non-numeric feature token is a parse error. ``sensitive_values`` optionally
    fixes the group-id encoding: value -> its index in the list. Without it,
    integer-valued sensitive columns are used as-is and other columns are
    encoded by sorted distinct value.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvParseError(f"{path}: empty file, header row required") from None
        header = [h.strip() for h in header]
        _check_schema(header, schema)
        feat_cols = [i for i, c in enumerate(header) if schema[c] == "feature"]
        sens_col = next(i for i, c in enumerate(header) if schema[c] == "sensitive")
        label_col = next(i for i, c in enumerate(header) if schema[c] == "label")
        feat_names = tuple(header[i] for i in feat_cols)

        rows, sens_raw, labels = [], [], []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvParseError(
                    f"row {line_no}: expected {len(header)} columns, got {len(row)}"
                )
            vals = np.empty(len(feat_cols))
            for k, i in enumerate(feat_cols):
                tok = row[i].strip()
                if tok in ("NA", ""):
                    vals[k] = np.nan
                else:
                    try:
                        vals[k] = float(tok)
                    except ValueError:
                        raise CsvParseError(
                            f"row {line_no}, column {header[i]!r}: "
                            f"cannot parse {tok!r} as a number"
                        ) from None
            lab = row[label_col].strip()
            if lab not in ("0", "1"):
                raise SchemaError(
                    f"row {line_no}: label must be 0 or 1, got {lab!r}"
                )
            stok = row[sens_col].strip()
            if stok in ("NA", ""):
                raise SchemaError(f"row {line_no}: sensitive value missing")
            rows.append(vals)
            sens_raw.append(stok)
            labels.append(int(lab))

    if sensitive_values is not None:
        mapping = {str(v): i for i, v in enumerate(sensitive_values)}
        try:
            sens = [mapping[v] for v in sens_raw]
        except KeyError as exc:
            raise SchemaError(f"unknown sensitive value {exc.args[0]!r}") from None
    else:
        try:
            sens = [int(v) for v in sens_raw]
        except ValueError:
            mapping = {v: i for i, v in enumerate(sorted(set(sens_raw)))}
            sens = [mapping[v] for v in sens_raw]

    return Dataset(np.array(rows).reshape(len(rows), len(feat_cols)), sens, labels, feat_names)


def write_csv(ds: Dataset, path, sensitive_name="sensitive", label_name="label") -> None:
    """Write a Dataset back to CSV, NaN cells as the literal ``NA``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(ds.feature_names) + [sensitive_name, label_name])
        for i in range(ds.n_samples):
            row = [
                "NA" if np.isnan(v) else format(v, ".12g") for v in ds.features[i]
            ]
            writer.writerow(row + [int(ds.sensitive[i]), int(ds.labels[i])])


@dataclass
class FeatureScaler:
    """Per-feature min-max scaling over observed values.

    Constant features map to 0. Fitted on one dataset (normally the training
    split) and applied to any dataset with the same dimension; fitting requires
    at least one observed value per feature.
    """

    mins: np.ndarray = field(default=None)
    ranges: np.ndarray = field(default=None)

    def fit(self, ds: Dataset) -> "FeatureScaler":
        observed = ~ds.mask
        counts = observed.sum(axis=0)
        if (counts == 0).any():
            j = int(np.flatnonzero(counts == 0)[0])
            raise ValidationError(
                f"feature {ds.feature_names[j]!r} has no observed values to scale"
            )
        self.mins = np.nanmin(ds.features, axis=0)
        self.ranges = np.nanmax(ds.features, axis=0) - self.mins
        return self

    def transform(self, ds: Dataset) -> Dataset:
        if self.mins is None:
            raise ValidationError("scaler not fitted")
        if ds.dimension != self.mins.shape[0]:
            raise ValidationError("dimension mismatch between scaler and dataset")
        safe = np.where(self.ranges > 0, self.ranges, 1.0)
        scaled = (ds.features - self.mins) / safe
        scaled = np.where(self.ranges > 0, scaled, 0.0)
        scaled[ds.mask] = np.nan
        return ds.with_features(scaled)


def scale_features(ds: Dataset) -> Dataset:
    """Min-max scale each feature to [0, 1] over its observed values."""
    return FeatureScaler().fit(ds).transform(ds)


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split_indices(ds: Dataset, test_fraction: float, seed: int):
    """Index-level stratified split; see split_train_test for the contract."""
    if not 0.0 < test_fraction < 1.0:
        raise ValidationError("test_fraction must lie strictly between 0 and 1")
    if ds.n_samples == 0:
        raise ValidationError("cannot split an empty dataset")
    cells = [(cell, idx) for cell, idx in ds.cells() if len(idx)]
    for (s, y), idx in cells:
        if len(idx) < 2:
            raise ValidationError(
                f"cell (s={s}, y={y}) has fewer than 2 samples, cannot split"
            )
    target = min(max(_round_half_up(ds.n_samples * test_fraction), 1), ds.n_samples - 1)
    quotas = [len(idx) * test_fraction for _, idx in cells]
    counts = [min(max(int(np.floor(q)), 1), len(idx) - 1) for q, (_, idx) in zip(quotas, cells)]
    order = sorted(range(len(cells)), key=lambda c: (-(quotas[c] - np.floor(quotas[c])), c))
    k = 0
    while sum(counts) < target and k < 2 * len(cells):
        c = order[k % len(cells)]
        if counts[c] < len(cells[c][1]) - 1:
            counts[c] += 1
        k += 1
    k = 0
    while sum(counts) > target and k < 2 * len(cells):
        c = order[-1 - (k % len(cells))]
        if counts[c] > 1:
            counts[c] -= 1
        k += 1

    test_idx = []
    for c, ((_, _), idx) in enumerate(cells):
        rng = np.random.default_rng(seed + c)
        perm = rng.permutation(len(idx))
        test_idx.extend(idx[perm[: counts[c]]].tolist())
    test_set = set(test_idx)
    train_idx = [i for i in range(ds.n_samples) if i not in test_set]
    return np.array(sorted(train_idx), dtype=np.int64), np.array(sorted(test_idx), dtype=np.int64)


def split_train_test(ds: Dataset, test_fraction: float, seed: int):
    """Deterministic stratified split: each (s, y) cell contributes its share.

    Per-cell test counts follow largest-remainder apportionment of the overall
    target ``round(n * test_fraction)`` and are clamped to [1, cell-1] so every
    cell survives into both splits.
    """
    train_idx, test_idx = stratified_split_indices(ds, test_fraction, seed)
    return ds.subset(train_idx), ds.subset(test_idx)


def fair_resample(ds: Dataset, seed: int) -> Dataset:
    """Uniform-with-replacement resample within each (s, y) cell.

    Every cell contributes exactly its own size, so all cell counts are
    preserved. Each cell draws from its own RNG stream (seed + cell index),
    making per-cell draws independent of the other cells.
    """
    chosen = []
    for c, ((s, y), idx) in enumerate(ds.cells()):
        if len(idx) == 0:
            raise ValidationError(f"empty cell (s={s}, y={y}), cannot resample")
        rng = np.random.default_rng(seed + c)
        draws = rng.integers(0, len(idx), size=len(idx))
        chosen.extend(idx[draws].tolist())
    return ds.subset(chosen)


def balance_cells(ds: Dataset, seed: int) -> Dataset:
    """Downsample every (s, y) cell to the smallest cell size (optional
    harness preprocessing; equalizes both label and group counts)."""
    cells = ds.cells()
    sizes = [len(idx) for _, idx in cells]
    if min(sizes) == 0:
        (s, y), _ = cells[int(np.argmin(sizes))]
        raise ValidationError(f"empty cell (s={s}, y={y}), cannot balance")
    m = min(sizes)
    keep = []
    for c, (_, idx) in enumerate(cells):
        rng = np.random.default_rng(seed + c)
        perm = rng.permutation(len(idx))
        keep.extend(idx[perm[:m]].tolist())
    return ds.subset(sorted(keep))
