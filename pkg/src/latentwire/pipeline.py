"""Feature pipeline: CSV ingestion, min-max/one-hot preprocessing, splits.

Numeric columns are scaled to [0, 1] with min/max fitted on the training
split only; categorical columns are one-hot encoded over the fitted
vocabulary (unseen categories become an all-zero block). Labels are
binarized to 0 = normal, 1 = attack.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .errors import LabelError, ParseError, SchemaError, ShapeError
from .schema import DatasetSchema


@dataclass(frozen=True)
class RawRecord:
    """One CSV row, untyped; arity always matches its schema."""

    values: tuple[str, ...]


@dataclass(frozen=True)
class FeatureVector:
    """One normalized record: features in [0,1], binary label, ordinal id."""

    features: np.ndarray
    label: int
    record_id: int


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    validation_fraction: float
    seed: int
    stratified: bool = True

    def __post_init__(self):
        if not (0.0 < self.train_fraction < 1.0):
            raise ValueError("train_fraction must lie in (0, 1)")
        if not (0.0 < self.validation_fraction < 1.0):
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.train_fraction + self.validation_fraction > 1.0:
            raise ValueError("train_fraction + validation_fraction must not exceed 1")


class FeatureSet:
    """Columnar batch of FeatureVectors: ids, labels and a feature matrix.

    The matrix is float32, shape (n, output_dimension). Iterating yields
    FeatureVector views in record order.
    """

    def __init__(self, ids: np.ndarray, labels: np.ndarray, features: np.ndarray):
        ids = np.ascontiguousarray(ids, dtype=np.uint64)
        labels = np.ascontiguousarray(labels, dtype=np.uint8)
        features = np.ascontiguousarray(features, dtype=np.float32)
        if not (len(ids) == len(labels) == len(features)):
            raise ShapeError("ids, labels and features must have equal length")
        self.ids = ids
        self.labels = labels
        self.features = features

    def __len__(self):
        return len(self.ids)

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def __iter__(self):
        for i in range(len(self)):
            yield FeatureVector(self.features[i], int(self.labels[i]), int(self.ids[i]))

    def __getitem__(self, i) -> FeatureVector:
        return FeatureVector(self.features[i], int(self.labels[i]), int(self.ids[i]))

    def take(self, index: np.ndarray) -> "FeatureSet":
        return FeatureSet(self.ids[index], self.labels[index], self.features[index])

    @classmethod
    def from_vectors(cls, vectors) -> "FeatureSet":
        vectors = list(vectors)
        if not vectors:
            raise ValueError("cannot build a FeatureSet from zero vectors")
        return cls(
            np.array([v.record_id for v in vectors], dtype=np.uint64),
            np.array([v.label for v in vectors], dtype=np.uint8),
            np.stack([np.asarray(v.features, dtype=np.float32) for v in vectors]),
        )


def load_csv(path, schema: DatasetSchema) -> list[RawRecord]:
    """Read a CSV file into RawRecords, validating arity and label strings.

    Row indices in errors are 0-based over data rows (the header, when
    present, is not counted).
    """
    records: list[RawRecord] = []
    label_idx = schema.label_index
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        if schema.has_header:
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path}: empty file but schema {schema.name!r} expects a header")
            if [h.strip() for h in header] != [c.name for c in schema.columns]:
                raise ParseError(f"{path}: header does not match schema {schema.name!r} column names")
        for row_idx, row in enumerate(reader):
            if not row:
                continue
            if len(row) != schema.column_count:
                raise ParseError(
                    f"{path}: row {row_idx} has {len(row)} fields, schema expects {schema.column_count}",
                    row=row_idx,
                )
            label = row[label_idx].strip()
            if schema.label_class(label) is None:
                raise LabelError(label, row=row_idx)
            records.append(RawRecord(tuple(v.strip() for v in row)))
    return records


class PreprocessModel:
    """Fitted normalization state: per-column min/max and vocabularies.

    Immutable once fitted; shareable across threads.
    """

    def __init__(self, schema_name: str, numeric_ranges, vocabularies):
        # numeric_ranges: {column index: (min, max)}; vocabularies: {column index: [category...]}
        self.schema_name = schema_name
        self.numeric_ranges = dict(numeric_ranges)
        self.vocabularies = {k: list(v) for k, v in vocabularies.items()}
        for idx, vocab in self.vocabularies.items():
            if len(set(vocab)) != len(vocab):
                raise SchemaError(f"vocabulary for column {idx} contains duplicates")
        for idx, (lo, hi) in self.numeric_ranges.items():
            if lo > hi:
                raise SchemaError(f"column {idx}: min {lo} exceeds max {hi}")

    @property
    def output_dimension(self) -> int:
        return len(self.numeric_ranges) + sum(len(v) for v in self.vocabularies.values())

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "schema_name": self.schema_name,
            "numeric_ranges": {str(k): [self.numeric_ranges[k][0], self.numeric_ranges[k][1]]
                               for k in sorted(self.numeric_ranges)},
            "vocabularies": {str(k): self.vocabularies[k] for k in sorted(self.vocabularies)},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "PreprocessModel":
        return cls(
            doc["schema_name"],
            {int(k): (float(v[0]), float(v[1])) for k, v in doc["numeric_ranges"].items()},
            {int(k): list(v) for k, v in doc["vocabularies"].items()},
        )

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode("utf-8")

    def fingerprint(self) -> str:
        """Lowercase hex SHA-256 of the canonical serialized model."""
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PreprocessModel":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _parse_numeric(token: str, row: int, col: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"row {row}, column {col}: {token!r} is not numeric", row=row, column=col)


def fit_preprocessor(records: list[RawRecord], schema: DatasetSchema) -> PreprocessModel:
    """Fit min/max ranges and categorical vocabularies on the given records.

    Vocabularies are sorted lexicographically so the fitted model does not
    depend on row order.
    """
    if not records:
        raise ValueError("cannot fit a preprocessor on zero records")
    numeric_ranges = {}
    for col in schema.numeric_indices:
        lo, hi = np.inf, -np.inf
        for row_idx, rec in enumerate(records):
            x = _parse_numeric(rec.values[col], row_idx, col)
            lo = min(lo, x)
            hi = max(hi, x)
        numeric_ranges[col] = (lo, hi)
    vocabularies = {}
    for col in schema.categorical_indices:
        vocabularies[col] = sorted({rec.values[col] for rec in records})
    return PreprocessModel(schema.name, numeric_ranges, vocabularies)


def transform(records: list[RawRecord], model: PreprocessModel, schema: DatasetSchema) -> FeatureSet:
    """Apply a fitted preprocessor: scale, one-hot, binarize labels.

    record_id is the ordinal of the record in the input list. Out-of-range
    numeric values are clamped to [0, 1]; max == min columns map to 0;
    unseen categories map to an all-zero block.
    """
    if model.schema_name != schema.name:
        raise SchemaError(f"preprocessor was fitted for {model.schema_name!r}, got schema {schema.name!r}")
    n = len(records)
    dim = model.output_dimension
    out = np.zeros((n, dim), dtype=np.float32)
    labels = np.zeros(n, dtype=np.uint8)
    label_idx = schema.label_index

    # Fixed output layout: numeric columns in schema order, then one-hot blocks.
    numeric_cols = schema.numeric_indices
    cat_cols = schema.categorical_indices
    cat_offsets = {}
    offset = len(numeric_cols)
    for col in cat_cols:
        cat_offsets[col] = offset
        offset += len(model.vocabularies[col])
    vocab_pos = {col: {v: i for i, v in enumerate(model.vocabularies[col])} for col in cat_cols}

    for row_idx, rec in enumerate(records):
        cls = schema.label_class(rec.values[label_idx])
        if cls is None:
            raise LabelError(rec.values[label_idx], row=row_idx)
        labels[row_idx] = cls
        for j, col in enumerate(numeric_cols):
            x = _parse_numeric(rec.values[col], row_idx, col)
            lo, hi = model.numeric_ranges[col]
            if hi == lo:
                scaled = 0.0
            else:
                scaled = (x - lo) / (hi - lo)
            out[row_idx, j] = min(1.0, max(0.0, scaled))
        for col in cat_cols:
            pos = vocab_pos[col].get(rec.values[col])
            if pos is not None:
                out[row_idx, cat_offsets[col] + pos] = 1.0

    ids = np.arange(n, dtype=np.uint64)
    return FeatureSet(ids, labels, out)


def _split_indices(labels: np.ndarray, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray, bool]:
    n = len(labels)
    if n == 0:
        raise ValueError("cannot split an empty dataset")
    rng = np.random.default_rng(spec.seed)
    carve_test = spec.train_fraction + spec.validation_fraction < 1.0

    if spec.stratified:
        groups = []
        for cls in (0, 1):
            idx = np.flatnonzero(labels == cls)
            if idx.size == 0:
                raise ValueError(f"stratified split requested but class {cls} is absent")
            groups.append(idx)
        train_parts, val_parts, test_parts = [], [], []
        for idx in groups:
            perm = idx[rng.permutation(idx.size)]
            n_train = int(round(spec.train_fraction * idx.size))
            n_val = int(round(spec.validation_fraction * idx.size))
            if not carve_test:
                n_val = idx.size - n_train
            train_parts.append(perm[:n_train])
            val_parts.append(perm[n_train:n_train + n_val])
            test_parts.append(perm[n_train + n_val:])
        train_idx = np.sort(np.concatenate(train_parts))
        val_idx = np.sort(np.concatenate(val_parts))
        test_idx = np.sort(np.concatenate(test_parts))
    else:
        perm = rng.permutation(n)
        n_train = int(round(spec.train_fraction * n))
        n_val = int(round(spec.validation_fraction * n))
        if not carve_test:
            n_val = n - n_train
        train_idx = np.sort(perm[:n_train])
        val_idx = np.sort(perm[n_train:n_train + n_val])
        test_idx = np.sort(perm[n_train + n_val:])
    return train_idx, val_idx, test_idx, carve_test


def split(vectors: FeatureSet, spec: SplitSpec) -> tuple[FeatureSet, FeatureSet, FeatureSet | None]:
    """Partition into (train, validation, test); deterministic under seed.

    When train_fraction + validation_fraction == 1 no test split is carved
    and the third element is None (the dataset ships its own test file).
    Stratified mode preserves per-class ratios within one record.
    """
    train_idx, val_idx, test_idx, carve_test = _split_indices(vectors.labels, spec)
    test = vectors.take(test_idx) if carve_test else None
    return vectors.take(train_idx), vectors.take(val_idx), test


def split_raw(records: list[RawRecord], schema: DatasetSchema,
              spec: SplitSpec) -> tuple[list[RawRecord], list[RawRecord], list[RawRecord] | None]:
    """Split raw rows before any fitting, so normalization never sees
    validation or test data. Same index logic (and seeds) as split()."""
    label_idx = schema.label_index
    labels = np.fromiter((schema.label_class(r.values[label_idx]) for r in records),
                         dtype=np.uint8, count=len(records))
    train_idx, val_idx, test_idx, carve_test = _split_indices(labels, spec)
    train = [records[i] for i in train_idx]
    val = [records[i] for i in val_idx]
    test = [records[i] for i in test_idx] if carve_test else None
    return train, val, test
