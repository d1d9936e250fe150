"""Shared fixtures: a small generated traffic dataset and its splits."""

from __future__ import annotations

import numpy as np
import pytest

from latentwire.pipeline import SplitSpec, fit_preprocessor, split_raw, transform
from latentwire.schema import DatasetSchema
from latentwire.synth import generate_rows, traffic_schema


def rows_to_records(rows: list[list[str]]):
    """Parsed RawRecords without the CSV round trip."""
    from latentwire.pipeline import RawRecord

    return [RawRecord(values=tuple(row)) for row in rows]


@pytest.fixture(scope="session")
def schema() -> DatasetSchema:
    return traffic_schema()


@pytest.fixture(scope="session")
def small_records(schema):
    return rows_to_records(generate_rows(600, seed=77))


@pytest.fixture(scope="session")
def small_splits(schema, small_records):
    """(train, validation, test) FeatureSets, ~420/60/120 records, dim 56."""
    spec = SplitSpec(train_fraction=0.7, validation_fraction=0.1, seed=5)
    train_raw, val_raw, test_raw = split_raw(small_records, schema, spec)
    model = fit_preprocessor(train_raw, schema)
    return (transform(train_raw, model, schema),
            transform(val_raw, model, schema),
            transform(test_raw, model, schema))


@pytest.fixture(scope="session")
def small_model(schema, small_records):
    spec = SplitSpec(train_fraction=0.7, validation_fraction=0.1, seed=5)
    train_raw, _, _ = split_raw(small_records, schema, spec)
    return fit_preprocessor(train_raw, schema)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
