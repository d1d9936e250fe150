"""CSV parsing, normalization, one-hot encoding and splitting."""

import numpy as np
import pytest

from latentwire.errors import LabelError, ParseError, SchemaError
from latentwire.pipeline import (
    FeatureSet,
    PreprocessModel,
    RawRecord,
    SplitSpec,
    fit_preprocessor,
    load_csv,
    split,
    split_raw,
    transform,
)
from latentwire.schema import Column, DatasetSchema, load_schema, schema_from_dict, schema_to_dict

from conftest import rows_to_records

TINY = DatasetSchema(
    name="tiny",
    columns=(Column("size", "numeric"), Column("proto", "categorical"),
             Column("rate", "numeric"), Column("label", "label")),
    attack_labels=frozenset({"bad"}),
    normal_labels=frozenset({"good"}),
)

TINY_ROWS = [
    ("10", "tcp", "0.5", "good"),
    ("30", "udp", "0.0", "bad"),
    ("20", "tcp", "1.0", "good"),
]


def tiny_records():
    return [RawRecord(values=row) for row in TINY_ROWS]


# -- schema ------------------------------------------------------------------

def test_schema_rejects_duplicate_columns():
    with pytest.raises(SchemaError):
        DatasetSchema("dup", (Column("a", "numeric"), Column("a", "numeric"),
                              Column("label", "label")),
                      frozenset({"x"}), frozenset({"y"}))


def test_schema_requires_exactly_one_label_column():
    with pytest.raises(SchemaError):
        DatasetSchema("nolabel", (Column("a", "numeric"),),
                      frozenset({"x"}), frozenset({"y"}))


def test_schema_rejects_overlapping_label_sets():
    with pytest.raises(SchemaError):
        DatasetSchema("overlap", (Column("label", "label"),),
                      frozenset({"both"}), frozenset({"both"}))


def test_schema_rejects_unknown_column_kind():
    with pytest.raises(SchemaError):
        DatasetSchema("bad", (Column("a", "wat"), Column("label", "label")),
                      frozenset({"x"}), frozenset({"y"}))


def test_schema_roundtrip(tmp_path):
    import json

    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(schema_to_dict(TINY)))
    loaded = load_schema(path)
    assert loaded == TINY


def test_schema_from_dict_names_missing_field():
    with pytest.raises(SchemaError, match="columns"):
        schema_from_dict({"name": "x", "attack_labels": [], "normal_labels": []})


def test_label_class_mapping():
    assert TINY.label_class("bad") == 1
    assert TINY.label_class("good") == 0
    assert TINY.label_class("meh") is None


def test_drop_columns_are_ignored_everywhere():
    schema = DatasetSchema(
        "dropped",
        (Column("a", "numeric"), Column("difficulty", "drop"), Column("label", "label")),
        frozenset({"bad"}), frozenset({"good"}))
    records = [RawRecord(("1", "17", "good")), RawRecord(("3", "99", "bad"))]
    model = fit_preprocessor(records, schema)
    assert model.output_dimension == 1
    out = transform(records, model, schema)
    np.testing.assert_allclose(out.features[:, 0], [0.0, 1.0])


# -- CSV loading -------------------------------------------------------------

def test_load_csv_parses_rows(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("\n".join(",".join(r) for r in TINY_ROWS) + "\n")
    records = load_csv(path, TINY)
    assert [r.values for r in records] == [tuple(r) for r in TINY_ROWS]


def test_load_csv_strips_whitespace_and_skips_blank_lines(tmp_path):
    path = tmp_path / "tiny.csv"
    path.write_text("10, tcp ,0.5, good\n\n30,udp,0.0,bad\n")
    records = load_csv(path, TINY)
    assert len(records) == 2
    assert records[0].values == ("10", "tcp", "0.5", "good")


def test_load_csv_rejects_wrong_arity(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("10,tcp,0.5,good\n30,udp,bad\n")
    with pytest.raises(ParseError) as excinfo:
        load_csv(path, TINY)
    assert excinfo.value.row == 1


def test_load_csv_rejects_unknown_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("10,tcp,0.5,good\n30,udp,0.0,sideways\n")
    with pytest.raises(LabelError) as excinfo:
        load_csv(path, TINY)
    assert excinfo.value.value == "sideways"
    assert excinfo.value.row == 1


def test_load_csv_header_must_match(tmp_path):
    schema = DatasetSchema("headed", TINY.columns, TINY.attack_labels,
                           TINY.normal_labels, has_header=True)
    path = tmp_path / "headed.csv"
    path.write_text("size,proto,rate,label\n10,tcp,0.5,good\n")
    assert len(load_csv(path, schema)) == 1
    path.write_text("size,proto,wrong,label\n10,tcp,0.5,good\n")
    with pytest.raises(ParseError):
        load_csv(path, schema)


# -- fitting -----------------------------------------------------------------

def test_fit_ranges_and_vocabulary():
    model = fit_preprocessor(tiny_records(), TINY)
    assert model.numeric_ranges[0] == (10.0, 30.0)
    assert model.numeric_ranges[2] == (0.0, 1.0)
    assert model.vocabularies[1] == ["tcp", "udp"]
    assert model.output_dimension == 4  # 2 numeric + 2 one-hot


def test_fit_is_row_order_independent():
    a = fit_preprocessor(tiny_records(), TINY)
    b = fit_preprocessor(list(reversed(tiny_records())), TINY)
    assert a.fingerprint() == b.fingerprint()


def test_fit_rejects_non_numeric_token():
    records = [RawRecord(("ten", "tcp", "0.5", "good"))]
    with pytest.raises(ParseError):
        fit_preprocessor(records, TINY)


def test_fit_rejects_empty_input():
    with pytest.raises(ValueError):
        fit_preprocessor([], TINY)


# -- transform ---------------------------------------------------------------

def test_transform_minmax_oracle():
    # By hand: size range [10, 30], rate range [0, 1].
    model = fit_preprocessor(tiny_records(), TINY)
    out = transform(tiny_records(), model, TINY)
    expected = np.array([
        [0.0, 0.5, 1.0, 0.0],   # size 10, rate 0.5, proto tcp
        [1.0, 0.0, 0.0, 1.0],   # size 30, rate 0.0, proto udp
        [0.5, 1.0, 1.0, 0.0],   # size 20, rate 1.0, proto tcp
    ], dtype=np.float32)
    np.testing.assert_array_equal(out.features, expected)
    np.testing.assert_array_equal(out.labels, [0, 1, 0])
    np.testing.assert_array_equal(out.ids, [0, 1, 2])


def test_transform_clamps_out_of_range_values():
    model = fit_preprocessor(tiny_records(), TINY)
    stranger = [RawRecord(("5", "tcp", "2.0", "good")),
                RawRecord(("99", "tcp", "-1.0", "bad"))]
    out = transform(stranger, model, TINY)
    np.testing.assert_array_equal(out.features[:, 0], [0.0, 1.0])
    np.testing.assert_array_equal(out.features[:, 1], [1.0, 0.0])


def test_transform_constant_column_maps_to_zero():
    records = [RawRecord(("7", "tcp", "0.3", "good")),
               RawRecord(("7", "udp", "0.9", "bad"))]
    model = fit_preprocessor(records, TINY)
    assert model.numeric_ranges[0] == (7.0, 7.0)
    out = transform(records, model, TINY)
    np.testing.assert_array_equal(out.features[:, 0], [0.0, 0.0])


def test_transform_unseen_category_is_all_zero_block():
    model = fit_preprocessor(tiny_records(), TINY)
    out = transform([RawRecord(("10", "icmp", "0.5", "good"))], model, TINY)
    np.testing.assert_array_equal(out.features[0, 2:], [0.0, 0.0])


def test_transform_schema_mismatch_rejected():
    model = fit_preprocessor(tiny_records(), TINY)
    other = DatasetSchema("other", TINY.columns, TINY.attack_labels, TINY.normal_labels)
    with pytest.raises(SchemaError):
        transform(tiny_records(), model, other)


def test_features_stay_in_unit_interval(small_splits):
    for part in small_splits:
        assert part.features.min() >= 0.0
        assert part.features.max() <= 1.0
        assert part.features.dtype == np.float32


# -- model persistence -------------------------------------------------------

def test_model_roundtrip_preserves_fingerprint(tmp_path, small_model):
    path = tmp_path / "preprocess.json"
    small_model.save(path)
    loaded = PreprocessModel.load(path)
    assert loaded.fingerprint() == small_model.fingerprint()
    assert loaded.numeric_ranges == small_model.numeric_ranges
    assert loaded.vocabularies == small_model.vocabularies


def test_fingerprint_is_sha256_hex(small_model):
    import hashlib

    assert small_model.fingerprint() == hashlib.sha256(small_model.canonical_bytes()).hexdigest()
    assert len(bytes.fromhex(small_model.fingerprint())) == 32


def test_fingerprint_changes_with_data():
    base = fit_preprocessor(tiny_records(), TINY)
    shifted = fit_preprocessor(tiny_records() + [RawRecord(("99", "tcp", "0.5", "good"))], TINY)
    assert base.fingerprint() != shifted.fingerprint()


def test_model_rejects_inverted_range():
    with pytest.raises(SchemaError):
        PreprocessModel("tiny", {0: (2.0, 1.0)}, {})


def test_model_rejects_duplicate_vocabulary():
    with pytest.raises(SchemaError):
        PreprocessModel("tiny", {}, {1: ["tcp", "tcp"]})


# -- splitting ---------------------------------------------------------------

def _labels(n, attack_every=3):
    return np.array([1 if i % attack_every == 0 else 0 for i in range(n)], dtype=np.uint8)


def _feature_set(labels):
    n = len(labels)
    features = np.arange(n, dtype=np.float32).reshape(n, 1) / n
    return FeatureSet(np.arange(n, dtype=np.uint64), labels, features)


def test_split_is_disjoint_and_complete():
    data = _feature_set(_labels(200))
    train, val, test = split(data, SplitSpec(0.7, 0.1, seed=5))
    ids = np.concatenate([train.ids, val.ids, test.ids])
    assert len(ids) == 200
    assert len(np.unique(ids)) == 200
    assert len(train) == 140 and len(val) == 20 and len(test) == 40


def test_split_stratified_preserves_class_ratio():
    data = _feature_set(_labels(300, attack_every=3))
    train, val, test = split(data, SplitSpec(0.7, 0.1, seed=5))
    # 100 attacks overall; per-split attack counts follow the fractions.
    assert int(train.labels.sum()) == 70
    assert int(val.labels.sum()) == 10
    assert int(test.labels.sum()) == 20


def test_split_deterministic_under_seed():
    data = _feature_set(_labels(120))
    a = split(data, SplitSpec(0.7, 0.1, seed=9))
    b = split(data, SplitSpec(0.7, 0.1, seed=9))
    c = split(data, SplitSpec(0.7, 0.1, seed=10))
    for part_a, part_b in zip(a, b):
        np.testing.assert_array_equal(part_a.ids, part_b.ids)
    assert not np.array_equal(a[0].ids, c[0].ids)


def test_split_without_test_carve():
    data = _feature_set(_labels(100))
    train, val, test = split(data, SplitSpec(0.8, 0.2, seed=1))
    assert test is None
    assert len(train) + len(val) == 100


def test_split_rejects_missing_class():
    data = _feature_set(np.zeros(50, dtype=np.uint8))
    with pytest.raises(ValueError):
        split(data, SplitSpec(0.7, 0.1, seed=1))


def test_split_raw_matches_split_indices(schema):
    """Splitting raw rows picks the same records as splitting vectors."""
    from latentwire.synth import generate_rows

    records = rows_to_records(generate_rows(400, seed=3))
    spec = SplitSpec(0.7, 0.1, seed=5)
    train_raw, val_raw, test_raw = split_raw(records, schema, spec)

    model = fit_preprocessor(records, schema)
    vectors = transform(records, model, schema)
    train_v, val_v, test_v = split(vectors, spec)
    for raw_part, vec_part in ((train_raw, train_v), (val_raw, val_v), (test_raw, test_v)):
        got = [records.index(r) for r in raw_part]
        np.testing.assert_array_equal(np.array(got, dtype=np.uint64), vec_part.ids)


def test_leak_free_fitting_ignores_test_rows(schema):
    """Ranges fitted on the train split only: a huge value in the test rows
    must not change the fitted model."""
    from latentwire.synth import generate_rows

    rows = generate_rows(200, seed=11)
    records = rows_to_records(rows)
    spec = SplitSpec(0.7, 0.1, seed=5)
    train_raw, _, test_raw = split_raw(records, schema, spec)
    model = fit_preprocessor(train_raw, schema)

    # Spike the first test row's src_bytes (column 4) far above anything else.
    spiked_rows = [list(r) for r in rows]
    victim = records.index(test_raw[0])
    spiked_rows[victim][4] = "999999999"
    spiked = rows_to_records([tuple(r) for r in spiked_rows])
    train_spiked, _, _ = split_raw(spiked, schema, spec)
    assert fit_preprocessor(train_spiked, schema).fingerprint() == model.fingerprint()


def test_feature_set_from_vectors_roundtrip(small_splits):
    train = small_splits[0]
    rebuilt = FeatureSet.from_vectors(list(train))
    np.testing.assert_array_equal(rebuilt.ids, train.ids)
    np.testing.assert_array_equal(rebuilt.labels, train.labels)
    np.testing.assert_array_equal(rebuilt.features, train.features)
