"""Schema model, record validation, canonical CSV round trip."""

import pytest

from banditrx.core import (Feature, FeatureKind, FeatureSchema, Record,
                           RecordSet, default_schema, load_schema,
                           validate_record)
from banditrx.errors import ConfigError
from conftest import binary, categorical, continuous, record_set, schema_of


def test_default_schema_counts():
    schema = default_schema()
    assert len(schema.features) == 28
    assert len(schema.state_features) == 14
    assert len(schema.action_features) == 13
    assert schema.outcome_feature.name == "LBXGLUSI"
    kinds = [f.kind.kind for f in schema.features if f.role != "outcome"]
    assert kinds.count("continuous") == 18
    assert kinds.count("binary") == 3
    assert kinds.count("categorical") == 6


def test_schema_requires_single_outcome():
    with pytest.raises(ConfigError):
        FeatureSchema((continuous("a", 0, 1),))
    with pytest.raises(ConfigError):
        FeatureSchema((continuous("a", 0, 1, role="outcome"),
                       continuous("b", 0, 1, role="outcome")))


def test_duplicate_names_rejected():
    with pytest.raises(ConfigError):
        schema_of(continuous("x", 0, 1), continuous("x", 2, 3))


def test_feature_kind_validation():
    with pytest.raises(ConfigError):
        FeatureKind.continuous(None, 5.0, 5.0)
    with pytest.raises(ConfigError):
        FeatureKind.categorical([])
    with pytest.raises(ConfigError):
        FeatureKind.categorical([1, 1, 2])
    with pytest.raises(ConfigError):
        FeatureKind("fuzzy")


def test_fingerprint_stable_and_sensitive():
    a = schema_of(continuous("x", 0, 1))
    b = schema_of(continuous("x", 0, 1))
    c = schema_of(continuous("x", 0, 2))
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()
    assert len(a.fingerprint()) == 64


def test_load_schema_missing_path():
    with pytest.raises(ConfigError):
        load_schema("/nonexistent/schema.json")


def test_schema_round_trip():
    schema = default_schema()
    again = FeatureSchema.from_dict(schema.to_dict())
    assert again.fingerprint() == schema.fingerprint()


def test_validate_record_rules():
    schema = schema_of(continuous("bmi", 10, 90), binary("flag"),
                       categorical("edu", [1, 2, 3]))
    ok = Record("p0", "c", {"bmi": 25.0, "flag": 1, "edu": 3, "y": 5.0})
    assert validate_record(ok, schema) == []

    bad = Record("p1", "c", {"bmi": 9.0, "flag": 2, "edu": 7, "zzz": 1})
    rules = {v.feature: v.rule for v in validate_record(bad, schema)}
    assert rules == {"bmi": "range", "flag": "membership",
                     "edu": "membership", "zzz": "unknown-feature"}


def test_all_missing_record_conforms():
    schema = schema_of(continuous("bmi", 10, 90))
    assert validate_record(Record("p", "c", {"bmi": None, "y": None}), schema) == []


def test_record_set_validate_keyed_by_participant():
    schema = schema_of(continuous("bmi", 10, 90))
    rs = record_set(schema, [{"bmi": 20.0, "y": 5.0}, {"bmi": 500.0, "y": 5.0}])
    bad = rs.validate()
    assert list(bad) == ["p001"]


def test_csv_round_trip_bit_exact():
    schema = schema_of(continuous("bmi", 10, 90), categorical("edu", [1, 2]))
    rs = record_set(schema, [
        {"bmi": 23.456789012345678, "edu": 2, "y": 5.1},
        {"bmi": None, "edu": None, "y": None},
    ])
    again = RecordSet.from_csv(rs.to_csv(), schema)
    assert again.records[0].values["bmi"] == 23.456789012345678
    assert again.records[1].values == {"bmi": None, "edu": None, "y": None}
    assert again.to_csv() == rs.to_csv()


def test_csv_header_mismatch_rejected():
    schema = schema_of(continuous("bmi", 10, 90))
    other = schema_of(continuous("age", 0, 120))
    rs = record_set(schema, [{"bmi": 20.0, "y": 5.0}])
    with pytest.raises(ConfigError):
        RecordSet.from_csv(rs.to_csv(), other)
