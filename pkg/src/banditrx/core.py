"""Feature schema, record representation, and dataset container.

Every pipeline stage shares these types. Missing values are explicit
(``None``), never sentinel numerics, because survey skip patterns make
missingness first-class. All types are immutable after construction and
safe to share across threads.

The default schema ships as a versioned JSON document
(``schemas/nhanes_v1.json``); categorical level codes in it are a repo
convention modeled on documented survey integer codes.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

from .errors import ConfigError

Value = float | int
ROLES = ("state", "action", "outcome", "demographic")

DEFAULT_SCHEMA_NAME = "nhanes_v1"


@dataclass(frozen=True)
class FeatureKind:
    """Type descriptor for one feature.

    ``kind`` is one of ``continuous`` (with unit label and valid range),
    ``binary`` (values in {0, 1}), or ``categorical`` (explicit level codes).
    """

    kind: str
    unit: str | None = None
    low: float | None = None
    high: float | None = None
    levels: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("continuous", "binary", "categorical"):
            raise ConfigError(f"unknown feature kind {self.kind!r}")
        if self.kind == "continuous":
            if self.low is None or self.high is None or not self.low < self.high:
                raise ConfigError(f"continuous range must satisfy min < max, got ({self.low}, {self.high})")
        if self.kind == "categorical":
            if not self.levels:
                raise ConfigError("categorical level list is empty")
            if len(set(self.levels)) != len(self.levels):
                raise ConfigError("categorical level list has duplicates")

    @classmethod
    def continuous(cls, unit: str | None, low: float, high: float) -> "FeatureKind":
        return cls("continuous", unit=unit, low=float(low), high=float(high))

    @classmethod
    def binary(cls) -> "FeatureKind":
        return cls("binary")

    @classmethod
    def categorical(cls, levels: Iterable[int]) -> "FeatureKind":
        return cls("categorical", levels=tuple(int(v) for v in levels))

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"

    @property
    def is_binary(self) -> bool:
        return self.kind == "binary"

    @property
    def is_categorical(self) -> bool:
        return self.kind == "categorical"


@dataclass(frozen=True)
class Feature:
    name: str
    kind: FeatureKind
    role: str
    label: str = ""

    def __post_init__(self):
        if self.role not in ROLES:
            raise ConfigError(f"feature {self.name}: unknown role {self.role!r}")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature list with a name index map.

    Exactly one feature carries the ``outcome`` role (the glucose target).
    """

    features: tuple[Feature, ...]
    version: int = 1
    name: str = "unnamed"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise ConfigError("feature names are not unique")
        outcomes = [f for f in self.features if f.role == "outcome"]
        if len(outcomes) != 1:
            raise ConfigError(f"schema must declare exactly one outcome feature, found {len(outcomes)}")

    @cached_property
    def index(self) -> dict[str, int]:
        return {f.name: i for i, f in enumerate(self.features)}

    @cached_property
    def by_name(self) -> dict[str, Feature]:
        return {f.name: f for f in self.features}

    def feature(self, name: str) -> Feature:
        try:
            return self.by_name[name]
        except KeyError:
            raise ConfigError(f"schema {self.name!r} has no feature {name!r}") from None

    def with_role(self, *roles: str) -> tuple[Feature, ...]:
        return tuple(f for f in self.features if f.role in roles)

    @property
    def state_features(self) -> tuple[Feature, ...]:
        return self.with_role("state")

    @property
    def action_features(self) -> tuple[Feature, ...]:
        return self.with_role("action")

    @property
    def outcome_feature(self) -> Feature:
        return self.with_role("outcome")[0]

    def to_dict(self) -> dict:
        feats = []
        for f in self.features:
            d: dict = {"name": f.name, "kind": f.kind.kind, "role": f.role,
                       "unit": f.kind.unit, "label": f.label}
            if f.kind.is_continuous:
                d["range"] = [f.kind.low, f.kind.high]
            if f.kind.is_categorical:
                d["levels"] = list(f.kind.levels)
            feats.append(d)
        return {"schema_version": self.version, "name": self.name, "features": feats}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FeatureSchema":
        if "features" not in doc:
            raise ConfigError("schema document lacks a features[] list")
        feats = []
        for fd in doc["features"]:
            kind = fd.get("kind")
            if kind == "continuous":
                fk = FeatureKind.continuous(fd.get("unit"), *fd["range"])
            elif kind == "binary":
                fk = FeatureKind.binary()
            elif kind == "categorical":
                fk = FeatureKind.categorical(fd["levels"])
            else:
                raise ConfigError(f"feature {fd.get('name')!r}: unknown kind {kind!r}")
            feats.append(Feature(fd["name"], fk, fd.get("role", "state"), fd.get("label", "")))
        return cls(tuple(feats), version=int(doc.get("schema_version", 1)),
                   name=doc.get("name", "unnamed"))

    def fingerprint(self) -> str:
        """Stable digest of the schema content; artifacts carry it so stages
        can refuse to mix models trained under different schemas."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def load_schema(path: str | Path) -> FeatureSchema:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"schema file not found: {p}")
    with open(p) as f:
        return FeatureSchema.from_dict(json.load(f))


def default_schema() -> FeatureSchema:
    text = resources.files("banditrx").joinpath(f"schemas/{DEFAULT_SCHEMA_NAME}.json").read_text()
    return FeatureSchema.from_dict(json.loads(text))


@dataclass(frozen=True)
class Record:
    """One survey participant: per-feature optional values keyed by feature
    name, plus opaque participant id and survey cycle. The cycle is retained
    so harmonization maps can be keyed by it."""

    participant_id: str
    cycle: str
    values: Mapping[str, Value | None] = field(default_factory=dict)

    def get(self, name: str) -> Value | None:
        return self.values.get(name)

    def is_missing(self, name: str) -> bool:
        return self.values.get(name) is None


@dataclass(frozen=True)
class Violation:
    feature: str
    rule: str
    message: str


def validate_record(record: Record, schema: FeatureSchema) -> list[Violation]:
    """Check one record against the schema. Violations are data, not failures:
    a record with every field missing conforms vacuously."""
    out: list[Violation] = []
    for name, value in record.values.items():
        if name not in schema.by_name:
            out.append(Violation(name, "unknown-feature", f"{name} is not in schema {schema.name!r}"))
            continue
        if value is None:
            continue
        kind = schema.by_name[name].kind
        if kind.is_continuous:
            if not (kind.low <= float(value) <= kind.high):
                out.append(Violation(name, "range",
                                     f"{name}={value} outside [{kind.low}, {kind.high}]"))
        elif kind.is_binary:
            if value not in (0, 1):
                out.append(Violation(name, "membership", f"{name}={value} not in {{0, 1}}"))
        else:
            if int(value) != value or int(value) not in kind.levels:
                out.append(Violation(name, "membership",
                                     f"{name}={value} not a declared level"))
    return out


@dataclass
class RecordSet:
    """Schema plus an ordered list of records conforming to it."""

    schema: FeatureSchema
    records: list[Record]

    def __len__(self) -> int:
        return len(self.records)

    def validate(self) -> dict[str, list[Violation]]:
        """Per-record violations, keyed by participant id; empty dict if clean."""
        out = {}
        for r in self.records:
            v = validate_record(r, self.schema)
            if v:
                out[r.participant_id] = v
        return out

    # --- canonical CSV: one column per schema feature, empty cell = missing ---

    def to_csv(self) -> str:
        buf = io.StringIO()
        names = [f.name for f in self.schema.features]
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["participant_id", "cycle"] + names)
        for r in self.records:
            row = [r.participant_id, r.cycle]
            for f in self.schema.features:
                v = r.get(f.name)
                if v is None:
                    row.append("")
                elif f.kind.is_continuous:
                    row.append(repr(float(v)))
                else:
                    row.append(str(int(v)))
            w.writerow(row)
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str, schema: FeatureSchema) -> "RecordSet":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise ConfigError("canonical CSV is empty (missing header)")
        header = rows[0]
        expected = ["participant_id", "cycle"] + [f.name for f in schema.features]
        if header != expected:
            raise ConfigError("canonical CSV header does not match schema column order")
        records = []
        for row in rows[1:]:
            values: dict[str, Value | None] = {}
            for f, cell in zip(schema.features, row[2:]):
                if cell == "":
                    values[f.name] = None
                elif f.kind.is_continuous:
                    values[f.name] = float(cell)
                else:
                    values[f.name] = int(cell)
            records.append(Record(row[0], row[1], values))
        return cls(schema, records)

    @classmethod
    def read_csv(cls, path: str | Path, schema: FeatureSchema) -> "RecordSet":
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"record set file not found: {p}")
        return cls.from_csv(p.read_text(), schema)
