"""Shared builders for the test suite.

Schemas here are deliberately tiny; every helper appends the mandatory
outcome feature so validation passes without ceremony.
"""

from __future__ import annotations

import numpy as np
import pytest

from banditrx.aggregate import Sample
from banditrx.core import Feature, FeatureKind, FeatureSchema, Record, RecordSet


def continuous(name: str, lo: float, hi: float, role: str = "state",
               unit: str | None = None) -> Feature:
    return Feature(name, FeatureKind.continuous(unit, lo, hi), role)


def binary(name: str, role: str = "state") -> Feature:
    return Feature(name, FeatureKind.binary(), role)


def categorical(name: str, levels, role: str = "state") -> Feature:
    return Feature(name, FeatureKind.categorical(levels), role)


def schema_of(*features: Feature, name: str = "test") -> FeatureSchema:
    """Wrap features into a schema, adding an outcome if none is present."""
    feats = list(features)
    if not any(f.role == "outcome" for f in feats):
        feats.append(continuous("y", 1.0, 500.0, role="outcome"))
    return FeatureSchema(tuple(feats), name=name)


def record(pid: str, values: dict, cycle: str = "2017-2018") -> Record:
    return Record(pid, cycle, dict(values))


def record_set(schema: FeatureSchema, rows: list[dict]) -> RecordSet:
    recs = []
    for i, row in enumerate(rows):
        vals = {f.name: None for f in schema.features}
        vals.update(row)
        recs.append(Record(f"p{i:03d}", "2017-2018", vals))
    return RecordSet(schema, recs)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def toy_samples(n: int = 40, seed: int = 0,
                state_dim: int = 2, action_dim: int = 2) -> list[Sample]:
    """Random samples against the matching toy schema from toy_sample_schema."""
    gen = np.random.default_rng(seed)
    out = []
    for i in range(n):
        s = gen.uniform(-1.0, 1.0, size=state_dim)
        a = gen.uniform(-1.0, 1.0, size=action_dim)
        g = float(5.0 + s.sum() + a.sum() + gen.normal(0, 0.05))
        out.append(Sample(s, a, max(g, 1.5), 0, i % 4, f"p{i:03d}"))
    return out


def toy_sample_schema(state_dim: int = 2, action_dim: int = 2) -> FeatureSchema:
    feats = [continuous(f"s{i}", -10.0, 10.0) for i in range(state_dim)]
    feats += [continuous(f"a{i}", -10.0, 10.0, role="action")
              for i in range(action_dim)]
    return schema_of(*feats)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per headline guarantee at the end of the run."""
    seen: dict[str, str] = {}
    for status, key in (("FAIL", "failed"), ("FAIL", "error"),
                        ("PASS", "passed")):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            seen.setdefault(name, status)
    if not seen:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(seen):
        terminalreporter.write_line(f"[{seen[name]}] {name}")
