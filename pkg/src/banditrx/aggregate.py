"""Quantile segmentation, imputation, and offline sample-set construction.

Each validated cluster is ordered by each member's summed Gower distance
to the rest of the cluster (low sum = central), split into 4 quantile
segments, and mined for representative records. Missing fields are filled
with the cluster median (numeric) or mode (categorical) before a record
becomes a training sample. A fixed sample budget is divided across
clusters proportionally to cluster size with a floor of one.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cluster import DistanceMatrix
from .core import FeatureSchema, Record, RecordSet, Value
from .errors import ConfigError, DataQualityError

DEFAULT_BUDGET = 1240
SEGMENT_COUNT = 4


def within_cluster_sums(matrix: DistanceMatrix, members: Sequence[int]) -> np.ndarray:
    """s_i = sum of dissimilarities from member i to every member of the
    cluster (self contributes 0). Order follows the input member order."""
    if not members:
        raise ValueError("within_cluster_sums needs at least one member")
    idx = list(members)
    d = matrix.full()
    return d[np.ix_(idx, idx)].sum(axis=1)


def quantile_segments(sorted_members: Sequence[int]) -> tuple[tuple[int, ...], ...]:
    """Split an ascending-s_i member list into 4 segments with boundaries at
    ranks ceil(n/4), ceil(n/2), ceil(3n/4). Small clusters leave trailing
    segments empty."""
    n = len(sorted_members)
    if n < 1:
        raise ValueError("quantile_segments needs at least one member")
    b1 = math.ceil(n / 4)
    b2 = math.ceil(n / 2)
    b3 = math.ceil(3 * n / 4)
    cuts = (0, b1, b2, b3, n)
    return tuple(tuple(sorted_members[cuts[s]:cuts[s + 1]]) for s in range(SEGMENT_COUNT))


def cluster_statistics(records: RecordSet, members: Sequence[int]
                       ) -> tuple[dict[str, float], dict[str, int]]:
    """Per-variable median (continuous) and mode (categorical/binary) over
    non-missing member values. Mode ties resolve to the smallest value."""
    medians: dict[str, float] = {}
    modes: dict[str, int] = {}
    for feat in records.schema.features:
        vals = [records.records[i].values.get(feat.name) for i in members]
        vals = [v for v in vals if v is not None]
        if not vals:
            continue
        if feat.kind.is_continuous:
            medians[feat.name] = float(np.median([float(v) for v in vals]))
        else:
            counts: dict[int, int] = {}
            for v in vals:
                counts[int(v)] = counts.get(int(v), 0) + 1
            modes[feat.name] = min(counts, key=lambda v: (-counts[v], v))
    return medians, modes


@dataclass(frozen=True)
class SegmentedCluster:
    """A cluster ordered by centrality with its 4 segments and imputation
    statistics."""

    cluster_id: int
    members: tuple[int, ...]                 # ascending s_i, ties by index
    sums: tuple[float, ...]                  # aligned to members
    segments: tuple[tuple[int, ...], ...]
    medians: Mapping[str, float]
    modes: Mapping[str, int]

    def __post_init__(self):
        if len(self.segments) != SEGMENT_COUNT:
            raise ConfigError(f"expected {SEGMENT_COUNT} segments, got {len(self.segments)}")
        flat = [m for seg in self.segments for m in seg]
        if sorted(flat) != sorted(self.members):
            raise ConfigError("segments must partition the cluster members")

    @property
    def size(self) -> int:
        return len(self.members)


def segment_cluster(matrix: DistanceMatrix, records: RecordSet,
                    members: Sequence[int], cluster_id: int) -> SegmentedCluster:
    """Order members by within-cluster Gower sum and cut into quantile
    segments; attach median/mode statistics for later imputation."""
    sums = within_cluster_sums(matrix, members)
    order = sorted(range(len(members)), key=lambda i: (sums[i], members[i]))
    ordered = tuple(members[i] for i in order)
    ordered_sums = tuple(float(sums[i]) for i in order)
    medians, modes = cluster_statistics(records, members)
    return SegmentedCluster(cluster_id, ordered, ordered_sums,
                            quantile_segments(ordered), medians, modes)


def impute_segment(records: Sequence[Record], medians: Mapping[str, float],
                   modes: Mapping[str, int], schema: FeatureSchema) -> list[Record]:
    """Fill every missing field from the cluster statistics; present values
    pass through untouched."""
    out = []
    for rec in records:
        values: dict[str, Value | None] = dict(rec.values)
        for feat in schema.features:
            if values.get(feat.name) is not None:
                continue
            if feat.kind.is_continuous:
                stat = medians.get(feat.name)
            else:
                stat = modes.get(feat.name)
            if stat is None:
                raise DataQualityError(
                    f"no cluster statistic for {feat.name!r}; cluster filtering "
                    "should have removed all-null variables")
            values[feat.name] = float(stat) if feat.kind.is_continuous else int(stat)
        out.append(Record(rec.participant_id, rec.cycle, values))
    return out


def allocate_counts(sizes: Sequence[int], budget: int = DEFAULT_BUDGET) -> list[int]:
    """c_i = max(1, floor(budget * S_i / sum S)). The floor keeps the total at
    or under budget before the minimum clause; the minimum clause can push the
    total up to budget + K."""
    if not sizes:
        raise ValueError("allocate_counts needs at least one cluster size")
    if any(s < 1 for s in sizes):
        raise ValueError(f"cluster sizes must be >= 1, got {list(sizes)}")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    total = sum(sizes)
    return [max(1, (budget * s) // total) for s in sizes]


@dataclass(frozen=True)
class Sample:
    """One offline training tuple: state and action vectors in schema feature
    order, plus the observed fasting glucose."""

    state: np.ndarray
    action: np.ndarray
    glucose: float
    cluster_id: int
    segment: int
    participant_id: str


def _segment_quotas(c: int, segment_sizes: Sequence[int]) -> list[int]:
    """Split a cluster's draw count across its non-empty segments.

    c >= 4: proportional to segment size (largest-remainder rounding, ties to
    the lowest segment), then every non-empty segment is topped up to >= 1 by
    taking from the largest quota. c < 4: one draw at a time starting from the
    most central segment, cycling.
    """
    non_empty = [s for s in range(SEGMENT_COUNT) if segment_sizes[s] > 0]
    quotas = [0] * SEGMENT_COUNT
    if not non_empty or c <= 0:
        return quotas
    if c < SEGMENT_COUNT:
        i = 0
        for _ in range(c):
            quotas[non_empty[i % len(non_empty)]] += 1
            i += 1
        return quotas
    m = sum(segment_sizes[s] for s in non_empty)
    shares = {s: c * segment_sizes[s] / m for s in non_empty}
    for s in non_empty:
        quotas[s] = int(math.floor(shares[s]))
    leftover = c - sum(quotas)
    by_remainder = sorted(non_empty, key=lambda s: (-(shares[s] - math.floor(shares[s])), s))
    for s in by_remainder[:leftover]:
        quotas[s] += 1
    for s in non_empty:
        if quotas[s] == 0:
            donor = max(non_empty, key=lambda t: (quotas[t], -t))
            quotas[donor] -= 1
            quotas[s] += 1
    return quotas


def build_sample_set(segmented: Sequence[SegmentedCluster], allocations: Sequence[int],
                     records: RecordSet) -> tuple[list[Sample], dict]:
    """Draw each cluster's allocated count of representatives across its
    segments, impute, and split into (state, action, glucose) samples.

    Representatives within a segment are taken most-central-first; a quota
    larger than the segment cycles through its members again. Records whose
    glucose is still missing after imputation are excluded and audited.
    """
    if len(segmented) != len(allocations):
        raise ValueError("one allocation per segmented cluster required")
    schema = records.schema
    state_names = [f.name for f in schema.state_features]
    action_names = [f.name for f in schema.action_features]
    glucose_name = schema.outcome_feature.name

    samples: list[Sample] = []
    excluded = 0
    requested = int(sum(allocations))
    for sc, c in zip(segmented, allocations):
        sizes = [len(seg) for seg in sc.segments]
        quotas = _segment_quotas(int(c), sizes)
        for seg_idx in range(SEGMENT_COUNT):
            q = quotas[seg_idx]
            if q == 0:
                continue
            seg_members = sc.segments[seg_idx]
            draws = [seg_members[i % len(seg_members)] for i in range(q)]
            recs = [records.records[i] for i in draws]
            complete = impute_segment(recs, sc.medians, sc.modes, schema)
            for rec in complete:
                g = rec.values.get(glucose_name)
                if g is None:
                    excluded += 1
                    continue
                state = np.array([float(rec.values[n]) for n in state_names])
                action = np.array([float(rec.values[n]) for n in action_names])
                samples.append(Sample(state, action, float(g), sc.cluster_id,
                                      seg_idx, rec.participant_id))
    audit = {"requested": requested, "emitted": len(samples),
             "excluded_missing_glucose": excluded}
    return samples, audit


# ---------------------------------------------------------------------------
# Sample-set serialization
# ---------------------------------------------------------------------------

def samples_to_csv(samples: Sequence[Sample], schema: FeatureSchema) -> str:
    state_names = [f.name for f in schema.state_features]
    action_names = [f.name for f in schema.action_features]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"state_{n}" for n in state_names] + [f"action_{n}" for n in action_names]
               + ["glucose", "cluster", "segment", "participant_id"])
    for s in samples:
        w.writerow([repr(float(v)) for v in s.state] + [repr(float(v)) for v in s.action]
                   + [repr(s.glucose), s.cluster_id, s.segment, s.participant_id])
    return buf.getvalue()


def write_samples(samples: Sequence[Sample], schema: FeatureSchema,
                  path: str | Path) -> None:
    Path(path).write_text(samples_to_csv(samples, schema))


def samples_from_csv(text: str, schema: FeatureSchema) -> list[Sample]:
    state_names = [f.name for f in schema.state_features]
    action_names = [f.name for f in schema.action_features]
    expected = ([f"state_{n}" for n in state_names] + [f"action_{n}" for n in action_names]
                + ["glucose", "cluster", "segment", "participant_id"])
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ConfigError("samples CSV is empty (missing header)")
    if rows[0] != expected:
        raise ConfigError("samples CSV header does not match the schema feature roles")
    ns, na = len(state_names), len(action_names)
    out = []
    for row in rows[1:]:
        state = np.array([float(v) for v in row[:ns]])
        action = np.array([float(v) for v in row[ns:ns + na]])
        out.append(Sample(state, action, float(row[ns + na]), int(row[ns + na + 1]),
                          int(row[ns + na + 2]), row[ns + na + 3]))
    return out


def read_samples(path: str | Path, schema: FeatureSchema) -> list[Sample]:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"samples file not found: {p}")
    return samples_from_csv(p.read_text(), schema)


def sample_matrices(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack samples into (states, actions, glucose) float64 arrays."""
    if not samples:
        raise ValueError("no samples to stack")
    states = np.stack([s.state for s in samples]).astype(np.float64)
    actions = np.stack([s.action for s in samples]).astype(np.float64)
    glucose = np.array([s.glucose for s in samples], dtype=np.float64)
    return states, actions, glucose
